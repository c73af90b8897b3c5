"""Globally adaptive Gauss-Kronrod quadrature for complex integrands.

The 1-D rule works on intervals, the 2-D rule on rectangles through a tensor
product of the same 7/15-point pair.  Integrands are evaluated for many
panels at once: ``f(x)`` with ``x`` of shape ``(R, 15)`` in 1-D and
``f(x, y) -> array[R, 15, 15]`` in 2-D, which keeps the Python overhead per
panel small and lets callers exploit separable factors.
"""

import heapq
import math

import numpy as np

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# 15 nodes on [-1, 1], ascending, with matching Kronrod and Gauss weights
# (Gauss weight is zero on the Kronrod-only nodes).
NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[-2::-1]])
W_KRONROD = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[-2::-1]])
_wg_full = np.zeros(8)
_wg_full[1::2] = _WG
W_GAUSS = np.concatenate([_wg_full[:-1], [_wg_full[-1]], _wg_full[-2::-1]])


class QuadratureError(RuntimeError):
    """Adaptive quadrature ran out of evaluations before meeting tolerance."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


def _tolerance(value, abs_tol, rel_tol):
    return max(abs_tol, rel_tol * abs(value))


def _resum(heap, slot):
    vals = [item[slot] for item in heap]
    total = complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))
    return total, math.fsum(-item[0] for item in heap)


def _rule_1d(f, panels):
    """Apply the 15-point pair to an array of panels ``[[a, b], ...]``."""
    a, b = panels.T
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * NODES
    fx = np.asarray(f(x))
    k = half * (fx @ W_KRONROD)
    g = half * (fx @ W_GAUSS)
    return k.astype(complex), np.abs(k - g)


def _split_worst(heap, max_new, per_item):
    """Pop every item within 1/8 of the worst error (at least one), capped so
    that the children fit in ``max_new`` evaluations.  None if no room."""
    room = max_new // per_item
    if room < 1:
        return None
    worst = -heap[0][0]
    batch = [heapq.heappop(heap)]
    while heap and len(batch) < room and -heap[0][0] > 0.125 * worst:
        batch.append(heapq.heappop(heap))
    return batch


def adaptive_gk_1d(f, a, b, abs_tol, rel_tol, max_evals, initial_panels=8):
    """Integrate over ``[a, b]`` by global subdivision.

    ``f(x)`` receives nodes of shape ``(R, 15)`` for ``R`` panels at once.
    Each round bisects every panel whose error is within 1/8 of the worst.
    ``max_evals`` bounds the number of panel evaluations.  Returns
    ``(value, error_estimate, evals)``.
    """
    edges = np.linspace(a, b, initial_panels + 1)
    panels = list(zip(edges[:-1], edges[1:]))
    vals, errs = _rule_1d(f, np.array(panels))
    evals = len(panels)
    heap = []
    for (lo, hi), val, err in zip(panels, vals, errs):
        heapq.heappush(heap, (-float(err), len(heap), lo, hi, complex(val)))
    counter = len(heap)

    while True:
        total, err_total = _resum(heap, 4)
        if err_total <= _tolerance(total, abs_tol, rel_tol):
            return total, err_total, evals
        batch = _split_worst(heap, max_evals - evals, 2)
        if batch is None:
            raise QuadratureError(
                f"1-D quadrature not converged after {evals} panel evaluations "
                f"(error estimate {err_total:.3e})", total, err_total)
        children = []
        for item in batch:
            lo, hi = item[2], item[3]
            mid = 0.5 * (lo + hi)
            children += [(lo, mid), (mid, hi)]
        vals, errs = _rule_1d(f, np.array(children))
        evals += len(children)
        for (lo, hi), val, err in zip(children, vals, errs):
            counter += 1
            heapq.heappush(heap, (-float(err), counter, lo, hi, complex(val)))


def _rule_2d(f, rects):
    """Apply the tensor rule to an array of rectangles ``[[ax, bx, ay, by], ...]``."""
    ax, bx, ay, by = rects.T
    hx = 0.5 * (bx - ax)
    hy = 0.5 * (by - ay)
    x = (0.5 * (ax + bx))[:, None] + hx[:, None] * NODES
    y = (0.5 * (ay + by))[:, None] + hy[:, None] * NODES
    fxy = np.asarray(f(x, y))
    area = hx * hy
    k = area * np.einsum("i,rij,j->r", W_KRONROD, fxy, W_KRONROD)
    g = area * np.einsum("i,rij,j->r", W_GAUSS, fxy, W_GAUSS)
    return k.astype(complex), np.abs(k - g)


def _quarters(rect):
    ax, bx, ay, by = rect
    mx = 0.5 * (ax + bx)
    my = 0.5 * (ay + by)
    return [(x0, x1, y0, y1) for x0, x1 in ((ax, mx), (mx, bx))
            for y0, y1 in ((ay, my), (my, by))]


def adaptive_gk_2d(f, x_lims, y_lims, abs_tol, rel_tol, max_evals,
                   initial_panels=4):
    """Integrate over a rectangle by global subdivision.

    ``f(xs, ys)`` receives node arrays of shape ``(R, 15)`` for ``R``
    rectangles at once and returns values of shape ``(R, 15, 15)``.  Each
    round splits into four every rectangle whose error estimate exceeds
    1/8 of the worst one (at least the worst one), and evaluates all the
    children in a single call.  ``max_evals`` bounds the number of rectangle
    evaluations.  Returns ``(value, error_estimate, evals)``.
    """
    xe = np.linspace(x_lims[0], x_lims[1], initial_panels + 1)
    ye = np.linspace(y_lims[0], y_lims[1], initial_panels + 1)
    rects = [(ax, bx, ay, by) for ax, bx in zip(xe[:-1], xe[1:])
             for ay, by in zip(ye[:-1], ye[1:])]
    vals, errs = _rule_2d(f, np.array(rects))
    evals = len(rects)
    heap = []
    for rect, val, err in zip(rects, vals, errs):
        heapq.heappush(heap, (-float(err), len(heap), *rect, complex(val)))
    counter = len(heap)

    while True:
        total, err_total = _resum(heap, 6)
        if err_total <= _tolerance(total, abs_tol, rel_tol):
            return total, err_total, evals
        batch = _split_worst(heap, max_evals - evals, 4)
        if batch is None:
            raise QuadratureError(
                f"2-D quadrature not converged after {evals} rectangle "
                f"evaluations (error estimate {err_total:.3e})",
                total, err_total)
        children = [q for item in batch for q in _quarters(item[2:6])]
        vals, errs = _rule_2d(f, np.array(children))
        evals += len(children)
        for rect, val, err in zip(children, vals, errs):
            counter += 1
            heapq.heappush(heap, (-float(err), counter, *rect, complex(val)))
