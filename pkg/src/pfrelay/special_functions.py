"""Gamma products, Bessel-K, digamma and Meijer G-functions.

Meijer G-functions are evaluated directly from their Mellin-Barnes integrals
along straight vertical contours, with the gamma-ratio integrand computed in
log-space.  Convention used throughout (univariate)::

    G^{m,n}_{p,q}(z | a; b) = 1/(2 pi i) \\int_L
        prod_{j<=m} Gamma(b_j - s) prod_{j<=n} Gamma(1 - a_j + s)
        / [prod_{j>m} Gamma(1 - b_j + s) prod_{j>n} Gamma(a_j - s)]  z^s ds

so the poles of the ``b`` gammas lie to the right of the contour and those
of the ``a`` gammas to the left.  The bivariate integrand uses the same
orientation in both variables.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy import special as sps

from ._quadrature import QuadratureError, adaptive_gk_1d, adaptive_gk_2d

__all__ = [
    "BivariateGSpec",
    "ContourSpec",
    "ContourWarning",
    "MeijerGSpec",
    "PoleCollisionError",
    "PoleError",
    "QuadratureError",
    "auto_contour_bivariate",
    "auto_contour_univariate",
    "bivariate_log_integrand",
    "bivariate_meijer_g",
    "bivariate_meijer_g_sum",
    "common_contour_bivariate",
    "digamma",
    "gamma_prod",
    "log_gamma_prod",
    "log_integrand",
    "meijer_g",
    "modified_bessel_k",
    "saddle_contour_bivariate",
    "saddle_contour_univariate",
]

EULER_GAMMA = 0.57721566490153286060651209008240243

# contour passing closer than this to a pole gets nudged
POLE_PROXIMITY = 1e-3

UNIVARIATE_W = 30.0
BIVARIATE_W = 10.0


class PoleError(ValueError):
    """A gamma-function argument sits on a pole (non-positive integer)."""


class PoleCollisionError(ValueError):
    """No straight vertical contour separates the two pole families."""


class ContourWarning(UserWarning):
    """The contour abscissa was moved away from a nearby pole."""


@dataclass(frozen=True)
class ContourSpec:
    """Vertical integration contour(s) and quadrature controls.

    ``cs`` is the real abscissa of the s-line, ``ct`` that of the t-line
    (ignored by univariate evaluations).  Each line is truncated to
    ``[-W, W]`` in the imaginary direction.  ``max_evals`` counts panel
    (1-D) or rectangle (2-D) evaluations of the quadrature rule.
    """

    cs: float
    ct: float = 0.0
    W: float = BIVARIATE_W
    abs_tol: float = 1e-5
    rel_tol: float = 1e-5
    max_evals: int = 2000

    def __post_init__(self):
        if not self.W > 0:
            raise ValueError(f"contour half-length W must be positive, got {self.W}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")


@dataclass(frozen=True)
class MeijerGSpec:
    """Indices and parameters of ``G^{m,n}_{p,q}(. | a_params; b_params)``."""

    m: int
    n: int
    a_params: tuple = ()
    b_params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "a_params", tuple(float(v) for v in self.a_params))
        object.__setattr__(self, "b_params", tuple(float(v) for v in self.b_params))
        if not (0 <= self.m <= self.q and 0 <= self.n <= self.p):
            raise ValueError(
                f"need 0 <= m <= q and 0 <= n <= p, got m={self.m}, n={self.n}, "
                f"p={self.p}, q={self.q}")
        for a in self.a_params[:self.n]:
            for b in self.b_params[:self.m]:
                d = a - b
                if d > 0 and abs(d - round(d)) < 1e-12:
                    raise PoleCollisionError(
                        f"a={a:g} and b={b:g} differ by the positive integer "
                        f"{round(d)}; no contour separates their poles")

    @property
    def p(self) -> int:
        return len(self.a_params)

    @property
    def q(self) -> int:
        return len(self.b_params)


@dataclass(frozen=True)
class BivariateGSpec:
    """Parameter groups of the bivariate Meijer G-function.

    Names follow the group layout ``(am1, ap1, bn1, bq1)`` for the joint
    (s+t) group, ``(cm2, cp2, dn2, dq2)`` for the s group and
    ``(em3, ep3, fn3, fq3)`` for the t group.  The integrand is

    .. code-block:: text

        Gamma(am1+s+t) Gamma(1-cm2+s) Gamma(dn2-s) Gamma(1-em3+t) Gamma(fn3-t)
        ---------------------------------------------------------------------- x^s y^t
        Gamma(1-ap1-s-t) Gamma(bq1+s+t) Gamma(cp2-s) Gamma(1-dq2+s)
            Gamma(ep3-t) Gamma(1-fq3+t)

    with each ``Gamma(list + arg)`` read as the product over the list.
    ``bn1`` does not enter the integrand and must stay empty.
    """

    am1: tuple = ()
    ap1: tuple = ()
    bn1: tuple = ()
    bq1: tuple = ()
    cm2: tuple = ()
    cp2: tuple = ()
    dn2: tuple = ()
    dq2: tuple = ()
    em3: tuple = ()
    ep3: tuple = ()
    fn3: tuple = ()
    fq3: tuple = ()

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            vals = tuple(float(v) for v in getattr(self, name))
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, vals)


# ---------------------------------------------------------------------------
# gamma products
# ---------------------------------------------------------------------------

def _is_pole(z):
    z = np.asarray(z, dtype=complex)
    re = z.real
    return (z.imag == 0) & (re <= 0) & (re == np.round(re))


def log_gamma_prod(params: Sequence[float], z):
    """Sum of ``loggamma(params_i + z)``; broadcast over array ``z``.

    Raises :class:`PoleError` when any argument is a pole.
    """
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    for p in params:
        arg = p + z
        if np.any(_is_pole(arg)):
            raise PoleError(f"Gamma({p:g} + z) evaluated at a pole")
        out = out + sps.loggamma(arg)
    return out


def gamma_prod(params: Sequence[float], z) -> complex:
    """Return ``prod_i Gamma(params_i + z)``; exactly 1 for empty ``params``."""
    if len(params) == 0:
        if np.ndim(z) == 0:
            return 1.0 + 0j
        return np.ones(np.shape(z), dtype=complex)
    val = np.exp(log_gamma_prod(params, z))
    return complex(val) if np.ndim(val) == 0 else val


def _log_rgamma_prod(params, z):
    """Sum of ``-loggamma(params_i + z)``; poles give ``-inf`` (a zero factor)."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    for p in params:
        arg = p + z
        pole = _is_pole(arg)
        lg = sps.loggamma(np.where(pole, 1.0, arg))
        out = out - np.where(pole, np.inf, lg)
    return out


# ---------------------------------------------------------------------------
# elementary special functions
# ---------------------------------------------------------------------------

def digamma(n: int) -> float:
    """psi(n) for a positive integer, from the harmonic sum."""
    if n < 1 or int(n) != n:
        raise ValueError(f"digamma is implemented for positive integers, got {n}")
    return math.fsum([-EULER_GAMMA] + [1.0 / j for j in range(1, int(n))])


_BESSEL_SPLIT = 1.0
_TRAP_STEP = 0.125
_TRAP_T = np.arange(0.0, 10.0 + _TRAP_STEP / 2, _TRAP_STEP)
_TRAP_W = np.full(_TRAP_T.shape, _TRAP_STEP)
_TRAP_W[0] = 0.5 * _TRAP_STEP


def _k01_series(x):
    """K_0 and K_1 from their ascending series, for 0 < x <= 1."""
    y = 0.25 * x * x
    log_half = np.log(0.5 * x)
    i0 = np.zeros_like(x)
    i1 = np.zeros_like(x)
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    term = np.ones_like(x)  # y^k / (k!)^2
    harmonic = 0.0
    for k in range(30):
        if k > 0:
            term = term * y / (k * k)
            harmonic += 1.0 / k
        psi_k1 = harmonic - EULER_GAMMA          # psi(k + 1)
        psi_k2 = psi_k1 + 1.0 / (k + 1)          # psi(k + 2)
        i0 = i0 + term
        s0 = s0 + term * psi_k1
        t1 = term / (k + 1)                      # y^k / (k! (k+1)!)
        i1 = i1 + t1
        s1 = s1 + t1 * (psi_k1 + psi_k2)
    i1 = 0.5 * x * i1
    k0 = -log_half * i0 + s0
    k1 = 1.0 / x + log_half * i1 - 0.25 * x * s1
    return k0, k1


def _k_integral(nu, x):
    """K_nu(x) from int_0^inf exp(-x cosh t) cosh(nu t) dt, trapezoid rule.

    The peak narrows like 1/sqrt(x), so the nodes are compressed by
    ``min(1, 4/sqrt(x))`` to keep the step well below the peak width.
    """
    lam = np.minimum(1.0, 4.0 / np.sqrt(x))[:, None]
    t = lam * _TRAP_T
    integrand = np.exp(-x[:, None] * (np.cosh(t) - 1.0)) * np.cosh(nu * t)
    return np.exp(-x) * lam[:, 0] * (integrand @ _TRAP_W)


def modified_bessel_k(order: int, x):
    """Modified Bessel function of the second kind for integer order.

    For ``x <= 1`` the ascending series for K_0 and K_1 is followed by the
    (stable) upward recurrence.  For ``x > 1`` the integral representation
    ``K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`` is summed with the
    trapezoidal rule, which converges geometrically for this integrand.

    Parameters
    ----------
    order : int
        Integer order; ``K_{-nu} = K_nu``.
    x : float or array_like
        Positive argument(s).
    """
    nu = abs(int(order))
    if nu != abs(order):
        raise ValueError("only integer orders are supported")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa <= 0):
        raise ValueError("modified_bessel_k needs x > 0")
    out = np.empty_like(xa)
    small = xa <= _BESSEL_SPLIT
    if np.any(small):
        xs = xa[small]
        k0, k1 = _k01_series(xs)
        if nu == 0:
            out[small] = k0
        else:
            km, k = k0, k1
            for j in range(1, nu):
                km, k = k, km + (2.0 * j / xs) * k
            out[small] = k
    if np.any(~small):
        out[~small] = _k_integral(nu, xa[~small])
    if np.ndim(x) == 0:
        return float(out[0])
    return out


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------

def _nudge(c, left, right, label):
    """Move ``c`` off a pole closer than POLE_PROXIMITY, if a gap allows it."""
    dists = []
    if left is not None:
        dists.append(c - left)
    if right is not None:
        dists.append(right - c)
    if not dists or min(abs(d) for d in dists) >= POLE_PROXIMITY:
        return c
    if left is None or right is None or right <= left:
        return c
    gap = right - left
    mid = 0.5 * (left + right)
    new = c + math.copysign(0.1 * gap, mid - c)
    warnings.warn(f"{label}-contour at {c:.6g} is within {POLE_PROXIMITY:g} of a "
                  f"pole; moved to {new:.6g}", ContourWarning, stacklevel=3)
    return new


def _univariate_bounds(spec):
    right = min(spec.b_params[:spec.m]) if spec.m else None
    left = max(a - 1.0 for a in spec.a_params[:spec.n]) if spec.n else None
    return left, right


def auto_contour_univariate(spec: MeijerGSpec, W: float = UNIVARIATE_W,
                            abs_tol: float = 1e-10, rel_tol: float = 1e-10,
                            max_evals: int = 2000) -> ContourSpec:
    """Pick the abscissa separating the right (b) and left (a) pole families.

    With both families present the line sits halfway between the leftmost
    right-pole ``min(b_j)`` and the rightmost left-pole ``max(a_j) - 1``; with
    one family only it sits 1 away from that family's boundary.
    """
    left, right = _univariate_bounds(spec)
    if left is not None and right is not None:
        if right <= left:
            raise PoleCollisionError(
                f"left poles reach {left:g} but right poles start at {right:g}")
        c = 0.5 * (left + right)
    elif right is not None:
        c = right - 1.0
    elif left is not None:
        c = left + 1.0
    else:
        c = 0.0
    return ContourSpec(cs=c, ct=0.0, W=W, abs_tol=abs_tol, rel_tol=rel_tol,
                       max_evals=max_evals)


def _bivariate_s_bounds(spec):
    right = min(spec.dn2) if spec.dn2 else None
    left = max(c - 1.0 for c in spec.cm2) if spec.cm2 else None
    return left, right


def _bivariate_t_bounds(spec, cs):
    right = min(spec.fn3) if spec.fn3 else None
    cands = [-a - cs for a in spec.am1] + [e - 1.0 for e in spec.em3]
    left = max(cands) if cands else None
    return left, right


def auto_contour_bivariate(spec: BivariateGSpec, x: float, y: float,
                           W: float = BIVARIATE_W, abs_tol: float = 1e-5,
                           rel_tol: float = 1e-5,
                           max_evals: int = 2000) -> ContourSpec:
    """Contour abscissae for the bivariate integral.

    The rule, per group::

        Sups = min(dn2);  Infs = -max(1 - cm2);  cs = (Sups + Infs) / 2
        Supt = min(fn3);  Inft = max([-am1 - cs, em3 - 1])
        ct = Supt - (Supt - Inft) / 10

    When a bound is missing because its list is empty, the line is placed
    1 away from the bound that exists.  ``x`` and ``y`` do not move the
    abscissae; they are accepted so argument-dependent rules can slot in.
    """
    del x, y
    sups = min(spec.dn2) if spec.dn2 else None
    infs = -max(1.0 - c for c in spec.cm2) if spec.cm2 else None
    if sups is not None and infs is not None:
        cs = 0.5 * (sups + infs)
    elif sups is not None:
        cs = sups - 1.0
    elif infs is not None:
        cs = infs + 1.0
    else:
        raise ValueError("bivariate contour: both dn2 and cm2 (s group) are empty")

    supt = min(spec.fn3) if spec.fn3 else None
    cands = [-a - cs for a in spec.am1] + [e - 1.0 for e in spec.em3]
    inft = max(cands) if cands else None
    if supt is not None and inft is not None:
        ct = supt - (supt - inft) / 10.0
    elif supt is not None:
        ct = supt - 1.0
    elif inft is not None:
        ct = inft + 1.0
    else:
        raise ValueError(
            "bivariate contour: fn3, am1 and em3 (t group) are all empty")
    return ContourSpec(cs=cs, ct=ct, W=W, abs_tol=abs_tol, rel_tol=rel_tol,
                       max_evals=max_evals)


def _checked_abscissa(c, left, right, label):
    c = _nudge(c, left, right, label)
    if (left is not None and c <= left) or (right is not None and c >= right):
        raise PoleCollisionError(
            f"{label}-contour at {c:g} does not separate the pole families "
            f"(left poles up to {left}, right poles from {right})")
    return c


# ---------------------------------------------------------------------------
# Meijer G
# ---------------------------------------------------------------------------

def _finish(value, err, abs_tol, rel_tol, what):
    tol = max(abs_tol, rel_tol * abs(value.real))
    if abs(value.imag) > tol + err:
        raise QuadratureError(
            f"{what}: imaginary residue {value.imag:.3e} exceeds tolerance "
            f"{tol:.3e}", value, err)
    return value.real


def _log_terms(spec, z, s):
    m, n = spec.m, spec.n
    b_num, b_den = spec.b_params[:m], spec.b_params[m:]
    a_num, a_den = spec.a_params[:n], spec.a_params[n:]
    return (log_gamma_prod(b_num, -s)
            + log_gamma_prod([1.0 - a for a in a_num], s)
            + _log_rgamma_prod([1.0 - b for b in b_den], s)
            + _log_rgamma_prod(a_den, -s)
            + s * math.log(z))


def log_integrand(spec: MeijerGSpec, z: float, s: complex) -> complex:
    """Complex log of the univariate Mellin-Barnes integrand at ``s``.

    The real part along the real axis is what a saddle-point choice of the
    abscissa minimises.
    """
    return complex(_log_terms(spec, z, np.array([complex(s)]))[0])


def meijer_g(spec: MeijerGSpec, z: float, contour: ContourSpec | None = None,
             log_scale: float = 0.0) -> float:
    """Univariate Meijer G-function by contour quadrature.

    Parameters
    ----------
    spec : MeijerGSpec
    z : float
        Positive real argument.
    contour : ContourSpec, optional
        Defaults to :func:`auto_contour_univariate`.
    log_scale : float
        The result is multiplied by ``exp(log_scale)`` inside the log-space
        integrand, so values far outside the double range can be scaled to
        a representable size before integrating.
    """
    if not z > 0:
        raise ValueError(f"meijer_g needs z > 0, got {z}")
    if contour is None:
        contour = auto_contour_univariate(spec)
    left, right = _univariate_bounds(spec)
    c = _checked_abscissa(contour.cs, left, right, "s")

    def integrand(tau):
        return np.exp(_log_terms(spec, z, c + 1j * tau) + log_scale)

    val, err, _ = adaptive_gk_1d(integrand, -contour.W, contour.W,
                                 2 * math.pi * contour.abs_tol,
                                 contour.rel_tol, contour.max_evals)
    val /= 2 * math.pi
    err /= 2 * math.pi
    return _finish(val, err, contour.abs_tol, contour.rel_tol, "meijer_g")


def _bivariate_log_terms(spec, x, y, s, t):
    """Log of the bivariate integrand on the grid ``s[..., :, None] + t[..., None, :]``.

    ``s`` and ``t`` may carry a common leading batch shape.
    """
    one_minus = lambda v: [1.0 - p for p in v]  # noqa: E731
    s_part = (log_gamma_prod(one_minus(spec.cm2), s)
              + log_gamma_prod(spec.dn2, -s)
              + _log_rgamma_prod(spec.cp2, -s)
              + _log_rgamma_prod(one_minus(spec.dq2), s)
              + s * math.log(x))
    t_part = (log_gamma_prod(one_minus(spec.em3), t)
              + log_gamma_prod(spec.fn3, -t)
              + _log_rgamma_prod(spec.ep3, -t)
              + _log_rgamma_prod(one_minus(spec.fq3), t)
              + t * math.log(y))
    st = s[..., :, None] + t[..., None, :]
    joint = (log_gamma_prod(spec.am1, st)
             + _log_rgamma_prod(one_minus(spec.ap1), -st)
             + _log_rgamma_prod(spec.bq1, st))
    return s_part[..., :, None] + t_part[..., None, :] + joint


def bivariate_log_integrand(spec: BivariateGSpec, x: float, y: float,
                            s: complex, t: complex) -> complex:
    """Complex log of the bivariate integrand at a single point ``(s, t)``.

    Useful for choosing ``log_scale``: the real part at the contour centre
    ``(cs, ct)`` is a good proxy for the size of the result.
    """
    out = _bivariate_log_terms(spec, x, y, np.array([complex(s)]),
                               np.array([complex(t)]))
    return complex(out[0, 0])


def bivariate_meijer_g(spec: BivariateGSpec, x: float, y: float,
                       contour: ContourSpec | None = None,
                       log_scale: float = 0.0) -> float:
    """Bivariate Meijer G-function by a double contour integral.

    Both lines are parametrised as ``s = cs + i u``, ``t = ct + i v`` with
    ``u, v`` in ``[-W, W]``; the factor ``(1/(2 pi i))^2`` becomes
    ``1/(2 pi)^2`` after the change of variables.  ``log_scale`` works as in
    :func:`meijer_g`.
    """
    if not (x > 0 and y > 0):
        raise ValueError(f"bivariate_meijer_g needs x, y > 0, got {x}, {y}")
    if spec.bn1:
        raise ValueError("bn1 does not enter the integrand; pass it empty")
    if contour is None:
        contour = auto_contour_bivariate(spec, x, y)
    cs = _checked_abscissa(contour.cs, *_bivariate_s_bounds(spec), "s")
    ct = _checked_abscissa(contour.ct, *_bivariate_t_bounds(spec, cs), "t")

    def integrand(u, v):
        s = cs + 1j * u
        t = ct + 1j * v
        return np.exp(_bivariate_log_terms(spec, x, y, s, t) + log_scale)

    scale = (2 * math.pi) ** 2
    val, err, _ = adaptive_gk_2d(integrand, (-contour.W, contour.W),
                                 (-contour.W, contour.W),
                                 scale * contour.abs_tol, contour.rel_tol,
                                 contour.max_evals)
    val /= scale
    err /= scale
    return _finish(val, err, contour.abs_tol, contour.rel_tol,
                   "bivariate_meijer_g")


def _valid_abscissae(spec, contour):
    """(cs, ct) if ``contour`` separates the pole families of ``spec``, else None."""
    sl, sr = _bivariate_s_bounds(spec)
    if (sl is not None and contour.cs <= sl) or (sr is not None and contour.cs >= sr):
        return None
    tl, tr = _bivariate_t_bounds(spec, contour.cs)
    if (tl is not None and contour.ct <= tl) or (tr is not None and contour.ct >= tr):
        return None
    return contour.cs, contour.ct


def common_contour_bivariate(specs, x, y, **kwargs) -> ContourSpec:
    """An automatic contour that is valid for every spec in ``specs``.

    Each spec's own automatic contour is tried in turn and the first one
    separating the pole families of all of them is returned.
    """
    for spec in specs:
        cand = auto_contour_bivariate(spec, x, y, **kwargs)
        if all(_valid_abscissae(sp, cand) is not None for sp in specs):
            return cand
    raise PoleCollisionError("no automatic contour is valid for all terms")


def bivariate_meijer_g_sum(terms, x: float, y: float,
                           contour: ContourSpec | None = None,
                           log_scale: float = 0.0) -> float:
    """``sum_i coef_i * G_i(x, y)`` for bivariate G-functions on one contour.

    ``terms`` is a sequence of ``(coef, BivariateGSpec)``.  The integrands are
    combined pointwise before integrating, so the tolerances apply to the
    combination; this matters when the terms nearly cancel.  The default
    contour comes from :func:`common_contour_bivariate`.
    """
    if not (x > 0 and y > 0):
        raise ValueError(f"bivariate_meijer_g_sum needs x, y > 0, got {x}, {y}")
    specs = [sp for _, sp in terms]
    if any(sp.bn1 for sp in specs):
        raise ValueError("bn1 does not enter the integrand; pass it empty")
    if contour is None:
        contour = common_contour_bivariate(specs, x, y)
    for sp in specs:
        if _valid_abscissae(sp, contour) is None:
            raise PoleCollisionError(
                f"contour ({contour.cs:g}, {contour.ct:g}) does not separate the "
                f"pole families of every term")
    cs, ct = contour.cs, contour.ct

    def integrand(u, v):
        s = cs + 1j * u
        t = ct + 1j * v
        out = 0.0
        for coef, sp in terms:
            out = out + coef * np.exp(_bivariate_log_terms(sp, x, y, s, t) + log_scale)
        return out

    scale = (2 * math.pi) ** 2
    val, err, _ = adaptive_gk_2d(integrand, (-contour.W, contour.W),
                                 (-contour.W, contour.W),
                                 scale * contour.abs_tol, contour.rel_tol,
                                 contour.max_evals)
    val /= scale
    err /= scale
    return _finish(val, err, contour.abs_tol, contour.rel_tol,
                   "bivariate_meijer_g_sum")


def saddle_contour_univariate(spec: MeijerGSpec, z: float, W: float = UNIVARIATE_W,
                              abs_tol: float = 1e-10, rel_tol: float = 1e-10,
                              max_evals: int = 2000, margin: float = 0.02):
    """Abscissa at the minimum of the integrand modulus on the real axis.

    Between the two pole families the modulus of a Mellin-Barnes integrand is
    log-convex along the real axis, so its minimum is the saddle point that
    steepest descent would pass through.  A line there carries an integrand
    of roughly the size of the result, whereas the midpoint can exceed it by
    many orders of magnitude when ``z`` is very small or very large.

    Returns ``(contour, log_modulus)``; ``-log_modulus`` is a natural
    ``log_scale`` for :func:`meijer_g`.
    """
    left, right = _univariate_bounds(spec)
    if left is not None and right is not None and right <= left:
        raise PoleCollisionError(
            f"left poles reach {left:g} but right poles start at {right:g}")

    def obj(sig):
        return log_integrand(spec, z, sig).real

    span = 4.0
    for _ in range(10):
        lo = left + margin if left is not None else right - span
        hi = right - margin if right is not None else left + span
        if left is None and right is None:
            lo, hi = -span, span
        res = optimize.minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-4})
        open_lo = left is None and res.x - lo < 1e-2 * span
        open_hi = right is None and hi - res.x < 1e-2 * span
        if not (open_lo or open_hi):
            break
        span *= 4.0
    contour = ContourSpec(cs=float(res.x), ct=0.0, W=W, abs_tol=abs_tol,
                          rel_tol=rel_tol, max_evals=max_evals)
    return contour, float(res.fun)


def _log_abs_combination(terms, x, y, cs, ct):
    logs = [bivariate_log_integrand(sp, x, y, cs, ct) for _, sp in terms]
    top = max(l.real for l in logs)
    acc = sum(coef * np.exp(l - top) for (coef, _), l in zip(terms, logs))
    return top + math.log(abs(acc)) if acc != 0 else -math.inf


def saddle_contour_bivariate(terms, x: float, y: float, W: float = BIVARIATE_W,
                             abs_tol: float = 1e-5, rel_tol: float = 1e-5,
                             max_evals: int = 2000, margin: float = 0.02):
    """Bivariate counterpart of :func:`saddle_contour_univariate`.

    ``terms`` is a sequence of ``(coef, BivariateGSpec)`` as for
    :func:`bivariate_meijer_g_sum` (a single spec is ``[(1.0, spec)]``).  The
    modulus of the combined integrand at real ``(cs, ct)`` is minimised over
    the region where the contour separates the pole families of every term,
    starting from :func:`common_contour_bivariate`.

    Returns ``(contour, log_modulus)``.
    """
    specs = [sp for _, sp in terms]
    start = common_contour_bivariate(specs, x, y)

    def feasible(cs, ct):
        for sp in specs:
            sl, sr = _bivariate_s_bounds(sp)
            if (sl is not None and cs < sl + margin) or (sr is not None and cs > sr - margin):
                return False
            tl, tr = _bivariate_t_bounds(sp, cs)
            if (tl is not None and ct < tl + margin) or (tr is not None and ct > tr - margin):
                return False
        return True

    def obj(p):
        cs, ct = p
        if not feasible(cs, ct):
            return math.inf
        v = _log_abs_combination(terms, x, y, cs, ct)
        return v if v > -math.inf else math.inf

    res = optimize.minimize(obj, [start.cs, start.ct], method="Nelder-Mead",
                            options={"xatol": 1e-3, "fatol": 1e-6,
                                     "initial_simplex": [[start.cs, start.ct],
                                                         [start.cs + 0.1, start.ct],
                                                         [start.cs, start.ct - 0.5]]})
    cs, ct = (float(v) for v in res.x)
    if not (math.isfinite(res.fun) and res.fun <= obj([start.cs, start.ct])):
        cs, ct = start.cs, start.ct
    contour = ContourSpec(cs=cs, ct=ct, W=W, abs_tol=abs_tol, rel_tol=rel_tol,
                          max_evals=max_evals)
    return contour, _log_abs_combination(terms, x, y, cs, ct)


def with_contour(contour: ContourSpec, **changes) -> ContourSpec:
    """Copy of ``contour`` with some fields replaced."""
    return replace(contour, **changes)
