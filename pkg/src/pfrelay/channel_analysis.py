"""Outage probability and ergodic capacity of a dual-hop project-and-forward
relay over a MIMO pinhole first hop and a Rayleigh second hop.

SNRs are linear here (the CLI works in dB).  Noise power is normalised to 1,
so each hop is described by its average SNR alone.
"""

import functools
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .special_functions import (
    UNIVARIATE_W,
    BivariateGSpec,
    MeijerGSpec,
    QuadratureError,
    auto_contour_univariate,
    bivariate_meijer_g_sum,
    digamma,
    meijer_g,
    modified_bessel_k,
    saddle_contour_bivariate,
    saddle_contour_univariate,
    with_contour,
)

__all__ = [
    "CapacityQuadratureWarning",
    "OutageResult",
    "SeriesTermError",
    "SystemConfig",
    "Truncation",
    "TruncationWarning",
    "capacity_asymptotic_high_snr",
    "capacity_asymptotic_large_beta",
    "capacity_asymptotic_zero",
    "capacity_exact",
    "capacity_integral",
    "capacity_numeric_quadrature",
    "e2e_cdf_derivative",
    "outage_asymptotic",
    "outage_exact",
    "outage_integral",
    "pdf_gamma_rd",
    "pdf_gamma_sr",
    "series_coefficient",
]

LN2 = math.log(2.0)
# The capacity kernels for large k + l need a longer contour than the generic default
CAPACITY_W = 20.0


class SeriesTermError(RuntimeError):
    """A Meijer-G evaluation inside a truncated series failed.

    ``indices`` holds the series indices of the first term that needed it:
    ``(k, l)`` for the outage series, ``(k, n, l)`` for capacity.
    """

    def __init__(self, message, indices):
        super().__init__(f"{message} at term {indices}")
        self.indices = indices


class TruncationWarning(UserWarning):
    """The truncated series shows signs of being cut too early."""


class CapacityQuadratureWarning(UserWarning):
    """The CCDF never fell below the tail threshold; integration stopped early."""


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts and per-hop average SNRs (linear).

    ``alpha``, ``nu`` and ``beta`` are derived on access.
    """

    n_s: int
    n_r: int
    snr_sr: float
    snr_rd: float

    def __post_init__(self):
        for name in ("n_s", "n_r"):
            v = getattr(self, name)
            if int(v) != v or v < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {v}")
            object.__setattr__(self, name, int(v))
        for name in ("snr_sr", "snr_rd"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)

    @property
    def alpha(self) -> float:
        return 0.5 * (self.n_s + self.n_r) - 1.0

    @property
    def nu(self) -> int:
        return self.n_r - self.n_s

    @property
    def beta(self) -> float:
        return self.snr_rd / self.snr_sr

    @property
    def log_norm(self) -> float:
        """log(Gamma(n_s) Gamma(n_r))."""
        return math.lgamma(self.n_s) + math.lgamma(self.n_r)


@dataclass(frozen=True)
class Truncation:
    """Truncation orders: outer index k <= K, inner index l <= L."""

    K: int = 50
    L: int = 5

    def __post_init__(self):
        for name in ("K", "L"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v}")
            object.__setattr__(self, name, int(v))


class OutageResult(NamedTuple):
    """Outage probability clamped to [0, 1] and the raw series value."""

    value: float
    raw: float


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def pdf_gamma_sr(gamma, config: SystemConfig):
    """Density of the first-hop SNR, a scaled product of two gamma variates.

    f(g) = 2 / (Gamma(n_s) Gamma(n_r) snr_sr) * (g/snr_sr)^alpha
           * K_nu(2 sqrt(g/snr_sr))
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("pdf_gamma_sr needs gamma >= 0")
    out = np.zeros(g.shape)
    pos = g > 0
    if np.any(pos):
        z = g[pos] / config.snr_sr
        log_pre = math.log(2.0 / config.snr_sr) - config.log_norm
        kv = modified_bessel_k(config.nu, 2.0 * np.sqrt(z))
        with np.errstate(under="ignore"):
            out[pos] = np.exp(log_pre + config.alpha * np.log(z)) * kv
    return float(out) if np.ndim(gamma) == 0 else out


def pdf_gamma_rd(gamma, config: SystemConfig):
    """Exponential density of the second-hop SNR."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("pdf_gamma_rd needs gamma >= 0")
    out = np.exp(-g / config.snr_rd) / config.snr_rd
    return float(out) if np.ndim(gamma) == 0 else out


def series_coefficient(k: int, l: int) -> float:
    """a_{k,l} = Gamma(k+l)/Gamma(k), with a_{0,0} = 1 and a_{0,l} = 0."""
    if k < 0 or l < 0:
        raise ValueError("series indices must be non-negative")
    if k == 0:
        return 1.0 if l == 0 else 0.0
    return math.exp(math.lgamma(k + l) - math.lgamma(k))


def _log_series_coefficient(k, l):
    if k == 0:
        return 0.0 if l == 0 else -math.inf
    return math.lgamma(k + l) - math.lgamma(k)


# ---------------------------------------------------------------------------
# outage
# ---------------------------------------------------------------------------

def _tail_spec(config, m):
    # G^{3,0}_{1,3}(. | 0; -1, alpha + nu/2 - m, alpha - nu/2 - m)
    return MeijerGSpec(3, 0, (0.0,), (-1.0, config.n_r - 1 - m, config.n_s - 1 - m))


def _scaled_tail(c, config, m, W):
    """c^(m+1) G^{3,0}_{1,3}(c | ...) evaluated with the power folded in.

    The contour goes through the saddle point rather than the default
    offset: for small c the default line carries c^-1 times the result, and
    for large c the result is ~exp(-2 sqrt(c)) while the integrand there is
    not, so either way digits would be lost to cancellation.
    """
    spec = _tail_spec(config, m)
    contour, _ = saddle_contour_univariate(spec, c, W=W, abs_tol=1e-12, rel_tol=1e-10)
    return meijer_g(spec, c, contour, log_scale=(m + 1) * math.log(c))


def outage_exact(gamma_th: float, config: SystemConfig,
                 trunc: Truncation = Truncation(), W: float | None = None
                 ) -> OutageResult:
    """Outage probability from the truncated double series.

    The non-outage probability is

    .. code-block:: text

        exp(-g/snr_rd) / (Gamma(n_s) Gamma(n_r))
          * sum_k (-1)^k/k! ((g+1)/snr_rd)^k
            * sum_l a_{k,l}/l! (g/snr_sr)^(k+l+1) G^{3,0}_{1,3}(g/snr_sr | ...)

    summed with ``l`` innermost and ``k`` outermost, both with compensated
    summation.  The tail Meijer-G depends on ``k + l`` only and is cached.
    Warns with :class:`TruncationWarning` when the raw value falls outside
    [-1e-3, 1 + 1e-3].

    Parameters
    ----------
    gamma_th : float
        Threshold SNR (linear), positive.
    config : SystemConfig
    trunc : Truncation
    W : float, optional
        Contour half-length for the Meijer-G quadrature.

    Returns
    -------
    OutageResult
        ``value`` clamped to [0, 1] and the unclamped ``raw`` series.
    """
    if not gamma_th > 0:
        raise ValueError(f"gamma_th must be positive, got {gamma_th}")
    W = UNIVARIATE_W if W is None else W
    c = gamma_th / config.snr_sr
    log_x = math.log((gamma_th + 1.0) / config.snr_rd)
    tails = {}

    outer = []
    for k in range(trunc.K + 1):
        inner = []
        for l in range(trunc.L + 1):
            la = _log_series_coefficient(k, l)
            if la == -math.inf:
                continue
            m = k + l
            if m not in tails:
                try:
                    tails[m] = _scaled_tail(c, config, m, W)
                except QuadratureError as exc:
                    raise SeriesTermError(str(exc), (k, l)) from exc
            inner.append(math.exp(la - math.lgamma(l + 1)) * tails[m])
        log_w = k * log_x - math.lgamma(k + 1)
        outer.append((-1) ** k * math.exp(log_w) * math.fsum(inner))

    scale = math.exp(-gamma_th / config.snr_rd - config.log_norm)
    raw = 1.0 - scale * math.fsum(outer)
    if not -1e-3 <= raw <= 1.0 + 1e-3:
        warnings.warn(f"outage series gives {raw:.3e} at gamma_th={gamma_th:.4g}; "
                      f"K={trunc.K}, L={trunc.L} is inadequate here",
                      TruncationWarning, stacklevel=2)
    return OutageResult(min(1.0, max(0.0, raw)), raw)


def outage_asymptotic(gamma_th: float, config: SystemConfig) -> float:
    """Small-threshold outage: (1 + 1/((n_s-1)(n_r-1) snr_sr)) * g / snr_rd."""
    coef = 1.0 + 1.0 / ((config.n_s - 1) * (config.n_r - 1) * config.snr_sr)
    return coef * gamma_th / config.snr_rd


def outage_integral(gamma_th: float, config: SystemConfig) -> float:
    """Outage probability by direct one-dimensional quadrature.

    Conditioning on the first hop,
    ``P[g_sr g_rd / (g_sr + g_rd + 1) >= g] = int_g^inf exp(-g(u+1) /
    ((u-g) snr_rd)) f_sr(u) du``.  This needs no series truncation and is
    used as a reference.
    """
    if not gamma_th > 0:
        raise ValueError(f"gamma_th must be positive, got {gamma_th}")
    return 1.0 - _non_outage_integral(gamma_th, config)


def _non_outage_integral(g, config):
    def f(x):
        # x = u - g > 0
        with np.errstate(under="ignore"):
            return math.exp(-g * (g + x + 1.0) / (x * config.snr_rd)) * pdf_gamma_sr(g + x, config)

    scale = config.snr_sr * config.n_s * config.n_r
    pts = [0.0, 0.1 * scale, scale, 10 * scale, 100 * scale]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
    total += integrate.quad(f, pts[-1], np.inf, epsabs=1e-14, epsrel=1e-11, limit=200)[0]
    return total


def e2e_cdf_derivative(gamma: float, config: SystemConfig,
                       trunc: Truncation = Truncation(), W: float | None = None
                       ) -> float:
    """Density of the end-to-end SNR by central differences of the outage series.

    Step ``h = max(1e-4 * gamma, 1e-6)``; a forward difference is used when
    ``gamma <= h``.  The raw (unclamped) series is differentiated.  A value
    below -1e-4 triggers a :class:`TruncationWarning`.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    h = max(1e-4 * gamma, 1e-6)
    hi = outage_exact(gamma + h, config, trunc, W).raw
    if gamma > h:
        lo = outage_exact(gamma - h, config, trunc, W).raw
        d = (hi - lo) / (2 * h)
    else:
        d = (hi - outage_exact(gamma, config, trunc, W).raw) / h
    if d < -1e-4:
        warnings.warn(f"negative density {d:.3e} at gamma={gamma:.4g}; the series "
                      f"truncation (K={trunc.K}, L={trunc.L}) is inadequate here",
                      TruncationWarning, stacklevel=2)
    return d


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------

def _capacity_specs(config, m, n):
    """The two bivariate parameter sets of the (k+l = m, n) capacity term."""
    fn3 = (-1.0, config.n_r - 1 - m, config.n_s - 1 - m)
    s_group = dict(cm2=(1.0, 1.0), dn2=(1.0,), dq2=(0.0,))
    first = BivariateGSpec(am1=(m + n + 2.0,), ep3=(0.0,), fn3=fn3, **s_group)
    second = BivariateGSpec(am1=(m + n + 1.0,), em3=(-(m + n + 1.0),), ep3=(0.0,),
                            fn3=fn3, fq3=(-float(m + n),), **s_group)
    return first, second


@functools.lru_cache(maxsize=1 << 16)
def _capacity_kernel(config, m, n, W, rel_tol=1e-6, abs_tol=1e-12):
    """``G_1 - G_2`` for the (k+l = m, n) term, as (scaled value, log scale).

    The two terms can agree to several digits, so they are integrated as one
    combined integrand, on a contour through the saddle point of that
    combination and rescaled to be O(1) there.  The tolerances are then
    relative to the size of the combination.  Results are cached across
    calls, so raising the truncation order only pays for the new pairs.
    """
    x, y = config.snr_rd, config.beta
    first, second = _capacity_specs(config, m, n)
    terms = [(1.0, first), (-1.0, second)]
    contour, log_mod = saddle_contour_bivariate(terms, x, y, W=W, abs_tol=abs_tol,
                                                rel_tol=rel_tol, max_evals=4000)
    value = bivariate_meijer_g_sum(terms, x, y, contour, log_scale=-log_mod)
    return value, -log_mod


def capacity_exact(config: SystemConfig, trunc: Truncation = Truncation(),
                   W: float | None = None) -> float:
    """Ergodic capacity (bits/s/Hz) from the truncated triple series.

    .. code-block:: text

        C = 1/(2 ln2 Gamma(n_s) Gamma(n_r))
            * sum_k (-1)^k/k! sum_{n<=k} C(k,n) sum_l a_{k,l}/l!
              * snr_rd^(l+n+1) / snr_sr^(k+l+1) * [G_1 - G_2]

    where ``G_1, G_2`` are bivariate Meijer G-functions at
    ``(snr_rd, snr_rd/snr_sr)`` that depend on ``(k+l, n)`` only; each pair
    is evaluated once.  Warns with :class:`TruncationWarning` when the last
    outer (k = K) contribution exceeds 1e-4 of the total.
    """
    W = CAPACITY_W if W is None else W
    log_rd, log_sr = math.log(config.snr_rd), math.log(config.snr_sr)
    kernels = {}
    outer = []
    for k in range(trunc.K + 1):
        terms = []
        for n in range(k + 1):
            log_binom = math.lgamma(k + 1) - math.lgamma(n + 1) - math.lgamma(k - n + 1)
            for l in range(trunc.L + 1):
                la = _log_series_coefficient(k, l)
                if la == -math.inf:
                    continue
                m = k + l
                if (m, n) not in kernels:
                    try:
                        kernels[m, n] = _capacity_kernel(config, m, n, W)
                    except QuadratureError as exc:
                        raise SeriesTermError(str(exc), (k, n, l)) from exc
                diff, shift = kernels[m, n]
                log_w = (log_binom + la - math.lgamma(l + 1)
                         + (l + n + 1) * log_rd - (k + l + 1) * log_sr - shift)
                terms.append(math.exp(log_w) * diff)
        outer.append((-1) ** k * math.exp(-math.lgamma(k + 1)) * math.fsum(terms))

    total = math.fsum(outer)
    if abs(outer[-1]) > 1e-4 * abs(total):
        warnings.warn(f"last outer term ({outer[-1]:.3e}) exceeds 1e-4 of the sum "
                      f"({total:.3e}); K={trunc.K} may be too small",
                      TruncationWarning, stacklevel=2)
    return total * math.exp(-config.log_norm) / (2 * LN2)


def _tail_limit(config, trunc, W, threshold=1e-8, max_doublings=60):
    """First point of a doubling grid where the CCDF drops below ``threshold``.

    Returns ``(limit, ccdf_at_limit, reached)``.  When the threshold is never
    met, the grid point with the smallest CCDF is returned with
    ``reached=False``.
    """
    g = max(1e-3, min(config.snr_sr * config.n_s * config.n_r, config.snr_rd))
    best = None
    for _ in range(max_doublings):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            ccdf = 1.0 - outage_exact(g, config, trunc, W).raw
        if ccdf < threshold:
            return g, ccdf, True
        if best is None or ccdf < best[1]:
            best = (g, ccdf)
        g *= 2.0
    return best[0], best[1], False


def capacity_numeric_quadrature(config: SystemConfig,
                                trunc: Truncation = Truncation(),
                                W: float | None = None,
                                tail_threshold: float = 1e-8) -> float:
    """Ergodic capacity by quadrature of ``1/2 log2(1+g) f(g)``.

    The density comes from :func:`e2e_cdf_derivative`.  The upper limit is the
    first point of a doubling grid where ``1 - outage_exact`` drops below
    ``tail_threshold``; if that never happens, the grid point with the
    smallest CCDF is used and :class:`CapacityQuadratureWarning` is issued.
    """
    upper, ccdf, reached = _tail_limit(config, trunc, W, tail_threshold)
    if not reached:
        warnings.warn(f"CCDF did not fall below {tail_threshold:g}; integrating "
                      f"up to {upper:.4g} where it is {ccdf:.3e}",
                      CapacityQuadratureWarning, stacklevel=2)

    def integrand(g):
        if g <= 0:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            d = e2e_cdf_derivative(g, config, trunc, W)
        return 0.5 * math.log2(1.0 + g) * d

    # split at decades so quad sees the bulk of the density
    edges = [0.0]
    e = min(config.snr_sr, config.snr_rd) * 1e-2
    while e < upper:
        edges.append(e)
        e *= 10.0
    edges.append(upper)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(integrand, lo, hi, epsabs=1e-6, epsrel=1e-6, limit=50)
        total += val
    return total


def capacity_integral(config: SystemConfig) -> float:
    """Ergodic capacity by direct quadrature, without series truncation.

    Integration by parts gives ``1/(2 ln2) int_0^inf P[g_e2e > g]/(1+g) dg``,
    with the non-outage probability from :func:`outage_integral`.  Used as a
    reference.
    """
    def f(g):
        return _non_outage_integral(g, config) / (1.0 + g) if g > 0 else 1.0

    scale = min(config.snr_sr * config.n_s * config.n_r, config.snr_rd)
    pts = [0.0, 0.1 * scale, scale, 10 * scale, 100 * scale]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += integrate.quad(f, lo, hi, epsabs=1e-10, epsrel=1e-9, limit=200)[0]
    total += integrate.quad(f, pts[-1], np.inf, epsabs=1e-10, epsrel=1e-9, limit=200)[0]
    return total / (2 * LN2)


# ---------------------------------------------------------------------------
# asymptotes
# ---------------------------------------------------------------------------

def capacity_asymptotic_large_beta(config: SystemConfig, W: float | None = None) -> float:
    """Capacity when the second hop is much stronger than the first.

    The Meijer-G ``G^{2,5}_{6,4}(snr_sr | 1,1,1,1-n_r,1-n_s,0; 1,1,0,0)``
    equals ``-Gamma(n_s) Gamma(n_r) E[ln(1 + g_sr)]`` under the convention of
    :func:`meijer_g`, so it enters with a minus sign to give a positive
    capacity.
    """
    spec = MeijerGSpec(2, 5, (1, 1, 1, 1 - config.n_r, 1 - config.n_s, 0), (1, 1, 0, 0))
    contour = auto_contour_univariate(spec, abs_tol=1e-12, rel_tol=1e-12, max_evals=4000)
    if W is not None:
        contour = with_contour(contour, W=W)
    g = meijer_g(spec, config.snr_sr, contour, log_scale=-config.log_norm)
    return -g / (2 * LN2)


def capacity_asymptotic_high_snr(config: SystemConfig) -> float:
    """(ln snr_sr + psi(n_s) + psi(n_r)) / (2 ln2)."""
    return (math.log(config.snr_sr) + digamma(config.n_s) + digamma(config.n_r)) / (2 * LN2)


def capacity_asymptotic_zero(config: SystemConfig) -> float:
    """Capacity in the limit beta -> 0 or snr_sr -> 0, which is 0."""
    del config
    return 0.0
