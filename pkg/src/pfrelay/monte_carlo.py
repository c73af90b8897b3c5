"""Monte-Carlo simulation of the pinhole-Rayleigh project-and-forward chain
and of a per-antenna amplify-and-forward baseline.

Trials run in batches.  Each batch draws from its own substream, spawned
from ``numpy.random.SeedSequence(seed)`` by batch index, so results depend
only on ``(trials, seed, batch_size)`` and not on how batches are scheduled.
Batch statistics are kept as ``(count, sum, sum of squares)`` records that
merge associatively.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel_analysis import SystemConfig

__all__ = [
    "Accumulator",
    "DegenerateChannelError",
    "EstimateWithCI",
    "SimConfig",
    "batch_generators",
    "complex_gaussian",
    "qr_dof",
    "sample_af_snr",
    "sample_e2e_snr",
    "sample_pinhole_snr",
    "sample_qr_dof_snr",
    "simulate_af_baseline",
    "simulate_capacity",
    "simulate_outage",
]

DEFAULT_BATCH = 1 << 18
Z95 = 1.96


class DegenerateChannelError(RuntimeError):
    """A channel draw stayed all-zero after a retry."""


@dataclass(frozen=True)
class SimConfig:
    """Trial plan: total trials, 64-bit seed and batch size.

    ``batch_size`` defaults to ``min(trials, 2**18)``.
    """

    trials: int = 10**6
    seed: int = 0
    batch_size: int | None = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        bs = min(self.trials, DEFAULT_BATCH) if self.batch_size is None else self.batch_size
        if int(bs) != bs or not 1 <= bs <= self.trials:
            raise ValueError(f"batch_size must be in [1, trials], got {bs}")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "batch_size", int(bs))

    @property
    def batch_sizes(self):
        full, rest = divmod(self.trials, self.batch_size)
        return [self.batch_size] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class EstimateWithCI:
    """Sample mean with its standard error and a normal 95% interval."""

    value: float
    std_error: float
    ci95_low: float
    ci95_high: float
    trials_used: int

    @classmethod
    def from_mean(cls, value, std_error, trials):
        half = Z95 * std_error
        return cls(value, std_error, value - half, value + half, trials)


@dataclass(frozen=True)
class Accumulator:
    """Streaming ``(count, sum, sum of squares)`` record."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=float)
        return cls(int(v.size), float(np.sum(v)), float(np.sum(v * v)))

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.count + other.count, self.total + other.total,
                           self.total_sq + other.total_sq)

    def estimate(self) -> EstimateWithCI:
        if self.count == 0:
            raise ValueError("no samples accumulated")
        mean = self.total / self.count
        var = max(self.total_sq / self.count - mean * mean, 0.0)
        return EstimateWithCI.from_mean(mean, math.sqrt(var / self.count), self.count)


def batch_generators(sim: SimConfig):
    """One independent generator per batch, in batch order."""
    children = np.random.SeedSequence(sim.seed).spawn(len(sim.batch_sizes))
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def complex_gaussian(rng, shape):
    """Circularly-symmetric complex normal entries, variance 1/2 per part."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _out(x, size):
    return float(x[0]) if size is None else x


def sample_pinhole_snr(config: SystemConfig, rng, size=None):
    """First-hop SNR ``snr_sr * G_s * G_r`` with ``G_i ~ Gamma(n_i, 1)``.

    ``2 * G_i`` is chi-squared with ``2 n_i`` degrees of freedom: the squared
    norm of an ``n_i``-vector of unit-variance complex normals.
    """
    n = 1 if size is None else size
    g = config.snr_sr * rng.gamma(config.n_s, size=n) * rng.gamma(config.n_r, size=n)
    return _out(g, size)


def qr_dof(H):
    """QR-factorise stacked channel matrices, returning ``(h_r, R)``.

    For a rank-one ``H`` only the first row of ``R`` is nonzero; ``h_r`` is
    that row.
    """
    _, R = np.linalg.qr(H)
    return R[..., 0, :], R


def _draw_channels(config, rng, n):
    g_s = complex_gaussian(rng, (n, config.n_s))
    g_r = complex_gaussian(rng, (n, config.n_r))
    return g_s, g_r


def sample_qr_dof_snr(config: SystemConfig, rng, size=None, return_parts=False):
    """First-hop SNR through the explicit matrix path.

    Draws ``g_s`` and ``g_r``, forms ``H = g_r g_s^H``, QR-factorises it and
    returns ``snr_sr * ||h_r||^2`` for the nonzero row ``h_r`` of ``R``.
    All-zero draws are redrawn once, then :class:`DegenerateChannelError`.
    With ``return_parts`` the tuple ``(snr, g_s, g_r, R)`` is returned.
    """
    n = 1 if size is None else size
    g_s, g_r = _draw_channels(config, rng, n)
    for attempt in range(2):
        bad = ~(np.any(g_s != 0, axis=1) & np.any(g_r != 0, axis=1))
        if not np.any(bad):
            break
        if attempt == 1:
            raise DegenerateChannelError(f"{int(bad.sum())} all-zero channel draws after retry")
        g_s[bad], g_r[bad] = _draw_channels(config, rng, int(bad.sum()))
    H = g_r[:, :, None] * g_s.conj()[:, None, :]
    h_r, R = qr_dof(H)
    snr = config.snr_sr * np.sum(np.abs(h_r) ** 2, axis=1)
    if return_parts:
        return snr, g_s, g_r, R
    return _out(snr, size)


def sample_e2e_snr(config: SystemConfig, rng, size=None):
    """End-to-end SNR ``g_sr g_rd / (g_sr + g_rd + 1)``."""
    n = 1 if size is None else size
    g_sr = sample_pinhole_snr(config, rng, n)
    g_rd = config.snr_rd * rng.exponential(size=n)
    return _out(g_sr * g_rd / (g_sr + g_rd + 1.0), size)


def sample_af_snr(n_s, n_r, snr_sr, snr_rd, rng, size=None):
    """End-to-end SNR of the per-antenna CSI-assisted amplify-and-forward relay.

    Relay antenna ``j`` sees ``h_j = g_{r,j} ||g_s||`` (source beamforming
    along ``g_s``), scales its received sample by
    ``(snr_sr |h_j|^2 + 1)^(-1/2)`` so it transmits at unit power, and all
    ``n_r`` antennas transmit at once over Rayleigh coefficients ``c_j``.
    The single-antenna destination sees the superposition and detects with
    full CSI, so

    .. code-block:: text

        snr = snr_sr snr_rd |sum_j c_j G_j h_j|^2 / (snr_rd sum_j |c_j|^2 G_j^2 + 1)

    Accepts ``n_r = 1``, where it coincides with the project-and-forward chain.
    """
    n = 1 if size is None else size
    norm_s = np.sqrt(rng.gamma(n_s, size=n))
    h = complex_gaussian(rng, (n, n_r)) * norm_s[:, None]
    c = complex_gaussian(rng, (n, n_r))
    gain2 = 1.0 / (snr_sr * np.abs(h) ** 2 + 1.0)
    signal = np.abs(np.sum(c * np.sqrt(gain2) * h, axis=1)) ** 2
    noise = snr_rd * np.sum(np.abs(c) ** 2 * gain2, axis=1) + 1.0
    return _out(snr_sr * snr_rd * signal / noise, size)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _run(sim, batch_stat, jobs=1):
    gens = batch_generators(sim)
    work = list(zip(gens, sim.batch_sizes))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda gw: batch_stat(*gw), work))
    else:
        parts = [batch_stat(g, n) for g, n in work]
    acc = Accumulator()
    for p in parts:  # merge in batch order for reproducible rounding
        acc = acc.merge(p)
    return acc.estimate()


def simulate_outage(gamma_th: float, config: SystemConfig, sim: SimConfig = SimConfig(),
                    jobs: int = 1) -> EstimateWithCI:
    """Empirical ``P[g_e2e < gamma_th]`` with binomial standard error."""
    if gamma_th < 0:
        raise ValueError("gamma_th must be non-negative")

    def stat(rng, n):
        return Accumulator.of(sample_e2e_snr(config, rng, n) < gamma_th)

    return _run(sim, stat, jobs)


def simulate_capacity(config: SystemConfig, sim: SimConfig = SimConfig(),
                      jobs: int = 1) -> EstimateWithCI:
    """Sample mean of ``1/2 log2(1 + g_e2e)``."""
    def stat(rng, n):
        return Accumulator.of(0.5 * np.log2(1.0 + sample_e2e_snr(config, rng, n)))

    return _run(sim, stat, jobs)


def simulate_af_baseline(gamma_th: float | None, config: SystemConfig,
                         sim: SimConfig = SimConfig(), mode: str = "outage",
                         jobs: int = 1) -> EstimateWithCI:
    """Outage (``mode="outage"``) or capacity (``mode="capacity"``) of the
    amplify-and-forward baseline described in :func:`sample_af_snr`."""
    if mode not in ("outage", "capacity"):
        raise ValueError(f"mode must be 'outage' or 'capacity', got {mode!r}")
    if mode == "outage" and (gamma_th is None or gamma_th < 0):
        raise ValueError("outage mode needs a non-negative gamma_th")

    def stat(rng, n):
        snr = sample_af_snr(config.n_s, config.n_r, config.snr_sr, config.snr_rd, rng, n)
        if mode == "outage":
            return Accumulator.of(snr < gamma_th)
        return Accumulator.of(0.5 * np.log2(1.0 + snr))

    return _run(sim, stat, jobs)
