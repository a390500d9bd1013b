"""MOSUM monitoring: moving-sum process, boundary, simulated critical values,
and break decisions.

A break is declared when the absolute moving sum of prediction residuals,
normalized by the history residual scale, strictly exceeds the boundary
crit_value * sqrt(log_plus(t / n)). The critical value is calibrated by Monte
Carlo so that a break-free series crosses the boundary with probability alpha.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import _kernels
from .errors import DegreesOfFreedomError, ZeroResidualError
from .model import build_design_matrix, fit_mapping, regular_axis

# Replications are evaluated in vectorized batches; each replication still owns
# its own counter-based substream, so the batch size never changes results.
REPLICATION_BLOCK = 2048


def log_plus(x) -> np.ndarray:
    """Boundary log: 1 for x <= e, the natural log above."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    np.log(x, out=out, where=x > np.e)
    return out


def mosum_process(residuals, sigma: float, n_history: int, bandwidth: int) -> np.ndarray:
    """Normalized moving sums over the monitor period of one series.

    Entry j covers the `bandwidth` residuals ending at observation
    n_history + 1 + j (windows near the start reach back into the history),
    scaled by 1 / (sigma * sqrt(n_history)). Computed with one explicit
    first-window sum followed by add-one/drop-one updates; the batched
    kernels in `_kernels` follow the same recurrence.
    """
    resid = np.asarray(residuals, dtype=np.float64)
    if resid.ndim != 1:
        raise ValueError("residuals must be one-dimensional")
    n_obs = resid.size
    if not 1 <= bandwidth <= n_history:
        raise ValueError("bandwidth must satisfy 1 <= h <= n")
    if not n_history < n_obs:
        raise ValueError("history must end before the series does (n < N)")
    if sigma <= 0:
        raise ValueError(
            "sigma must be positive; zero-residual histories are rejected upstream"
        )
    inv_scale = 1.0 / (sigma * math.sqrt(n_history))
    out = np.empty(n_obs - n_history)
    acc = 0.0
    for row in range(n_history - bandwidth + 1, n_history + 1):
        acc += resid[row]
    out[0] = acc * inv_scale
    for j in range(1, out.size):
        acc += resid[n_history + j] - resid[n_history - bandwidth + j]
        out[j] = acc * inv_scale
    return out


def boundary_values(n_history: int, n_obs: int, crit_value: float) -> np.ndarray:
    """Boundary per monitored observation: crit_value * sqrt(log_plus(t/n)).

    The argument t is the observation count (n_history+1 .. n_obs), not the
    time-axis value, so irregular sampling shares the same boundary.
    """
    if n_obs <= n_history:
        raise ValueError("need at least one monitored observation (n < N)")
    if crit_value <= 0:
        raise ValueError("critical value must be positive")
    t = np.arange(n_history + 1, n_obs + 1, dtype=np.float64)
    return crit_value * np.sqrt(log_plus(t / n_history))


@dataclass(frozen=True)
class MosumSeries:
    """MOSUM values and boundary over the monitor period of one series."""

    mo: np.ndarray
    bound: np.ndarray
    n_history: int

    def __post_init__(self):
        mo = np.asarray(self.mo, dtype=np.float64)
        bound = np.asarray(self.bound, dtype=np.float64)
        if mo.ndim != 1 or mo.shape != bound.shape or mo.size < 1:
            raise ValueError("mo and bound must be equal-length, non-empty vectors")
        if not (np.all(np.isfinite(mo)) and np.all(np.isfinite(bound))):
            raise ValueError("mo and bound must be finite")
        object.__setattr__(self, "mo", mo)
        object.__setattr__(self, "bound", bound)


@dataclass(frozen=True)
class BreakResult:
    """Monitoring outcome of one series.

    first_break is the 1-based observation number of the first strict
    boundary crossing, present exactly when detected is True.
    """

    detected: bool
    first_break: Optional[int]
    max_abs_mo: float


def detect(series: MosumSeries) -> BreakResult:
    """Declare a break at the first strict boundary crossing, if any."""
    magnitude = np.abs(series.mo)
    exceed = magnitude > series.bound
    max_abs = float(magnitude.max())
    if not exceed.any():
        return BreakResult(False, None, max_abs)
    offset = int(exceed.argmax())
    return BreakResult(True, series.n_history + offset + 1, max_abs)


@dataclass(frozen=True)
class CriticalValueRequest:
    """Monte Carlo calibration request for the boundary scale.

    h_frac is the bandwidth as a fraction of the simulated history length and
    horizon the ratio of full to history length. harmonics and freq describe
    the season-trend model fitted inside each replication; the defaults match
    the canonical monitoring configuration (3 harmonics, 23 observations per
    cycle).
    """

    alpha: float
    h_frac: float
    horizon: float
    n_sim: int
    reps: int
    seed: int
    harmonics: int = 3
    freq: float = 23.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.h_frac <= 1.0:
            raise ValueError("h_frac must lie in (0, 1]")
        if not self.horizon > 1.0:
            raise ValueError("monitoring horizon must exceed 1")
        if self.reps < 1000:
            raise ValueError("need at least 1000 replications")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")
        if self.freq <= 0:
            raise ValueError("freq must be positive")
        if self.n_sim <= 2 + 2 * self.harmonics:
            raise DegreesOfFreedomError(
                f"n_sim must exceed the coefficient count ({2 + 2 * self.harmonics})"
            )


def critical_value(request: CriticalValueRequest, threads: int = 1) -> float:
    """Empirical (1 - alpha) quantile of the null boundary-crossing statistic.

    Each replication draws an i.i.d. standard-normal series, fits the full
    season-trend history model, and takes the sup over the monitor period of
    |MO_t| / sqrt(log_plus(t/n)). Replication r draws from its own
    counter-based substream of `seed`, so the result is bit-identical for a
    fixed seed regardless of batching or worker count.
    """
    n_hist = request.n_sim
    n_obs = int(round(request.horizon * n_hist))
    bandwidth = int(round(request.h_frac * n_hist))
    if n_obs <= n_hist:
        raise ValueError("horizon too small: no monitor period to simulate")
    if bandwidth < 1:
        raise ValueError("h_frac too small: bandwidth rounds to zero")
    _kernels.warmup()
    design = build_design_matrix(regular_axis(n_obs), request.freq, request.harmonics)
    mapping = fit_mapping(design, n_hist).matrix
    design_t = np.ascontiguousarray(design.matrix.T)
    t = np.arange(n_hist + 1, n_obs + 1, dtype=np.float64)
    inv_shape = 1.0 / np.sqrt(log_plus(t / n_hist))
    dof = n_hist - design.n_params
    sup = np.empty(request.reps)

    def run_block(start: int, stop: int):
        width = stop - start
        draws = np.empty((n_obs, width))
        for j in range(width):
            rng = np.random.Generator(
                np.random.Philox(key=request.seed, counter=(start + j) << 128)
            )
            draws[:, j] = rng.standard_normal(n_obs)
        coeffs = mapping @ draws[:n_hist]
        resid = draws - design_t @ coeffs
        hist_ss = np.einsum("ij,ij->j", resid[:n_hist], resid[:n_hist])
        sigma = np.sqrt(hist_ss / dof)
        if not np.all(sigma > 0):
            raise ZeroResidualError(
                "a simulated null series produced a zero residual scale"
            )
        inv_scale = 1.0 / (sigma * math.sqrt(n_hist))
        mo = np.empty((n_obs - n_hist, width))
        _kernels.mosum_block(resid, n_hist, bandwidth, inv_scale, mo)
        np.abs(mo, out=mo)
        mo *= inv_shape[:, None]
        sup[start:stop] = mo.max(axis=0)

    blocks = [
        (start, min(start + REPLICATION_BLOCK, request.reps))
        for start in range(0, request.reps, REPLICATION_BLOCK)
    ]
    # Replication blocks are the unit of parallelism; keep BLAS single
    # threaded underneath.
    with threadpool_limits(limits=1, user_api="blas"):
        if threads > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(lambda block: run_block(*block), blocks))
        else:
            for block in blocks:
                run_block(*block)
    return float(np.quantile(sup, 1.0 - request.alpha))
