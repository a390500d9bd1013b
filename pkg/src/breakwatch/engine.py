"""Batch monitoring over pixel stacks.

Two backends produce identical decisions. The fused backend builds the design
and mapping matrices once and sweeps every pixel through five batched phases
(model, predictions, residuals, moving sums, breaks) preceded by an ingest
phase that fills gaps and widens samples to float64. The naive backend runs
the per-series procedure pixel by pixel and serves as the correctness
reference. Both distribute contiguous pixel blocks over a worker pool; blocks
are fixed by block_size, and each worker writes only its own output slice, so
results do not depend on the worker count.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import ClassVar, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import _kernels
from .errors import AllNanSeriesError, ZeroResidualError
from .model import (
    TimeAxis,
    build_design_matrix,
    fit_history,
    fit_mapping,
    predict,
)
from .mosum import (
    BreakResult,
    CriticalValueRequest,
    MosumSeries,
    boundary_values,
    critical_value,
    detect,
    mosum_process,
)

DEFAULT_BLOCK_SIZE = 4096
THREADS_ENV_VAR = "BREAKWATCH_THREADS"

# Defaults for resolving the critical value when the config leaves it out.
# The seed is fixed so identical invocations produce identical break maps.
CALIBRATION_REPS = 50_000
CALIBRATION_SEED = 7

PHASE_NAMES = ("ingest", "model", "predictions", "residuals", "mosum", "breaks")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit argument, else BREAKWATCH_THREADS, else machine parallelism."""
    if threads is None:
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError(
                    f"{THREADS_ENV_VAR} must be an integer, got {env!r}"
                ) from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


@dataclass(frozen=True)
class SeriesStack:
    """Time-major stack of pixel series.

    data is float32 with shape (n_obs, n_pixels): one row holds every pixel
    at a single timestamp, so per-timestamp access is contiguous. Missing
    samples are quiet NaN.
    """

    data: np.ndarray
    time_axis: TimeAxis

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError("stack data must be 2-D (n_obs, n_pixels)")
        if data.shape[1] < 1:
            raise ValueError("stack needs at least one pixel")
        if data.shape[0] != len(self.time_axis):
            raise ValueError("time axis length must match the number of rows")
        object.__setattr__(self, "data", data)

    @property
    def n_obs(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MonitorConfig:
    """Monitoring parameters shared by every pixel of a batch."""

    history: int  # stable history length n
    bandwidth: int  # moving-sum window h
    harmonics: int  # sine/cosine pairs k
    freq: float  # observations per seasonal cycle
    alpha: float = 0.05
    crit_value: Optional[float] = None  # explicit boundary scale; simulated when None
    backend: str = "fused"

    def __post_init__(self):
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")
        if self.freq <= 0:
            raise ValueError("freq must be positive")
        if self.history <= self.n_params:
            raise ValueError(
                f"history must exceed the coefficient count (n > {self.n_params})"
            )
        if not 1 <= self.bandwidth <= self.history:
            raise ValueError("bandwidth must satisfy 1 <= h <= n")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.crit_value is not None and not self.crit_value > 0:
            raise ValueError("explicit critical value must be positive")
        if self.backend not in ("fused", "naive"):
            raise ValueError("backend must be 'fused' or 'naive'")

    @property
    def n_params(self) -> int:
        return 2 + 2 * self.harmonics


@dataclass(frozen=True)
class BreakMap:
    """Per-pixel break decisions for one monitored stack.

    first_break holds the 1-based observation number of the first boundary
    crossing, 0 where no break was found. Pixels without a single finite
    sample are masked invalid and carry detected=False, first_break=0,
    max_abs_mo=0.
    """

    detected: np.ndarray  # bool (n_pixels,)
    first_break: np.ndarray  # int64 (n_pixels,)
    max_abs_mo: np.ndarray  # float64 (n_pixels,)
    valid: np.ndarray  # bool (n_pixels,)
    config: MonitorConfig
    crit_value: float
    mosum: Optional[np.ndarray] = None  # (n_obs - n, n_pixels), diagnostics only

    def __len__(self) -> int:
        return self.detected.size

    @property
    def break_count(self) -> int:
        return int(self.detected.sum())

    def result(self, pixel: int) -> BreakResult:
        first = int(self.first_break[pixel])
        return BreakResult(
            bool(self.detected[pixel]),
            first if first else None,
            float(self.max_abs_mo[pixel]),
        )


@dataclass(frozen=True)
class PhaseTimings:
    """Wall-clock seconds per pipeline phase, from a monotonic clock.

    total covers the whole run including setup (and critical-value
    simulation when the config did not pin one), so the phases sum to at
    most the total.
    """

    ingest: float
    model: float
    predictions: float
    residuals: float
    mosum: float
    breaks: float
    total: float

    names: ClassVar[tuple] = PHASE_NAMES

    @property
    def phase_sum(self) -> float:
        return sum(getattr(self, name) for name in PHASE_NAMES)


def fill_gaps(series) -> np.ndarray:
    """Forward fill from the first finite value; back-fill the leading gap.

    Raises AllNanSeriesError when nothing is finite; batch runners catch this
    and mask the pixel instead of aborting. A series without gaps is returned
    unchanged.
    """
    values = np.asarray(series)
    finite = np.isfinite(values)
    if finite.all():
        return values
    if not finite.any():
        raise AllNanSeriesError("series has no finite values")
    idx = np.where(finite, np.arange(values.size), -1)
    np.maximum.accumulate(idx, out=idx)
    idx[idx < 0] = int(finite.argmax())
    return values[idx]


def resolve_crit_value(config: MonitorConfig, n_obs: int, threads: int = 1) -> float:
    """config.crit_value when set, else one simulation at the batch geometry."""
    if config.crit_value is not None:
        return float(config.crit_value)
    request = CriticalValueRequest(
        alpha=config.alpha,
        h_frac=config.bandwidth / config.history,
        horizon=n_obs / config.history,
        n_sim=config.history,
        reps=CALIBRATION_REPS,
        seed=CALIBRATION_SEED,
        harmonics=config.harmonics,
        freq=config.freq,
    )
    return critical_value(request, threads=threads)


def monitor_batch(
    stack: SeriesStack,
    config: MonitorConfig,
    threads: Optional[int] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    keep_mosum: bool = False,
) -> BreakMap:
    """Monitor every pixel of a stack; see the module docstring for backends.

    keep_mosum attaches the full (n_obs - n, n_pixels) moving-sum matrix to
    the returned map for diagnostics.
    """
    break_map, _ = _run(stack, config, threads, block_size, keep_mosum)
    return break_map


def profile_run(
    stack: SeriesStack,
    config: MonitorConfig,
    threads: Optional[int] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> tuple[BreakMap, PhaseTimings]:
    """monitor_batch plus wall-clock seconds per phase."""
    return _run(stack, config, threads, block_size, keep_mosum=False)


def _pixel_blocks(n_pixels: int, block_size: int) -> list[tuple[int, int]]:
    if block_size < 1:
        raise ValueError("block size must be >= 1")
    return [
        (start, min(start + block_size, n_pixels))
        for start in range(0, n_pixels, block_size)
    ]


def _for_each_block(pool, blocks, task):
    if pool is None:
        for start, stop in blocks:
            task(start, stop)
    else:
        list(pool.map(lambda block: task(*block), blocks))


def _run(stack, config, threads, block_size, keep_mosum):
    clock = time.perf_counter
    started = clock()
    if config.history >= stack.n_obs:
        raise ValueError("history must end before the series does (n < N)")
    threads = resolve_threads(threads)
    _kernels.warmup()
    crit = resolve_crit_value(config, stack.n_obs, threads)
    blocks = _pixel_blocks(stack.n_pixels, block_size)
    pool = None
    if threads > 1 and len(blocks) > 1:
        pool = ThreadPoolExecutor(max_workers=threads)
    try:
        backend = _fused_phases if config.backend == "fused" else _naive_phases
        # Pixel blocks are the unit of parallelism here; nested BLAS threads
        # inside the small per-block products only add contention.
        with threadpool_limits(limits=1, user_api="blas"):
            outputs, times = backend(
                stack, config, crit, blocks, pool, keep_mosum, clock
            )
    finally:
        if pool is not None:
            pool.shutdown()
    first_idx, max_abs, valid, mo = outputs
    detected = first_idx > 0
    first_break = np.where(detected, config.history + first_idx, 0)
    break_map = BreakMap(detected, first_break, max_abs, valid, config, crit, mo)
    timings = PhaseTimings(total=clock() - started, **times)
    return break_map, timings


def _ingest_block(src, out, valid_out):
    """Fill gaps and widen one float32 block to float64, column-wise."""
    finite = np.isfinite(src)
    valid = finite.any(axis=0)
    valid_out[:] = valid
    if finite.all():
        out[:] = src
        return
    n_obs = src.shape[0]
    idx = np.where(finite, np.arange(n_obs, dtype=np.int64)[:, None], -1)
    np.maximum.accumulate(idx, axis=0, out=idx)
    first = finite.argmax(axis=0)
    np.copyto(idx, first[None, :], where=idx < 0)
    out[:] = np.take_along_axis(src, idx, axis=0)
    out[:, ~valid] = 0.0


def _fused_phases(stack, config, crit, blocks, pool, keep_mosum, clock):
    n_obs, n_pixels = stack.data.shape
    n_hist = config.history
    bandwidth = config.bandwidth
    src = stack.data
    times = {}

    mark = clock()
    values = np.empty((n_obs, n_pixels))
    valid = np.empty(n_pixels, dtype=bool)

    def ingest(start, stop):
        _ingest_block(src[:, start:stop], values[:, start:stop], valid[start:stop])

    _for_each_block(pool, blocks, ingest)
    times["ingest"] = clock() - mark

    mark = clock()
    design = build_design_matrix(stack.time_axis, config.freq, config.harmonics)
    mapping = fit_mapping(design, n_hist).matrix
    design_t = np.ascontiguousarray(design.matrix.T)
    coeffs = np.empty((design.n_params, n_pixels))

    def model(start, stop):
        np.matmul(mapping, values[:n_hist, start:stop], out=coeffs[:, start:stop])

    _for_each_block(pool, blocks, model)
    times["model"] = clock() - mark

    mark = clock()
    predicted = np.empty((n_obs, n_pixels))

    def predictions(start, stop):
        np.matmul(design_t, coeffs[:, start:stop], out=predicted[:, start:stop])

    _for_each_block(pool, blocks, predictions)
    times["predictions"] = clock() - mark

    mark = clock()
    resid = np.empty((n_obs, n_pixels))
    inv_scale = np.empty(n_pixels)
    dof = n_hist - design.n_params
    sqrt_n = math.sqrt(n_hist)

    def residuals(start, stop):
        np.subtract(
            values[:, start:stop], predicted[:, start:stop], out=resid[:, start:stop]
        )
        hist = resid[:n_hist, start:stop]
        sigma = np.sqrt(np.einsum("ij,ij->j", hist, hist) / dof)
        block_valid = valid[start:stop]
        degenerate = (sigma == 0.0) & block_valid
        if degenerate.any():
            pixel = start + int(np.flatnonzero(degenerate)[0])
            raise ZeroResidualError(
                f"pixel {pixel} fits its history exactly (sigma = 0)"
            )
        with np.errstate(divide="ignore"):
            scale = 1.0 / (sigma * sqrt_n)
        scale[~block_valid] = 0.0
        inv_scale[start:stop] = scale

    _for_each_block(pool, blocks, residuals)
    times["residuals"] = clock() - mark

    mark = clock()
    mo = np.empty((n_obs - n_hist, n_pixels))

    def mosum(start, stop):
        _kernels.mosum_block(
            resid[:, start:stop], n_hist, bandwidth, inv_scale[start:stop], mo[:, start:stop]
        )

    _for_each_block(pool, blocks, mosum)
    times["mosum"] = clock() - mark

    mark = clock()
    bound = boundary_values(n_hist, n_obs, crit)
    first_idx = np.zeros(n_pixels, dtype=np.int64)
    max_abs = np.zeros(n_pixels)

    def breaks(start, stop):
        _kernels.detect_block(
            mo[:, start:stop], bound, first_idx[start:stop], max_abs[start:stop]
        )

    _for_each_block(pool, blocks, breaks)
    times["breaks"] = clock() - mark

    return (first_idx, max_abs, valid, mo if keep_mosum else None), times


def _naive_phases(stack, config, crit, blocks, pool, keep_mosum, clock):
    """Reference backend: the per-series procedure, one pixel at a time.

    Every pixel re-derives its own history solve; only the design matrix is
    shared, being a pure function of the time axis.
    """
    n_obs, n_pixels = stack.data.shape
    n_hist = config.history
    bandwidth = config.bandwidth
    src = stack.data
    times = {}

    mark = clock()
    values = np.empty((n_obs, n_pixels))
    valid = np.ones(n_pixels, dtype=bool)

    def ingest(start, stop):
        for pixel in range(start, stop):
            try:
                values[:, pixel] = fill_gaps(src[:, pixel])
            except AllNanSeriesError:
                valid[pixel] = False
                values[:, pixel] = 0.0

    _for_each_block(pool, blocks, ingest)
    times["ingest"] = clock() - mark

    mark = clock()
    design = build_design_matrix(stack.time_axis, config.freq, config.harmonics)
    betas = np.empty((design.n_params, n_pixels))
    sigmas = np.zeros(n_pixels)

    def model(start, stop):
        for pixel in range(start, stop):
            if not valid[pixel]:
                betas[:, pixel] = 0.0
                continue
            fitted = fit_history(design, values[:, pixel], n_hist)
            betas[:, pixel] = fitted.beta
            sigmas[pixel] = fitted.sigma

    _for_each_block(pool, blocks, model)
    times["model"] = clock() - mark

    mark = clock()
    predicted = np.empty((n_obs, n_pixels))

    def predictions(start, stop):
        for pixel in range(start, stop):
            predicted[:, pixel] = predict(design, betas[:, pixel])

    _for_each_block(pool, blocks, predictions)
    times["predictions"] = clock() - mark

    mark = clock()
    resid = np.empty((n_obs, n_pixels))

    def residuals(start, stop):
        for pixel in range(start, stop):
            resid[:, pixel] = values[:, pixel] - predicted[:, pixel]

    _for_each_block(pool, blocks, residuals)
    times["residuals"] = clock() - mark

    mark = clock()
    mo = np.zeros((n_obs - n_hist, n_pixels))

    def mosum(start, stop):
        for pixel in range(start, stop):
            if not valid[pixel]:
                continue
            if sigmas[pixel] == 0.0:
                raise ZeroResidualError(
                    f"pixel {pixel} fits its history exactly (sigma = 0)"
                )
            mo[:, pixel] = mosum_process(
                resid[:, pixel], sigmas[pixel], n_hist, bandwidth
            )

    _for_each_block(pool, blocks, mosum)
    times["mosum"] = clock() - mark

    mark = clock()
    bound = boundary_values(n_hist, n_obs, crit)
    first_idx = np.zeros(n_pixels, dtype=np.int64)
    max_abs = np.zeros(n_pixels)

    def breaks(start, stop):
        for pixel in range(start, stop):
            if not valid[pixel]:
                continue
            result = detect(MosumSeries(mo[:, pixel], bound, n_hist))
            max_abs[pixel] = result.max_abs_mo
            if result.detected:
                first_idx[pixel] = result.first_break - n_hist

    _for_each_block(pool, blocks, breaks)
    times["breaks"] = clock() - mark

    return (first_idx, max_abs, valid, mo if keep_mosum else None), times
