"""Synthetic evaluation stacks and the scaling benchmark driver."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dataio import _open
from .engine import (
    MonitorConfig,
    PhaseTimings,
    SeriesStack,
    profile_run,
    resolve_crit_value,
    resolve_threads,
)
from .model import regular_axis

SEASONAL_AMPLITUDE = 0.05

# Each generator block owns one counter-based substream of the seed, so the
# block size is part of the output contract and must never change.
GENERATOR_BLOCK = 4096

BENCH_CSV_HEADER = "m,ingest,model,predictions,residuals,mosum,breaks,total"


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic stack.

    Every series is a seasonal sine of amplitude 0.05 plus Gaussian noise;
    the first floor(break_ratio * n_pixels) pixels additionally get a level
    shift of break_mag over the last floor(break_frac * n_obs) observations.
    """

    n_pixels: int
    n_obs: int
    freq: float
    noise_std: float = 0.01
    break_mag: float = 0.1
    break_frac: float = 0.4
    break_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_pixels < 1:
            raise ValueError("n_pixels must be >= 1")
        if self.n_obs < 2:
            raise ValueError("n_obs must be >= 2")
        if self.freq <= 0:
            raise ValueError("freq must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0.0 <= self.break_frac <= 1.0:
            raise ValueError("break_frac must lie in [0, 1]")
        if not 0.0 <= self.break_ratio <= 1.0:
            raise ValueError("break_ratio must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def generate(
    spec: SynthSpec, threads: Optional[int] = None
) -> tuple[SeriesStack, np.ndarray]:
    """Generate a stack and the boolean break ground truth per pixel.

    Break-bearing pixels are the leading prefix, as recorded in the returned
    truth vector. Deterministic per seed and independent of worker count.
    """
    n_obs, n_pixels = spec.n_obs, spec.n_pixels
    t = np.arange(1, n_obs + 1, dtype=np.float64)
    base = SEASONAL_AMPLITUDE * np.sin(2.0 * np.pi * t / spec.freq)
    n_break = int(math.floor(spec.break_ratio * n_pixels + 1e-9))
    truth = np.arange(n_pixels) < n_break
    shift_rows = int(math.floor(spec.break_frac * n_obs + 1e-9))
    shift_start = n_obs - shift_rows
    data = np.empty((n_obs, n_pixels), dtype=np.float32)

    def fill_block(index: int, start: int, stop: int):
        rng = np.random.Generator(
            np.random.Philox(key=spec.seed, counter=index << 128)
        )
        block = base[:, None] + spec.noise_std * rng.standard_normal(
            (n_obs, stop - start)
        )
        breaking = min(stop, n_break) - start
        if breaking > 0 and shift_rows > 0 and spec.break_mag != 0.0:
            block[shift_start:, :breaking] += spec.break_mag
        data[:, start:stop] = block

    blocks = [
        (index, start, min(start + GENERATOR_BLOCK, n_pixels))
        for index, start in enumerate(range(0, n_pixels, GENERATOR_BLOCK))
    ]
    threads = resolve_threads(threads)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda block: fill_block(*block), blocks))
    else:
        for block in blocks:
            fill_block(*block)
    return SeriesStack(data, regular_axis(n_obs)), truth


def bench_scaling(
    m_values,
    config: MonitorConfig,
    template: SynthSpec,
    threads: Optional[int] = None,
    sink=None,
) -> list[tuple[int, PhaseTimings]]:
    """Profile one freshly generated stack per pixel count.

    The critical value is resolved once up front (it depends on the monitor
    geometry, not on the pixel count), so the per-m timings measure the
    monitor itself. Rows are written as CSV when a sink is given.
    """
    m_values = [int(m) for m in m_values]
    if not m_values:
        raise ValueError("need at least one pixel count")
    if any(m < 1 for m in m_values):
        raise ValueError("pixel counts must be >= 1")
    if config.crit_value is None:
        crit = resolve_crit_value(config, template.n_obs, resolve_threads(threads))
        config = replace(config, crit_value=crit)
    rows = []
    for m in m_values:
        stack, _ = generate(replace(template, n_pixels=m), threads=threads)
        _, timings = profile_run(stack, config, threads=threads)
        rows.append((m, timings))
    if sink is not None:
        write_bench_csv(rows, sink)
    return rows


def write_bench_csv(rows, sink) -> int:
    """Write bench_scaling rows; returns the data row count."""
    with _open(sink, "w") as out:
        out.write(BENCH_CSV_HEADER + "\n")
        for m, timings in rows:
            out.write(
                f"{m},{timings.ingest:.6f},{timings.model:.6f},"
                f"{timings.predictions:.6f},{timings.residuals:.6f},"
                f"{timings.mosum:.6f},{timings.breaks:.6f},{timings.total:.6f}\n"
            )
    return len(rows)
