"""Season-trend break monitoring for large stacks of pixel time series."""

from .dataio import read_series_csv, read_stack, write_break_map, write_stack
from .engine import (
    BreakMap,
    MonitorConfig,
    PhaseTimings,
    SeriesStack,
    fill_gaps,
    monitor_batch,
    profile_run,
    resolve_crit_value,
    resolve_threads,
)
from .errors import (
    AllNanSeriesError,
    BreakwatchError,
    CsvParseError,
    DegreesOfFreedomError,
    RankDeficiencyError,
    StackCapacityError,
    StackFormatError,
    ZeroResidualError,
)
from .model import (
    DesignMatrix,
    HistoryModel,
    MappingMatrix,
    TimeAxis,
    amplitude_phase,
    build_design_matrix,
    fit_history,
    fit_mapping,
    predict,
    regular_axis,
)
from .mosum import (
    BreakResult,
    CriticalValueRequest,
    MosumSeries,
    boundary_values,
    critical_value,
    detect,
    log_plus,
    mosum_process,
)
from .synth import SynthSpec, bench_scaling, generate, write_bench_csv

__version__ = "0.1.0"

__all__ = [
    "AllNanSeriesError",
    "BreakMap",
    "BreakResult",
    "BreakwatchError",
    "CriticalValueRequest",
    "CsvParseError",
    "DegreesOfFreedomError",
    "DesignMatrix",
    "HistoryModel",
    "MappingMatrix",
    "MonitorConfig",
    "MosumSeries",
    "PhaseTimings",
    "RankDeficiencyError",
    "SeriesStack",
    "StackCapacityError",
    "StackFormatError",
    "SynthSpec",
    "TimeAxis",
    "ZeroResidualError",
    "amplitude_phase",
    "bench_scaling",
    "boundary_values",
    "build_design_matrix",
    "critical_value",
    "detect",
    "fill_gaps",
    "fit_history",
    "fit_mapping",
    "generate",
    "log_plus",
    "monitor_batch",
    "mosum_process",
    "predict",
    "profile_run",
    "read_series_csv",
    "read_stack",
    "regular_axis",
    "resolve_crit_value",
    "resolve_threads",
    "write_bench_csv",
    "write_break_map",
    "write_stack",
]
