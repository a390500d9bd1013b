"""Season-trend design matrices and ordinary least-squares history fits.

The regression is a linear trend plus `harmonics` sine/cosine pairs at
multiples of the seasonal cycle (`freq` observations per cycle). Coefficient
vectors are laid out as (intercept, slope, a_1, b_1, ..., a_k, b_k) where the
pair (a_j, b_j) weights (sin, cos) of the j-th harmonic; equivalently
a_j = amplitude_j * cos(phase_j) and b_j = amplitude_j * sin(phase_j), so the
j-th seasonal term is amplitude_j * sin(2*pi*j*t/freq + phase_j).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DegreesOfFreedomError, RankDeficiencyError

GRAM_CONDITION_LIMIT = 1e12
PINV_RELATIVE_CUTOFF = 1e-10
MAPPING_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class TimeAxis:
    """Strictly increasing observation time stamps.

    Evenly sampled series use 1..N (see :func:`regular_axis`); irregular
    sampling may use any increasing real values, e.g. day numbers or decimal
    years, with `freq` expressed in the same units.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("time axis needs at least two observations")
        if not np.all(np.isfinite(values)):
            raise ValueError("time axis values must be finite")
        if not np.all(np.diff(values) > 0):
            raise ValueError("time axis must be strictly increasing")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def regular_axis(n_obs: int) -> TimeAxis:
    """Axis for evenly sampled series: 1, 2, ..., n_obs."""
    return TimeAxis(np.arange(1, n_obs + 1, dtype=np.float64))


@dataclass(frozen=True)
class DesignMatrix:
    """Season-trend regressors, one column per observation."""

    matrix: np.ndarray  # (2 + 2*harmonics, n_obs)
    freq: float
    harmonics: int

    @property
    def n_params(self) -> int:
        return 2 + 2 * self.harmonics

    @property
    def n_obs(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class MappingMatrix:
    """Solved history normal equations: coefficients = matrix @ y_history.

    Depends only on the design matrix, so one mapping serves every series
    that shares a time axis.
    """

    matrix: np.ndarray  # (2 + 2*harmonics, n_history)
    n_history: int


@dataclass(frozen=True)
class HistoryModel:
    """Fitted coefficients and residual scale of one stable history window."""

    beta: np.ndarray
    sigma: float


def build_design_matrix(axis, freq: float, harmonics: int) -> DesignMatrix:
    """Build the regressor matrix for a time axis.

    Row 0 is the intercept, row 1 the raw axis values (trend), and rows
    2j, 2j+1 hold sin and cos of 2*pi*j*t/freq for harmonic j = 1..harmonics.
    """
    if harmonics < 1:
        raise ValueError("harmonics must be >= 1")
    if freq <= 0:
        raise ValueError("freq must be positive")
    if not isinstance(axis, TimeAxis):
        axis = TimeAxis(axis)
    t = axis.values
    matrix = np.empty((2 + 2 * harmonics, t.size))
    matrix[0] = 1.0
    matrix[1] = t
    for j in range(1, harmonics + 1):
        angle = (2.0 * np.pi * j / freq) * t
        matrix[2 * j] = np.sin(angle)
        matrix[2 * j + 1] = np.cos(angle)
    return DesignMatrix(matrix, float(freq), int(harmonics))


def _identity_gap(candidate: np.ndarray, hist: np.ndarray) -> float:
    n_params = candidate.shape[0]
    return float(np.abs(candidate @ hist.T - np.eye(n_params)).max())


def fit_mapping(design: DesignMatrix, n_history: int) -> MappingMatrix:
    """Solve the history normal equations once for reuse across series.

    Solves via the Gram matrix with a symmetric positive-definite
    factorization; a singular-value pseudo-inverse takes over when the Gram
    matrix is ill-conditioned (estimate above 1e12) or the factorization
    fails. If even that cannot reproduce the identity on the history span,
    the design is rank deficient.
    """
    n_params = design.n_params
    if n_history <= n_params:
        raise DegreesOfFreedomError(
            f"history of {n_history} cannot identify {n_params} coefficients;"
            f" need n > {n_params}"
        )
    if n_history > design.n_obs:
        raise ValueError("history length exceeds the design matrix")
    hist = design.matrix[:, :n_history]
    gram = hist @ hist.T
    mapping = None
    if np.linalg.cond(gram) <= GRAM_CONDITION_LIMIT:
        try:
            mapping = cho_solve(cho_factor(gram), hist)
        except LinAlgError:
            mapping = None
    if mapping is None or _identity_gap(mapping, hist) > MAPPING_IDENTITY_TOL:
        mapping = np.linalg.pinv(hist.T, rcond=PINV_RELATIVE_CUTOFF)
        gap = _identity_gap(mapping, hist)
        if gap > MAPPING_IDENTITY_TOL:
            raise RankDeficiencyError(
                f"history design is rank deficient (identity gap {gap:.3e})"
            )
    # The solver may hand back a Fortran-ordered result; downstream batched
    # products want row-major.
    return MappingMatrix(np.ascontiguousarray(mapping), int(n_history))


def fit_history(design: DesignMatrix, series, n_history: int) -> HistoryModel:
    """Fit one series on its stable history window.

    sigma is the residual standard deviation over the history only, with
    n_history - (2 + 2*harmonics) degrees of freedom.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1 or y.size != design.n_obs:
        raise ValueError(
            f"series length {y.size} does not match the design ({design.n_obs})"
        )
    y_hist = y[:n_history]
    if not np.all(np.isfinite(y_hist)):
        raise ValueError("history values must be finite; fill gaps first")
    mapping = fit_mapping(design, n_history)
    beta = mapping.matrix @ y_hist
    hist = design.matrix[:, :n_history]
    resid = hist.T @ beta - y_hist
    dof = n_history - design.n_params
    sigma = float(np.sqrt(resid @ resid / dof))
    return HistoryModel(beta, sigma)


def predict(design: DesignMatrix, beta) -> np.ndarray:
    """Evaluate the season-trend model over every observation."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (design.n_params,):
        raise ValueError(
            f"expected {design.n_params} coefficients, got {beta.shape}"
        )
    return design.matrix.T @ beta


def amplitude_phase(beta, harmonics: int) -> list[tuple[float, float]]:
    """Decode (amplitude, phase) per harmonic from a coefficient vector.

    Amplitudes are non-negative and phases lie in (-pi, pi].
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (2 + 2 * harmonics,):
        raise ValueError(
            f"expected {2 + 2 * harmonics} coefficients, got {beta.shape}"
        )
    pairs = []
    for j in range(1, harmonics + 1):
        a = beta[2 * j]  # amplitude * cos(phase), weight of the sin regressor
        b = beta[2 * j + 1]  # amplitude * sin(phase), weight of the cos regressor
        amplitude = float(np.hypot(a, b))
        phase = float(np.arctan2(b, a))
        if phase <= -np.pi:
            phase = np.pi
        pairs.append((amplitude, phase))
    return pairs
