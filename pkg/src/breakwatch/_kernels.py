"""Hot per-pixel loops with a compiled and a pure-numpy implementation.

The compiled (numba) path is the default. Set BREAKWATCH_KERNELS=numpy to
select the vectorized numpy path instead, or =numba to insist on the compiled
path (import fails loudly if numba is unavailable). Both paths implement the
same contract and are checked against each other in the test suite;
benchmarks/kernel_bench.py compares their throughput.

Arrays arrive time-major (row = one timestamp, pixel index fastest), so the
inner loops run over contiguous memory.
"""

import os

import numpy as np

ENV_VAR = "BREAKWATCH_KERNELS"
CHOICES = ("auto", "numba", "numpy")


def _mosum_loop(resid, n_hist, bandwidth, inv_scale, out):
    # Window of `bandwidth` residuals ending at each monitored observation:
    # one explicit sum for the first window, add-one/drop-one updates after.
    n_mon, width = out.shape
    acc = np.zeros(width)
    for row in range(n_hist - bandwidth + 1, n_hist + 1):
        for c in range(width):
            acc[c] += resid[row, c]
    for c in range(width):
        out[0, c] = acc[c] * inv_scale[c]
    for j in range(1, n_mon):
        for c in range(width):
            acc[c] += resid[n_hist + j, c] - resid[n_hist - bandwidth + j, c]
            out[j, c] = acc[c] * inv_scale[c]


def _detect_loop(mo, bound, first_idx, max_abs):
    # first_idx: 0 = no crossing, else 1-based offset into the monitor period.
    # Ties with the boundary do not count as a crossing.
    n_mon, width = mo.shape
    for j in range(n_mon):
        b = bound[j]
        for c in range(width):
            v = abs(mo[j, c])
            if v > max_abs[c]:
                max_abs[c] = v
            if first_idx[c] == 0 and v > b:
                first_idx[c] = j + 1


def _mosum_numpy(resid, n_hist, bandwidth, inv_scale, out):
    acc = resid[n_hist - bandwidth + 1].copy()
    for row in range(n_hist - bandwidth + 2, n_hist + 1):
        acc += resid[row]
    np.multiply(acc, inv_scale, out=out[0])
    for j in range(1, out.shape[0]):
        acc += resid[n_hist + j] - resid[n_hist - bandwidth + j]
        np.multiply(acc, inv_scale, out=out[j])


def _detect_numpy(mo, bound, first_idx, max_abs):
    magnitude = np.abs(mo)
    np.max(magnitude, axis=0, out=max_abs)
    exceed = magnitude > bound[:, None]
    hit = exceed.any(axis=0)
    first_idx[hit] = exceed.argmax(axis=0)[hit] + 1


_compiled = None


def _compiled_pair():
    global _compiled
    if _compiled is None:
        from numba import njit

        jit = njit(cache=True, nogil=True)
        _compiled = (jit(_mosum_loop), jit(_detect_loop))
    return _compiled


def implementations(choice: str = "auto"):
    """Return (mosum_block, detect_block, name) for the requested path."""
    if choice not in CHOICES:
        raise ValueError(f"unknown kernel path {choice!r}; expected one of {CHOICES}")
    if choice == "numpy":
        return _mosum_numpy, _detect_numpy, "numpy"
    try:
        mosum, det = _compiled_pair()
        return mosum, det, "numba"
    except ImportError:
        if choice == "numba":
            raise
        return _mosum_numpy, _detect_numpy, "numpy"


mosum_block, detect_block, ACTIVE = implementations(
    os.environ.get(ENV_VAR, "auto").lower()
)

_warmed = ACTIVE == "numpy"


def warmup():
    """Trigger one tiny compiled call so later timings exclude JIT cost."""
    global _warmed
    if _warmed:
        return
    resid = np.zeros((4, 2))
    out = np.empty((2, 2))
    mosum_block(resid, 2, 1, np.ones(2), out)
    detect_block(out, np.ones(2), np.zeros(2, dtype=np.int64), np.zeros(2))
    _warmed = True
