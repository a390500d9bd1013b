"""Binary stack files and CSV surfaces.

Stack layout, all little-endian:

    magic b"BTS1" | u32 version = 1 | u32 n_obs | u32 n_pixels | u8 axis flag
    | axis flag 1: n_obs float64 time stamps
    | n_obs * n_pixels float32 samples, time-major

A flag of 0 means the implicit regular axis 1..n_obs. NaN samples pass
through bit-exactly. The break-map CSV schema is
pixel,valid,detected,first_break,max_abs_mo with floats rendered at 9
significant digits and first_break left empty when no break was found.
"""

import struct
from contextlib import contextmanager

import numpy as np

from .engine import BreakMap, SeriesStack
from .errors import CsvParseError, StackCapacityError, StackFormatError
from .model import TimeAxis, regular_axis

MAGIC = b"BTS1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIB")

# Refuse absurd headers before allocating anything.
PAYLOAD_LIMIT_BYTES = 1 << 40


@contextmanager
def _open(target, mode):
    if hasattr(target, "read") or hasattr(target, "write"):
        yield target
    else:
        handle = open(target, mode)
        try:
            yield handle
        finally:
            handle.close()


def write_stack(stack: SeriesStack, sink) -> int:
    """Serialize a stack to a path or binary file object; returns bytes written.

    An axis equal to 1..n_obs is stored implicitly (flag 0).
    """
    axis = stack.time_axis.values
    implicit = np.array_equal(
        axis, np.arange(1, stack.n_obs + 1, dtype=np.float64)
    )
    written = 0
    with _open(sink, "wb") as out:
        header = _HEADER.pack(
            MAGIC, VERSION, stack.n_obs, stack.n_pixels, 0 if implicit else 1
        )
        out.write(header)
        written += len(header)
        if not implicit:
            axis_bytes = axis.astype("<f8", copy=False).tobytes()
            out.write(axis_bytes)
            written += len(axis_bytes)
        data_bytes = stack.data.astype("<f4", copy=False).tobytes()
        out.write(data_bytes)
        written += len(data_bytes)
    return written


def _read_exact(source, count: int, what: str) -> bytes:
    data = source.read(count)
    if len(data) != count:
        raise StackFormatError(
            f"truncated {what}: wanted {count} bytes, got {len(data)}"
        )
    return data


def read_stack(source) -> SeriesStack:
    """Parse a stack from a path or binary file object.

    Malformed input of any kind raises StackFormatError (StackCapacityError
    for plausible headers that declare more data than this process will
    address); no partial stack is ever returned.
    """
    with _open(source, "rb") as handle:
        header = _read_exact(handle, _HEADER.size, "header")
        magic, version, n_obs, n_pixels, axis_flag = _HEADER.unpack(header)
        if magic != MAGIC:
            raise StackFormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
        if version != VERSION:
            raise StackFormatError(f"unsupported version {version}")
        if n_obs < 2 or n_pixels < 1:
            raise StackFormatError(
                f"invalid dimensions n_obs={n_obs}, n_pixels={n_pixels}"
            )
        if axis_flag not in (0, 1):
            raise StackFormatError(f"unknown axis flag {axis_flag}")
        payload_bytes = 4 * n_obs * n_pixels
        if payload_bytes > PAYLOAD_LIMIT_BYTES:
            raise StackCapacityError(
                f"declared payload of {payload_bytes} bytes exceeds the"
                f" {PAYLOAD_LIMIT_BYTES}-byte limit"
            )
        if axis_flag:
            axis_bytes = _read_exact(handle, 8 * n_obs, "time axis")
            try:
                axis = TimeAxis(np.frombuffer(axis_bytes, dtype="<f8"))
            except ValueError as exc:
                raise StackFormatError(f"invalid time axis: {exc}") from exc
        else:
            axis = regular_axis(n_obs)
        raw = _read_exact(handle, payload_bytes, "sample payload")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(n_obs, n_pixels)
    return SeriesStack(data, axis)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_series_csv(source) -> tuple[TimeAxis, np.ndarray]:
    """Parse two-column time,value text into an axis and a float32 series.

    An empty value field means missing (NaN). A leading header row is
    skipped. Non-numeric cells raise CsvParseError naming the 1-based line.
    """
    stamps: list[float] = []
    samples: list[float] = []
    with _open(source, "r") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [part.strip() for part in line.split(",")]
            if len(parts) != 2:
                raise CsvParseError(
                    f"expected 2 fields, found {len(parts)}", line_number
                )
            stamp_field, value_field = parts
            if line_number == 1 and not _is_number(stamp_field):
                continue
            try:
                stamp = float(stamp_field)
            except ValueError:
                raise CsvParseError(
                    f"bad time value {stamp_field!r}", line_number
                ) from None
            if value_field == "":
                value = float("nan")
            else:
                try:
                    value = float(value_field)
                except ValueError:
                    raise CsvParseError(
                        f"bad sample value {value_field!r}", line_number
                    ) from None
            stamps.append(stamp)
            samples.append(value)
    axis = TimeAxis(np.asarray(stamps, dtype=np.float64))
    return axis, np.asarray(samples, dtype=np.float32)


def write_break_map(break_map: BreakMap, sink) -> int:
    """Write one CSV row per pixel, in pixel order; returns the row count."""
    rows = 0
    with _open(sink, "w") as out:
        out.write("pixel,valid,detected,first_break,max_abs_mo\n")
        for pixel in range(len(break_map)):
            first = int(break_map.first_break[pixel])
            first_field = str(first) if first else ""
            out.write(
                f"{pixel},{int(break_map.valid[pixel])},"
                f"{int(break_map.detected[pixel])},{first_field},"
                f"{break_map.max_abs_mo[pixel]:.9g}\n"
            )
            rows += 1
    return rows
