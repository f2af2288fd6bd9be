"""Grid file formats and atomic file writes.

SGRD layout (little endian)::

    offset 0   4 bytes  magic b"SGRD"
    offset 4   u32      version (1)
    offset 8   u32      n_channels
    offset 12  u32      n_time
    offset 16  f32 * n_channels * n_time, row-major channel-then-time

The CSV grid format holds one channel per row.
"""
import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .section import SeismicSection, as_grid

SGRD_MAGIC = b"SGRD"
SGRD_VERSION = 1
_SGRD_HEADER = struct.Struct("<4sIII")


def atomic_write_bytes(path, data):
    """Write ``data`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        # mkstemp creates 0600; give the result the usual umask-derived mode
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_sgrd(section):
    grid = as_grid(section)
    n_ch, n_t = grid.shape
    return _SGRD_HEADER.pack(SGRD_MAGIC, SGRD_VERSION, n_ch, n_t) + grid.astype("<f4").tobytes()


def decode_sgrd(data, path=None):
    if len(data) < _SGRD_HEADER.size:
        raise FormatError(
            f"truncated SGRD header: need {_SGRD_HEADER.size} bytes, have {len(data)}",
            offset=len(data), path=path,
        )
    magic, version, n_ch, n_t = _SGRD_HEADER.unpack_from(data, 0)
    if magic != SGRD_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SGRD_MAGIC!r}", offset=0, path=path)
    if version != SGRD_VERSION:
        raise FormatError(f"unsupported SGRD version {version}", offset=4, path=path)
    if n_ch < 1 or n_t < 1:
        raise FormatError(f"invalid SGRD dims {n_ch}x{n_t}", offset=8, path=path)
    expected = _SGRD_HEADER.size + 4 * n_ch * n_t
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise FormatError(
            f"{kind} SGRD payload: expected {expected} bytes, have {len(data)}",
            offset=min(len(data), expected), path=path,
        )
    samples = np.frombuffer(data, dtype="<f4", offset=_SGRD_HEADER.size).reshape(n_ch, n_t)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples.ravel()))[0])
        raise FormatError("non-finite sample", offset=_SGRD_HEADER.size + 4 * bad, path=path)
    return SeismicSection(samples.astype(np.float64))


def write_sgrd(path, section):
    atomic_write_bytes(path, encode_sgrd(section))


def read_sgrd(path):
    return decode_sgrd(Path(path).read_bytes(), path=path)


def write_grid_csv(path, section):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in as_grid(section):
        writer.writerow(repr(float(v)) for v in row)
    atomic_write_text(path, buf.getvalue())


def read_grid_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", path=path) from None
    if not rows:
        raise FormatError("empty CSV grid", path=path)
    if len({len(r) for r in rows}) != 1:
        raise FormatError("ragged CSV grid: rows have different lengths", path=path)
    try:
        return SeismicSection(np.array(rows))
    except ValueError as exc:
        raise FormatError(str(exc), path=path) from None


def read_section(path):
    """Load a section from ``.csv`` or SGRD (any other suffix)."""
    if str(path).lower().endswith(".csv"):
        return read_grid_csv(path)
    return read_sgrd(path)


def write_section(path, section):
    if str(path).lower().endswith(".csv"):
        write_grid_csv(path, section)
    else:
        write_sgrd(path, section)
