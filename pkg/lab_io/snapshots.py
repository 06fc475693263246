# lab_io/snapshots.py
"""
Binary snapshot codec and trajectory directories.

Snapshot layout (little-endian, no padding):
    magic    4 bytes   b"HWM1"
    version  u32       1
    M        u64       number of grid points
    L        f64       box length
    values   3*M f64   component-major (u_1 row, then u_2, then u_3)

A trajectory directory holds slice_00000.hwm, slice_00001.hwm, ... plus
times.csv with a single "time[t]" column.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from dynamics.solver import SolverConfig
from spectral.errors import ConfigError, SnapshotError
from spectral.fields import Trajectory, VectorField3
from spectral.grid import SpectralGrid

logger = logging.getLogger(__name__)

MAGIC = b"HWM1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIQd")
VALUE_DTYPE = np.dtype("<f8")
FLOAT_FORMAT = "%.17g"
TIMES_FILE = "times.csv"
SLICE_PATTERN = "slice_{:05d}.hwm"


def snapshot_size(num_points: int) -> int:
    return HEADER.size + 3 * num_points * VALUE_DTYPE.itemsize


def encode_snapshot(field: VectorField3) -> bytes:
    grid = field.grid
    header = HEADER.pack(MAGIC, FORMAT_VERSION, grid.num_points, grid.box_length)
    return header + np.ascontiguousarray(field.values, dtype=VALUE_DTYPE).tobytes()


def decode_snapshot(blob: bytes, source: str = "<bytes>") -> VectorField3:
    if len(blob) < HEADER.size:
        raise SnapshotError(f"{source}: truncated header ({len(blob)} of {HEADER.size} bytes)")
    magic, version, m, length = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"{source}: format version {version} is not supported (expected {FORMAT_VERSION})")
    expected = snapshot_size(m)
    if len(blob) < expected:
        raise SnapshotError(f"{source}: truncated payload ({len(blob)} of {expected} bytes)")
    if len(blob) > expected:
        raise SnapshotError(f"{source}: {len(blob) - expected} trailing bytes after payload")
    try:
        grid = SpectralGrid(length, m)
    except ConfigError as exc:
        raise SnapshotError(f"{source}: invalid grid header: {exc}") from None
    values = np.frombuffer(blob, dtype=VALUE_DTYPE, count=3 * m, offset=HEADER.size).reshape(3, m)
    return VectorField3(grid, values.astype(np.float64))


def write_snapshot(field: VectorField3, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(field))
    logger.debug(f"[IO] snapshot {path} M={field.grid.num_points}")
    return path


def read_snapshot(path: str | Path) -> VectorField3:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Missing snapshot at {path}")
    return decode_snapshot(path.read_bytes(), source=str(path))


# ---------- Trajectory directories ----------
def write_trajectory(traj: Trajectory, directory: str | Path) -> List[Path]:
    """Write every slice plus times.csv; returns the written paths in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = [write_snapshot(s, directory / SLICE_PATTERN.format(j)) for j, s in enumerate(traj)]
    times_path = directory / TIMES_FILE
    pd.DataFrame({"time[t]": traj.times}).to_csv(times_path, index=False, float_format=FLOAT_FORMAT)
    written.append(times_path)
    logger.info(f"[IO] trajectory {directory} slices={len(traj)}")
    return written


def _require_matching_times(times: np.ndarray, config: SolverConfig, directory: Path) -> None:
    """Stored output stride and horizon must be the ones the config would produce."""
    expected = config.num_steps // config.output_stride + 1
    if times.size != expected:
        raise SnapshotError(
            f"{directory}: {times.size} stored slices, config (T={config.final_time:g}, "
            f"output every {config.output_dt:g}) expects {expected}"
        )
    if times.size > 1:
        stored = times[1] - times[0]
        if abs(stored - config.output_dt) > 1e-9 * config.output_dt:
            raise SnapshotError(
                f"{directory}: stored output stride {stored:g} does not match config stride {config.output_dt:g}"
            )


def read_trajectory(directory: str | Path, config: Optional[SolverConfig] = None) -> Trajectory:
    directory = Path(directory)
    times_path = directory / TIMES_FILE
    if not times_path.exists():
        raise FileNotFoundError(f"Missing {TIMES_FILE} in trajectory directory {directory}")
    times = pd.read_csv(times_path)["time[t]"].to_numpy(dtype=np.float64)
    if config is not None:
        _require_matching_times(times, config, directory)
    slices = [read_snapshot(directory / SLICE_PATTERN.format(j)) for j in range(times.size)]
    grid = slices[0].grid
    if any(s.grid != grid for s in slices):
        raise SnapshotError(f"{directory}: slices do not share one grid")
    if config is not None:
        grid.require_same(config.grid, "stored trajectory")
        grid = config.grid
    data = np.stack([s.values for s in slices])
    return Trajectory(times=times, data=data, grid=grid, config=config)
