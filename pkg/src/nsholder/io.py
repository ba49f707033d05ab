"""Snapshot binaries, trajectory directories and versioned CSV tables.

Snapshot layout (little-endian): magic ``NS2D``, u32 format version, u32 n,
f64 t, then u1, u2 and p as row-major f64 arrays of n*n entries.
A trajectory directory holds one snapshot file per emitted time, a
``manifest.json`` with the solver configuration and snapshot times, and
``energy_log.csv``.
"""

from __future__ import annotations

import csv
import json
import struct
from collections import OrderedDict
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .forcing import ForcingSpec
from .solver import ENERGY_COLUMNS, InitialCondition, Snapshot, SolverConfig, Trajectory
from .spectral import Grid

MAGIC = b"NS2D"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIId")
MANIFEST = "manifest.json"
ENERGY_LOG = "energy_log.csv"
SCHEMA_PREFIX = "# schema:"


class FormatError(ValueError):
    """A file does not follow the expected layout or schema version."""


# -- snapshots -----------------------------------------------------------------


def write_snapshot(path, snap: Snapshot) -> None:
    u = np.asarray(snap.u, dtype="<f8")
    p = np.asarray(snap.p, dtype="<f8")
    n = u.shape[-1]
    if u.shape != (2, n, n) or p.shape != (n, n):
        raise ValueError(f"inconsistent snapshot shapes {u.shape} and {p.shape}")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, n, float(snap.t)))
        fh.write(np.ascontiguousarray(u).tobytes())
        fh.write(np.ascontiguousarray(p).tobytes())


def read_header(path) -> tuple[int, float]:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, t = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported snapshot version {version}")
    return n, t


def read_snapshot(path, mmap: bool = False) -> Snapshot:
    n, t = read_header(path)
    expected = HEADER.size + 3 * n * n * 8
    size = Path(path).stat().st_size
    if size != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {size}")
    if mmap:
        data = np.memmap(path, dtype="<f8", mode="r", offset=HEADER.size, shape=(3, n, n))
    else:
        data = np.fromfile(path, dtype="<f8", offset=HEADER.size).reshape(3, n, n)
    return Snapshot(t=t, u=data[:2], p=data[2])


# -- configuration round trip ----------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_to_dict(config: SolverConfig) -> dict:
    d = {
        "grid": {"n": config.grid.n, "length": config.grid.length},
        "forcing": asdict(config.forcing),
        "initial": asdict(config.initial),
    }
    for name in ("dt", "t_end", "viscosity", "output_every", "nonlinearity", "projection",
                 "dense_from", "dense_every", "max_halvings", "scheme"):
        d[name] = getattr(config, name)
    return _plain(d)


def config_from_dict(d: dict) -> SolverConfig:
    d = dict(d)
    g = d.pop("grid")
    grid = Grid(int(g["n"]), float(g["length"]))
    f = dict(d.pop("forcing"))
    if "center" in f.get("geometry", {}):
        f["geometry"] = dict(f["geometry"], center=tuple(f["geometry"]["center"]))
    ini = dict(d.pop("initial"))
    ini["k"] = tuple(ini.get("k", (1, 0)))
    return SolverConfig(grid=grid, forcing=ForcingSpec(**f), initial=InitialCondition(**ini), **d)


# -- versioned CSV ---------------------------------------------------------------


def write_table(path, schema: str, columns: Sequence[str], rows: Iterable[Sequence], timestamp: bool = True) -> None:
    """CSV with a schema line, a timestamp line, then header and rows.

    Floats are written with ``repr`` so identical inputs give identical bytes.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"{SCHEMA_PREFIX} {schema}\n")
        if timestamp:
            fh.write(f"# generated: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return v


def read_table(path, schema: str) -> tuple[list[str], list[list[str]]]:
    """Read a table written by ``write_table``, rejecting other schema versions."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(SCHEMA_PREFIX):
        raise FormatError(f"{path}: missing schema header")
    found = lines[0][len(SCHEMA_PREFIX):].strip()
    if found != schema:
        raise FormatError(f"{path}: schema {found!r} is not the supported {schema!r}")
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    rows = list(csv.reader(body))
    return rows[0], rows[1:]


def read_numeric_table(path, schema: str) -> tuple[list[str], np.ndarray]:
    header, rows = read_table(path, schema)
    return header, np.array([[float(v) for v in r] for r in rows]).reshape(len(rows), len(header))


ENERGY_SCHEMA = "nsholder-energy-log v1"


# -- trajectory directories ------------------------------------------------------


class TrajectoryWriter:
    """Snapshot sink that streams binaries into a directory.

    Call ``close`` with the energy log to write the manifest; closing after a
    solver abort records the trajectory as incomplete.
    """

    def __init__(self, directory, config: SolverConfig):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.entries: list[dict] = []

    def __call__(self, snap: Snapshot) -> None:
        name = f"snap_{len(self.entries):06d}.ns2d"
        write_snapshot(self.directory / name, snap)
        self.entries.append({"file": name, "t": float(snap.t)})

    def close(self, energy_log: np.ndarray, complete: bool = True, message: str = "") -> Path:
        manifest = {
            "format": "nsholder-trajectory",
            "version": FORMAT_VERSION,
            "config": config_to_dict(self.config),
            "snapshots": self.entries,
            "complete": complete,
            "last_valid": len(self.entries) - 1,
            "message": message,
        }
        with open(self.directory / MANIFEST, "w") as fh:
            json.dump(manifest, fh, indent=1)
        write_table(self.directory / ENERGY_LOG, ENERGY_SCHEMA, ENERGY_COLUMNS, np.asarray(energy_log).tolist())
        return self.directory


def save_trajectory(traj: Trajectory, directory) -> Path:
    writer = TrajectoryWriter(directory, traj.config)
    for snap in traj.snapshots:
        writer(snap)
    return writer.close(traj.energy_log)


class _LazySnapshots(Sequence):
    """Memory-mapped snapshots, keeping a bounded number of maps open."""

    def __init__(self, directory: Path, entries: list[dict], mmap: bool, keep: int = 64):
        self._dir = directory
        self._entries = entries
        self._mmap = mmap
        self._open: OrderedDict[int, Snapshot] = OrderedDict()
        self._keep = keep
        self.times = np.array([e["t"] for e in entries], dtype=float)

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, j):
        if isinstance(j, slice):
            return [self[i] for i in range(*j.indices(len(self)))]
        if j < 0:
            j += len(self)
        if j in self._open:
            self._open.move_to_end(j)
            return self._open[j]
        snap = read_snapshot(self._dir / self._entries[j]["file"], mmap=self._mmap)
        self._open[j] = snap
        if len(self._open) > self._keep:
            self._open.popitem(last=False)
        return snap


def load_trajectory(directory, mmap: bool = True) -> Trajectory:
    """Open a trajectory directory; snapshots are read lazily."""
    directory = Path(directory)
    try:
        with open(directory / MANIFEST) as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"{directory}: no {MANIFEST}") from exc
    if manifest.get("format") != "nsholder-trajectory" or manifest.get("version") != FORMAT_VERSION:
        raise FormatError(f"{directory}: unsupported trajectory manifest")
    config = config_from_dict(manifest["config"])
    entries = manifest["snapshots"]
    times = [e["t"] for e in entries]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise FormatError(f"{directory}: snapshot times are not strictly increasing")
    log_path = directory / ENERGY_LOG
    energy = read_numeric_table(log_path, ENERGY_SCHEMA)[1] if log_path.exists() else np.empty((0, len(ENERGY_COLUMNS)))
    traj = Trajectory(config=config, energy_log=energy)
    traj.snapshots = _LazySnapshots(directory, entries, mmap)
    return traj
