"""
Output directory layout, run manifests, CSV/JSON writers and the binary snapshot file

A snapshot file is

    b"HLSNAP01" | uint32 LE header length | UTF-8 JSON header | record*

and every record is '<f8' t | '<u4' N | N '<f8' nodes | N '<f8' values. Files are
append-only, a second writer on the same path checks the magic and appends records
"""

import csv
import json
import struct
import platform
from datetime import datetime, timezone
from pathlib import Path
from collections.abc import Iterable, Iterator, Sequence
from typing import Any, BinaryIO, NamedTuple

import numpy as np
import scipy

from . import __version__ as _hartree_lifespan_version
from .log import logger
from .common import ConfigurationError, GridMismatchError, PathIsh, Res, dumps_json, loads_json
from .defaults import DEFAULTS
from .models import (
    ExperimentPlan,
    FloatArray,
    LifespanRecord,
    RadialField,
    RadialGrid,
    SpaceTimeField,
)

SNAPSHOT_MAGIC = b"HLSNAP01"
_LENGTH = struct.Struct("<I")
_RECORD_HEAD = struct.Struct("<dI")


def make_run_dir(output_dir: PathIsh, kind: str, now: datetime | None = None) -> Path:
    """<output_dir>/<kind>/<UTC timestamp>, with a numeric suffix if that already exists"""
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y%m%dT%H%M%SZ")
    base = Path(output_dir).expanduser() / kind
    run_dir = base / stamp
    k = 1
    while run_dir.exists():
        run_dir = base / f"{stamp}-{k}"
        k += 1
    run_dir.mkdir(parents=True)
    return run_dir


def versions() -> dict[str, str]:
    return {
        "hartree_lifespan": _hartree_lifespan_version,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_json(path: Path, obj: Any) -> Path:
    path.write_text(dumps_json(obj) + "\n", encoding="utf-8")
    return path


def write_jsonl(path: Path, rows: Iterable[dict[str, Any]]) -> Path:
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(dumps_json(row))
            f.write("\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """RFC 4180: header row, CRLF line endings, minimal quoting"""
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def write_manifest(
    run_dir: Path,
    plan: ExperimentPlan,
    *,
    wall_time: float,
    outputs: Iterable[Path],
    status: str,
    extra: dict[str, Any] | None = None,
) -> Path:
    manifest = {
        "plan": plan.to_dict(),
        "seed": plan.seed,
        "versions": versions(),
        "defaults": DEFAULTS.to_dict(),
        "wall_time_seconds": wall_time,
        "outputs": sorted(p.name for p in outputs),
        "status": status,
    }
    if extra:
        manifest.update(extra)
    path = write_json(run_dir / "manifest.json", manifest)
    logger.info(f"Wrote manifest {path}")
    return path


LIFESPAN_COLUMNS = ("eps", "t_lo", "t_hi", "t_mid", "refined", "reason", "doublings", "steps", "max_field")


def lifespan_rows(records: Iterable[Res[LifespanRecord]]) -> Iterator[tuple[Any, ...]]:
    for r in records:
        if isinstance(r, LifespanRecord):
            yield (
                repr(r.eps),
                repr(r.t_blow_lo),
                repr(r.t_blow_hi),
                repr(r.t_blow_mid),
                str(r.refined).lower(),
                r.reason,
                r.doublings,
                r.steps,
                repr(r.max_field),
            )


def record_to_dict(r: LifespanRecord) -> dict[str, Any]:
    return {
        "eps": r.eps,
        "t_lo": r.t_blow_lo,
        "t_hi": r.t_blow_hi,
        "t_mid": r.t_blow_mid,
        "refined": r.refined,
        "reason": r.reason,
        "doublings": r.doublings,
        "steps": r.steps,
        "max_field": r.max_field,
    }


class SnapshotWriter:
    """
    Appends (t, nodes, values) records to a snapshot file

    >>> import tempfile, os
    >>> path = os.path.join(tempfile.mkdtemp(), "s.bin")
    >>> grid = RadialGrid.uniform(0.5, 1.0)
    >>> with SnapshotWriter(path, {"note": "doc"}) as w:
    ...     w.write(RadialField(grid=grid, values=[1.0, 2.0, 3.0], time=0.25))
    >>> header, records = read_snapshots(path)
    >>> header["note"], records[0].t, records[0].values.tolist()
    ('doc', 0.25, [1.0, 2.0, 3.0])
    """

    def __init__(self, path: PathIsh, header: dict[str, Any]) -> None:
        self.path = Path(path)
        self.header = header
        self._f: BinaryIO | None = None

    def __enter__(self) -> "SnapshotWriter":
        existing = self.path.exists() and self.path.stat().st_size > 0
        if existing:
            with self.path.open("rb") as f:
                if f.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
                    raise ConfigurationError(f"{self.path} is not a snapshot file")
        self._f = self.path.open("ab")
        if not existing:
            payload = dumps_json({**self.header, "format": "HLSNAP01", "dtype": "<f8"}).encode("utf-8")
            self._f.write(SNAPSHOT_MAGIC)
            self._f.write(_LENGTH.pack(len(payload)))
            self._f.write(payload)
        return self

    def __exit__(self, *exc: Any) -> None:
        if self._f is not None:
            self._f.close()
            self._f = None

    def write_arrays(self, t: float, nodes: Any, values: Any) -> None:
        assert self._f is not None, "SnapshotWriter used outside a with block"
        x = np.ascontiguousarray(nodes, dtype="<f8")
        v = np.ascontiguousarray(values, dtype="<f8")
        if x.shape != v.shape or x.ndim != 1:
            raise ConfigurationError(f"snapshot: nodes {x.shape} and values {v.shape} differ")
        self._f.write(_RECORD_HEAD.pack(float(t), len(x)))
        self._f.write(x.tobytes())
        self._f.write(v.tobytes())

    def write(self, field: RadialField) -> None:
        self.write_arrays(field.time, field.grid.nodes, field.values)

    def write_trajectory(self, trajectory: SpaceTimeField) -> None:
        for t, row in zip(trajectory.times, trajectory.values):
            self.write_arrays(float(t), trajectory.grid.nodes, row)


class SnapshotRecord(NamedTuple):
    t: float
    nodes: FloatArray
    values: FloatArray


def read_snapshots(path: PathIsh) -> tuple[dict[str, Any], list[SnapshotRecord]]:
    data = Path(path).read_bytes()
    if not data.startswith(SNAPSHOT_MAGIC):
        raise ConfigurationError(f"{path} is not a snapshot file")
    pos = len(SNAPSHOT_MAGIC)
    (length,) = _LENGTH.unpack_from(data, pos)
    pos += _LENGTH.size
    header = json.loads(data[pos : pos + length].decode("utf-8"))
    pos += length
    records: list[SnapshotRecord] = []
    while pos < len(data):
        t, count = _RECORD_HEAD.unpack_from(data, pos)
        pos += _RECORD_HEAD.size
        nodes = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        values = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        records.append(SnapshotRecord(float(t), nodes.astype(np.float64), values.astype(np.float64)))
    return header, records


def read_manifest(run_dir: PathIsh) -> Any:
    return loads_json(Path(run_dir) / "manifest.json")


def read_trajectory(path: PathIsh) -> SpaceTimeField:
    """The records of a snapshot file as one field; every record must share the first one's nodes"""
    _header, records = read_snapshots(path)
    if not records:
        raise ConfigurationError(f"{path} holds no snapshot records")
    grid = RadialGrid.from_nodes(records[0].nodes)
    for r in records[1:]:
        if not np.array_equal(r.nodes, grid.nodes):
            raise GridMismatchError(f"{path}: record at t={r.t} uses a different grid")
    return SpaceTimeField(
        grid=grid,
        times=np.array([r.t for r in records]),
        values=np.vstack([r.values for r in records]),
    )
