"""Run configuration files, binary snapshots and the diagnostics CSV.

Configuration is TOML with the sections ``[grid]``, ``[taming]``, ``[time]``,
``[initial]``, ``[forcing]`` and ``[output]``.  Unknown sections or keys are
rejected; missing keys take the :class:`SolverConfig` defaults.

Snapshot layout (all little-endian)::

    b"TMHD1"  u16 version  u32 n  u32 n  u32 n  f64 L  f64 t  f64 N
    f64[n^3] x 6   vx vy vz Bx By Bz, physical values, C order
    u8 presence    1 if the pressures follow, else 0
    f64[n^3] x 2   p pi (kinematic and magnetic pressure), only if present
"""

from __future__ import annotations

import csv
import json
import math
import struct
import sys
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .measures import DiagnosticsRecord
from .operators import PressureFields
from .spectral import Grid, SpectralState
from .timestepper import SolverConfig

__all__ = [
    "ConfigError",
    "SnapshotError",
    "Snapshot",
    "config_from_dict",
    "config_to_dict",
    "parse_config",
    "load_config",
    "dump_config",
    "save_config",
    "save_snapshot",
    "load_snapshot",
    "snapshot_bytes",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "write_table_csv",
]

SNAPSHOT_MAGIC = b"TMHD1"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<5sH3I3d")


class ConfigError(ValueError):
    pass


class SnapshotError(ValueError):
    pass


# section -> key -> SolverConfig field
_LAYOUT: dict[str, dict[str, str]] = {
    "grid": {"n": "n", "length": "length"},
    "taming": {"threshold": "threshold", "enabled": "tamed"},
    "time": {"t_end": "t_end", "dt": "dt", "cfl": "cfl", "dt_max": "dt_max", "integrator": "integrator"},
    "initial": {
        "kind": "initial",
        "amplitude": "amplitude",
        "magnetic_ratio": "magnetic_ratio",
        "seed": "seed",
        "k_max": "k_max",
        "path": "initial_path",
    },
    "forcing": {"kind": "forcing", "amplitude": "forcing_amplitude"},
    "output": {"interval": "output_interval", "snapshots": "snapshots"},
}

_INT_FIELDS = {"n", "seed"}
_BOOL_FIELDS = {"tamed", "snapshots"}
_STR_FIELDS = {"integrator", "initial", "initial_path", "forcing"}


def _coerce(name: str, value: Any) -> Any:
    where = f"config field {name!r}"
    if name == "dt":
        if value == "auto":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number or \"auto\", got {value!r}")
        return float(value)
    if name in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if name in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def config_from_dict(doc: dict[str, Any]) -> SolverConfig:
    kwargs = {}
    for section, body in doc.items():
        if section not in _LAYOUT:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            if key not in _LAYOUT[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name = _LAYOUT[section][key]
            kwargs[name] = _coerce(name, value)
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: SolverConfig) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for section, keys in _LAYOUT.items():
        out[section] = {}
        for key, name in keys.items():
            value = getattr(config, name)
            out[section][key] = "auto" if (name == "dt" and value is None) else value
    return out


def parse_config(text: str) -> SolverConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(doc)


def load_config(path: str | Path) -> SolverConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise ConfigError(f"cannot serialise {value!r}")


def dump_config(config: SolverConfig) -> str:
    lines = []
    for section, body in config_to_dict(config).items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, value in body.items():
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def save_config(path: str | Path, config: SolverConfig) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8", newline="\n")


# ------------------------------------------------------------------ snapshots


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Physical fields ``(6, n, n, n)`` plus optional pressures ``(n, n, n)``."""

    grid: Grid
    t: float
    threshold: float
    fields: np.ndarray
    p: np.ndarray | None = None
    pi: np.ndarray | None = None
    version: int = SNAPSHOT_VERSION

    def __post_init__(self) -> None:
        if self.fields.shape != (6, *self.grid.physical_shape):
            raise SnapshotError(f"fields must have shape (6, n, n, n), got {self.fields.shape}")
        if (self.p is None) != (self.pi is None):
            raise SnapshotError("pressures must be stored together")

    @classmethod
    def from_state(
        cls, state: SpectralState, threshold: float, pressures: PressureFields | None = None
    ) -> "Snapshot":
        grid = state.grid
        p = pi = None
        if pressures is not None:
            p = grid.to_physical(pressures.p)
            pi = grid.to_physical(pressures.pi)
        return cls(grid, state.t, float(threshold), state.physical(), p, pi)

    def state(self) -> SpectralState:
        return SpectralState.from_physical(self.grid, self.fields, self.t)

    @staticmethod
    def byte_length(n: int, with_pressures: bool) -> int:
        return _HEADER.size + 8 * n**3 * (8 if with_pressures else 6) + 1


def snapshot_bytes(snap: Snapshot) -> bytes:
    n = snap.grid.n
    parts = [
        _HEADER.pack(SNAPSHOT_MAGIC, snap.version, n, n, n, snap.grid.length, snap.t, snap.threshold),
        np.ascontiguousarray(snap.fields, dtype="<f8").tobytes(order="C"),
    ]
    if snap.p is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01")
        parts.append(np.ascontiguousarray(snap.p, dtype="<f8").tobytes(order="C"))
        parts.append(np.ascontiguousarray(snap.pi, dtype="<f8").tobytes(order="C"))
    return b"".join(parts)


def save_snapshot(path: str | Path, snap: Snapshot) -> None:
    Path(path).write_bytes(snapshot_bytes(snap))


def load_snapshot(path: str | Path) -> Snapshot:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError("file too short for a snapshot header")
    magic, version, nx, ny, nz, length, t, threshold = _HEADER.unpack_from(data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if not nx == ny == nz:
        raise SnapshotError(f"only cubic grids are supported, got {nx}x{ny}x{nz}")
    n = nx
    offset = _HEADER.size
    count = 6 * n**3
    body = 8 * count
    if len(data) < offset + body + 1:
        raise SnapshotError("truncated snapshot")
    fields = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(6, n, n, n).astype(float)
    offset += body
    flag = data[offset]
    offset += 1
    p = pi = None
    if flag not in (0, 1):
        raise SnapshotError(f"bad pressure presence byte {flag}")
    expected = Snapshot.byte_length(n, flag == 1)
    if len(data) != expected:
        raise SnapshotError(f"snapshot length {len(data)} does not match header ({expected})")
    if flag == 1:
        m = n**3
        p = np.frombuffer(data, dtype="<f8", count=m, offset=offset).reshape(n, n, n).astype(float)
        pi = np.frombuffer(data, dtype="<f8", count=m, offset=offset + 8 * m).reshape(n, n, n).astype(float)
    return Snapshot(Grid(n, length), t, threshold, fields, p, pi, version)


# ------------------------------------------------------------------------ CSV


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_diagnostics_csv(path: str | Path, records: Iterable[DiagnosticsRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DiagnosticsRecord.columns())
        for r in records:
            w.writerow([_fmt(v) for v in r.values()])


def read_diagnostics_csv(path: str | Path) -> list[DiagnosticsRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != DiagnosticsRecord.columns():
        raise ValueError("unexpected diagnostics CSV header")
    names = [f.name for f in dc_fields(DiagnosticsRecord)]
    return [DiagnosticsRecord(**{k: float(v) for k, v in zip(names, row)}) for row in rows[1:]]


def write_table_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
