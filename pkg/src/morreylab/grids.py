"""Uniform space-time lattices and the flat binary lattice file format.

A lattice grid is a cube [-L, L]^d discretized with step dx crossed with a
time window [t0, t1] of step dt.  Scalar/vector fields sampled on the grid
are stored time-major, C-order: values[time, x1, ..., xd(, component)].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_MIN_NODES = 9


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeGrid:
    dimension: int
    half_width: float
    dx: float
    t0: float
    t1: float
    dt: float

    def __post_init__(self):
        if self.dimension < 1:
            raise LatticeError("dimension must be >= 1")
        if self.dx <= 0 or self.dt <= 0:
            raise LatticeError("dx and dt must be positive")
        if self.t1 <= self.t0:
            raise LatticeError("empty time window")
        for count, label in ((self.n_space, "space"), (self.n_time, "time")):
            if count < _MIN_NODES:
                raise LatticeError(f"{label} axis has {count} nodes; need >= {_MIN_NODES}")
        steps = (self.t1 - self.t0) / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise LatticeError("(t1 - t0) / dt must be integral")
        span = 2 * self.half_width / self.dx
        if abs(span - round(span)) > 1e-9:
            raise LatticeError("2 * half_width / dx must be integral")

    @property
    def n_space(self) -> int:
        return int(round(2 * self.half_width / self.dx)) + 1

    @property
    def n_time(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt)) + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_time,) + (self.n_space,) * self.dimension

    def x_axis(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.n_space)

    def t_axis(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_time)

    def space_points(self) -> np.ndarray:
        """All spatial nodes, shape (n_space,)*d + (d,)."""
        axes = np.meshgrid(*([self.x_axis()] * self.dimension), indexing="ij")
        return np.stack(axes, axis=-1)

    def cell_volume(self) -> float:
        return self.dx**self.dimension

    def measure(self) -> float:
        """Space-time cell measure dt * dx^d used in lattice L^p norms."""
        return self.dt * self.cell_volume()

    def interior_slices(self, space_margin: int, time_margin: int = 0):
        s = (slice(time_margin, self.n_time - time_margin or None),)
        s += (slice(space_margin, self.n_space - space_margin or None),) * self.dimension
        return s

    def refined(self, factor: int = 2) -> "LatticeGrid":
        return LatticeGrid(self.dimension, self.half_width, self.dx / factor,
                           self.t0, self.t1, self.dt / factor)

    def fingerprint(self) -> str:
        blob = json.dumps(
            [self.dimension, self.half_width, self.dx, self.t0, self.t1, self.dt]
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def meta(self) -> dict:
        return {
            "dimension": self.dimension,
            "half_width": self.half_width,
            "dx": self.dx,
            "t0": self.t0,
            "t1": self.t1,
            "dt": self.dt,
        }

    @staticmethod
    def from_meta(meta: dict) -> "LatticeGrid":
        return LatticeGrid(meta["dimension"], meta["half_width"], meta["dx"],
                           meta["t0"], meta["t1"], meta["dt"])


def _check_values(grid: LatticeGrid, values: np.ndarray, extra: tuple[int, ...]):
    want = grid.shape + extra
    if values.shape != want:
        raise LatticeError(f"value shape {values.shape} does not match grid shape {want}")
    if not np.all(np.isfinite(values)):
        raise LatticeError("lattice values must be finite")


@dataclass
class ScalarLattice:
    grid: LatticeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        _check_values(self.grid, self.values, ())

    def p_norm(self, p: float) -> float:
        return float((np.abs(self.values) ** p).sum() * self.grid.measure()) ** (1.0 / p)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclass
class VectorLattice:
    grid: LatticeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        _check_values(self.grid, self.values, (self.grid.dimension,))

    def magnitude(self) -> np.ndarray:
        return np.sqrt((self.values**2).sum(axis=-1))


def lattice_p_norm(values: np.ndarray, grid: LatticeGrid, p: float) -> float:
    """L^p(R^{d+1}) proxy norm of a raw (nt, nx, ..) array on the grid."""
    return float(((np.abs(values) ** p).sum() * grid.measure()) ** (1.0 / p))


# ---------------------------------------------------------------------------
# flat binary lattice files: <base>.f64 payload + <base>.json sidecar header
# ---------------------------------------------------------------------------

def save_lattice(base: str | Path, values: np.ndarray, grid: LatticeGrid,
                 meta: dict | None = None) -> Path:
    base = Path(base)
    payload = np.ascontiguousarray(values, dtype="<f8")
    base.with_suffix(".f64").write_bytes(payload.tobytes())
    header = {
        "shape": list(values.shape),
        "dtype": "<f8",
        "order": "C",
        "byteorder": "little",
        "axes": ["t"] + [f"x{i + 1}" for i in range(grid.dimension)]
                + (["component"] if values.ndim == grid.dimension + 2 else []),
        "grid": grid.meta(),
        "meta": meta or {},
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
    return base.with_suffix(".f64")


def load_lattice(base: str | Path) -> tuple[np.ndarray, LatticeGrid, dict]:
    base = Path(base)
    header = json.loads(base.with_suffix(".json").read_text())
    if header.get("byteorder") != "little" or header.get("dtype") != "<f8":
        raise LatticeError("unsupported lattice payload encoding")
    raw = np.frombuffer(base.with_suffix(".f64").read_bytes(), dtype="<f8")
    values = raw.reshape(header["shape"]).astype(float)
    return values, LatticeGrid.from_meta(header["grid"]), header.get("meta", {})
