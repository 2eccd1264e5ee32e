"""Catalog of time-inhomogeneous drift fields b : R^{1+d} -> R^d.

Variants: the critical Hardy-type field, fields bounded by C/sqrt(t),
constants, grid-sampled data, and the scaled / sum / regularized /
split-part composites built on top of them.  Specs are immutable and
evaluation is pure, so they are safe to share across workers.

Conventions
-----------
- The stored field is the drift coefficient itself; the SDE integrator is
  responsible for the minus sign in  X_t = x - int b dt + sqrt(2) B_t.
- The Hardy field value at its singular point is defined as 0 (a
  measure-zero choice that keeps quadratures NaN-free).
- regularized(spec, n) evaluates to b * indicator(|b| <= n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .grids import VectorLattice


class FieldConfigError(ValueError):
    """Malformed or unknown field description."""


class FieldDomainError(ValueError):
    """Query outside the domain where a field is defined."""


@dataclass(frozen=True)
class HardyField:
    """b(x) = sqrt(delta) * (d-2)/2 * 1_{|x| < cutoff} |x|^{-2} x  (radial)."""

    delta: float
    dimension: int = 3
    cutoff_radius: float = 1.0

    def __post_init__(self):
        if self.delta < 0:
            raise FieldConfigError("hardy delta must be >= 0")
        if self.cutoff_radius <= 0:
            raise FieldConfigError("hardy cutoff_radius must be positive")
        if self.dimension < 3:
            raise FieldConfigError("hardy field needs dimension >= 3")

    @property
    def coefficient(self) -> float:
        return float(np.sqrt(self.delta) * (self.dimension - 2) / 2.0)


@dataclass(frozen=True)
class InvSqrtTimeField:
    """b(t, x) = (amplitude / sqrt(t)) * direction for t > 0, zero for t <= 0."""

    amplitude: float
    direction: tuple[float, ...]

    def __post_init__(self):
        norm = float(np.linalg.norm(self.direction))
        if not np.isclose(norm, 1.0, atol=1e-12):
            raise FieldConfigError("direction must be a unit vector")


@dataclass(frozen=True)
class ConstantField:
    vector: tuple[float, ...]


@dataclass(frozen=True)
class GridSampledField:
    """Multilinear interpolation of a VectorLattice; queries outside the
    lattice bounds are a domain error, not extrapolation."""

    lattice: VectorLattice

    @property
    def dimension(self) -> int:
        return self.lattice.grid.dimension


@dataclass(frozen=True)
class ScaledField:
    factor: float
    inner: "FieldSpec"


@dataclass(frozen=True)
class SumField:
    parts: tuple["FieldSpec", ...]

    def __post_init__(self):
        if not self.parts:
            raise FieldConfigError("sum field needs at least one part")


@dataclass(frozen=True)
class RegularizedField:
    level: float
    inner: "FieldSpec"

    def __post_init__(self):
        if self.level <= 0:
            raise FieldConfigError("regularization level must be positive")


@dataclass(frozen=True)
class SplitPartField:
    role: str  # "singular" | "bounded"
    threshold: float
    inner: "FieldSpec"

    def __post_init__(self):
        if self.role not in ("singular", "bounded"):
            raise FieldConfigError("split role must be 'singular' or 'bounded'")
        if self.threshold <= 0:
            raise FieldConfigError("split threshold must be positive")


FieldSpec = Union[HardyField, InvSqrtTimeField, ConstantField, GridSampledField,
                  ScaledField, SumField, RegularizedField, SplitPartField]


def field_dimension(spec: FieldSpec) -> int:
    if isinstance(spec, HardyField):
        return spec.dimension
    if isinstance(spec, (InvSqrtTimeField,)):
        return len(spec.direction)
    if isinstance(spec, ConstantField):
        return len(spec.vector)
    if isinstance(spec, GridSampledField):
        return spec.dimension
    if isinstance(spec, (ScaledField, RegularizedField, SplitPartField)):
        return field_dimension(spec.inner)
    if isinstance(spec, SumField):
        dims = {field_dimension(p) for p in spec.parts}
        if len(dims) != 1:
            raise FieldConfigError("sum parts have mismatched dimensions")
        return dims.pop()
    raise FieldConfigError(f"unknown field variant {type(spec).__name__}")


def is_static(spec: FieldSpec) -> bool:
    """True when the field does not depend on time."""
    if isinstance(spec, (HardyField, ConstantField)):
        return True
    if isinstance(spec, InvSqrtTimeField):
        return False
    if isinstance(spec, GridSampledField):
        return spec.lattice.grid.n_time == 1
    if isinstance(spec, (ScaledField, RegularizedField, SplitPartField)):
        return is_static(spec.inner)
    if isinstance(spec, SumField):
        return all(is_static(p) for p in spec.parts)
    raise FieldConfigError(f"unknown field variant {type(spec).__name__}")


def _interp_lattice(lat: VectorLattice, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    grid = lat.grid
    d = grid.dimension
    eps = 1e-9
    if np.any(t < grid.t0 - eps) or np.any(t > grid.t1 + eps):
        raise FieldDomainError("time query outside grid-sampled lattice window")
    if np.any(np.abs(x) > grid.half_width + eps):
        raise FieldDomainError("space query outside grid-sampled lattice box")
    coords = [(np.clip(t, grid.t0, grid.t1) - grid.t0) / grid.dt]
    for i in range(d):
        coords.append((np.clip(x[..., i], -grid.half_width, grid.half_width)
                       + grid.half_width) / grid.dx)
    out = np.zeros(x.shape)
    lo = [np.clip(np.floor(c).astype(int), 0, n - 2)
          for c, n in zip(coords, [grid.n_time] + [grid.n_space] * d)]
    fr = [c - l for c, l in zip(coords, lo)]
    for corner in range(2 ** (d + 1)):
        idx = []
        weight = 1.0
        for axis in range(d + 1):
            bit = (corner >> axis) & 1
            idx.append(lo[axis] + bit)
            weight = weight * (fr[axis] if bit else (1.0 - fr[axis]))
        out += weight[..., None] * lat.values[tuple(idx)]
    return out


def eval_field(spec: FieldSpec, t, x) -> np.ndarray:
    """Evaluate b(t, x).  x has shape (..., d); t is scalar or shape (...).

    Returns an array of shape (..., d).  Deterministic; composites evaluate
    recursively; the regularization indicator is applied after the inner
    evaluation.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return eval_field(spec, t, x[None, :])[0]
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        t = np.broadcast_to(t, x.shape[:-1])

    if isinstance(spec, HardyField):
        r2 = (x**2).sum(axis=-1)
        out = np.zeros_like(x)
        inside = (r2 > 0) & (r2 < spec.cutoff_radius**2)
        out[inside] = spec.coefficient * x[inside] / r2[inside, None]
        return out
    if isinstance(spec, ConstantField):
        return np.broadcast_to(np.asarray(spec.vector, dtype=float), x.shape).copy()
    if isinstance(spec, InvSqrtTimeField):
        amp = np.where(t > 0, spec.amplitude / np.sqrt(np.maximum(t, 1e-300)), 0.0)
        return amp[..., None] * np.asarray(spec.direction)
    if isinstance(spec, GridSampledField):
        return _interp_lattice(spec.lattice, t, x)
    if isinstance(spec, ScaledField):
        return spec.factor * eval_field(spec.inner, t, x)
    if isinstance(spec, SumField):
        total = eval_field(spec.parts[0], t, x)
        for part in spec.parts[1:]:
            total = total + eval_field(part, t, x)
        return total
    if isinstance(spec, RegularizedField):
        inner = eval_field(spec.inner, t, x)
        mag = np.sqrt((inner**2).sum(axis=-1))
        return np.where((mag <= spec.level)[..., None], inner, 0.0)
    if isinstance(spec, SplitPartField):
        inner = eval_field(spec.inner, t, x)
        mag = np.sqrt((inner**2).sum(axis=-1))
        keep = mag <= spec.threshold if spec.role == "bounded" else mag > spec.threshold
        return np.where(keep[..., None], inner, 0.0)
    raise FieldConfigError(f"unknown field variant {type(spec).__name__}")


def regularize(spec: FieldSpec, n: float) -> FieldSpec:
    """Cutoff regularization b * indicator(|b| <= n)."""
    if n <= 0:
        raise FieldConfigError("regularization level must be positive")
    return RegularizedField(level=float(n), inner=spec)


def split_field(spec: FieldSpec, bound: float) -> tuple[FieldSpec, FieldSpec]:
    """Split into (singular, bounded): bounded = b 1_{|b|<=bound}, singular the rest.

    The parts sum to the original field pointwise and the bounded part
    satisfies |bounded| <= bound everywhere.
    """
    if bound <= 0:
        raise FieldConfigError("split bound must be positive")
    return (SplitPartField("singular", float(bound), spec),
            SplitPartField("bounded", float(bound), spec))


def fractional_power_vector(v: np.ndarray, p: float) -> np.ndarray:
    """b^{1/p} := b |b|^{-1 + 1/p}, with the convention 0 at b = 0."""
    if p <= 1:
        raise FieldConfigError("fractional vector power needs p > 1")
    v = np.asarray(v, dtype=float)
    mag = np.sqrt((v**2).sum(axis=-1))
    scale = np.zeros_like(mag)
    pos = mag > 0
    scale[pos] = mag[pos] ** (-1.0 + 1.0 / p)
    return v * scale[..., None]


def magnitude_power(v: np.ndarray, exponent: float) -> np.ndarray:
    """|b|^exponent computed componentwise-safely (0 at b = 0)."""
    mag = np.sqrt((np.asarray(v, dtype=float) ** 2).sum(axis=-1))
    out = np.zeros_like(mag)
    pos = mag > 0
    out[pos] = mag[pos] ** exponent
    return out


def hardy_criticality(delta: float, dimension: int) -> dict:
    """Report whether the Hardy coefficient exceeds the weak-solvability
    counterexample threshold 4 (d/(d-2))^2."""
    threshold = 4.0 * (dimension / (dimension - 2)) ** 2
    return {
        "delta": float(delta),
        "dimension": dimension,
        "threshold": threshold,
        "supercritical": bool(delta > threshold),
    }


def hardy_regularization_radius(spec: HardyField, n: float) -> float:
    """Radius below which regularize(hardy, n) vanishes: |b(x)| = coeff/|x| > n."""
    if spec.coefficient == 0:
        return 0.0
    return min(spec.coefficient / n, spec.cutoff_radius)


# ---------------------------------------------------------------------------
# JSON serialization: {"kind": ..., params...}; grid_sampled payloads refer
# to a lattice file loaded through the caller-supplied loader.
# ---------------------------------------------------------------------------

def spec_to_dict(spec: FieldSpec) -> dict:
    if isinstance(spec, HardyField):
        return {"kind": "hardy", "delta": spec.delta, "dimension": spec.dimension,
                "cutoff_radius": spec.cutoff_radius}
    if isinstance(spec, InvSqrtTimeField):
        return {"kind": "inv_sqrt_time", "amplitude": spec.amplitude,
                "direction": list(spec.direction)}
    if isinstance(spec, ConstantField):
        return {"kind": "constant", "vector": list(spec.vector)}
    if isinstance(spec, GridSampledField):
        return {"kind": "grid_sampled", "lattice_file": None}
    if isinstance(spec, ScaledField):
        return {"kind": "scaled", "factor": spec.factor, "inner": spec_to_dict(spec.inner)}
    if isinstance(spec, SumField):
        return {"kind": "sum", "parts": [spec_to_dict(p) for p in spec.parts]}
    if isinstance(spec, RegularizedField):
        return {"kind": "regularized", "level": spec.level, "inner": spec_to_dict(spec.inner)}
    if isinstance(spec, SplitPartField):
        return {"kind": "split_part", "role": spec.role, "threshold": spec.threshold,
                "inner": spec_to_dict(spec.inner)}
    raise FieldConfigError(f"unknown field variant {type(spec).__name__}")


def spec_from_dict(doc: dict, lattice_loader=None) -> FieldSpec:
    kind = doc.get("kind")
    if kind == "hardy":
        return HardyField(doc["delta"], doc.get("dimension", 3), doc.get("cutoff_radius", 1.0))
    if kind == "inv_sqrt_time":
        return InvSqrtTimeField(doc["amplitude"], tuple(doc["direction"]))
    if kind == "constant":
        return ConstantField(tuple(doc["vector"]))
    if kind == "grid_sampled":
        if lattice_loader is None or doc.get("lattice_file") is None:
            raise FieldConfigError("grid_sampled spec needs a lattice file and loader")
        values, grid, _ = lattice_loader(doc["lattice_file"])
        return GridSampledField(VectorLattice(grid, values))
    if kind == "scaled":
        return ScaledField(doc["factor"], spec_from_dict(doc["inner"], lattice_loader))
    if kind == "sum":
        return SumField(tuple(spec_from_dict(p, lattice_loader) for p in doc["parts"]))
    if kind == "regularized":
        return RegularizedField(doc["level"], spec_from_dict(doc["inner"], lattice_loader))
    if kind == "split_part":
        return SplitPartField(doc["role"], doc["threshold"],
                              spec_from_dict(doc["inner"], lattice_loader))
    raise FieldConfigError(f"unknown field kind {kind!r}")


def spec_to_json(spec: FieldSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def spec_from_json(text: str, lattice_loader=None) -> FieldSpec:
    return spec_from_dict(json.loads(text), lattice_loader)
