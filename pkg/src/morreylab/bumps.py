"""Smooth compactly supported bump profiles with analytic derivatives.

The 1-D profile is psi(u) = exp(1 - 1/(1 - u^2)) on |u| < 1, zero outside;
psi(0) = 1 and psi is C-infinity.  Space(-time) bumps are tensor products of
shifted/scaled copies, which keeps gradients and Laplacians in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def psi(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    w = u[m]
    out[m] = np.exp(1 - 1 / (1 - w**2))
    return out


def psi_prime(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    w = u[m]
    out[m] = np.exp(1 - 1 / (1 - w**2)) * (-2 * w) / (1 - w**2) ** 2
    return out


def psi_second(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    w = u[m]
    g = (-2 * w) / (1 - w**2) ** 2
    gp = (-2 - 6 * w**2) / (1 - w**2) ** 3
    out[m] = np.exp(1 - 1 / (1 - w**2)) * (g**2 + gp)
    return out


@dataclass(frozen=True)
class SpatialBump:
    """Product bump prod_i psi((x_i - c_i) / w_i) with analytic grad/Laplacian."""

    center: tuple[float, ...]
    widths: tuple[float, ...]
    amplitude: float = 1.0

    @property
    def dimension(self) -> int:
        return len(self.center)

    def _scaled(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        w = np.asarray(self.widths)
        return (np.asarray(x, dtype=float) - c) / w

    def value(self, x: np.ndarray) -> np.ndarray:
        u = self._scaled(x)
        return self.amplitude * np.prod(psi(u), axis=-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        u = self._scaled(x)
        w = np.asarray(self.widths)
        vals = psi(u)
        ders = psi_prime(u) / w
        grad = np.empty_like(u)
        for i in range(u.shape[-1]):
            parts = vals.copy()
            parts[..., i] = ders[..., i] * 1.0
            grad[..., i] = np.prod(parts, axis=-1)
        return self.amplitude * grad

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        u = self._scaled(x)
        w = np.asarray(self.widths)
        vals = psi(u)
        secs = psi_second(u) / w**2
        total = np.zeros(u.shape[:-1])
        for i in range(u.shape[-1]):
            parts = vals.copy()
            parts[..., i] = secs[..., i]
            total += np.prod(parts, axis=-1)
        return self.amplitude * total


@dataclass(frozen=True)
class GaussianPulse:
    """exp(-|x - c|^2 / (2 w^2)) sin^2(pi (t - t0) / (2 span)): smooth with
    moderate derivatives everywhere and a zero initial slice; the profile of
    choice for manufactured-solution studies."""

    t0: float
    span: float
    center: tuple[float, ...]
    width: float
    amplitude: float = 1.0

    def _q(self, t):
        s = np.sin(np.pi * (np.asarray(t, dtype=float) - self.t0) / (2 * self.span))
        return s**2

    def _q_dt(self, t):
        a = np.pi / (2 * self.span)
        return 2 * a * np.sin(a * (np.asarray(t, dtype=float) - self.t0)) \
            * np.cos(a * (np.asarray(t, dtype=float) - self.t0))

    def _g(self, x):
        diff = np.asarray(x, dtype=float) - np.asarray(self.center)
        return self.amplitude * np.exp(-(diff**2).sum(axis=-1) / (2 * self.width**2))

    def value(self, t, x):
        return self._q(t) * self._g(x)

    def dt(self, t, x):
        return self._q_dt(t) * self._g(x)

    def gradient(self, t, x):
        diff = np.asarray(x, dtype=float) - np.asarray(self.center)
        return (self._q(t) * self._g(x))[..., None] * (-diff / self.width**2)

    def laplacian(self, t, x):
        diff = np.asarray(x, dtype=float) - np.asarray(self.center)
        d = diff.shape[-1]
        r2 = (diff**2).sum(axis=-1)
        return self._q(t) * self._g(x) * (r2 / self.width**4 - d / self.width**2)

    def on_grid(self, grid) -> np.ndarray:
        pts = grid.space_points()
        g = self._g(pts)
        q = self._q(grid.t_axis())
        return q.reshape((-1,) + (1,) * grid.dimension) * g


@dataclass(frozen=True)
class SpaceTimeBump:
    """psi((t - ct)/wt) times a SpatialBump, with analytic time derivative."""

    center_t: float
    width_t: float
    space: SpatialBump

    def value(self, t, x) -> np.ndarray:
        s = psi((np.asarray(t, dtype=float) - self.center_t) / self.width_t)
        return s * self.space.value(x)

    def dt(self, t, x) -> np.ndarray:
        s = psi_prime((np.asarray(t, dtype=float) - self.center_t) / self.width_t) / self.width_t
        return s * self.space.value(x)

    def gradient(self, t, x) -> np.ndarray:
        s = psi((np.asarray(t, dtype=float) - self.center_t) / self.width_t)
        return s[..., None] * self.space.gradient(x)

    def laplacian(self, t, x) -> np.ndarray:
        s = psi((np.asarray(t, dtype=float) - self.center_t) / self.width_t)
        return s * self.space.laplacian(x)

    def on_grid(self, grid) -> np.ndarray:
        """Sample values on a LatticeGrid, shape (nt, nx, ..)."""
        pts = grid.space_points()
        space = self.space.value(pts)
        s = psi((grid.t_axis() - self.center_t) / self.width_t)
        return s.reshape((-1,) + (1,) * grid.dimension) * space
