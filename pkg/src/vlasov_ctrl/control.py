"""The magnetic control lattice and the discrete weighted-H1 inner product.

The control B lives on the (n_t + 1) x n_x lattice of time levels and
spatial cell centers. The discrete V inner product uses forward difference
quotients and the plain dt*dx lattice measure; by summation by parts it is
exactly

    (u, v)_V = sum (L u) v dt dx

with L = I - kappa_t D_tt - kappa_x D_xx and mirrored (Neumann) ghost
values. Cost penalty, L2 gradient and elliptic lift all use these same
stencils, so the quadratic control part of the cost differentiates exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import PhaseGrid, TimeGrid
from .fields import interpolate_periodic


@dataclass(frozen=True)
class PenaltyConfig:
    """Control penalty weight alpha and Sobolev weights kappa_t, kappa_x."""

    alpha: float
    kappa_t: float
    kappa_x: float

    def __post_init__(self):
        if self.alpha <= 0.0 or self.kappa_t <= 0.0 or self.kappa_x <= 0.0:
            raise ValueError("alpha, kappa_t, kappa_x must all be positive")


@dataclass
class ControlField:
    """Scalar magnetic control B^k_i on the space-time lattice."""

    time: TimeGrid
    grid: PhaseGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.time.n_t + 1, self.grid.n_x)
        if self.values.shape != expected:
            raise ValueError(f"control shape {self.values.shape} != {expected}")

    @classmethod
    def zeros(cls, time: TimeGrid, grid: PhaseGrid) -> "ControlField":
        return cls(time, grid, np.zeros((time.n_t + 1, grid.n_x)))

    def copy(self) -> "ControlField":
        return ControlField(self.time, self.grid, self.values.copy())

    def row_at(self, k: int, x):
        """B(t^k, x) by periodic linear interpolation in x."""
        return interpolate_periodic(self.values[k], x, self.grid)

    def at(self, t: float, x):
        """Bilinear interpolation in (t, x); t clamped to [0, T]."""
        s = np.clip(t / self.time.dt, 0.0, self.time.n_t)
        k0 = int(min(np.floor(s), self.time.n_t - 1))
        frac = s - k0
        return (1.0 - frac) * self.row_at(k0, x) + frac * self.row_at(k0 + 1, x)

    def is_zero(self) -> bool:
        return not np.any(self.values)


def _forward_diff(u: np.ndarray, axis: int) -> np.ndarray:
    return np.diff(u, axis=axis)


def v_inner(u: np.ndarray, v: np.ndarray, time: TimeGrid, grid: PhaseGrid,
            penalty: PenaltyConfig) -> float:
    """Discrete weighted-H1 inner product on the control lattice."""
    dt, dx = time.dt, grid.dx
    out = float(np.sum(u * v)) * dt * dx
    du_t = _forward_diff(u, 0)
    dv_t = _forward_diff(v, 0)
    out += penalty.kappa_t * float(np.sum(du_t * dv_t)) / (dt * dt) * dt * dx
    du_x = _forward_diff(u, 1)
    dv_x = _forward_diff(v, 1)
    out += penalty.kappa_x * float(np.sum(du_x * dv_x)) / (dx * dx) * dt * dx
    return out


def v_norm_sq(u: np.ndarray, time: TimeGrid, grid: PhaseGrid,
              penalty: PenaltyConfig) -> float:
    return v_inner(u, u, time, grid, penalty)


def l2_inner(u: np.ndarray, v: np.ndarray, time: TimeGrid, grid: PhaseGrid) -> float:
    """Plain lattice L2 inner product with the dt*dx measure."""
    return float(np.sum(u * v)) * time.dt * grid.dx


def neumann_second_diff(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Three-point second difference with mirrored ghost values."""
    padded = np.pad(u, [(1, 1) if a == axis else (0, 0) for a in range(u.ndim)],
                    mode="edge")
    sl = [slice(None)] * u.ndim

    def shifted(offset):
        s = list(sl)
        s[axis] = slice(1 + offset, padded.shape[axis] - 1 + offset)
        return padded[tuple(s)]

    return (shifted(1) - 2.0 * shifted(0) + shifted(-1)) / (h * h)


def apply_elliptic(u: np.ndarray, time: TimeGrid, grid: PhaseGrid,
                   penalty: PenaltyConfig) -> np.ndarray:
    """(I - kappa_t d_tt - kappa_x d_xx) u with Neumann mirroring.

    This is the operator whose lattice form satisfies
    (apply_elliptic(u), v)_L2 = (u, v)_V for all v.
    """
    return (u
            - penalty.kappa_t * neumann_second_diff(u, 0, time.dt)
            - penalty.kappa_x * neumann_second_diff(u, 1, grid.dx))
