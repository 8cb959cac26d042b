"""Gaussian tracking and terminal weights for the cost functional.

Both weights are negative Gaussians over phase space z = (x, v1, v2):

    theta(t, z) = -C_theta * N(z; z_d(t), Sigma_theta)
    phi(z)      = -C_phi   * N(z; z_T,   Sigma_phi)

with diagonal covariances, so minimizing the cost pulls the particle
distribution toward the target path z_d(t) and the terminal target z_T.
The backward solver samples |phi| for its terminal condition and converts
the analytic per-cell masses of |theta| into created particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .domain import PhaseGrid


class TargetPath:
    """Phase-space target, constant or piecewise-linear in time."""

    def __init__(self, points, times=None):
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape == (3,):
            self.times = None
            self.points = pts
        else:
            if times is None or pts.ndim != 2 or pts.shape[1] != 3:
                raise ValueError("piecewise path needs times (m,) and points (m, 3)")
            t = np.asarray(times, dtype=np.float64)
            if t.size != pts.shape[0] or np.any(np.diff(t) <= 0.0):
                raise ValueError("path times must be strictly increasing and match points")
            self.times = t
            self.points = pts

    def at(self, t: float) -> np.ndarray:
        if self.times is None:
            return self.points
        return np.array([np.interp(t, self.times, self.points[:, j]) for j in range(3)])


@dataclass(frozen=True)
class GaussianWeight:
    """Amplitude, diagonal covariance and target of one negative Gaussian."""

    amplitude: float
    var: tuple
    target: TargetPath

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be >= 0")
        if len(self.var) != 3 or any(v <= 0.0 for v in self.var):
            raise ValueError("need 3 positive variance entries")


def gaussian_weight(amplitude, var, center, path_times=None) -> GaussianWeight:
    return GaussianWeight(float(amplitude), tuple(float(v) for v in var),
                          TargetPath(center, path_times))


@dataclass(frozen=True)
class SpeciesTracking:
    theta: GaussianWeight
    phi: GaussianWeight


@dataclass(frozen=True)
class TrackingWeights:
    electron: SpeciesTracking
    ion: SpeciesTracking

    def for_sign(self, sign: int) -> SpeciesTracking:
        return self.ion if sign > 0 else self.electron


def zero_tracking() -> TrackingWeights:
    w = gaussian_weight(0.0, (1.0, 1.0, 1.0), (0.0, 0.0, 0.0))
    st = SpeciesTracking(theta=w, phi=w)
    return TrackingWeights(electron=st, ion=st)


def weight_values(w: GaussianWeight, t: float, x, v1, v2):
    """Pointwise values of the (negative) Gaussian weight at time t."""
    if w.amplitude == 0.0:
        return np.zeros(np.broadcast(x, v1, v2).shape)
    mu = w.target.at(t)
    out = -w.amplitude * np.ones(np.broadcast(x, v1, v2).shape)
    for coord, m, s2 in zip((x, v1, v2), mu, w.var):
        out = out * np.exp(-0.5 * (np.asarray(coord) - m) ** 2 / s2) \
            / np.sqrt(2.0 * np.pi * s2)
    return out


def cell_masses(w: GaussianWeight, t: float, grid: PhaseGrid) -> np.ndarray:
    """Exact per-cell masses of |weight| on the phase grid at time t.

    Diagonal covariance factorizes the 3D integral into products of 1D
    normal CDF differences, one vector per axis.
    """
    if w.amplitude == 0.0:
        return np.zeros((grid.n_x, grid.n_v, grid.n_v))
    mu = w.target.at(t)
    x_edges = np.arange(grid.n_x + 1) * grid.dx
    v_edges = np.arange(grid.n_v + 1) * grid.dv - grid.v_max

    def cdf_diffs(edges, m, s2):
        z = (edges - m) / np.sqrt(s2)
        c = ndtr(z)
        return np.diff(c)

    gx = cdf_diffs(x_edges, mu[0], w.var[0])
    g1 = cdf_diffs(v_edges, mu[1], w.var[1])
    g2 = cdf_diffs(v_edges, mu[2], w.var[2])
    return w.amplitude * np.einsum("i,l,m->ilm", gx, g1, g2)
