"""Core dimensionless types: species scalings, grids, particle lists, occupation tensors.

Conventions used throughout the package:

* positions live on the periodic interval [0, p_max);
* velocities live on [-v_max, v_max]^2 with cell-centered values
  v^l = (l - 1/2)*dv - v_max (1-based l);
* occupation tensors hold raw per-cell particle counts; the per-list
  ``weight`` converts counts to continuum phase-space density
  (density ~= count * weight), with weight = total_mass / (N * dx * dv^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutsideVelocityDomain

# electron scaling factors are fixed by the nondimensionalization
ELECTRON_MU_X = 1.0
ELECTRON_MU_V = -1.0
# equal-temperature hydrogen plasma: mu_x+ = mu_v+ = sqrt(m_e/m_p)
DEFAULT_ION_MU = float(np.sqrt(1.0 / 1836.15267))


@dataclass(frozen=True)
class SpeciesParams:
    """Dimensionless per-species scalings and charge sign.

    ``mu_x`` multiplies the position transport, ``mu_v`` the force term.
    Electrons carry (mu_x, mu_v) = (1, -1) exactly; ions have both factors
    positive and of order 1e-2.
    """

    mu_x: float
    mu_v: float
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be -1 (electrons) or +1 (ions)")
        if self.sign < 0 and (self.mu_x != 1.0 or self.mu_v != -1.0):
            raise ValueError("electrons must have mu_x = 1, mu_v = -1 exactly")
        if self.sign > 0 and (self.mu_x <= 0.0 or self.mu_v <= 0.0):
            raise ValueError("ions must have mu_x > 0 and mu_v > 0")


def electron_params() -> SpeciesParams:
    return SpeciesParams(mu_x=ELECTRON_MU_X, mu_v=ELECTRON_MU_V, sign=-1)


def ion_params(mu_x: float = DEFAULT_ION_MU, mu_v: float = DEFAULT_ION_MU) -> SpeciesParams:
    return SpeciesParams(mu_x=mu_x, mu_v=mu_v, sign=+1)


@dataclass(frozen=True)
class PhaseGrid:
    """Cell-centered discretization of [0, p_max] x [-v_max, v_max]^2."""

    p_max: float
    v_max: float
    n_x: int
    n_v: int

    def __post_init__(self):
        if self.p_max <= 0.0 or self.v_max <= 0.0:
            raise ValueError("p_max and v_max must be positive")
        if self.n_x < 2 or self.n_v < 2:
            raise ValueError("n_x and n_v must be at least 2")

    @property
    def dx(self) -> float:
        return self.p_max / self.n_x

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dv * self.dv

    def x_centers(self) -> np.ndarray:
        """x^i = (i - 1/2) dx for i = 1..n_x."""
        return (np.arange(self.n_x) + 0.5) * self.dx

    def v_centers(self) -> np.ndarray:
        """v^l = (l - 1/2) dv - v_max for l = 1..n_v."""
        return (np.arange(self.n_v) + 0.5) * self.dv - self.v_max


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into n_t steps; t^k = k dt."""

    t_final: float
    n_t: int

    def __post_init__(self):
        if self.t_final <= 0.0:
            raise ValueError("t_final must be positive")
        if self.n_t < 1:
            raise ValueError("n_t must be at least 1")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_t

    def times(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt


@dataclass(frozen=True)
class Particle:
    """One numerical particle: periodic position and two velocity components."""

    x: float
    v1: float
    v2: float


@dataclass
class SpeciesParticles:
    """Particle list of one species stored as parallel arrays.

    ``weight`` converts occupation counts to continuum density; it is the
    same for every particle in the list and equals
    total_mass / (n * dx * dv^2) at construction time.
    """

    species: SpeciesParams
    x: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    weight: float

    def __post_init__(self):
        if not (self.x.shape == self.v1.shape == self.v2.shape):
            raise ValueError("x, v1, v2 must have identical shapes")
        if self.n > 0 and self.weight <= 0.0:
            raise ValueError("weight must be positive for a nonempty list")

    @property
    def n(self) -> int:
        return self.x.size

    def mass_per_particle(self, grid: PhaseGrid) -> float:
        return self.weight * grid.cell_volume

    def copy(self) -> "SpeciesParticles":
        return SpeciesParticles(self.species, self.x.copy(), self.v1.copy(),
                                self.v2.copy(), self.weight)


def make_particles(species: SpeciesParams, x, v1, v2, total_mass: float,
                   grid: PhaseGrid) -> SpeciesParticles:
    """Package sampled coordinates with the weight implied by ``total_mass``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    v1 = np.ascontiguousarray(v1, dtype=np.float64)
    v2 = np.ascontiguousarray(v2, dtype=np.float64)
    w = total_mass / (x.size * grid.cell_volume) if x.size else 0.0
    return SpeciesParticles(species, x, v1, v2, w)


@dataclass
class OccupationTensor:
    """Per-cell particle counts on a PhaseGrid at one timestep."""

    grid: PhaseGrid
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.grid.n_x, self.grid.n_v, self.grid.n_v)
        if self.counts.shape != expected:
            raise ValueError(f"counts shape {self.counts.shape} != {expected}")

    def total(self) -> float:
        return float(self.counts.sum())


def wrap_position(x, p_max: float):
    """Reduce positions into [0, p_max) periodically.

    Total function: works for scalars and arrays, any sign and magnitude.
    np.mod can round x % p_max up to exactly p_max for tiny negative x, so
    that case is folded back to 0.
    """
    r = np.mod(x, p_max)
    if np.ndim(r) == 0:
        return 0.0 if r >= p_max else float(r)
    r[r >= p_max] = 0.0
    return r


def cell_indices(x: np.ndarray, v1: np.ndarray, v2: np.ndarray, grid: PhaseGrid):
    """Vectorized 1-based cell indices plus an in-domain mask.

    A coordinate exactly on a cell boundary belongs to the higher-index cell.
    Velocities with |v| >= v_max are outside the domain (mask False); their
    index entries are unspecified.
    """
    inside = (np.abs(v1) < grid.v_max) & (np.abs(v2) < grid.v_max)
    i = np.minimum(np.floor(x / grid.dx).astype(np.int64), grid.n_x - 1) + 1
    l = np.minimum(np.floor((v1 + grid.v_max) / grid.dv).astype(np.int64), grid.n_v - 1) + 1
    m = np.minimum(np.floor((v2 + grid.v_max) / grid.dv).astype(np.int64), grid.n_v - 1) + 1
    return i, l, m, inside


def cell_index(p: Particle, grid: PhaseGrid):
    """1-based (i, l, m) of the cell containing ``p``.

    Raises OutsideVelocityDomain iff |v1| >= v_max or |v2| >= v_max, which
    means the particle must go to the escape tally instead of the tensor.
    """
    if abs(p.v1) >= grid.v_max or abs(p.v2) >= grid.v_max:
        raise OutsideVelocityDomain(f"|v| >= v_max={grid.v_max}")
    x = np.asarray([p.x])
    i, l, m, _ = cell_indices(x, np.asarray([p.v1]), np.asarray([p.v2]), grid)
    return int(i[0]), int(l[0]), int(m[0])
