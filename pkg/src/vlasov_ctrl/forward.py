"""Time-marching of the two-species Vlasov-Poisson state system.

Each step k assembles the charge density from all particle positions,
solves for E^k by the symmetrized cumulative quadrature, then pushes every
particle with the Boris scheme using E^k and B^k linearly interpolated at
its position. Snapshots (when stored) and diagnostics are recorded at
every time level, including k = 0 and k = n_t.

Step-k fields act on the step-k state, so the per-level tracking sums
accumulated here use the left rectangle rule sum_{k=0}^{n_t-1} dt theta(t^k, .),
which is exactly the time alignment the backward solver realizes with its
per-step source creation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import (OccupationTensor, PhaseGrid, SpeciesParams,
                     SpeciesParticles, TimeGrid, make_particles)
from .errors import EscapeThresholdExceeded
from .fields import (assemble_occupation, charge_density_from_positions,
                     electric_energy, electric_field, interpolate_periodic)
from .pusher import boris_push_arrays
from .sampling import DensitySpec, RandomStream, sample_spec
from .tracking import TrackingWeights, weight_values


@dataclass
class DiagnosticsSeries:
    """Per-time-level scalars recorded by the forward solver."""

    times: np.ndarray
    electric_energy: np.ndarray
    mean_x_e: np.ndarray
    var_x_e: np.ndarray
    maxdev_e: np.ndarray
    mean_x_i: np.ndarray
    var_x_i: np.ndarray
    maxdev_i: np.ndarray
    neutrality_residual: np.ndarray
    neutrality_scale: np.ndarray


@dataclass
class ForwardTrajectory:
    """State history of one forward solve."""

    grid: PhaseGrid
    time: TimeGrid
    e_field: np.ndarray = field(repr=False)
    diagnostics: DiagnosticsSeries = None
    electrons0: SpeciesParticles = None
    ions0: SpeciesParticles = None
    electrons_final: SpeciesParticles = None
    ions_final: SpeciesParticles = None
    snapshots_e: list = None
    snapshots_i: list = None
    escaped_e: np.ndarray = None
    escaped_i: np.ndarray = None
    tracking_cost: dict = None
    terminal_cost: dict = None

    @property
    def has_snapshots(self) -> bool:
        return self.snapshots_e is not None

    def snapshot(self, k: int, sign: int) -> SpeciesParticles:
        if not self.has_snapshots:
            raise ValueError("trajectory was run without per-step particle storage")
        return (self.snapshots_i if sign > 0 else self.snapshots_e)[k]

    def tensor(self, k: int, sign: int) -> OccupationTensor:
        tensor, _ = assemble_occupation(self.snapshot(k, sign), self.grid)
        return tensor


def _init_species(init, species: SpeciesParams, n: int, mass: float,
                  grid: PhaseGrid, rng: np.random.Generator) -> SpeciesParticles:
    if isinstance(init, SpeciesParticles):
        return init.copy()
    if isinstance(init, DensitySpec):
        x, v1, v2 = sample_spec(init, n, rng, grid.p_max)
        return make_particles(species, x, v1, v2, mass, grid)
    raise TypeError(f"unsupported initial data {type(init)!r}")


def _escape_count(parts: SpeciesParticles, v_max: float) -> int:
    return int(np.count_nonzero((np.abs(parts.v1) >= v_max) | (np.abs(parts.v2) >= v_max)))


def _theta_sum(weights, t, parts: SpeciesParticles, grid: PhaseGrid) -> float:
    vals = weight_values(weights, t, parts.x, parts.v1, parts.v2)
    return float(vals.sum()) * parts.mass_per_particle(grid)


def forward_solve(electrons_init, ions_init, control, grid: PhaseGrid,
                  time: TimeGrid, rng: RandomStream, *,
                  electron_species: SpeciesParams, ion_species: SpeciesParams,
                  n_particles: int = 0, species_mass: float = 1.0,
                  store_particles: bool = False, static_ions: bool = False,
                  escape_threshold: float = 0.01, threads: int = 1,
                  tracking: TrackingWeights = None,
                  snapshot_hook=None) -> ForwardTrajectory:
    """Run the forward PIC solver over [0, T].

    ``electrons_init`` / ``ions_init`` are either DensitySpec objects
    (sampled here from per-species substreams of ``rng``) or prebuilt
    SpeciesParticles. Both species carry the same total mass
    ``species_mass`` so the plasma is exactly neutral. ``control`` may be
    None for B = 0. With ``tracking`` given, the Monte Carlo tracking and
    terminal sums of the cost are accumulated on the fly.
    ``snapshot_hook(k, electrons, ions)`` is called at every time level,
    for streaming exports that must not store the whole history.
    """
    gen_e = rng.generator("forward/electron")
    gen_i = rng.generator("forward/ion")
    electrons = _init_species(electrons_init, electron_species, n_particles,
                              species_mass, grid, gen_e)
    ions = _init_species(ions_init, ion_species, n_particles, species_mass, grid, gen_i)
    if electrons.n == 0 or ions.n == 0:
        raise ValueError("both species need at least one particle")

    n_lev = time.n_t + 1
    e_field = np.zeros((n_lev, grid.n_x))
    diag = DiagnosticsSeries(
        times=time.times(),
        electric_energy=np.zeros(n_lev),
        mean_x_e=np.zeros(n_lev), var_x_e=np.zeros(n_lev), maxdev_e=np.zeros(n_lev),
        mean_x_i=np.zeros(n_lev), var_x_i=np.zeros(n_lev), maxdev_i=np.zeros(n_lev),
        neutrality_residual=np.zeros(n_lev), neutrality_scale=np.zeros(n_lev),
    )
    escaped_e = np.zeros(n_lev, dtype=np.int64)
    escaped_i = np.zeros(n_lev, dtype=np.int64)
    snapshots_e = [] if store_particles else None
    snapshots_i = [] if store_particles else None
    tracking_cost = {"electron": 0.0, "ion": 0.0}
    terminal_cost = {"electron": 0.0, "ion": 0.0}

    traj = ForwardTrajectory(grid=grid, time=time, e_field=e_field,
                             electrons0=electrons.copy(), ions0=ions.copy())
    half_p = 0.5 * grid.p_max
    use_control = control is not None and not control.is_zero()
    warned = False

    for k in range(n_lev):
        rho = charge_density_from_positions(ions, electrons, grid, threads)
        diag.neutrality_residual[k] = abs(float(rho.values.sum() * grid.dx))
        diag.neutrality_scale[k] = float(np.abs(rho.values).sum() * grid.dx)
        e_now = electric_field(rho)
        e_field[k] = e_now.values

        diag.electric_energy[k] = electric_energy(e_now.values, grid)
        diag.mean_x_e[k] = float(electrons.x.mean())
        diag.var_x_e[k] = float(electrons.x.var())
        diag.maxdev_e[k] = float(np.abs(electrons.x - half_p).max())
        diag.mean_x_i[k] = float(ions.x.mean())
        diag.var_x_i[k] = float(ions.x.var())
        diag.maxdev_i[k] = float(np.abs(ions.x - half_p).max())

        for parts, esc in ((electrons, escaped_e), (ions, escaped_i)):
            esc[k] = _escape_count(parts, grid.v_max)
            frac = esc[k] / parts.n
            if frac > escape_threshold:
                raise EscapeThresholdExceeded(
                    f"{frac:.2%} of particles escaped the velocity domain at step {k}")
            if esc[k] > 0 and not warned:
                warnings.warn(f"{esc[k]} particles outside the velocity domain "
                              f"at step {k}", stacklevel=2)
                warned = True

        if store_particles:
            snapshots_e.append(electrons.copy())
            snapshots_i.append(ions.copy())
        if snapshot_hook is not None:
            snapshot_hook(k, electrons, ions)

        if tracking is not None and k < time.n_t:
            t_k = k * time.dt
            tracking_cost["electron"] += time.dt * _theta_sum(
                tracking.electron.theta, t_k, electrons, grid)
            tracking_cost["ion"] += time.dt * _theta_sum(
                tracking.ion.theta, t_k, ions, grid)

        if k == time.n_t:
            break

        e_at = interpolate_periodic(e_now.values, electrons.x, grid)
        b_at = control.row_at(k, electrons.x) if use_control else 0.0
        electrons.x, electrons.v1, electrons.v2 = boris_push_arrays(
            electrons.x, electrons.v1, electrons.v2, e_at, b_at,
            electron_species, time.dt, grid.p_max)
        if not static_ions:
            e_at = interpolate_periodic(e_now.values, ions.x, grid)
            b_at = control.row_at(k, ions.x) if use_control else 0.0
            ions.x, ions.v1, ions.v2 = boris_push_arrays(
                ions.x, ions.v1, ions.v2, e_at, b_at,
                ion_species, time.dt, grid.p_max)

    if tracking is not None:
        t_end = time.t_final
        terminal_cost["electron"] = _theta_sum(tracking.electron.phi, t_end,
                                               electrons, grid)
        terminal_cost["ion"] = _theta_sum(tracking.ion.phi, t_end, ions, grid)

    traj.diagnostics = diag
    traj.electrons_final = electrons
    traj.ions_final = ions
    traj.snapshots_e = snapshots_e
    traj.snapshots_i = snapshots_i
    traj.escaped_e = escaped_e
    traj.escaped_i = escaped_i
    traj.tracking_cost = tracking_cost if tracking is not None else None
    traj.terminal_cost = terminal_cost if tracking is not None else None
    return traj


def diagnostics(traj: ForwardTrajectory) -> DiagnosticsSeries:
    """Diagnostics recorded during the solve."""
    return traj.diagnostics
