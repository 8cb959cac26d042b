"""Backward solve of the adjoint system by transport plus particle creation.

The adjoint equations share the state system's transport operator, so
adjoint particles are moved by the exact inverse of the forward Boris step.
The right-hand side splits into the source theta (a negative Gaussian) and
the reaction term

    R_s(x) = -sign_s * integral_{-inf}^{x} sum_s' mu_v_s' *
             (integral lambda_s' d(f_s')/dv1 dv) dy,

integrated with the same symmetrized cumulative quadrature as the electric
field. Going backward one Euler step, the per-cell density gain is
dt * (|theta| - R_s); positive gains become created particles placed
uniformly inside their phase-space cell (fractional counts resolved by
stochastic rounding), negative gains are clamped to zero and tallied;
choosing the amplitudes large enough keeps that tally at zero.

The discrete d f/dv1 uses the centered difference over 2*dv with zero
padding at the velocity boundary, the same stencil as the gradient
assembly, so reaction term and gradient discretize the derivative
identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .domain import PhaseGrid, SpeciesParams, SpeciesParticles, TimeGrid
from .errors import GridMismatch
from .fields import assemble_occupation, interpolate_periodic, symmetrized_cumulative
from .forward import ForwardTrajectory
from .pusher import boris_push_reverse_arrays
from .sampling import GaussianSpec, RandomStream
from .tracking import TrackingWeights, cell_masses

from .tracking import (GaussianWeight, SpeciesTracking, TargetPath,  # noqa: F401
                       gaussian_weight, zero_tracking)


@dataclass
class AdjointTrajectory:
    """Occupation history of the adjoint particle lists.

    ``tensors[sign][k]`` holds the lambda occupation counts at time level k
    (post-creation); ``w_lambda[sign]`` converts them to densities.
    """

    grid: PhaseGrid
    time: TimeGrid
    tensors: dict = field(repr=False)
    w_lambda: dict = None
    counts: dict = None
    created: dict = None
    clamped_cells: dict = None
    clamped_mass: dict = None


def _lambda_mass(tr, n_terminal: int) -> float:
    """Mass carried by one adjoint particle of a species.

    C_phi fixes it when the terminal condition is nontrivial; a source-only
    adjoint (C_phi = 0, C_theta > 0) falls back to C_theta so creation still
    has a well-defined weight.
    """
    if tr.phi.amplitude > 0.0:
        return tr.phi.amplitude / n_terminal
    if tr.theta.amplitude > 0.0:
        return tr.theta.amplitude / n_terminal
    return 0.0


def terminal_condition(weights: TrackingWeights, n_terminal: int,
                       rng: RandomStream, grid: PhaseGrid,
                       electron_species: SpeciesParams,
                       ion_species: SpeciesParams) -> dict:
    """Sample the terminal adjoint lists representing lambda(T) = -phi.

    -phi is C_phi times a normalized Gaussian; n_terminal draws from that
    Gaussian *truncated to x in [0, p_max)* represent it, with the
    per-particle mass scaled by the analytic in-domain fraction. Wrapping
    the out-of-domain tail instead would teleport lambda mass across the
    periodic seam where phi has none, biasing every boundary-adjacent
    gradient. Velocity tails stay untouched: outside the velocity box they
    are excluded from occupation tensors, consistently with f's support.
    An amplitude of zero yields an empty list.
    """
    out = {}
    for species, name in ((electron_species, "electron"), (ion_species, "ion")):
        tr = weights.for_sign(species.sign)
        m_lambda = _lambda_mass(tr, n_terminal)
        if tr.phi.amplitude > 0.0:
            gen = rng.generator(f"adjoint-terminal/{name}")
            mu = tr.phi.target.at(0.0)
            sd_x = float(np.sqrt(tr.phi.var[0]))
            in_frac = float(ndtr((grid.p_max - mu[0]) / sd_x)
                            - ndtr((0.0 - mu[0]) / sd_x))
            if in_frac <= 0.0:
                raise ValueError("terminal target has no mass inside the domain")
            m_lambda *= in_frac
            spec = GaussianSpec(mu, np.asarray(tr.phi.var))
            xs, v1s, v2s = [], [], []
            got = 0
            while got < n_terminal:
                x, v1, v2 = spec.sample(n_terminal, gen)
                keep = (x >= 0.0) & (x < grid.p_max)
                xs.append(x[keep])
                v1s.append(v1[keep])
                v2s.append(v2[keep])
                got += int(keep.sum())
            x = np.concatenate(xs)[:n_terminal]
            v1 = np.concatenate(v1s)[:n_terminal]
            v2 = np.concatenate(v2s)[:n_terminal]
        else:
            x = np.zeros(0)
            v1 = np.zeros(0)
            v2 = np.zeros(0)
        w_lambda = m_lambda / grid.cell_volume if m_lambda > 0.0 else 0.0
        out[species.sign] = SpeciesParticles(species, x, np.asarray(v1),
                                             np.asarray(v2), w_lambda)
    return out


def reaction_field(lambda_counts: dict, f_counts: dict, grid: PhaseGrid,
                   species: dict, w_f: dict, w_lambda: dict) -> np.ndarray:
    """Common cumulative integral of the reaction term (before the -/+ sign).

    Returns R(x_i); the species reaction is -sign_s * R. Counts enter in
    density units via the per-species weights; d/dv1 uses the centered
    difference with zero padding, the same discretization as the gradient
    assembly (the two must match or the adjoint identity degrades).
    """
    d = np.zeros(grid.n_x)
    for sign, sp in species.items():
        fc = f_counts[sign]
        lc = lambda_counts[sign]
        if fc.shape != lc.shape or fc.shape != (grid.n_x, grid.n_v, grid.n_v):
            raise GridMismatch("tensor shapes disagree with the grid")
        fp = np.pad(fc, ((0, 0), (1, 1), (0, 0)))
        diff = fp[:, 2:, :] - fp[:, :-2, :]            # 2*dv * d_v1 f
        norm = 0.5 * sp.mu_v * w_f[sign] * w_lambda[sign] * grid.dv
        if norm != 0.0:
            d += norm * np.einsum("ilm,ilm->i", lc, diff)
    return symmetrized_cumulative(d, grid.dx)


def create_reaction_source_particles(adj: dict, f_counts: dict,
                                     weights: TrackingWeights, t_k: float,
                                     dt: float, grid: PhaseGrid,
                                     gen: np.random.Generator,
                                     reaction: np.ndarray = None):
    """Create the per-cell particles of one backward Euler source step.

    Per cell: N = dt*(mass of |theta| in the cell) / m_lambda minus the
    reaction count dt*R_s(x_i)*dx*dv^2/m_lambda shared by the velocity
    column. Positive N creates floor(N) + Bernoulli(frac) particles
    uniformly inside the cell; non-positive N creates nothing and is
    tallied. Returns {sign: (created_counts, n_created, clamped_cells,
    clamped_mass)} and appends the created particles to ``adj``.
    """
    if reaction is None:
        reaction = np.zeros(grid.n_x)
    v_lo = -grid.v_max
    report = {}
    for sign in sorted(adj.keys()):
        parts = adj[sign]
        tr = weights.for_sign(sign)
        m_lambda = parts.weight * grid.cell_volume
        if m_lambda <= 0.0:
            report[sign] = (None, 0, 0, 0.0)
            continue
        n_theta = dt * cell_masses(tr.theta, t_k, grid) / m_lambda
        n_react = dt * (-sign) * reaction * grid.cell_volume / m_lambda
        n_cells = n_theta - n_react[:, None, None]

        negative = n_cells < 0.0
        clamped_cells = int(np.count_nonzero(negative))
        clamped_mass = float(-n_cells[negative].sum()) * m_lambda

        pos = np.clip(n_cells, 0.0, None)
        base = np.floor(pos)
        counts = (base + (gen.random(pos.shape) < (pos - base))).astype(np.int64)
        total = int(counts.sum())
        if total > 0:
            flat = np.repeat(np.arange(counts.size), counts.ravel())
            ii, ll, mm = np.unravel_index(flat, counts.shape)
            u = gen.random((3, total))
            x_new = (ii + u[0]) * grid.dx
            v1_new = v_lo + (ll + u[1]) * grid.dv
            v2_new = v_lo + (mm + u[2]) * grid.dv
            parts.x = np.concatenate([parts.x, x_new])
            parts.v1 = np.concatenate([parts.v1, v1_new])
            parts.v2 = np.concatenate([parts.v2, v2_new])
        report[sign] = (counts, total, clamped_cells, clamped_mass)
    return report


def adjoint_solve(fwd: ForwardTrajectory, control, weights: TrackingWeights,
                  rng: RandomStream, *, electron_species: SpeciesParams,
                  ion_species: SpeciesParams, n_terminal: int,
                  threads: int = 1) -> AdjointTrajectory:
    """Backward sweep k = n_t-1 .. 0 of transport plus creation.

    Needs the forward trajectory's per-step particle snapshots (for the
    reaction term) and field history, and the same control used forward.
    """
    grid, time = fwd.grid, fwd.time
    species = {electron_species.sign: electron_species,
               ion_species.sign: ion_species}
    adj = terminal_condition(weights, n_terminal, rng, grid,
                             electron_species, ion_species)
    w_lambda = {sign: adj[sign].weight for sign in adj}
    w_f = {-1: fwd.electrons0.weight, +1: fwd.ions0.weight}
    gen_create = rng.generator("adjoint-create")

    n_lev = time.n_t + 1
    tensors = {sign: [None] * n_lev for sign in adj}
    counts = {sign: np.zeros(n_lev, dtype=np.int64) for sign in adj}
    created = {sign: np.zeros(n_lev, dtype=np.int64) for sign in adj}
    clamped_cells = {sign: np.zeros(n_lev, dtype=np.int64) for sign in adj}
    clamped_mass = {sign: np.zeros(n_lev) for sign in adj}

    for sign in adj:
        tensor, _ = assemble_occupation(adj[sign], grid, threads)
        tensors[sign][time.n_t] = tensor.counts
        counts[sign][time.n_t] = adj[sign].n

    use_control = control is not None and not control.is_zero()
    active = any(w_lambda[s] > 0.0 for s in adj)

    for k in range(time.n_t - 1, -1, -1):
        if not active:
            for sign in adj:
                tensors[sign][k] = np.zeros((grid.n_x, grid.n_v, grid.n_v))
            continue
        e_row = fwd.e_field[k]

        def field_at(xq, _k=k):
            e = interpolate_periodic(e_row, xq, grid)
            b = control.row_at(_k, xq) if use_control else np.zeros_like(xq)
            return e, b

        lam_pre = {}
        for sign in sorted(adj.keys()):
            parts = adj[sign]
            if parts.n:
                parts.x, parts.v1, parts.v2 = boris_push_reverse_arrays(
                    parts.x, parts.v1, parts.v2, field_at, parts.species,
                    time.dt, grid.p_max)
            tensor, _ = assemble_occupation(parts, grid, threads)
            lam_pre[sign] = tensor.counts

        f_k = {}
        for sign in sorted(adj.keys()):
            tensor, _ = assemble_occupation(fwd.snapshot(k, sign), grid, threads)
            f_k[sign] = tensor.counts
        reaction = reaction_field(lam_pre, f_k, grid, species, w_f, w_lambda)

        report = create_reaction_source_particles(adj, f_k, weights, k * time.dt,
                                                  time.dt, grid, gen_create, reaction)
        for sign in adj:
            new_counts, n_new, n_clamped, m_clamped = report[sign]
            lam_post = lam_pre[sign] if new_counts is None \
                else lam_pre[sign] + new_counts
            tensors[sign][k] = lam_post
            counts[sign][k] = adj[sign].n
            created[sign][k] = n_new
            clamped_cells[sign][k] = n_clamped
            clamped_mass[sign][k] = m_clamped

    return AdjointTrajectory(grid=grid, time=time, tensors=tensors,
                             w_lambda=w_lambda, counts=counts, created=created,
                             clamped_cells=clamped_cells, clamped_mass=clamped_mass)
