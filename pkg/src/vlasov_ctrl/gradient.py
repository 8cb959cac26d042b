"""Cost functional, discrete L2 gradient and its lift to the H1 gradient.

Normalization of the Monte Carlo integrals (default mode): occupation
counts are converted to continuum densities through the per-particle
weights, and the velocity finite-difference pattern of G carries the
cell-center velocity values, so per species the column integrand

    G_i = -mu_x mu_v * w_f * w_lambda * dv *
          sum_lm (v1^l fc[i,l,m+1] - (v1^l - v2^m) fc[i,l,m]
                  - v2^m fc[i,l+1,m]) * lc[i,l,m]

converges to -mu_x mu_v * integral (v1 d_v2 f - v2 d_v1 f) lambda dv as
N_f, n_terminal -> infinity, making the gradient magnitude independent of
particle counts. ``raw_index=True`` reproduces the literal raw-index
variant with its (dv)^2 dt prefactor instead.

The tracking contribution to grad_L2 is zeroed on the terminal time row by
default: the forward solver never evaluates B^{n_t}, so the discrete cost
has no sensitivity there (see the gradient check in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .adjoint import adjoint_solve
from .control import (ControlField, PenaltyConfig, apply_elliptic, l2_inner,
                      v_inner, v_norm_sq)
from .domain import PhaseGrid, TimeGrid
from .errors import GridMismatch, SolverBreakdown
from .forward import ForwardTrajectory, forward_solve, _theta_sum
from .problem import Problem
from .sampling import RandomStream
from .tracking import TrackingWeights


@dataclass
class GradientField:
    """G, grad_L2 and grad_V on the control lattice."""

    time: TimeGrid
    grid: PhaseGrid
    g: np.ndarray = field(repr=False)
    grad_l2: np.ndarray = field(repr=False)
    grad_v: np.ndarray = field(repr=False)


@dataclass
class GradientResult:
    j: float
    gradient: GradientField
    trajectory: ForwardTrajectory
    adjoint: object
    clamped_mass: float


def tracking_part_of_cost(traj: ForwardTrajectory, weights: TrackingWeights) -> float:
    """Monte Carlo tracking + terminal sums of the cost.

    Recomputed from snapshots when available (identical accumulation order
    to the on-the-fly path), else taken from the solver's accumulated sums.
    """
    if traj.has_snapshots:
        grid, time = traj.grid, traj.time
        total = 0.0
        for sign, name in ((-1, "electron"), (+1, "ion")):
            tr = weights.for_sign(sign)
            acc = 0.0
            for k in range(time.n_t):
                acc += time.dt * _theta_sum(tr.theta, k * time.dt,
                                            traj.snapshot(k, sign), grid)
            total += acc
            total += _theta_sum(tr.phi, time.t_final,
                                traj.snapshot(time.n_t, sign), grid)
        return total
    if traj.tracking_cost is None:
        raise ValueError("trajectory has neither snapshots nor accumulated sums")
    return (traj.tracking_cost["electron"] + traj.terminal_cost["electron"]
            + traj.tracking_cost["ion"] + traj.terminal_cost["ion"])


def cost(traj: ForwardTrajectory, control: ControlField,
         weights: TrackingWeights, penalty: PenaltyConfig) -> float:
    """J = tracking + terminal + (alpha/2) ||B||_V^2."""
    pen = 0.5 * penalty.alpha * v_norm_sq(control.values, traj.time,
                                          traj.grid, penalty)
    return tracking_part_of_cost(traj, weights) + pen


def assemble_g_level(f_counts: dict, lambda_counts: dict, grid: PhaseGrid,
                     species: dict, w_f: dict, w_lambda: dict,
                     raw_index: bool = False) -> np.ndarray:
    """One time level of G (length n_x), summed over species.

    Default mode: centered velocity differences, co-located at the cell
    center. The integrand v1 d_v2 f - v2 d_v1 f is an angular derivative
    whose integral against lambda is a small residual of two nearly
    canceling terms; the forward differences of the raw-index variant
    evaluate the two pieces at different staggered half-cells, which breaks
    that cancellation at O(dv) and destroys the gradient on coarse velocity
    grids. Centered differencing keeps the pieces co-located and is O(dv^2).
    """
    n_v = grid.n_v
    out = np.zeros(grid.n_x)
    for sign, sp_ in species.items():
        fc = f_counts[sign]
        lc = lambda_counts[sign]
        if fc.shape != (grid.n_x, n_v, n_v) or lc.shape != fc.shape:
            raise GridMismatch("tensor shapes disagree with the grid")
        if raw_index:
            # literal raw-index forward-difference pattern
            idx = np.arange(1, n_v + 1, dtype=np.float64)
            f_m = np.zeros_like(fc)
            f_m[:, :, :-1] = fc[:, :, 1:]
            f_l = np.zeros_like(fc)
            f_l[:, :-1, :] = fc[:, 1:, :]
            term = (idx[None, :, None] * f_m
                    - (idx[None, :, None] - idx[None, None, :]) * fc
                    - idx[None, None, :] * f_l)
            out += -sp_.mu_x * sp_.mu_v * np.einsum("ilm,ilm->i", term, lc)
        else:
            vc = grid.v_centers()
            fp = np.pad(fc, ((0, 0), (1, 1), (1, 1)))
            diff_m = fp[:, 1:-1, 2:] - fp[:, 1:-1, :-2]    # 2*dv * d_v2 f
            diff_l = fp[:, 2:, 1:-1] - fp[:, :-2, 1:-1]    # 2*dv * d_v1 f
            term = vc[None, :, None] * diff_m - vc[None, None, :] * diff_l
            scale = 0.5 * w_f[sign] * w_lambda[sign] * grid.dv
            out += -sp_.mu_x * sp_.mu_v * scale * np.einsum("ilm,ilm->i", term, lc)
    return out


def assemble_G(f_tensors: list, lambda_tensors: dict, grid: PhaseGrid,
               time: TimeGrid, species: dict, w_f: dict, w_lambda: dict,
               raw_index: bool = False) -> np.ndarray:
    """G on the full (n_t + 1) x n_x lattice.

    ``f_tensors`` is a list over k of {sign: counts}; ``lambda_tensors``
    is {sign: list over k of counts} as produced by the backward solver.
    """
    out = np.zeros((time.n_t + 1, grid.n_x))
    for k in range(time.n_t + 1):
        lam_k = {sign: lambda_tensors[sign][k] for sign in species}
        out[k] = assemble_g_level(f_tensors[k], lam_k, grid, species,
                                  w_f, w_lambda, raw_index)
    return out


def assemble_grad_L2(g_mat: np.ndarray, control: ControlField,
                     penalty: PenaltyConfig, time: TimeGrid, grid: PhaseGrid,
                     g_prefactor: float = 1.0,
                     include_terminal_g: bool = False) -> np.ndarray:
    """grad_L2 = alpha*(B - kappa_t D_tt B - kappa_x D_xx B) + prefactor*G.

    Neumann closure by mirrored ghost values on both lattice axes. The
    terminal G row is dropped unless ``include_terminal_g``.
    """
    pen = penalty.alpha * apply_elliptic(control.values, time, grid, penalty)
    g_term = g_prefactor * g_mat
    if not include_terminal_g:
        g_term = g_term.copy()
        g_term[time.n_t, :] = 0.0
    return pen + g_term


def _neumann_second_diff_matrix(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = -1.0
    main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def lift_to_V(grad_l2: np.ndarray, penalty: PenaltyConfig, time: TimeGrid,
              grid: PhaseGrid) -> np.ndarray:
    """Solve (I - kappa_t d_tt - kappa_x d_xx) grad_V = grad_L2, Neumann BCs.

    Direct sparse factorization of the pentadiagonal block system; the
    operator is symmetric positive definite on the lattice, so a breakdown
    can only signal a programming error.
    """
    n_k, n_x = time.n_t + 1, grid.n_x
    if grad_l2.shape != (n_k, n_x):
        raise GridMismatch(f"grad_l2 shape {grad_l2.shape} != {(n_k, n_x)}")
    d2t = _neumann_second_diff_matrix(n_k, time.dt)
    d2x = _neumann_second_diff_matrix(n_x, grid.dx)
    a = (sp.identity(n_k * n_x, format="csr")
         - penalty.kappa_t * sp.kron(d2t, sp.identity(n_x), format="csr")
         - penalty.kappa_x * sp.kron(sp.identity(n_k), d2x, format="csr"))
    sol = spsolve(a.tocsc(), grad_l2.ravel())
    if not np.all(np.isfinite(sol)):
        raise SolverBreakdown("elliptic lift returned non-finite values")
    return sol.reshape(n_k, n_x)


def cost_of_control(control: ControlField, problem: Problem,
                    rng: RandomStream) -> float:
    """Reduced cost J(B) without storing the trajectory (line-search path)."""
    traj = forward_solve(
        problem.electrons_init, problem.ions_init, control, problem.grid,
        problem.time, rng, electron_species=problem.electron_species,
        ion_species=problem.ion_species, n_particles=problem.n_particles,
        species_mass=problem.species_mass, store_particles=False,
        static_ions=problem.static_ions,
        escape_threshold=problem.escape_threshold, threads=problem.threads,
        tracking=problem.tracking)
    return cost(traj, control, problem.tracking, problem.penalty)


def gradient_of_cost(control: ControlField, problem: Problem,
                     rng: RandomStream) -> GradientResult:
    """Forward solve, backward solve, then G -> grad_L2 -> grad_V.

    All random substreams are derived from ``rng``'s master seed by fixed
    purpose labels, so repeated calls with the same control are identical.
    """
    grid, time = problem.grid, problem.time
    traj = forward_solve(
        problem.electrons_init, problem.ions_init, control, grid, time, rng,
        electron_species=problem.electron_species,
        ion_species=problem.ion_species, n_particles=problem.n_particles,
        species_mass=problem.species_mass, store_particles=True,
        static_ions=problem.static_ions,
        escape_threshold=problem.escape_threshold, threads=problem.threads,
        tracking=problem.tracking)
    j = cost(traj, control, problem.tracking, problem.penalty)

    adj = adjoint_solve(traj, control, problem.tracking, rng,
                        electron_species=problem.electron_species,
                        ion_species=problem.ion_species,
                        n_terminal=problem.n_terminal, threads=problem.threads)

    species = {-1: problem.electron_species, +1: problem.ion_species}
    w_f = {-1: traj.electrons0.weight, +1: traj.ions0.weight}
    f_tensors = [{sign: traj.tensor(k, sign).counts for sign in species}
                 for k in range(time.n_t + 1)]
    g_mat = assemble_G(f_tensors, adj.tensors, grid, time, species, w_f,
                       adj.w_lambda, raw_index=problem.raw_index_gradient)
    prefactor = (grid.dv ** 2 * time.dt) if problem.raw_index_gradient else 1.0
    grad_l2 = assemble_grad_L2(g_mat, control, problem.penalty, time, grid,
                               g_prefactor=prefactor,
                               include_terminal_g=problem.include_terminal_g)
    grad_v = lift_to_V(grad_l2, problem.penalty, time, grid)
    clamped = float(sum(adj.clamped_mass[s].sum() for s in adj.clamped_mass))
    return GradientResult(j=j, gradient=GradientField(time, grid, g_mat,
                                                      grad_l2, grad_v),
                          trajectory=traj, adjoint=adj, clamped_mass=clamped)


__all__ = ["ControlField", "PenaltyConfig", "GradientField", "GradientResult",
           "cost", "cost_of_control", "assemble_G", "assemble_g_level",
           "assemble_grad_L2", "lift_to_V", "gradient_of_cost",
           "v_inner", "v_norm_sq", "l2_inner"]
