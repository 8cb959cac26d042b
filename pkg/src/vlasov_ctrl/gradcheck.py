"""Finite-difference oracles for the adjoint gradient and the elliptic lift."""

from __future__ import annotations

import numpy as np

from .control import ControlField, apply_elliptic
from .gradient import (cost_of_control, gradient_of_cost, l2_inner, lift_to_V,
                       v_inner)
from .problem import Problem
from .sampling import RandomStream


def smooth_direction(shape, gen: np.random.Generator, passes: int = 4) -> np.ndarray:
    """Random lattice direction smoothed by a few neighbor-averaging passes.

    Smoothness keeps the directional derivative sensitive to the field as a
    whole instead of to single-cell Monte Carlo noise; any direction is a
    valid probe of the derivative.
    """
    h = gen.normal(size=shape)
    for _ in range(passes):
        p = np.pad(h, 1, mode="edge")
        h = 0.25 * h + 0.1875 * (p[:-2, 1:-1] + p[2:, 1:-1]
                                 + p[1:-1, :-2] + p[1:-1, 2:])
    return h / np.abs(h).max()


def directional_check(b0: ControlField, problem: Problem, rng: RandomStream,
                      n_directions: int = 3, eps: float = 1e-3):
    """Adjoint directional derivatives vs central differences of J.

    Returns (relative_errors, [(adjoint_value, fd_value), ...]). All cost
    evaluations reuse the frozen substreams, so the finite difference
    probes the same deterministic function the adjoint differentiates.
    """
    time, grid, penalty = problem.time, problem.grid, problem.penalty
    res = gradient_of_cost(b0, problem, rng)
    errors = []
    pairs = []
    for idx in range(n_directions):
        gen = rng.generator(f"gradcheck/direction/{idx}")
        h = smooth_direction(b0.values.shape, gen)
        adj_val = v_inner(res.gradient.grad_v, h, time, grid, penalty)
        j_plus = cost_of_control(ControlField(time, grid, b0.values + eps * h),
                                 problem, rng)
        j_minus = cost_of_control(ControlField(time, grid, b0.values - eps * h),
                                  problem, rng)
        fd_val = (j_plus - j_minus) / (2.0 * eps)
        scale = max(abs(fd_val), abs(adj_val), 1e-300)
        errors.append(abs(adj_val - fd_val) / scale)
        pairs.append((adj_val, fd_val))
    return errors, pairs


def duality_residuals(problem: Problem, seed: int, n_probes: int = 10):
    """Max relative residuals of the elliptic lift and the discrete duality.

    The lift residual checks ||L grad_V - rhs||_inf against the mirrored
    stencil applied directly; duality checks (grad_V, H)_V = (rhs, H)_L2
    for random H, the defining property of the lift.
    """
    time, grid, penalty = problem.time, problem.grid, problem.penalty
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    rhs = gen.normal(size=(time.n_t + 1, grid.n_x))
    grad_v = lift_to_V(rhs, penalty, time, grid)
    resid = apply_elliptic(grad_v, time, grid, penalty) - rhs
    lift_res = float(np.abs(resid).max() / np.abs(rhs).max())
    dual = 0.0
    for _ in range(n_probes):
        h = gen.normal(size=rhs.shape)
        lhs = v_inner(grad_v, h, time, grid, penalty)
        rhs_ip = l2_inner(rhs, h, time, grid)
        dual = max(dual, abs(lhs - rhs_ip) / max(abs(lhs), abs(rhs_ip), 1e-300))
    return lift_res, dual
