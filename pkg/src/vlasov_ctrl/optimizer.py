"""Nonlinear conjugate gradient descent on the reduced cost.

Fletcher-Reeves updates with Armijo backtracking. Every cost and gradient
evaluation inside the loop consumes the same frozen random substreams, so
the minimized function is deterministic and the Armijo sufficient-decrease
test is meaningful; an observed cost increase on an accepted step therefore
indicates seed leakage and is asserted against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import ControlField
from .gradient import cost_of_control, gradient_of_cost, v_inner, v_norm_sq
from .problem import Problem
from .sampling import RandomStream


@dataclass(frozen=True)
class NcgConfig:
    """Termination and line-search constants of the NCG scheme."""

    tol: float = 1e-6
    l_max: int = 50
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    sigma_init: float = 1.0
    restart_every: int = 0          # 0 -> (n_t + 1) * n_x
    max_backtracks: int = 30
    sigma_growth: float = 2.0

    def __post_init__(self):
        if self.tol <= 0.0 or self.l_max < 1:
            raise ValueError("need tol > 0 and l_max >= 1")
        if not 0.0 < self.armijo_c1 < 1.0 or not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError("need 0 < armijo_c1 < 1 and 0 < armijo_shrink < 1")


@dataclass
class IterationRecord:
    index: int
    j: float
    grad_norm_v: float
    sigma: float
    beta: float
    n_cost_evals: int
    clamped_mass: float
    max_db_x: float
    max_db_t: float


@dataclass
class OptimizationReport:
    iterations: list = field(default_factory=list)
    final_control: ControlField = None
    final_trajectory: object = None
    converged: bool = False
    reason: str = ""

    @property
    def j_history(self) -> np.ndarray:
        return np.array([r.j for r in self.iterations])


def _db_maxima(values: np.ndarray, dt: float, dx: float):
    """Largest |d_t B| and |d_x B| difference quotients, for auditing the
    never-reached box constraints."""
    db_t = np.abs(np.diff(values, axis=0)).max() / dt if values.shape[0] > 1 else 0.0
    db_x = np.abs(np.diff(values, axis=1)).max() / dx if values.shape[1] > 1 else 0.0
    return float(db_x), float(db_t)


def ncg_minimize(b0: ControlField, problem: Problem, cfg: NcgConfig,
                 rng: RandomStream) -> OptimizationReport:
    """Minimize the reduced cost starting from ``b0``.

    Loop: Armijo backtracking along h, control update, new V-gradient,
    Fletcher-Reeves beta, direction update; stops when the control moves
    less than cfg.tol in the lattice 2-norm or l_max is reached. A failed
    line search is retried once from steepest descent, then the partial
    report is returned with reason "line_search_failed".
    """
    time, grid, penalty = problem.time, problem.grid, problem.penalty
    restart_every = cfg.restart_every or (time.n_t + 1) * grid.n_x
    report = OptimizationReport()

    control = b0.copy()
    res = gradient_of_cost(control, problem, rng)
    j = res.j
    d = res.gradient.grad_v
    d_norm_sq = v_norm_sq(d, time, grid, penalty)
    db_x, db_t = _db_maxima(control.values, time.dt, grid.dx)
    report.iterations.append(IterationRecord(0, j, float(np.sqrt(d_norm_sq)),
                                             0.0, 0.0, 1, res.clamped_mass,
                                             db_x, db_t))
    if d_norm_sq == 0.0:
        report.final_control = control
        report.final_trajectory = res.trajectory
        report.converged = True
        report.reason = "stationary"
        return report

    h = -d
    sigma_start = cfg.sigma_init
    for ell in range(1, cfg.l_max + 1):
        slope = v_inner(d, h, time, grid, penalty)
        if slope >= 0.0:                       # not a descent direction
            h = -d
            slope = -d_norm_sq

        accepted = False
        restarted = False
        n_evals = 0
        sigma = sigma_start
        while True:
            for _ in range(cfg.max_backtracks):
                j_try = cost_of_control(
                    ControlField(time, grid, control.values + sigma * h),
                    problem, rng)
                n_evals += 1
                if j_try <= j + cfg.armijo_c1 * sigma * slope:
                    accepted = True
                    break
                sigma *= cfg.armijo_shrink
            if accepted or restarted:
                break
            # one steepest-descent retry before giving up
            restarted = True
            h = -d
            slope = -d_norm_sq
            sigma = sigma_start

        if not accepted:
            report.final_control = control
            report.final_trajectory = res.trajectory
            report.reason = "line_search_failed"
            return report

        step = sigma * h
        control = ControlField(time, grid, control.values + step)
        res = gradient_of_cost(control, problem, rng)
        n_evals += 1
        assert res.j <= j + abs(j) * 1e-12 + 1e-300, \
            "cost increased on an accepted step: frozen-noise violation"
        d_new = res.gradient.grad_v
        d_new_norm_sq = v_norm_sq(d_new, time, grid, penalty)
        beta = d_new_norm_sq / d_norm_sq
        if ell % restart_every == 0:
            beta = 0.0
        h = -d_new + beta * h
        j, d, d_norm_sq = res.j, d_new, d_new_norm_sq

        db_x, db_t = _db_maxima(control.values, time.dt, grid.dx)
        report.iterations.append(IterationRecord(
            ell, j, float(np.sqrt(d_norm_sq)), sigma, beta, n_evals,
            res.clamped_mass, db_x, db_t))

        if d_norm_sq == 0.0:
            report.converged = True
            report.reason = "stationary"
            break

        first_try = n_evals == 2   # accepted immediately (1 probe + 1 gradient)
        sigma_start = sigma * cfg.sigma_growth if first_try else sigma

        move = float(np.linalg.norm(step))
        if move <= cfg.tol:
            report.converged = True
            report.reason = "step_below_tol"
            break
    else:
        report.reason = "l_max_reached"

    report.final_control = control
    report.final_trajectory = res.trajectory
    return report
