import numpy as np

from vlasov_ctrl.control import ControlField
from vlasov_ctrl.gradient import cost_of_control, gradient_of_cost
from vlasov_ctrl.presets import build_problem, smoke_config
from vlasov_ctrl.sampling import RandomStream


def test_five_largest_components_match_finite_differences():
    """Component-wise oracle on the smoke preset: dJ/dB_i^k at the five
    largest-magnitude gradient entries vs central differences, <= 10%."""
    cfg = smoke_config()
    problem = build_problem(cfg)
    rng = RandomStream(cfg.seed)
    b0 = ControlField.zeros(problem.time, problem.grid)
    grad_l2 = gradient_of_cost(b0, problem, rng).gradient.grad_l2
    measure = problem.time.dt * problem.grid.dx
    eps = 1e-3
    for flat in np.argsort(np.abs(grad_l2).ravel())[::-1][:5]:
        k, i = np.unravel_index(flat, grad_l2.shape)
        plus = b0.values.copy()
        plus[k, i] += eps
        minus = b0.values.copy()
        minus[k, i] -= eps
        j_plus = cost_of_control(ControlField(problem.time, problem.grid, plus),
                                 problem, rng)
        j_minus = cost_of_control(ControlField(problem.time, problem.grid, minus),
                                  problem, rng)
        fd = (j_plus - j_minus) / (2.0 * eps) / measure
        rel = abs(grad_l2[k, i] - fd) / max(abs(fd), abs(grad_l2[k, i]))
        assert rel <= 0.10, (k, i, grad_l2[k, i], fd, rel)
