import numpy as np
import pytest

from vlasov_ctrl.control import (ControlField, PenaltyConfig, apply_elliptic,
                                 l2_inner, v_inner, v_norm_sq)
from vlasov_ctrl.domain import (PhaseGrid, TimeGrid, electron_params,
                                ion_params)
from vlasov_ctrl.forward import forward_solve
from vlasov_ctrl.gradient import (assemble_g_level, assemble_grad_L2,
                                  cost, cost_of_control, gradient_of_cost,
                                  lift_to_V, tracking_part_of_cost)
from vlasov_ctrl.problem import Problem
from vlasov_ctrl.sampling import GaussianSpec, RandomStream
from vlasov_ctrl.tracking import (SpeciesTracking, TrackingWeights,
                                  gaussian_weight, weight_values)


@pytest.fixture
def grid():
    return PhaseGrid(p_max=4.0, v_max=4.0, n_x=8, n_v=8)


@pytest.fixture
def time_grid():
    return TimeGrid(t_final=0.8, n_t=8)


@pytest.fixture
def penalty():
    return PenaltyConfig(alpha=0.3, kappa_t=0.05, kappa_x=0.08)


def dense_elliptic_matrix(time_grid, grid, penalty):
    """Independent dense assembly of I - kt*Dtt - kx*Dxx by explicit loops."""
    n_k, n_x = time_grid.n_t + 1, grid.n_x
    n = n_k * n_x
    a = np.zeros((n, n))

    def idx(k, i):
        return k * n_x + i

    for k in range(n_k):
        for i in range(n_x):
            row = idx(k, i)
            a[row, row] += 1.0
            for kk, h, kdim in ((penalty.kappa_t, time_grid.dt, True),
                                (penalty.kappa_x, grid.dx, False)):
                lo = (k - 1, i) if kdim else (k, i - 1)
                hi = (k + 1, i) if kdim else (k, i + 1)
                for nb in (lo, hi):
                    kb, ib = nb
                    kb = min(max(kb, 0), n_k - 1)
                    ib = min(max(ib, 0), n_x - 1)
                    a[row, idx(kb, ib)] -= kk / h ** 2
                    a[row, row] += kk / h ** 2
    return a


def test_v_inner_summation_by_parts(time_grid, grid, penalty):
    rng = np.random.default_rng(0)
    u = rng.normal(size=(time_grid.n_t + 1, grid.n_x))
    v = rng.normal(size=u.shape)
    lhs = v_inner(u, v, time_grid, grid, penalty)
    rhs = l2_inner(apply_elliptic(u, time_grid, grid, penalty), v,
                   time_grid, grid)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_lift_trivial_cases(time_grid, grid, penalty):
    zero = np.zeros((time_grid.n_t + 1, grid.n_x))
    assert np.all(lift_to_V(zero, penalty, time_grid, grid) == 0.0)
    const = np.full_like(zero, 3.7)
    out = lift_to_V(const, penalty, time_grid, grid)
    assert np.allclose(out, 3.7, rtol=1e-12)


def test_lift_matches_dense_solve(time_grid, grid, penalty):
    rng = np.random.default_rng(1)
    rhs = rng.normal(size=(time_grid.n_t + 1, grid.n_x))
    dense = dense_elliptic_matrix(time_grid, grid, penalty)
    expected = np.linalg.solve(dense, rhs.ravel()).reshape(rhs.shape)
    out = lift_to_V(rhs, penalty, time_grid, grid)
    assert np.max(np.abs(out - expected)) < 1e-10
    resid = apply_elliptic(out, time_grid, grid, penalty) - rhs
    assert np.max(np.abs(resid)) < 1e-10


def test_elliptic_operator_spd(time_grid, grid, penalty):
    dense = dense_elliptic_matrix(time_grid, grid, penalty)
    assert np.allclose(dense, dense.T)
    assert np.linalg.eigvalsh(dense).min() > 0.0


def test_discrete_duality(time_grid, grid, penalty):
    rng = np.random.default_rng(2)
    rhs = rng.normal(size=(time_grid.n_t + 1, grid.n_x))
    grad_v = lift_to_V(rhs, penalty, time_grid, grid)
    for _ in range(10):
        h = rng.normal(size=rhs.shape)
        lhs = v_inner(grad_v, h, time_grid, grid, penalty)
        r = l2_inner(rhs, h, time_grid, grid)
        assert abs(lhs - r) <= 1e-10 * max(abs(lhs), abs(r))


def test_grad_l2_trivial_and_constant(time_grid, grid, penalty):
    b0 = ControlField.zeros(time_grid, grid)
    g = np.zeros((time_grid.n_t + 1, grid.n_x))
    out = assemble_grad_L2(g, b0, penalty, time_grid, grid)
    assert np.all(out == 0.0)
    bc = ControlField(time_grid, grid, np.full_like(g, 2.0))
    out = assemble_grad_L2(g, bc, penalty, time_grid, grid)
    assert np.allclose(out, penalty.alpha * 2.0, rtol=1e-12)


def test_grad_l2_matches_dense_operator(time_grid, grid, penalty):
    rng = np.random.default_rng(3)
    bv = np.sin(np.outer(np.linspace(0, np.pi, time_grid.n_t + 1),
                         np.ones(grid.n_x))) \
        * np.cos(np.linspace(0, 2 * np.pi, grid.n_x))[None, :]
    b = ControlField(time_grid, grid, np.ascontiguousarray(bv))
    g = rng.normal(size=bv.shape)
    dense = dense_elliptic_matrix(time_grid, grid, penalty)
    expected = penalty.alpha * (dense @ bv.ravel()).reshape(bv.shape)
    expected[:time_grid.n_t] += g[:time_grid.n_t]     # terminal G row dropped
    out = assemble_grad_L2(g, b, penalty, time_grid, grid)
    assert np.allclose(out, expected, rtol=1e-12, atol=1e-14)


def test_penalty_gradient_is_exact_derivative(time_grid, grid, penalty):
    # (alpha/2)||B||_V^2 differentiates exactly through the mirrored stencil
    rng = np.random.default_rng(4)
    bv = rng.normal(size=(time_grid.n_t + 1, grid.n_x))
    h = rng.normal(size=bv.shape)
    eps = 1e-4
    fd = 0.5 * penalty.alpha * (
        v_norm_sq(bv + eps * h, time_grid, grid, penalty)
        - v_norm_sq(bv - eps * h, time_grid, grid, penalty)) / (2 * eps)
    pen_grad = penalty.alpha * apply_elliptic(bv, time_grid, grid, penalty)
    assert fd == pytest.approx(l2_inner(pen_grad, h, time_grid, grid), rel=1e-9)


def test_assemble_g_zero_lambda(grid):
    zeros = np.zeros((grid.n_x, grid.n_v, grid.n_v))
    species = {-1: electron_params(), +1: ion_params()}
    out = assemble_g_level({-1: zeros + 1.0, +1: zeros + 1.0},
                           {-1: zeros, +1: zeros}, grid, species,
                           {-1: 1.0, +1: 1.0}, {-1: 1.0, +1: 1.0})
    assert np.all(out == 0.0)


def brute_force_g(f_counts, lam_counts, grid, sp, w_f, w_l):
    """Explicit-loop quadrature of -mu_x mu_v int (v1 d2 f - v2 d1 f) lam dv."""
    vc = grid.v_centers()
    n_v = grid.n_v
    out = np.zeros(grid.n_x)
    for i in range(grid.n_x):
        acc = 0.0
        for l in range(n_v):
            for m in range(n_v):
                fm_hi = f_counts[i, l, m + 1] if m + 1 < n_v else 0.0
                fm_lo = f_counts[i, l, m - 1] if m - 1 >= 0 else 0.0
                fl_hi = f_counts[i, l + 1, m] if l + 1 < n_v else 0.0
                fl_lo = f_counts[i, l - 1, m] if l - 1 >= 0 else 0.0
                d2 = (fm_hi - fm_lo) / (2 * grid.dv)
                d1 = (fl_hi - fl_lo) / (2 * grid.dv)
                acc += (vc[l] * d2 - vc[m] * d1) * lam_counts[i, l, m]
        out[i] = -sp.mu_x * sp.mu_v * w_f * w_l * grid.dv ** 2 * acc
    return out


def test_assemble_g_matches_brute_force():
    grid = PhaseGrid(p_max=2.0, v_max=2.0, n_x=3, n_v=4)
    rng = np.random.default_rng(5)
    fc = rng.random((3, 4, 4))
    lc = rng.random((3, 4, 4))
    sp = electron_params()
    out = assemble_g_level({-1: fc}, {-1: lc}, grid, {-1: sp},
                           {-1: 0.7}, {-1: 1.3})
    expected = brute_force_g(fc, lc, grid, sp, 0.7, 1.3)
    assert np.allclose(out, expected, rtol=1e-12)


def test_assemble_g_uniform_f_telescopes():
    # f constant in (l, m): centered differences vanish in the interior and
    # G reduces to boundary-layer terms only, matching direct summation
    grid = PhaseGrid(p_max=2.0, v_max=2.0, n_x=3, n_v=6)
    fc = np.ones((3, 6, 6))
    rng = np.random.default_rng(6)
    lc = rng.random((3, 6, 6))
    sp = electron_params()
    out = assemble_g_level({-1: fc}, {-1: lc}, grid, {-1: sp},
                           {-1: 1.0}, {-1: 1.0})
    expected = brute_force_g(fc, lc, grid, sp, 1.0, 1.0)
    assert np.allclose(out, expected, rtol=1e-12)
    # interior-only lambda sees no gradient at all from a uniform f
    lc_int = np.zeros_like(lc)
    lc_int[:, 1:-1, 1:-1] = 1.0
    out = assemble_g_level({-1: fc}, {-1: lc_int}, grid, {-1: sp},
                           {-1: 1.0}, {-1: 1.0})
    assert np.allclose(out, 0.0, atol=1e-14)


def test_assemble_g_raw_index_variant():
    grid = PhaseGrid(p_max=2.0, v_max=2.0, n_x=2, n_v=3)
    rng = np.random.default_rng(7)
    fc = rng.random((2, 3, 3))
    lc = rng.random((2, 3, 3))
    sp = electron_params()
    out = assemble_g_level({-1: fc}, {-1: lc}, grid, {-1: sp},
                           {-1: 1.0}, {-1: 1.0}, raw_index=True)
    expected = np.zeros(2)
    for i in range(2):
        acc = 0.0
        for l in range(3):
            for m in range(3):
                fm = fc[i, l, m + 1] if m + 1 < 3 else 0.0
                fl = fc[i, l + 1, m] if l + 1 < 3 else 0.0
                li, mi = l + 1, m + 1         # paper's 1-based indices
                acc += (li * fm - (li - mi) * fc[i, l, m] - mi * fl) * lc[i, l, m]
        expected[i] = -sp.mu_x * sp.mu_v * acc
    assert np.allclose(out, expected, rtol=1e-12)


def smoke_problem(grid, time_grid, c_theta=1.0, c_phi=1.0, mass=0.5, n=4000):
    sp = SpeciesTracking(
        theta=gaussian_weight(c_theta, (0.5, 1.5, 1.5), (2.5, 0.4, 0.3)),
        phi=gaussian_weight(c_phi, (0.5, 1.5, 1.5), (2.5, 0.4, 0.3)))
    tw = TrackingWeights(electron=sp, ion=sp)
    init = GaussianSpec([2.0, 0.0, 0.0], [0.25, 0.7, 0.7])
    return Problem(grid=grid, time=time_grid,
                   electron_species=electron_params(),
                   ion_species=ion_params(), electrons_init=init,
                   ions_init=init, tracking=tw,
                   penalty=PenaltyConfig(1e-2, 1e-2, 1e-2), n_particles=n,
                   n_terminal=20_000, species_mass=mass)


def test_cost_zero_weights_zero_control(grid, time_grid):
    p = smoke_problem(grid, time_grid, c_theta=0.0, c_phi=0.0)
    b0 = ControlField.zeros(time_grid, grid)
    assert cost_of_control(b0, p, RandomStream(8)) == 0.0


def test_cost_constant_control_penalty_only(grid, time_grid):
    p = smoke_problem(grid, time_grid, c_theta=0.0, c_phi=0.0)
    c = 1.7
    b = ControlField(time_grid, grid,
                     np.full((time_grid.n_t + 1, grid.n_x), c))
    j = cost_of_control(b, p, RandomStream(8))
    # derivative terms vanish; lattice measure spans (n_t+1)*dt by n_x*dx
    expected = 0.5 * p.penalty.alpha * c * c \
        * (time_grid.n_t + 1) * time_grid.dt * grid.p_max
    assert j == pytest.approx(expected, rel=1e-12)


def test_cost_matches_tensor_quadrature_oracle(grid, time_grid):
    # Monte Carlo particle sums vs quadrature on the occupation tensors
    p = smoke_problem(grid, time_grid, mass=1.0, n=60_000)
    traj = forward_solve(p.electrons_init, p.ions_init, None, grid, time_grid,
                         RandomStream(9), electron_species=p.electron_species,
                         ion_species=p.ion_species, n_particles=p.n_particles,
                         species_mass=p.species_mass, store_particles=True)
    mc = tracking_part_of_cost(traj, p.tracking)
    xc, vc = grid.x_centers(), grid.v_centers()
    X, V1, V2 = np.meshgrid(xc, vc, vc, indexing="ij")
    quad = 0.0
    for sign in (-1, +1):
        tr = p.tracking.for_sign(sign)
        w = traj.snapshot(0, sign).weight
        for k in range(time_grid.n_t):
            counts = traj.tensor(k, sign).counts
            vals = weight_values(tr.theta, k * time_grid.dt, X, V1, V2)
            quad += time_grid.dt * float((vals * counts).sum()) * w \
                * grid.cell_volume
        counts = traj.tensor(time_grid.n_t, sign).counts
        vals = weight_values(tr.phi, time_grid.t_final, X, V1, V2)
        quad += float((vals * counts).sum()) * w * grid.cell_volume
    # difference is pure within-cell binning error of the smooth weights
    assert mc == pytest.approx(quad, rel=0.05)


def test_gradient_zero_weights_zero_control(grid, time_grid):
    p = smoke_problem(grid, time_grid, c_theta=0.0, c_phi=0.0)
    b0 = ControlField.zeros(time_grid, grid)
    res = gradient_of_cost(b0, p, RandomStream(10))
    assert res.j == 0.0
    assert np.all(res.gradient.grad_v == 0.0)


def test_gradient_alpha_linearity(grid, time_grid):
    # with tracking off, grad_V = alpha * B exactly; doubling alpha doubles it
    p1 = smoke_problem(grid, time_grid, c_theta=0.0, c_phi=0.0)
    p2 = smoke_problem(grid, time_grid, c_theta=0.0, c_phi=0.0)
    p2.penalty = PenaltyConfig(2e-2, 1e-2, 1e-2)
    rng_b = np.random.default_rng(11)
    bv = rng_b.normal(size=(time_grid.n_t + 1, grid.n_x))
    b = ControlField(time_grid, grid, bv)
    g1 = gradient_of_cost(b, p1, RandomStream(12)).gradient.grad_v
    g2 = gradient_of_cost(b, p2, RandomStream(12)).gradient.grad_v
    assert np.allclose(g1, p1.penalty.alpha * bv, rtol=1e-10)
    assert np.allclose(g2, 2.0 * g1, rtol=1e-10)


def test_gradient_repeated_calls_identical(grid, time_grid):
    p = smoke_problem(grid, time_grid)
    b0 = ControlField.zeros(time_grid, grid)
    r1 = gradient_of_cost(b0, p, RandomStream(13))
    r2 = gradient_of_cost(b0, p, RandomStream(13))
    assert r1.j == r2.j
    assert np.array_equal(r1.gradient.grad_v, r2.gradient.grad_v)


def test_control_field_bilinear_evaluation(grid, time_grid):
    rng = np.random.default_rng(15)
    bv = rng.normal(size=(time_grid.n_t + 1, grid.n_x))
    b = ControlField(time_grid, grid, bv)
    xc = grid.x_centers()
    # lattice points reproduce stored values
    assert np.allclose(b.at(2 * time_grid.dt, xc), bv[2])
    # halfway between two time levels: average of the two rows
    mid = b.at(2.5 * time_grid.dt, xc)
    assert np.allclose(mid, 0.5 * (bv[2] + bv[3]))
    # t clamped to [0, T]
    assert np.allclose(b.at(-1.0, xc), bv[0])
    assert np.allclose(b.at(time_grid.t_final + 1.0, xc), bv[-1])


def test_cost_of_control_equals_cost_on_trajectory(grid, time_grid):
    p = smoke_problem(grid, time_grid)
    b0 = ControlField.zeros(time_grid, grid)
    res = gradient_of_cost(b0, p, RandomStream(14))
    assert cost_of_control(b0, p, RandomStream(14)) == res.j
    assert cost(res.trajectory, b0, p.tracking, p.penalty) == res.j
