import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from pgwmatch.errors import NumericalError, ValidationError
from pgwmatch.solver import (
    SQUARE_LOSS,
    PartialCouplingSpec,
    SolverConfig,
    constraint_residuals,
    gw_loss_matrix,
    kl_proj_c1,
    kl_proj_c2,
    kl_proj_c3,
    objective_eval,
    objective_grad,
    periodic_projection,
    pgd_step,
    proximal_solve,
)

FIG1_K = np.array([[2.0, -1.0], [1.0, 2.0]])
HALF = np.array([0.5, 0.5])


def brute_force_loss(cs, ct, t):
    n, m = t.shape
    out = np.zeros((n, m))
    for j in range(n):
        for jj in range(m):
            for i in range(n):
                for ii in range(m):
                    out[j, jj] += (cs[i, j] - ct[ii, jj]) ** 2 * t[i, ii]
    return out


def brute_force_mu_form(cs, ct, t, mu_s, mu_t):
    # separable parts weighted by the bounds, cross part by the plan
    n, m = t.shape
    out = np.zeros((n, m))
    for j in range(n):
        for jj in range(m):
            out[j, jj] += sum(cs[i, j] ** 2 * mu_s[i] for i in range(n))
            out[j, jj] += sum(ct[ii, jj] ** 2 * mu_t[ii] for ii in range(m))
            for i in range(n):
                for ii in range(m):
                    out[j, jj] -= 2 * cs[i, j] * ct[ii, jj] * t[i, ii]
    return out


def random_cost(rng, n, symmetric=True):
    c = rng.random((n, n))
    if symmetric:
        c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 0)
    return c


def saturated_instance(rng, n, m):
    t = rng.random((n, m))
    t /= t.sum()
    return t, t.sum(axis=1), t.sum(axis=0)


def partial_lp(k, mu_s, mu_t, b):
    n, m = k.shape
    rows = np.kron(np.eye(n), np.ones((1, m)))
    cols = np.kron(np.ones((1, n)), np.eye(m))
    res = linprog(k.ravel(), A_ub=np.vstack([rows, cols]), b_ub=np.r_[mu_s, mu_t],
                  A_eq=np.ones((1, n * m)), b_eq=[b], bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


# -- loss matrix -------------------------------------------------------------


def test_square_loss_factorisation_on_grid():
    a, b = np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 1, 13))
    np.testing.assert_allclose(SQUARE_LOSS.loss(a, b), (a - b) ** 2, atol=1e-15)


def test_loss_single_point():
    spec = PartialCouplingSpec([1.0], [1.0], 1.0)
    np.testing.assert_array_equal(gw_loss_matrix([[0.0]], [[0.0]], [[1.0]], spec), [[0.0]])


def test_loss_two_point_hand_value():
    c = np.array([[0, 1], [1, 0.0]])
    spec = PartialCouplingSpec(HALF, HALF, 1.0)
    np.testing.assert_allclose(gw_loss_matrix(c, c, 0.5 * np.eye(2), spec), [[0, 1], [1, 0]], atol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_loss_matches_quadruple_sum(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 9), rng.integers(1, 10)
    cs, ct = random_cost(rng, n, seed % 2 == 0), random_cost(rng, m, seed % 2 == 0)
    t, mu_s, mu_t = saturated_instance(rng, n, m)
    spec = PartialCouplingSpec(mu_s, mu_t, 1.0)
    np.testing.assert_allclose(gw_loss_matrix(cs, ct, t, spec), brute_force_loss(cs, ct, t), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_loss_partial_plan_uses_bounds(seed):
    rng = np.random.default_rng(100 + seed)
    n, m = rng.integers(2, 6), rng.integers(2, 6)
    cs, ct = random_cost(rng, n), random_cost(rng, m)
    mu_s, mu_t = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
    b = rng.uniform(0.1, 0.9)
    spec = PartialCouplingSpec(mu_s, mu_t, b)
    t = periodic_projection(rng.random((n, m)), spec).plan
    np.testing.assert_allclose(gw_loss_matrix(cs, ct, t, spec), brute_force_mu_form(cs, ct, t, mu_s, mu_t), atol=1e-12)


def test_loss_shape_errors():
    spec = PartialCouplingSpec(HALF, HALF, 1.0)
    with pytest.raises(ValidationError, match="square"):
        gw_loss_matrix(np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((2, 2)), spec)
    with pytest.raises(ValidationError, match="plan shape"):
        gw_loss_matrix(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), spec)


def test_objective_hand_values():
    spec = PartialCouplingSpec([1.0], [1.0], 0.3)
    assert objective_eval([[0.0]], [[0.0]], None, [[0.3]], 0.0, spec) == 0.0
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    assert objective_eval(None, None, FIG1_K, np.zeros((2, 2)), 1.0, spec) == 0.0
    c = np.array([[0, 1], [1, 0.0]])
    t = np.array([[0.2, 0.1], [0.05, 0.15]])
    l = brute_force_mu_form(c, c, t, HALF, HALF)
    expect = float(np.sum(l * t)) + 0.7 * float(np.sum(FIG1_K * t))
    assert objective_eval(c, c, FIG1_K, t, 0.7, spec) == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("symmetric", [True, False])
def test_objective_grad_matches_finite_differences(symmetric):
    rng = np.random.default_rng(7)
    n, m = 4, 5
    cs, ct = random_cost(rng, n, symmetric), random_cost(rng, m, symmetric)
    k = rng.random((n, m))
    spec = PartialCouplingSpec(rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m)), 0.6)
    t = rng.random((n, m)) * 0.05
    g = objective_grad(cs, ct, k, t, 0.3, spec)
    h = 1e-6
    fd = np.zeros_like(t)
    for idx in np.ndindex(t.shape):
        tp, tm = t.copy(), t.copy()
        tp[idx] += h
        tm[idx] -= h
        fd[idx] = (objective_eval(cs, ct, k, tp, 0.3, spec) - objective_eval(cs, ct, k, tm, 0.3, spec)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


# -- projections -------------------------------------------------------------


def test_proj_c1_hand_value():
    g = np.array([[0.4, 0.4], [0.1, 0.1]])
    np.testing.assert_allclose(kl_proj_c1(g, HALF), [[0.25, 0.25], [0.1, 0.1]])
    np.testing.assert_array_equal(kl_proj_c1(np.zeros((2, 2)), HALF), 0)


def test_proj_c2_hand_value():
    g = np.array([[0.4, 0.1], [0.4, 0.1]])
    np.testing.assert_allclose(kl_proj_c2(g, HALF), [[0.25, 0.1], [0.25, 0.1]])


def test_proj_c3_hand_value():
    g = np.array([[0.2, 0.2], [0.3, 0.3]])
    np.testing.assert_allclose(kl_proj_c3(g, 0.25), 0.25 * g)
    with pytest.raises(NumericalError, match="vanished"):
        kl_proj_c3(np.zeros((2, 2)), 0.5)


def test_proj_zero_row_stays_zero():
    g = np.array([[0.0, 0.0], [0.7, 0.7]])
    out = kl_proj_c1(g, np.array([0.0, 0.5]))
    np.testing.assert_array_equal(out[0], 0)
    out = kl_proj_c1(g, np.array([0.0, 0.5]), equality=True)
    np.testing.assert_allclose(out, [[0, 0], [0.25, 0.25]])


nonneg = arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 10))


@settings(max_examples=200, deadline=None)
@given(nonneg, st.integers(0, 2**31 - 1))
def test_projections_feasible_and_idempotent(g, seed):
    rng = np.random.default_rng(seed)
    mu_s = rng.dirichlet(np.ones(g.shape[0]))
    mu_t = rng.dirichlet(np.ones(g.shape[1]))
    p1 = kl_proj_c1(g, mu_s)
    p2 = kl_proj_c2(g, mu_t)
    assert np.all(p1.sum(axis=1) <= mu_s * (1 + 1e-12))
    assert np.all(p2.sum(axis=0) <= mu_t * (1 + 1e-12))
    np.testing.assert_allclose(kl_proj_c1(p1, mu_s), p1, rtol=0, atol=1e-12)
    np.testing.assert_allclose(kl_proj_c2(p2, mu_t), p2, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(kl_proj_c2(g, mu_t), kl_proj_c1(g.T, mu_t).T)
    if g.sum() > 1e-12:
        p3 = kl_proj_c3(g, 0.4)
        assert p3.sum() == pytest.approx(0.4, abs=1e-12)
        np.testing.assert_allclose(kl_proj_c3(p3, 0.4), p3, rtol=0, atol=1e-12)
        np.testing.assert_allclose(p3 / 0.4, g / g.sum(), rtol=1e-12, atol=1e-15)


def test_periodic_projection_fixed_point():
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    t = np.array([[0.1, 0.2], [0.15, 0.05]])
    res = periodic_projection(t, spec)
    assert res.cycles == 1
    np.testing.assert_allclose(res.plan, t, atol=1e-15)


def test_periodic_projection_product_at_full_mass():
    rng = np.random.default_rng(1)
    mu_s, mu_t = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(5))
    res = periodic_projection(np.outer(mu_s, mu_t), PartialCouplingSpec(mu_s, mu_t, 1.0))
    np.testing.assert_allclose(res.plan.sum(axis=1), mu_s, atol=1e-12)
    np.testing.assert_allclose(res.plan.sum(axis=0), mu_t, atol=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_periodic_projection_residuals(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(2, 8, size=2)
    spec = PartialCouplingSpec(rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m)), rng.uniform(0.05, 1.0))
    res = periodic_projection(np.exp(2 * rng.normal(size=(n, m))), spec)
    assert res.converged
    assert max(constraint_residuals(res.plan, spec)) < 1e-6


def test_periodic_projection_is_kl_projection():
    # KKT check: the KL projection onto the polytope has the form
    # g * exp(-a_i - c_j - z) with a, c >= 0 and complementary slackness
    rng = np.random.default_rng(4)
    mu_s, mu_t = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
    spec = PartialCouplingSpec(mu_s, mu_t, 0.7)
    g = rng.random((3, 4)) * 0.3
    t = periodic_projection(g, spec, SolverConfig(tol=1e-12, proj_cycles=100000)).plan
    log_ratio = np.log(t / g)
    # rank-one structure in log space
    centred = log_ratio - log_ratio.mean(axis=1, keepdims=True) - log_ratio.mean(axis=0) + log_ratio.mean()
    np.testing.assert_allclose(centred, 0, atol=1e-8)
    # unsaturated rows share the largest row factor
    row_factor = log_ratio.mean(axis=1)
    slack = t.sum(axis=1) < mu_s - 1e-9
    assert np.all(row_factor[slack] >= row_factor.max() - 1e-8)
    col_factor = log_ratio.mean(axis=0)
    slack = t.sum(axis=0) < mu_t - 1e-9
    assert np.all(col_factor[slack] >= col_factor.max() - 1e-8)


def test_periodic_projection_rejects_bad_input():
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    with pytest.raises(ValidationError):
        periodic_projection(np.array([[1.0, -1.0], [0, 0]]), spec)
    with pytest.raises(NumericalError, match="vanished"):
        periodic_projection(np.zeros((2, 2)), spec)


def test_spec_validation():
    with pytest.raises(ValidationError, match="b must"):
        PartialCouplingSpec(HALF, HALF, 0.0)
    with pytest.raises(ValidationError, match="exceeds"):
        PartialCouplingSpec([0.3, 0.3], HALF, 0.9)
    with pytest.raises(ValidationError, match="positive"):
        SolverConfig(tau=0)


# -- steps and the proximal solver -------------------------------------------


def test_pgd_step_zero_gradient_keeps_feasible_plan():
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    t = np.array([[0.1, 0.2], [0.15, 0.05]])
    np.testing.assert_allclose(pgd_step(t, t, np.zeros((2, 2)), spec).plan, t, atol=1e-15)


def test_pgd_step_uniform_cost_keeps_uniform_plan():
    spec = PartialCouplingSpec(np.full(3, 1 / 3), np.full(3, 1 / 3), 0.6)
    t = np.full((3, 3), 0.6 / 9)
    np.testing.assert_allclose(pgd_step(t, t, np.full((3, 3), 0.8), spec).plan, t, atol=1e-15)


def test_pgd_step_descends_on_figure_one():
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    t = spec.initial_plan()
    before = objective_eval(None, None, FIG1_K, t, 1.0, spec)
    after = objective_eval(None, None, FIG1_K, pgd_step(t, t, FIG1_K, spec).plan, 1.0, spec)
    assert after < before


def test_pgd_step_clamps_huge_gradient():
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    t = spec.initial_plan()
    res = pgd_step(t, t, np.array([[1e6, -1e6], [0, 0]]), spec)
    assert np.all(np.isfinite(res.plan))
    with pytest.raises(NumericalError, match="non-finite"):
        pgd_step(t, t, np.array([[np.nan, 0], [0, 0]]), spec)


def test_figure_one_half_mass():
    t = proximal_solve(None, None, FIG1_K, 1.0, PartialCouplingSpec(HALF, HALF, 0.5))
    assert t[0, 1] == pytest.approx(0.5, abs=1e-6)
    assert t[0, 0] < 1e-4 and t[1, 0] < 1e-4 and t[1, 1] < 1e-4


def test_figure_one_most_mass():
    t = proximal_solve(None, None, FIG1_K, 1.0, PartialCouplingSpec(HALF, HALF, 0.9))
    assert t[0, 1] == pytest.approx(0.5, abs=1e-6)
    assert t[1, 0] == pytest.approx(0.4, abs=1e-6)
    assert t[0, 0] + t[1, 1] < 1e-4


@pytest.mark.parametrize("seed", range(8))
def test_partial_wasserstein_matches_lp(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(2, 7, size=2)
    mu_s, mu_t = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
    b = rng.uniform(0.1, 1.0)
    k = rng.random((n, m))
    spec = PartialCouplingSpec(mu_s, mu_t, b)
    t = proximal_solve(None, None, k, 1.0, spec, SolverConfig(outer_iters=100))
    assert float(np.sum(k * t)) == pytest.approx(partial_lp(k, mu_s, mu_t, b), rel=1e-2)


def test_full_mass_reduces_to_balanced_lp():
    rng = np.random.default_rng(11)
    mu_s, mu_t = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(4))
    k = rng.random((5, 4))
    spec = PartialCouplingSpec(mu_s, mu_t, 1.0)
    t = proximal_solve(None, None, k, 1.0, spec, SolverConfig(outer_iters=100))
    np.testing.assert_allclose(t.sum(axis=1), mu_s, atol=1e-6)
    np.testing.assert_allclose(t.sum(axis=0), mu_t, atol=1e-6)
    rows = np.kron(np.eye(5), np.ones((1, 4)))
    cols = np.kron(np.ones((1, 5)), np.eye(4))
    lp = linprog(k.ravel(), A_eq=np.vstack([rows, cols]), b_eq=np.r_[mu_s, mu_t], bounds=(0, None), method="highs")
    assert float(np.sum(k * t)) == pytest.approx(lp.fun, rel=1e-2)


@pytest.mark.parametrize("seed", range(10))
def test_gw_objective_non_increasing(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(3, 8, size=2)
    cs, ct = random_cost(rng, n), random_cost(rng, m)
    spec = PartialCouplingSpec(rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m)), rng.uniform(0.2, 1.0))
    t, log = proximal_solve(cs, ct, rng.random((n, m)), 0.5, spec, log=True)
    assert np.all(np.diff(log["objective"]) <= 1e-6)
    assert max(constraint_residuals(t, spec)) < 1e-6


def test_isomorphic_graphs_do_not_worsen_init():
    rng = np.random.default_rng(2)
    c = random_cost(rng, 5)
    perm = rng.permutation(5)
    mu = rng.dirichlet(np.ones(5))
    spec = PartialCouplingSpec(mu, mu[perm], 1.0)
    t = proximal_solve(c, c[np.ix_(perm, perm)], None, 0.0, spec)
    assert objective_eval(c, c[np.ix_(perm, perm)], None, t, 0.0, spec) <= objective_eval(
        c, c[np.ix_(perm, perm)], None, spec.initial_plan(), 0.0, spec
    )


def test_solver_input_errors():
    spec = PartialCouplingSpec(HALF, HALF, 0.5)
    with pytest.raises(ValidationError, match="together"):
        proximal_solve(np.zeros((2, 2)), None, FIG1_K, 1.0, spec)
    with pytest.raises(ValidationError, match="cross cost"):
        proximal_solve(None, None, np.zeros((3, 2)), 1.0, spec)
