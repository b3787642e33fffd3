import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lyapcert.core import FunctionClass
from lyapcert.solver import SolverSettings, Status, solve_feasibility
from lyapcert.variants import (
    RESTART_RHO_MAX,
    VariantRate,
    build_els_gd_sdp,
    build_els_hbm_sdp,
    build_restart_sdp,
    els_gd_bases,
    els_gd_forms,
    els_hbm_bases,
    els_hbm_forms,
    momentum_sequence,
    optimize_restart_period,
    restart_basis,
    restart_reference_bound,
)
from lyapcert.verify import (
    check_certificate_algebraic,
    random_logsumexp,
    random_quadratic,
    simulate_els_gd,
    simulate_els_hbm,
)
from support import els_rate, gram_value, preset_rate, restart_period_rate


def test_momentum_sequence_values():
    sched = momentum_sequence(3)
    assert sched.theta[0] == 1.0
    assert sched.theta[1] == pytest.approx((1 + math.sqrt(5)) / 2)
    assert sched.theta[2] == pytest.approx((1 + math.sqrt(4 * sched.theta[1] ** 2 + 1)) / 2)
    assert sched.theta[2] == pytest.approx(2.1935, abs=1e-4)
    assert momentum_sequence(1).momentum[0] == 0.0


@given(st.integers(1, 200))
def test_momentum_sequence_growth(N):
    theta = np.array(momentum_sequence(N).theta)
    assert np.all(np.diff(theta) > 0)
    assert np.all(theta >= (np.arange(N + 1) + 2) / 2 - 1e-12)


@pytest.mark.parametrize("bad", [0, -2, 1.5])
def test_momentum_sequence_rejects_bad_length(bad):
    with pytest.raises(ValueError):
        momentum_sequence(bad)


def test_gradient_orthogonality_form():
    _, ws = els_gd_bases()
    forms = els_gd_forms(ws)
    assert [f.name for f in forms] == ["nu[1]", "nu[2]"]
    expected = np.zeros((4, 4))
    expected[2, 3] = expected[3, 2] = 1.0
    np.testing.assert_array_equal(forms[1].A, expected)
    step = np.zeros((4, 4))
    step[0, 3] = step[3, 0] = -1.0
    step[1, 3] = step[3, 1] = 1.0
    np.testing.assert_array_equal(forms[0].A, step)


def test_els_gd_shape():
    problem = build_els_gd_sdp(FunctionClass(1, 10), 0.9)
    assert problem.names_with_prefix("P") == ["P[0][0]", "P[0][1]", "P[1][1]"]
    assert problem.names_with_prefix("p") == ["p[0]"]
    assert problem.names_with_prefix("nu") == ["nu[1]", "nu[2]"]
    assert len(problem.names_with_prefix("lambda")) == 2
    assert len(problem.names_with_prefix("eta")) == 6
    assert not any(problem.nonneg[problem.index(n)] for n in ("nu[1]", "nu[2]"))


def test_els_hbm_shape():
    problem = build_els_hbm_sdp(FunctionClass(1, 10), 0.9)
    assert len(problem.names_with_prefix("nu")) == 6
    assert len(problem.names_with_prefix("P")) == 10  # upper triangle of a 4x4 matrix
    assert problem.names_with_prefix("p") == ["p[0]", "p[1]"]
    assert len(problem.names_with_prefix("lambda")) == 6
    assert len(problem.names_with_prefix("eta")) == 12


@pytest.mark.parametrize("kappa", [3.0, 10.0, 100.0])
def test_els_gd_rate(kappa):
    res = els_rate("gd", kappa)
    assert res.rho_star == pytest.approx((kappa - 1) / (kappa + 1), abs=1e-3)
    assert check_certificate_algebraic(res.certificate).passed


def test_els_rates_at_unit_condition_number():
    assert els_rate("gd", 1.0).rho_star <= 1e-3
    assert els_rate("hbm", 1.0).rho_star <= 1e-3


@pytest.mark.parametrize("kappa", [3.0, 10.0, 100.0])
def test_subspace_search_no_worse_than_line_search(kappa):
    hbm = els_rate("hbm", kappa)
    assert hbm.rho_star <= els_rate("gd", kappa).rho_star + 1e-4
    assert check_certificate_algebraic(hbm.certificate).passed
    assert hbm.certificate.P.shape == (4, 4) and hbm.certificate.p.shape == (2,)


def _flip_forms(problem):
    for name in problem.names_with_prefix("nu"):
        i = problem.index(name)
        for c in problem.constraints:
            if i in c.expr.terms:
                c.expr.terms[i] = -c.expr.terms[i]
    return problem


@pytest.mark.parametrize("builder", [build_els_gd_sdp, build_els_hbm_sdp])
@pytest.mark.parametrize("rho", [0.5, 0.8, 0.85, 0.95])
def test_form_signs_do_not_matter(builder, rho):
    cls = FunctionClass(1, 10)
    a = solve_feasibility(builder(cls, rho))
    b = solve_feasibility(_flip_forms(builder(cls, rho)))
    assert a.status is b.status
    assert a.margin == pytest.approx(b.margin, abs=1e-6)


@given(st.floats(1.5, 100), st.integers(0, 2**32 - 1))
def test_line_search_conditions_hold_on_trajectories(kappa, seed):
    rng = np.random.default_rng(seed)
    cls = FunctionClass(1.0, kappa)
    fn = random_logsumexp(cls, 4, rng) if seed % 2 else random_quadratic(cls, 4, rng)
    traj = simulate_els_gd(fn, fn.x_star + rng.standard_normal(4), 2)
    _, ws = els_gd_bases()
    B = np.column_stack([traj.x[0] - fn.x_star, traj.x[1] - fn.x_star, traj.g[0], traj.g[1]])
    scale = np.abs(B).max() ** 2
    for form in els_gd_forms(ws):
        assert abs(gram_value(form.A, B)) <= 1e-9 * scale


@given(st.floats(1.5, 100), st.integers(0, 2**32 - 1))
def test_subspace_search_conditions_hold_on_trajectories(kappa, seed):
    rng = np.random.default_rng(seed)
    cls = FunctionClass(1.0, kappa)
    fn = random_logsumexp(cls, 5, rng) if seed % 2 else random_quadratic(cls, 5, rng)
    x0 = fn.x_star + rng.standard_normal(5)
    traj = simulate_els_hbm(fn, x0 + 0.3 * rng.standard_normal(5), x0, 3)
    _, ws = els_hbm_bases()
    B = np.column_stack([traj.x[k] - fn.x_star for k in (-1, 0, 1, 2)] + [traj.g[k] for k in (0, 1, 2)])
    scale = np.abs(B).max() ** 2
    for form in els_hbm_forms(ws):
        assert abs(gram_value(form.A, B)) <= 1e-9 * scale, form.name


@given(st.integers(1, 8), st.floats(1.5, 500), st.integers(0, 2**32 - 1))
def test_restart_rows_reproduce_inner_loop(N, kappa, seed):
    rng = np.random.default_rng(seed)
    cls = FunctionClass(1.0, kappa)
    fn = random_quadratic(cls, 6, rng)
    sched = momentum_sequence(N)
    # direct inner loop
    y = [fn.x_star + rng.standard_normal(6)]
    z = [y[0]]
    for i in range(N):
        z.append(y[i] - fn.grad(y[i]) / cls.L)
        y.append(z[-1] + (sched.theta[i] - 1) / sched.theta[i + 1] * (z[-1] - z[-2]))
    B = np.column_stack([y[0] - fn.x_star] + [fn.grad(v) for v in y])
    ws = restart_basis(sched, cls.L)
    scale = np.abs(B).max()
    for i in range(N + 1):
        np.testing.assert_allclose(B @ ws.ybar[i], y[i] - fn.x_star, atol=1e-9 * scale)
        np.testing.assert_allclose(B @ ws.zbar[i], z[i] - fn.x_star, atol=1e-9 * scale)


def test_restart_shape():
    problem = build_restart_sdp(FunctionClass(1, 100), momentum_sequence(5), 0.99)
    assert problem.names_with_prefix("P") == ["P[0][0]", "P[0][1]", "P[1][1]"]
    assert problem.names_with_prefix("p") == ["p[0]"]
    assert len(problem.names_with_prefix("eta")) == 7 * 6
    assert problem.meta["steps"] == 5 and problem.meta["N_inner"] == 5


@pytest.mark.parametrize("N", [1, 3, 7])
def test_restart_weight_is_rate_to_twice_the_period(N):
    cls = FunctionClass(1, 100)
    sched = momentum_sequence(N)

    def p_terms(rho):
        problem = build_restart_sdp(cls, sched, rho)
        block = next(c for c in problem.constraints if c.name == "eta:matrix")
        return {n: block.expr.terms[problem.index(n)] for n in problem.names_with_prefix("P")}

    at0, at1, at_r = p_terms(0.0), p_terms(1.0), p_terms(0.97)
    for name in at0:
        v0 = at0[name] - at1[name]
        np.testing.assert_allclose(at0[name] - at_r[name], 0.97 ** (2 * N) * v0, atol=1e-12)


def test_single_step_restart_matches_gradient_method():
    restart = restart_period_rate(1, 100.0)
    assert restart.rho_star == pytest.approx(preset_rate("GM", 100.0).rho_star, abs=5e-3)
    assert check_certificate_algebraic(restart.certificate).passed


def test_restart_bracket_stops_at_one():
    assert RESTART_RHO_MAX == 1.0
    assert restart_period_rate(5, 100.0).bracket_history[0] == (1.0, Status.FEASIBLE)


def test_reference_bound_value():
    assert restart_reference_bound(100) == pytest.approx(math.exp(-1 / (math.e * math.sqrt(800))))
    assert restart_reference_bound(100) == pytest.approx(0.98708, abs=1e-5)


def test_optimize_restart_period_small_range():
    cls = FunctionClass(1.0, 100.0)
    full = optimize_restart_period(cls, 6)
    assert sorted(full.rates) == [1, 2, 3, 4, 5, 6]
    assert full.rho_star == min(full.rates.values())
    assert full.rates[full.N_star] == full.rho_star
    assert full.rates[1] >= full.rho_star
    pruned = optimize_restart_period(cls, 6, prune=True)
    assert pruned.N_star == full.N_star and pruned.rho_star == full.rho_star


def test_optimize_restart_period_ties_prefer_shorter_period():
    cls = FunctionClass(1.0, 100.0)
    res = optimize_restart_period(cls, 2, periods=[2, 2, 1, 1])
    assert res.N_star == min(N for N, r in res.rates.items() if r == res.rho_star)


def test_optimize_restart_period_validation():
    with pytest.raises(ValueError):
        optimize_restart_period(FunctionClass(1, 10), 0)


def test_variant_rate_callable():
    assert VariantRate("gd", SolverSettings(tol_rho=1e-3))(3.0) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(ValueError):
        VariantRate("cg")
    with pytest.raises(ValueError):
        VariantRate("restart")
