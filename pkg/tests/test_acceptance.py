"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""
import math

import numpy as np
import pytest

from lyapcert import FunctionClass, make_preset
from lyapcert.cli import run_checks
from lyapcert.core import MethodSpec
from lyapcert.interp import phi_value
from lyapcert.solver import bracket_consistent
from lyapcert.symbolic import rolled_basis
from lyapcert.variants import restart_reference_bound
from lyapcert.verify import gram_matrix, quadratic_worst_rate, random_quadratic, simulate_method, slater_trajectory
from support import els_rate, preset_rate, report, restart_optimum, restart_period_rate

GM_KAPPAS = (2.0, 10.0, 100.0, 1000.0)
TMM_KAPPAS = (4.0, 25.0, 100.0, 900.0)
FGM_KAPPAS = (10.0, 100.0)
ELS_KAPPAS = (3.0, 10.0, 100.0)
RESTART_KAPPAS = (100.0, 400.0)
RESTART_PERIODS = (1, 5, 10, 20)
RESTART_N_MAX = 20


def produced_certificates():
    """Every rate certificate produced by criteria 1 to 6, labelled."""
    out = []
    out += [(f"GM kappa={k:g}", preset_rate("GM", k)) for k in GM_KAPPAS]
    out += [(f"TMM kappa={k:g}", preset_rate("TMM", k)) for k in TMM_KAPPAS]
    out += [(f"FGM kappa={k:g}", preset_rate("FGM", k)) for k in FGM_KAPPAS]
    out += [(f"ELS-GD kappa={k:g}", els_rate("gd", k)) for k in ELS_KAPPAS]
    for k in RESTART_KAPPAS:
        opt = restart_optimum(k, RESTART_N_MAX)
        out.append((f"restart optimum N={opt.N_star} kappa={k:g}", opt.certificate))
        out += [(f"restart N={N} kappa={k:g}", restart_period_rate(N, k)) for N in RESTART_PERIODS]
    out.append(("FGM lambda-zero kappa=100", preset_rate("FGM", 100.0, "lambda-zero")))
    return out


def test_criterion_1_gradient_method_tight_rate():
    worst, lines = 0.0, []
    for k in GM_KAPPAS:
        cls = FunctionClass(1.0, k)
        rho = preset_rate("GM", k).rho_star
        oracle = quadratic_worst_rate(make_preset("GM", cls), cls)
        target = 1 - 1 / k
        err = max(abs(rho - target), abs(oracle - target))
        worst = max(worst, err)
        lines.append(f"k={k:g} rho={rho:.5f} oracle={oracle:.5f}")
    ok = report(1, worst <= 1e-3, f"GM rho = 1-1/kappa, worst deviation {worst:.2e} <= 1e-3 ({'; '.join(lines)})")
    assert ok


def test_criterion_2_triple_momentum_rate():
    errs = {k: abs(preset_rate("TMM", k).rho_star - (1 - 1 / math.sqrt(k))) for k in TMM_KAPPAS}
    worst = max(errs.values())
    ok = report(2, worst <= 2e-3, f"TMM rho = 1-1/sqrt(kappa), worst deviation {worst:.2e} <= 2e-3")
    assert ok


def test_criterion_3_fast_gradient_sandwich():
    ok, parts = True, []
    for k in FGM_KAPPAS:
        cls = FunctionClass(1.0, k)
        rho = preset_rate("FGM", k).rho_star
        lower = quadratic_worst_rate(make_preset("FGM", cls), cls)
        upper = math.sqrt(1 - 1 / math.sqrt(k))
        ok &= lower - 1e-3 <= rho <= upper + 1e-3
        parts.append(f"k={k:g}: {lower:.5f} <= {rho:.5f} <= {upper:.5f}")
    report(3, ok, "FGM quadratic oracle <= rho <= sqrt(1-1/sqrt(kappa)) within 1e-3 (" + "; ".join(parts) + ")")
    assert ok


def test_criterion_4_exact_line_search_gradient():
    errs = {k: abs(els_rate("gd", k).rho_star - (k - 1) / (k + 1)) for k in ELS_KAPPAS}
    worst = max(errs.values())
    ok = report(4, worst <= 1e-3, f"exact line search GD rho = (kappa-1)/(kappa+1), worst deviation {worst:.2e} <= 1e-3")
    assert ok


def test_criterion_5_restarted_fast_gradient():
    ok, parts = True, []
    for k in RESTART_KAPPAS:
        opt = restart_optimum(k, RESTART_N_MAX)
        bound = restart_reference_bound(k)
        curves = {N: restart_period_rate(N, k).rho_star for N in RESTART_PERIODS}
        ok &= opt.rho_star <= bound
        ok &= all(r >= opt.rho_star for r in curves.values())
        parts.append(f"k={k:g}: N*={opt.N_star} rho*={opt.rho_star:.5f} <= {bound:.5f}, "
                     f"min over N in {RESTART_PERIODS} = {min(curves.values()):.5f}")
    report(5, ok, f"restart optimum (N_max={RESTART_N_MAX}) beats the reference bound and is dominated by "
                  f"every fixed period (" + "; ".join(parts) + ")")
    assert ok


def test_criterion_6_restriction_gap():
    full = preset_rate("FGM", 100.0).rho_star
    restricted = preset_rate("FGM", 100.0, "lambda-zero").rho_star
    gap = restricted - full
    ok = report(6, gap >= 1e-3, f"FGM kappa=100 lambda-zero {restricted:.5f} vs full {full:.5f}, gap {gap:.2e} >= 1e-3")
    assert ok


def test_criterion_7_end_to_end_soundness():
    failed = []
    certs = produced_certificates()
    for label, res in certs:
        cert = res.certificate
        ok_q, lines_q = run_checks(cert, 100, 20, seed=0, iters=200, family="quadratic", tol=1e-8)
        ok_l, lines_l = run_checks(cert, 20, 10, seed=1, iters=200, family="logsumexp", tol=1e-8)
        if not (ok_q and ok_l):
            failed.append(f"{label}: " + " | ".join(l for l in lines_q + lines_l if l.startswith("FAIL"))[:300])
    ok = report(7, not failed, f"{len(certs)} certificates pass algebraic checks (1e-6) and decrease plus telescoped "
                               f"bound over 200 iterations on 100 quadratics (d=20) and 20 log-sum-exp (d=10) at 1e-8"
                               + (f"; failures: {failed}" if failed else ""))
    assert ok, failed


def _random_spec(rng):
    N = int(rng.integers(0, 4))
    beta = rng.uniform(-1, 1, N + 1)
    beta[0] += 1.0 - beta.sum()
    gamma = rng.uniform(-1, 1, N + 1)
    gamma[0] += 1.0 - gamma.sum()
    return MethodSpec(N, float(rng.uniform(0.01, 0.5)), tuple(beta), tuple(gamma), "random")


def test_criterion_8_property_suites():
    problems = []

    # interpolation boundary: f(x) = x^2 on mu = 1, L = 2 pair at 1 and the optimum
    cls = FunctionClass(1.0, 2.0)
    phi = phi_value({0: (1.0, 2.0, 1.0), 1: (0.0, 0.0, 0.0)}, cls, 0, 1)
    if abs(phi) > 1e-15:
        problems.append(f"boundary phi = {phi:.2e}")

    # selector rows reproduce simulated trajectories on random specs
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        spec = _random_spec(rng)
        cls = FunctionClass(1.0, float(rng.uniform(1.5, 50)))
        fn = random_quadratic(cls, 8, rng)
        K = 4
        traj = simulate_method(spec, fn, [fn.x_star + rng.standard_normal(8) for _ in range(spec.degree + 1)], K)
        ws = rolled_basis(spec, K)
        B = traj.stacked()
        scale = max(1.0, np.abs(B).max())
        for k in range(K + 1):
            worst = max(worst,
                        np.abs(B @ ws.ybar[k] - (traj.y[k] - fn.x_star)).max() / scale,
                        np.abs(B @ ws.gbar[k] - traj.g[k]).max() / scale,
                        np.abs(B @ ws.xbar[k + 1] - (traj.x[k + 1] - fn.x_star)).max() / scale)
    if worst > 1e-9:
        problems.append(f"selector identity error {worst:.2e}")

    # bisection bracket consistency on every run above
    bad = [label for label, res in produced_certificates() if not bracket_consistent(res.bracket_history)]
    if bad:
        problems.append(f"inconsistent brackets: {bad}")

    # Slater fixture
    for N, K, d in ((0, 2, 4), (1, 2, 5)):
        cls = FunctionClass(1.0, 10.0)
        spec = make_preset("GM" if N == 0 else "HBM", cls)
        eig = np.linalg.eigvalsh(gram_matrix(slater_trajectory(spec, cls, K, d), K)).min()
        if eig <= 0:
            problems.append(f"Slater Gram not positive definite for (N,K,d)=({N},{K},{d}): {eig:.2e}")

    ok = report(8, not problems, "boundary phi = 0, selector identity "
                f"{worst:.1e} <= 1e-9 on 50 random specs, consistent brackets, Slater Gram positive definite"
                + (f"; problems: {problems}" if problems else ""))
    assert ok, problems
