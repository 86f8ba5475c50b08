import math

import numpy as np
import pytest

from anisofrac.errors import (
    BoundaryTrap,
    EmptyFamily,
    GeometryViolated,
    InvalidExponentOrdering,
    LambdaOutOfRange,
    MaxIterExceeded,
    ValleyNotFound,
)
from anisofrac.exponents import ExponentBounds
from anisofrac.functions import default_family
from anisofrac.norms import combined_modular, full_norm
from anisofrac.operators import energy_J, grad_J, rho0_total
from anisofrac.solver import (
    SolverSettings,
    compute_lambda_star,
    descent_floor,
    estimate_embedding_constant,
    gradient_norm,
    minimize_in_ball,
    ps_diagnostic,
    valley_bump,
    verify_mountain_geometry,
    verify_negative_valley,
)

from conftest import make_cache


def bounds(p=2.0, pM=None, r=1.5, K=2):
    pM = p if pM is None else pM
    return ExponentBounds(np.full(K, p), np.full(K, p), pM, pM, 2.0, 2.0, r, r)


@pytest.fixture(scope="module")
def setup(default_cache):
    c = default_cache
    fam = default_family(c.mesh, 42)
    est = estimate_embedding_constant(c, fam, target="r")
    consts = compute_lambda_star(est.value, c.bounds, 1.0, 2, est.labels)
    lam = consts.lambda_star / 2
    omega = valley_bump(c)
    valley = verify_negative_valley(c, lam, omega, consts)
    report = minimize_in_ball(c, lam, 10.0, valley.t * omega, consts=consts)
    return dict(cache=c, family=fam, est=est, consts=consts, lam=lam, omega=omega,
                valley=valley, report=report)


# -- embedding constant -----------------------------------------------------------


def test_embedding_homogeneity(default_cache):
    c = default_cache
    u = default_family(c.mesh)[1][1]
    est = estimate_embedding_constant(c, [("u", u), ("2u", 2 * u)])
    r1, r2 = est.ratios[0][1], est.ratios[1][1]
    assert r1 == pytest.approx(r2, rel=1e-9)
    assert est.value == pytest.approx(1.1 * max(r1, r2), rel=1e-15)


def test_embedding_ratios_positive(setup):
    assert all(0 < r < math.inf for _, r in setup["est"].ratios)


def test_embedding_empty_family(default_cache):
    with pytest.raises(EmptyFamily):
        estimate_embedding_constant(default_cache, [])
    with pytest.raises(EmptyFamily):
        estimate_embedding_constant(default_cache, [("zero", np.zeros(default_cache.n))])


def test_embedding_resolution_sweep():
    values = []
    for res in (8, 16, 32):
        c = make_cache(["2", "2"], res, q="2 + 0.1*x1", collar=False)
        values.append(estimate_embedding_constant(c, default_family(c.mesh, 42),
                                                  mode="omega_omega").value)
    assert all(b / a < 2 for a, b in zip(values, values[1:]))


# -- lambda* -----------------------------------------------------------------


def test_C_tilde_all_two():
    consts = compute_lambda_star(0.3, bounds(), 1.0, 2)
    assert consts.C_tilde == 1 / 8
    assert consts.P_tilde == 2.0


def test_lambda_star_formula():
    C = 0.0705
    consts = compute_lambda_star(C, bounds(), 1.0, 2)
    assert consts.lambda_star == pytest.approx((1 / 8) * 1.5 / (2 * C ** 1.5), rel=1e-15)


def test_lambda_star_delta_scaling():
    b = bounds(p=2.0, pM=2.5, r=1.5)
    a = compute_lambda_star(0.07, b, 0.8, 2).lambda_star
    d = compute_lambda_star(0.07, b, 1.6, 2).lambda_star
    assert d / a == pytest.approx(2 ** (2.0 - 1.5), rel=1e-12)


def test_lambda_star_rejections():
    with pytest.raises(InvalidExponentOrdering):
        compute_lambda_star(0.1, bounds(r=2.0), 1.0, 2)
    with pytest.raises(InvalidExponentOrdering):
        compute_lambda_star(0.1, bounds(), 0.0, 2)


# -- mountain geometry ---------------------------------------------------------


def test_geometry_small_lambda(setup):
    c, consts = setup["cache"], setup["consts"]
    lam = 1e-12 * consts.lambda_star
    rep = verify_mountain_geometry(c, lam, consts, samples=8, family=setup["family"])
    limit = consts.C_tilde * consts.delta ** consts.P_tilde
    assert rep.vartheta == pytest.approx(limit, rel=1e-9)
    assert rep.min_J >= limit


def test_geometry_half_lambda_star(setup):
    rep = verify_mountain_geometry(setup["cache"], setup["lam"], setup["consts"],
                                   seed=42, family=setup["family"])
    assert rep.passed and rep.slack > 0
    assert rep.vartheta_stated == 0.5


def test_geometry_rejects_large_lambda(setup):
    with pytest.raises(LambdaOutOfRange):
        verify_mountain_geometry(setup["cache"], 2 * setup["consts"].lambda_star, setup["consts"])


def test_geometry_violation_carries_witness(setup):
    import copy

    consts = copy.copy(setup["consts"])
    consts.C_tilde *= 100
    with pytest.raises(GeometryViolated) as info:
        verify_mountain_geometry(setup["cache"], setup["lam"], consts, samples=4)
    label, u = info.value.witness
    assert label.startswith("random") and np.any(u)


# -- negative valley ---------------------------------------------------------------


def test_valley_bump_positive_modular(setup):
    c, omega = setup["cache"], setup["omega"]
    assert omega.max() == 1.0 and np.all(omega >= 0)
    assert rho0_total(c, omega) > 0


def test_valley_default(setup):
    v, consts = setup["valley"], setup["consts"]
    assert v.J < 0 and v.halvings == 0
    assert 0 < consts.theta_valley <= 1
    assert consts.epsilon_r > 0 and consts.r_minus + consts.epsilon_r <= consts.P_mm
    assert v.plateau_size == 4


def test_valley_J_decreases_with_lambda(setup):
    c, t, omega = setup["cache"], setup["valley"].t, setup["omega"]
    vals = [energy_J(c, t * omega, lam) for lam in np.linspace(0.1, 3.0, 8)]
    assert np.all(np.diff(vals) < 0)


def test_valley_not_found_without_reaction(setup):
    with pytest.raises(ValleyNotFound):
        verify_negative_valley(setup["cache"], 0.0, setup["omega"], setup["consts"])


def test_valley_threshold_formula(setup):
    c, consts, v = setup["cache"], setup["consts"], setup["valley"]
    plateau = setup["omega"] >= 1 - 1e-12
    mass = np.sum(setup["omega"][plateau] ** c.r[plateau]) * c.volume
    theta = min(1, setup["lam"] * consts.P_mm * mass / (consts.r_plus * combined_modular(c, setup["omega"])))
    assert v.theta == pytest.approx(theta * (1 - 1e-6), rel=1e-12)
    assert v.t == pytest.approx(v.theta ** (1 / (consts.P_mm - consts.r_minus - v.epsilon_r)) / 2, rel=1e-12)


# -- descent -----------------------------------------------------------------------


def test_trivial_minimizer_without_reaction(default_cache):
    rep = minimize_in_ball(default_cache, 0.0, 10.0, np.zeros(default_cache.n))
    assert rep.converged and rep.J_value == 0.0 and not np.any(rep.w0)
    assert not rep.success


def test_default_solution(setup):
    rep = setup["report"]
    assert rep.success
    assert rep.J_value < 0 and rep.grad_norm < 1e-5 and rep.iterations <= 10_000
    assert np.any(rep.w0) and rep.inside_ball


def test_descent_monotone(setup):
    J = [row[1] for row in setup["report"].log]
    assert np.all(np.diff(J) <= 0)


def test_critical_point_property(setup):
    c, rep = setup["cache"], setup["report"]
    g = grad_J(c, rep.w0, setup["lam"])
    assert np.max(np.abs(g)) < 1e-5
    assert gradient_norm(g, c.volume) == rep.grad_norm


def test_sign_symmetry(setup):
    c, v = setup["cache"], setup["valley"]
    rep = minimize_in_ball(c, setup["lam"], 10.0, -v.t * setup["omega"], consts=setup["consts"])
    assert rep.J_value == pytest.approx(setup["report"].J_value, abs=1e-8)
    assert np.array_equal(rep.w0, -setup["report"].w0)


def test_lambda_continuity(setup):
    c, v = setup["cache"], setup["valley"]
    rep = minimize_in_ball(c, 1.01 * setup["lam"], 10.0, v.t * setup["omega"], consts=setup["consts"])
    assert abs(rep.J_value / setup["report"].J_value - 1) < 0.10


def test_boundary_trap_for_small_ball(setup):
    c, v = setup["cache"], setup["valley"]
    with pytest.raises(BoundaryTrap) as info:
        minimize_in_ball(c, setup["lam"], 0.01, v.t * setup["omega"])
    assert not info.value.report.inside_ball


def test_max_iter(setup):
    c, v = setup["cache"], setup["valley"]
    with pytest.raises(MaxIterExceeded) as info:
        minimize_in_ball(c, setup["lam"], 10.0, v.t * setup["omega"], settings=SolverSettings(max_iter=2))
    assert info.value.report.iterations == 2


def test_solver_rejects_lambda_above_star(setup):
    with pytest.raises(LambdaOutOfRange):
        minimize_in_ball(setup["cache"], 2 * setup["consts"].lambda_star, 10.0, setup["omega"],
                         consts=setup["consts"])


# -- diagnostics -------------------------------------------------------------------


def test_ps_diagnostic_converged(setup):
    consts = setup["consts"]
    d = ps_diagnostic(setup["report"].log, 1e-5, descent_floor(consts, 10.0))
    assert d.grad_below_tol and d.bounded and d.monotone
    assert not d.unbounded_descent


def test_minoration_slack_along_trajectory(setup):
    slack = [row[6] for row in setup["report"].log]
    assert min(slack) >= 0
    d = ps_diagnostic(setup["report"].log, 1e-5)
    assert d.minoration_ok


def test_ps_diagnostic_flags_large_lambda(setup):
    c, consts, v = setup["cache"], setup["consts"], setup["valley"]
    try:
        log = minimize_in_ball(c, 100 * consts.lambda_star, 10.0, v.t * setup["omega"]).log
    except (BoundaryTrap, MaxIterExceeded) as exc:
        log = exc.report.log
    d = ps_diagnostic(log, 1e-5, descent_floor(consts, 10.0))
    assert d.unbounded_descent and d.min_J < d.floor


def test_log_norm_columns(setup):
    c, rep = setup["cache"], setup["report"]
    last = rep.log[-1]
    nr = full_norm(c, rep.w0)
    assert last[4] == nr.full_norm and last[5] == nr.seminorm_total
