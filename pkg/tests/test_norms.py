import numpy as np
import pytest
from scipy.optimize import brentq

from anisofrac.errors import BracketFailure
from anisofrac.exponents import ExponentField
from anisofrac.functions import bump
from anisofrac.mesh import build_collar, build_mesh, pair_integral
from anisofrac.norms import (
    PowerSum,
    check_relations,
    combined_modular,
    full_norm,
    gagliardo_modular,
    gagliardo_seminorm,
    lebesgue_modular,
    lebesgue_norm,
    luxemburg_norm,
    modular_norm,
    norm_value,
)
from anisofrac.operators import PairingCache

from conftest import INSTANCES, make_cache, random_set


def line_cache(p="2", s=0.25, res=32, collar=True):
    field = ExponentField.from_text([p], "2", "1.5", s, 1)
    mesh = build_mesh(0.0, 1.0, res)
    return PairingCache(mesh, field, build_collar(mesh, 2.0) if collar else None)


# -- Lebesgue ------------------------------------------------------------------


def test_lebesgue_modular_examples():
    m = build_mesh((0, 0), (1, 1), 5)
    assert lebesgue_modular(np.zeros(m.n_nodes), 2.0, m) == 0.0
    assert lebesgue_modular(np.full(m.n_nodes, 2.0), 3.0, m) == pytest.approx(8.0, rel=1e-14)


def test_lebesgue_modular_fine_oracle():
    vals = []
    for res in (64, 256):
        m = build_mesh((0, 0), (1, 1), res)
        w = bump(m, (0.5, 0.5), 0.4)
        vals.append(lebesgue_modular(w, 2.0 + m.nodes[:, 0], m))
    assert abs(vals[0] - vals[1]) / vals[1] < 1e-3


# -- Luxemburg -----------------------------------------------------------------


def test_luxemburg_zero():
    assert luxemburg_norm(PowerSum([0.0, 0.0], [2.0, 3.0])) == 0.0
    assert lebesgue_norm(np.zeros(9), 2.0, 1 / 9) == 0.0


def test_luxemburg_constant_exponent():
    m = build_mesh((0, 0), (1, 1), 6)
    assert lebesgue_norm(np.full(m.n_nodes, 3.0), 2.0, m) == pytest.approx(3.0, rel=1e-10)


@pytest.mark.parametrize("scale", [1e-6, 0.3, 1.0, 7.0, 1e5])
def test_luxemburg_variable_exponent_root_oracle(scale):
    m = build_mesh((0, 0), (1, 1), 24)
    w = scale * bump(m, (0.5, 0.5), 0.4)
    q = 2.0 + m.nodes[:, 0]
    nu = lebesgue_norm(w, q, m)
    modular = lambda v: lebesgue_modular(w / v, q, m) - 1.0
    assert abs(modular(nu)) < 1e-8
    ref = brentq(modular, nu / 4, nu * 4, xtol=1e-15, rtol=1e-14)
    assert nu == pytest.approx(ref, rel=2e-10)


def test_luxemburg_bracket_failure():
    with pytest.raises(BracketFailure):
        luxemburg_norm(lambda nu: float("inf"), max_steps=50)


def test_power_sum_merges_shared_exponents():
    ps = PowerSum([1.0, 2.0, 3.0, 0.0], [2.0, 2.0, 3.0, 5.0])
    assert list(ps.exponents) == [2.0, 3.0]
    assert list(ps.coeffs) == [3.0, 3.0]
    assert ps(2.0) == pytest.approx(3 / 4 + 3 / 8)


# -- Gagliardo -----------------------------------------------------------------


def test_gagliardo_zero_and_constant():
    c = line_cache()
    assert gagliardo_modular(c, np.zeros(c.n), 0) == 0.0
    assert gagliardo_seminorm(c, np.zeros(c.n), 0) == 0.0
    assert gagliardo_modular(c, np.full(c.n, 2.0), 0, "omega_omega") == 0.0
    assert gagliardo_modular(c, np.full(c.n, 2.0), 0, "full_Q") > 0.0


def test_cache_modular_matches_pair_integral():
    c = make_cache(["2 + 0.5/(1+dist(x,y))", "2.5"], 6, radius=2.0)
    w = random_set(c, 1, seed=9)[0]
    mesh, col = c.mesh, c.collar
    for i, comp in enumerate(c.field.components):
        k = lambda x, y, ux, uy: (np.abs(ux - uy) ** comp(x, y)
                                  / np.linalg.norm(x - y, axis=1) ** (2 + 0.5 * comp(x, y)))
        for mode in ("omega_omega", "full_Q"):
            ref = pair_integral(k, mesh, col, mode, w)
            assert c.rho0(w, i, mode) == pytest.approx(ref, rel=1e-12)


def test_gagliardo_constant_full_Q_fine_oracle():
    a = gagliardo_modular(line_cache(res=64), np.ones(64), 0, "full_Q")
    b = gagliardo_modular(line_cache(res=256), np.ones(256), 0, "full_Q")
    assert abs(a - b) / b < 0.05


def test_seminorm_closed_form_for_constant_exponent():
    c = line_cache(res=40)
    x = c.mesh.nodes[:, 0]
    w = ((x > 0.3) & (x < 0.7)).astype(float)
    for mode in ("omega_omega", "full_Q"):
        assert gagliardo_seminorm(c, w, 0, mode) == pytest.approx(
            c.rho0(w, 0, mode) ** 0.5, rel=1e-8)


def test_seminorm_homogeneity(caches):
    rng = np.random.default_rng(11)
    for name, c in caches.items():
        for w in random_set(c, 3, seed=21):
            factor = 10.0 ** rng.uniform(-3, 3) * rng.choice([-1, 1])
            for i in range(c.n_components):
                assert gagliardo_seminorm(c, factor * w, i) == pytest.approx(
                    abs(factor) * gagliardo_seminorm(c, w, i), rel=1e-9)
            assert norm_value(c, factor * w) == pytest.approx(abs(factor) * norm_value(c, w), rel=1e-9)
            assert modular_norm(c, factor * w) == pytest.approx(abs(factor) * modular_norm(c, w), rel=1e-9)


# -- full norm and modular norm ----------------------------------------------


def test_full_norm_zero(caches):
    c = caches["constant_pair"]
    rep = full_norm(c, np.zeros(c.n))
    assert rep.full_norm == rep.seminorm_total == rep.lebesgue_pM == rep.modular_norm == 0.0
    assert rep.tail_bound == 0.0


def test_full_norm_is_sum(caches):
    for c in caches.values():
        w = random_set(c, 1, seed=2)[0]
        rep = full_norm(c, w)
        assert rep.full_norm == rep.seminorm_total + rep.lebesgue_pM
        assert rep.seminorm_total == sum(rep.seminorm_components)
        assert min(rep.seminorm_components) > 0 and rep.tail_bound > 0


def test_single_component_full_norm():
    c = line_cache(p="2 + 0.2*x1*y1")
    w = bump(c.mesh, [0.5], 0.3)
    rep = full_norm(c, w)
    assert rep.full_norm == gagliardo_seminorm(c, w, 0) + lebesgue_norm(w, c.field.components[0].diagonal(c.mesh.nodes), c.volume)


def test_equal_components_double(caches):
    c = caches["constant_2"]
    w = random_set(c, 1, seed=3)[0]
    rep = full_norm(c, w)
    assert rep.seminorm_total == 2 * rep.seminorm_components[0]
    assert rep.seminorm_components[0] == rep.seminorm_components[1]


def test_unit_modular_fixed_point(caches):
    for c in caches.values():
        w = random_set(c, 1, seed=4)[0]
        w = w / modular_norm(c, w)
        assert combined_modular(c, w) == pytest.approx(1.0, abs=1e-8)
        assert modular_norm(c, w) == pytest.approx(1.0, abs=1e-8)


def test_norm_equivalence_scan(caches):
    c = caches["variable"]
    ratios = [norm_value(c, w) / modular_norm(c, w) for w in random_set(c, 50, seed=5)]
    assert np.all(np.isfinite(ratios)) and min(ratios) > 0
    assert np.isfinite(1 / min(ratios))


def test_triangle_inequality(caches):
    for c in caches.values():
        fs = random_set(c, 10, seed=6)
        for v, w in zip(fs, fs[1:]):
            a, b = norm_value(c, v), norm_value(c, w)
            assert norm_value(c, v + w) <= a + b + 1e-9 * (a + b)


def test_domain_monotonicity(caches):
    for c in caches.values():
        for w in random_set(c, 10, seed=7):
            for i in range(c.n_components):
                assert gagliardo_seminorm(c, w, i, "full_Q") >= gagliardo_seminorm(c, w, i, "omega_omega")


# -- relations ---------------------------------------------------------------


@pytest.mark.parametrize("name", list(INSTANCES))
def test_relations_hold_on_random_functions(caches, name):
    c = caches[name]
    fs = random_set(c, 20, seed=8) + [0.01 * f for f in random_set(c, 5, seed=9)]
    report = check_relations(c, fs)
    assert report.passed, report.failures[:3]
    names = {r.name.split(":")[0] for r in report.relations}
    assert {"lebesgue[q]", "lebesgue[pM]", "lebesgue[r]", "gagliardo[1]", "gagliardo[2]",
            "aniso", "holder", "product"} <= names


def test_unit_norm_gives_unit_modular(caches):
    c = caches["variable"]
    w = random_set(c, 1, seed=10)[0]
    w = w / lebesgue_norm(w, c.q, c.volume)
    assert lebesgue_modular(w, c.q, c.volume) == pytest.approx(1.0, abs=1e-8)
    report = check_relations(c, [w])
    assert report.passed


def test_holder_cauchy_schwarz_case():
    m = build_mesh((0, 0), (1, 1), 12)
    w = bump(m, (0.5, 0.5), 0.4)
    lhs = abs(np.sum(w * w) * m.cell_volume)
    rhs = 2 * lebesgue_norm(w, 2.0, m) ** 2
    # slack factor 2 - 1: ||w||_2^2 equals the integral up to bisection precision
    assert rhs - lhs >= lhs * (2 - 1) * (1 - 1e-9)


def test_relations_flag_a_violation():
    c = make_cache(["2", "2"], 6)
    report = check_relations(c, random_set(c, 2, seed=1))
    report.add("synthetic", 0, 2.0, 1.0)
    assert not report.passed and report.failures[0].name == "synthetic"
