"""Invariant suite behind ``anisofrac check``.

Every check yields rows ``(instance, check, worst value, threshold, status,
detail)``; the run passes when no row fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AnisofracError
from .exponents import ExponentField
from .functions import Lcg64, random_nodal
from .mesh import build_collar, build_mesh
from .norms import (
    check_relations,
    combined_power_sum,
    gagliardo_power_sum,
    gagliardo_seminorm,
    luxemburg_norm,
)
from .operators import (
    PairingCache,
    check_r_exponent,
    energy_J,
    grad_J,
    monotonicity_gap,
    pairing_I,
    rho0_total,
)

CANONICAL = {
    "constant_2": ["2", "2"],
    "constant_pair": ["2", "2.5"],
    "variable": ["2 + 0.5/(1+dist(x,y))", "2 + 0.5/(1+dist(x,y))"],
}


@dataclass
class CheckRow:
    instance: str
    check: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def row(self):
        return [self.instance, self.check, self.value, self.threshold,
                "PASS" if self.passed else "FAIL", self.detail]


COLUMNS = ["instance", "check", "value", "threshold", "status", "detail"]


def central_difference(cache: PairingCache, w, lam: float, mode=None, h: float = 1e-5):
    """Central differences of ``energy_J``; the step never crosses ``w_k = 0``."""
    w = np.asarray(w, dtype=float)
    out = np.empty(w.size)
    for k in range(w.size):
        hk = min(h, abs(w[k]) / 4.0) if w[k] != 0 else h
        e = np.zeros(w.size)
        e[k] = hk
        out[k] = (energy_J(cache, w + e, lam, mode) - energy_J(cache, w - e, lam, mode)) / (2.0 * hk)
    return out


def gradient_error(cache: PairingCache, w, lam: float, mode=None) -> float:
    """Largest componentwise relative error of ``grad_J`` against differences."""
    g = grad_J(cache, w, lam, mode)
    fd = central_difference(cache, w, lam, mode)
    return float(np.max(np.abs(fd - g) / np.maximum(np.abs(g), 1e-300)))


def random_functions(cache: PairingCache, count: int, seed: int):
    rng = Lcg64(seed)
    return [random_nodal(cache.mesh, 1.0, rng) for _ in range(count)]


def run_suite(cache: PairingCache, instance: str, *, seed: int = 0, n_functions: int = 10,
              n_gradient: int = 2, lam: float = 1.0) -> list:
    rows = []
    mode = "full_Q" if cache.has_collar else "omega_omega"
    fs = random_functions(cache, n_functions, seed)

    def add(check, value, threshold, ok, detail=""):
        rows.append(CheckRow(instance, check, float(value), float(threshold), bool(ok), detail))

    rel = check_relations(cache, fs, mode)
    for prefix in sorted({r.name.split(":")[0].split("[")[0] for r in rel.relations}):
        worst = rel.min_slack(prefix)
        add(f"relations:{prefix}", worst, -rel.tolerance, worst >= -rel.tolerance)

    worst = 0.0
    for w in fs:
        ps = combined_power_sum(cache, w, mode)
        worst = max(worst, abs(ps(luxemburg_norm(ps)) - 1.0))
        for i in range(cache.n_components):
            ps = gagliardo_power_sum(cache, w, i, mode)
            worst = max(worst, abs(ps(luxemburg_norm(ps)) - 1.0))
    add("luxemburg_certificate", worst, 1e-8, worst <= 1e-8)

    worst = 0.0
    for w in fs:
        a, b = pairing_I(cache, w, w, mode), rho0_total(cache, w, mode)
        worst = max(worst, abs(a - b) / abs(b))
    add("pairing_identity", worst, 1e-12, worst <= 1e-12)

    smallest = np.inf
    for v, w in zip(fs, fs[1:]):
        smallest = min(smallest, monotonicity_gap(cache, v, w, mode))
    add("monotonicity_gap", smallest, 0.0, smallest > 0)

    if cache.has_collar:
        worst = np.inf
        for w in fs:
            for i in range(cache.n_components):
                worst = min(worst, gagliardo_seminorm(cache, w, i, "full_Q")
                            - gagliardo_seminorm(cache, w, i, "omega_omega"))
        add("domain_monotonicity", worst, 0.0, worst >= 0)

    try:
        check_r_exponent(cache)
    except AnisofracError as exc:
        add("r_exponent", cache.bounds.r_plus, cache.bounds.P_mm, False,
            f"{type(exc).__name__}: {exc}")
        return rows
    add("r_exponent", cache.bounds.r_plus, cache.bounds.P_mm, True)
    worst = 0.0
    for w in fs[:n_gradient]:
        worst = max(worst, gradient_error(cache, w, lam, mode))
    add("gradient_exactness", worst, 1e-5, worst < 1e-5)
    return rows


def canonical_cache(name: str, *, resolution: int = 8, collar_radius: float = 3.0) -> PairingCache:
    field = ExponentField.from_text(CANONICAL[name], "2", "1.5", 0.5, 2)
    mesh = build_mesh((0.0, 0.0), (1.0, 1.0), resolution)
    return PairingCache(mesh, field, build_collar(mesh, collar_radius))
