"""Modulars, Luxemburg norms and the modular/norm relations between them.

Every discrete modular here is a finite sum ``sum_k c_k |a_k|^p_k`` with
positive weights, i.e. a variable-exponent modular on a discrete measure
space. The classical norm/modular relations therefore hold exactly on the
discrete level, which is what :func:`check_relations` verifies.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BracketFailure, NonFiniteIntegrand
from .mesh import DomainMesh, tail_estimate
from .operators import PairingCache, abs_power

BISECTION_RTOL = 1e-10


class PowerSum:
    """Modular of a scaled function: ``nu -> sum_k c_k nu^(-p_k)``.

    Terms sharing an exponent are merged, so constant-exponent modulars
    evaluate as a single power.
    """

    def __init__(self, coeffs, exponents):
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        exponents = np.asarray(exponents, dtype=float).ravel()
        if not np.all(np.isfinite(coeffs)):
            raise NonFiniteIntegrand("modular coefficients are not finite")
        keep = coeffs != 0.0
        coeffs, exponents = coeffs[keep], exponents[keep]
        uniq, inv = np.unique(exponents, return_inverse=True)
        self.exponents = uniq
        self.coeffs = np.bincount(inv, weights=coeffs, minlength=uniq.size)

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    def __call__(self, nu: float) -> float:
        if self.is_zero:
            return 0.0
        with np.errstate(over="ignore"):
            return float(np.sum(self.coeffs * np.power(nu, -self.exponents)))

    def __add__(self, other: "PowerSum") -> "PowerSum":
        return PowerSum(np.concatenate([self.coeffs, other.coeffs]),
                        np.concatenate([self.exponents, other.exponents]))


def luxemburg_norm(modular_of_scaled: Callable[[float], float], *,
                   rtol: float = BISECTION_RTOL, max_steps: int = 2100) -> float:
    """``inf {nu > 0 : m(nu) <= 1}`` where ``m(nu)`` is the modular of ``w / nu``.

    ``m`` must be continuous and strictly decreasing for ``w != 0``. The
    root is bracketed by doubling/halving from ``nu = 1`` and bisected to
    relative width ``rtol``; the bracket midpoint is returned.
    """
    m1 = modular_of_scaled(1.0)
    if m1 == 0.0:
        return 0.0

    def above(nu):
        v = modular_of_scaled(nu)
        return (not math.isfinite(v)) or v > 1.0

    seen_finite = math.isfinite(m1)
    if above(1.0):
        lo, hi = 1.0, 2.0
        for _ in range(max_steps):
            v = modular_of_scaled(hi)
            seen_finite |= math.isfinite(v)
            if math.isfinite(v) and v <= 1.0:
                break
            lo, hi = hi, hi * 2.0
        else:
            raise BracketFailure("no finite modular value at or below 1 while doubling")
    else:
        lo, hi = 0.5, 1.0
        for _ in range(max_steps):
            if above(lo):
                break
            lo, hi = lo / 2.0, lo
        else:
            raise BracketFailure("modular never exceeded 1 while halving")
    if not seen_finite and not math.isfinite(modular_of_scaled(hi)):
        raise BracketFailure("modular not finite at any tested scale")

    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if above(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- Lebesgue part --------------------------------------------------------


def lebesgue_modular(w, exponent, mesh_or_volume) -> float:
    """Midpoint value of ``int_Omega |w(x)|^q(x) dx`` with nodal ``q``."""
    vol = mesh_or_volume.cell_volume if isinstance(mesh_or_volume, DomainMesh) else float(mesh_or_volume)
    w = np.asarray(w, dtype=float)
    q = np.broadcast_to(np.asarray(exponent, dtype=float), w.shape)
    vals = abs_power(w, q)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteIntegrand("Lebesgue integrand is not finite")
    return float(np.sum(vals) * vol)


def lebesgue_power_sum(w, exponent, volume) -> PowerSum:
    w = np.asarray(w, dtype=float)
    q = np.broadcast_to(np.asarray(exponent, dtype=float), w.shape)
    return PowerSum(abs_power(w, q) * volume, q)


def lebesgue_norm(w, exponent, mesh_or_volume) -> float:
    """Luxemburg norm in ``L^q(x)`` of a nodal function."""
    vol = mesh_or_volume.cell_volume if isinstance(mesh_or_volume, DomainMesh) else float(mesh_or_volume)
    return luxemburg_norm(lebesgue_power_sum(w, exponent, vol))


# -- Gagliardo part -------------------------------------------------------


def gagliardo_power_sum(cache: PairingCache, w, i: int, mode: str) -> PowerSum:
    return PowerSum(*cache.modular_terms(w, i, mode))


def gagliardo_modular(cache: PairingCache, w, i: int, mode: str = "full_Q") -> float:
    return cache.rho0(w, i, mode)


def gagliardo_seminorm(cache: PairingCache, w, i: int, mode: str = "full_Q") -> float:
    """Luxemburg seminorm ``[w]_{s, p_i}`` over the chosen pair domain."""
    return luxemburg_norm(gagliardo_power_sum(cache, w, i, mode))


def combined_power_sum(cache: PairingCache, w, mode: str) -> PowerSum:
    total = lebesgue_power_sum(w, cache.p_M, cache.volume)
    for i in range(cache.n_components):
        total = total + gagliardo_power_sum(cache, w, i, mode)
    return total


def combined_modular(cache: PairingCache, w, mode: str = "full_Q") -> float:
    """``int |w|^p_M + sum_i rho0_i(w)``."""
    total = lebesgue_modular(w, cache.p_M, cache.volume)
    for i in range(cache.n_components):
        total += cache.rho0(w, i, mode)
    return total


def modular_norm(cache: PairingCache, w, mode: str = "full_Q") -> float:
    """Luxemburg norm of the combined modular."""
    return luxemburg_norm(combined_power_sum(cache, w, mode))


@dataclass
class NormReport:
    mode: str
    tail_bound: float
    lebesgue_pM: float
    seminorm_components: list
    seminorm_total: float
    full_norm: float
    modular_total: float
    modular_norm: float

    def csv_header(self) -> list:
        return (["mode", "tail_bound", "lebesgue_pM"]
                + [f"seminorm_{i + 1}" for i in range(len(self.seminorm_components))]
                + ["seminorm_total", "full_norm", "modular_norm"])

    def csv_row(self) -> list:
        return ([self.mode, self.tail_bound, self.lebesgue_pM]
                + list(self.seminorm_components)
                + [self.seminorm_total, self.full_norm, self.modular_norm])

    def as_dict(self) -> dict:
        return asdict(self)


def collar_tail_bound(cache: PairingCache, w) -> float:
    """Bound on the modular mass dropped by truncating the collar, all components.

    The exterior pair set enters the Q-integral twice, hence the factor 2.
    """
    if cache.collar is None:
        return math.inf
    w = np.asarray(w, dtype=float)
    sup_w = float(np.max(np.abs(w))) if w.size else 0.0
    mesh = cache.mesh
    total = 0.0
    for i in range(cache.n_components):
        total += 2.0 * tail_estimate(
            cache.collar.radius, cache.s, float(cache.bounds.p_minus[i]), sup_w,
            mesh.volume, diameter=mesh.diameter,
            p_plus=float(cache.bounds.p_plus[i]), dimension=mesh.dimension)
    return total


def full_norm(cache: PairingCache, w, mode: str = "full_Q") -> NormReport:
    """``[w]_{s, p-vec} + ||w||_{p_M}`` together with the modular quantities."""
    w = np.asarray(w, dtype=float)
    comps = [gagliardo_seminorm(cache, w, i, mode) for i in range(cache.n_components)]
    semi = 0.0
    for c in comps:
        semi += c
    leb = lebesgue_norm(w, cache.p_M, cache.volume)
    return NormReport(
        mode=mode,
        tail_bound=collar_tail_bound(cache, w) if mode == "full_Q" else 0.0,
        lebesgue_pM=leb,
        seminorm_components=comps,
        seminorm_total=semi,
        full_norm=semi + leb,
        modular_total=combined_modular(cache, w, mode),
        modular_norm=modular_norm(cache, w, mode),
    )


def norm_value(cache: PairingCache, w, mode: str = "full_Q") -> float:
    """Just the scalar ``[w] + ||w||_{p_M}``, skipping the extra report fields."""
    semi = 0.0
    for i in range(cache.n_components):
        semi += gagliardo_seminorm(cache, w, i, mode)
    return semi + lebesgue_norm(w, cache.p_M, cache.volume)


# -- relations ------------------------------------------------------------


@dataclass
class Relation:
    name: str
    index: int
    lhs: float
    rhs: float
    slack: float
    passed: bool
    note: str = ""


@dataclass
class RelationReport:
    relations: list = field(default_factory=list)
    tolerance: float = 1e-9

    def add(self, name, index, lhs, rhs, note=""):
        """Record ``lhs <= rhs``; slack is relative to ``max(1, |lhs|, |rhs|)``."""
        scale = max(1.0, abs(lhs), abs(rhs))
        slack = (rhs - lhs) / scale
        self.relations.append(Relation(name, index, float(lhs), float(rhs), float(slack),
                                       bool(slack >= -self.tolerance), note))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.relations)

    @property
    def failures(self) -> list:
        return [r for r in self.relations if not r.passed]

    def min_slack(self, prefix="") -> float:
        vals = [r.slack for r in self.relations if r.name.startswith(prefix)]
        return min(vals) if vals else math.inf


def _sandwich(report, name, k, norm, modular, p_lo, p_hi, unit_tol=1e-8):
    """Norm/modular relations for a Luxemburg pair with exponent range [p_lo, p_hi]."""
    if norm == 0.0:
        report.add(f"{name}:zero", k, modular, 0.0)
        return
    if abs(norm - 1.0) <= 1e-9:
        report.add(f"{name}:unit", k, abs(modular - 1.0), unit_tol)
        return
    # same side of 1
    report.add(f"{name}:side", k, -(norm - 1.0) * (modular - 1.0), 0.0)
    if norm > 1.0:
        report.add(f"{name}:lower", k, norm ** p_lo, modular)
        report.add(f"{name}:upper", k, modular, norm ** p_hi)
    else:
        report.add(f"{name}:lower", k, norm ** p_hi, modular)
        report.add(f"{name}:upper", k, modular, norm ** p_lo)


def check_relations(cache: PairingCache, functions: Sequence, mode: str = "full_Q", *,
                    tolerance: float = 1e-9) -> RelationReport:
    """Verify the norm/modular inequalities on every function of ``functions``.

    Relations, one report entry per function and inequality:

    - ``lebesgue[q|pM|r]``: norm/modular sandwiches for variable-exponent
      Lebesgue norms;
    - ``gagliardo[i]``: the same sandwiches for each component seminorm;
    - ``aniso``: ``[w] >= 1 => rho0 <= [w]^P++`` and ``[w] <= 1 => rho0 <= [w]``
      for the summed seminorm;
    - ``holder``: ``|int v w| <= 2 ||v||_q ||w||_q'`` with ``q'`` the pointwise
      conjugate, on consecutive pairs;
    - ``product``: ``||u v||_t <= 2^(1/t-) ||u||_q ||v||_r`` with
      ``1/t = 1/q + 1/r``.
    """
    report = RelationReport(tolerance=tolerance)
    vol = cache.volume
    b = cache.bounds
    lebesgue_exps = {"q": cache.q, "pM": cache.p_M, "r": cache.r}
    fs = [np.asarray(f, dtype=float) for f in functions]
    lnorms = {}
    for k, w in enumerate(fs):
        for label, e in lebesgue_exps.items():
            n = lebesgue_norm(w, e, vol)
            lnorms[label, k] = n
            _sandwich(report, f"lebesgue[{label}]", k, n, lebesgue_modular(w, e, vol),
                      float(np.min(e)), float(np.max(e)))
        semi = 0.0
        rho = 0.0
        for i in range(cache.n_components):
            a = gagliardo_seminorm(cache, w, i, mode)
            m = cache.rho0(w, i, mode)
            semi += a
            rho += m
            _sandwich(report, f"gagliardo[{i + 1}]", k, a, m,
                      float(b.p_minus[i]), float(b.p_plus[i]))
        if semi >= 1.0:
            report.add("aniso:large", k, rho, semi ** b.P_pp)
        if semi <= 1.0:
            report.add("aniso:small", k, rho, semi)

    q = cache.q
    q_conj = q / (q - 1.0)
    t = 1.0 / (1.0 / cache.q + 1.0 / cache.r)
    c_prod = 2.0 ** (1.0 / float(np.min(t)))
    for k in range(len(fs) - 1):
        v, w = fs[k], fs[k + 1]
        lhs = abs(float(np.sum(v * w) * vol))
        report.add("holder", k, lhs, 2.0 * lnorms["q", k] * lebesgue_norm(w, q_conj, vol))
        report.add("product", k, lebesgue_norm(v * w, t, vol),
                   c_prod * lnorms["q", k] * lnorms["r", k + 1])
    return report
