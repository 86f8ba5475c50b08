"""Constants, geometry checks and the constrained descent for ``J_lambda``.

The existence argument is reproduced at desk scale: an empirical embedding
constant fixes ``lambda*``, the energy is checked to be positive on a sphere
of radius ``delta`` and negative along a small multiple of a bump, and a
projected gradient descent inside the ball of radius ``m`` then looks for a
nonzero critical point with negative energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryTrap,
    EmptyFamily,
    GeometryViolated,
    InvalidExponentOrdering,
    LambdaOutOfRange,
    MaxIterExceeded,
    ValleyNotFound,
)
from .exponents import check_subcritical
from .functions import Lcg64, bump, random_nodal
from .norms import combined_modular, full_norm, lebesgue_norm, norm_value
from .operators import PairingCache, energy_J, grad_J

LOG_COLUMNS = ("iter", "J", "grad_norm", "step", "full_norm", "seminorm_total",
               "minoration_slack")


# -- constants ------------------------------------------------------------


@dataclass
class EmbeddingEstimate:
    value: float
    ratios: list
    target: str
    mode: str

    @property
    def labels(self) -> list:
        return [label for label, _ in self.ratios]


def estimate_embedding_constant(cache: PairingCache, family, *, target: str = "q",
                                mode: str = "full_Q", safety: float = 1.1) -> EmbeddingEstimate:
    """``safety * max ||u||_{target} / ([u] + ||u||_{p_M})`` over ``family``.

    ``family`` is a sequence of ``(label, nodal values)``; zero members are
    skipped. ``target`` names the Lebesgue exponent, ``"q"`` or ``"r"``.
    """
    exponent = {"q": cache.field.q, "r": cache.field.r}[target]
    check_subcritical(cache.field, cache.mesh.nodes, target=exponent)
    values = {"q": cache.q, "r": cache.r}[target]
    ratios = []
    for label, u in family:
        u = np.asarray(u, dtype=float)
        if not np.any(u):
            continue
        ratios.append((label, lebesgue_norm(u, values, cache.volume) / norm_value(cache, u, mode)))
    if not ratios:
        raise EmptyFamily("the embedding family has no nonzero member")
    return EmbeddingEstimate(safety * max(r for _, r in ratios), ratios, target, mode)


@dataclass
class GeometryConstants:
    C_embed: float
    C_tilde: float
    P_tilde: float
    delta: float
    lambda_star: float
    r_minus: float
    r_plus: float
    P_mm: float
    family: list = field(default_factory=list)
    theta_valley: float = math.nan
    epsilon_r: float = math.nan

    def vartheta(self, lam: float) -> float:
        """Sphere level ``delta^r+ (C~ delta^(P~ - r+) - lam C^r+ / r-)``."""
        d = self.delta
        return d ** self.r_plus * (self.C_tilde * d ** (self.P_tilde - self.r_plus)
                                   - lam * self.C_embed ** self.r_plus / self.r_minus)

    def vartheta_stated(self) -> float:
        return self.delta / 2.0

    def minoration(self, rho, lam: float):
        """Lower bound ``C~ rho^P~ - lam C^r+ / r- rho^r+`` for ``J`` at norm ``rho``."""
        rho = np.asarray(rho, dtype=float)
        return (self.C_tilde * rho ** self.P_tilde
                - lam * self.C_embed ** self.r_plus / self.r_minus * rho ** self.r_plus)


def compute_lambda_star(C_embed: float, bounds, delta: float, n_components: int,
                        family=()) -> GeometryConstants:
    """``lambda* = C~ delta^(P~ - r+) r- / (2 C^r+)`` with
    ``C~ = min(1/P++, 1/pM+) K^(1 - P--) 2^(1 - P~)`` for ``K`` components."""
    if not delta > 0:
        raise InvalidExponentOrdering(f"delta must be positive, got {delta}")
    P_tilde = bounds.P_tilde
    if not bounds.r_plus < P_tilde:
        raise InvalidExponentOrdering(
            f"need r+ < P~, got r+ = {bounds.r_plus:.6g}, P~ = {P_tilde:.6g}")
    if not C_embed > 0:
        raise InvalidExponentOrdering("embedding constant must be positive")
    C_tilde = (min(1.0 / bounds.P_pp, 1.0 / bounds.pM_plus)
               * float(n_components) ** (1.0 - bounds.P_mm) * 2.0 ** (1.0 - P_tilde))
    lam = C_tilde * delta ** (P_tilde - bounds.r_plus) * bounds.r_minus / (2.0 * C_embed ** bounds.r_plus)
    return GeometryConstants(
        C_embed=float(C_embed), C_tilde=C_tilde, P_tilde=P_tilde, delta=float(delta),
        lambda_star=lam, r_minus=bounds.r_minus, r_plus=bounds.r_plus, P_mm=bounds.P_mm,
        family=list(family),
    )


def _check_lambda(lam, consts):
    if not 0 < lam < consts.lambda_star:
        raise LambdaOutOfRange(f"lambda = {lam:.6g} must lie in (0, lambda* = {consts.lambda_star:.6g})")


# -- mountain geometry ----------------------------------------------------


@dataclass
class GeometryReport:
    lam: float
    vartheta: float
    vartheta_stated: float
    min_J: float
    slack: float
    n_samples: int
    argmin: str

    @property
    def passed(self) -> bool:
        return self.slack > 0


def sphere_directions(cache: PairingCache, count: int, seed: int, family=()):
    """Random nodal directions from the LCG, followed by the family members."""
    rng = Lcg64(seed)
    out = [(f"random#{k}", random_nodal(cache.mesh, 1.0, rng)) for k in range(count)]
    out += [(label, np.asarray(u, dtype=float)) for label, u in family if np.any(u)]
    return out


def verify_mountain_geometry(cache: PairingCache, lam: float, consts: GeometryConstants, *,
                             samples: int = 32, seed: int = 0, family=(),
                             mode: str = "full_Q") -> GeometryReport:
    """Check ``J(w) >= vartheta`` on sampled ``w`` with ``[w] + ||w||_{p_M} = delta``.

    Raises :class:`GeometryViolated` with the offending function as witness.
    """
    _check_lambda(lam, consts)
    level = consts.vartheta(lam)
    best, best_label = math.inf, ""
    dirs = sphere_directions(cache, samples, seed, family)
    for label, u in dirs:
        w = u * (consts.delta / norm_value(cache, u, mode))
        J = energy_J(cache, w, lam, mode)
        if J < level:
            raise GeometryViolated(
                f"J = {J:.6g} below the sphere level {level:.6g} for {label}", witness=(label, u))
        if J < best:
            best, best_label = J, label
    return GeometryReport(lam, level, consts.vartheta_stated(), best, best - level, len(dirs), best_label)


# -- negative valley ------------------------------------------------------


def valley_bump(cache: PairingCache, radius_fraction: float = 0.5) -> np.ndarray:
    """Bump centered in the box, rescaled so its largest nodal value is 1."""
    mesh = cache.mesh
    side = float(np.min(np.array(mesh.box_max) - np.array(mesh.box_min)))
    omega = bump(mesh, mesh.center, radius_fraction * side)
    return omega / np.max(omega)


@dataclass
class ValleyReport:
    t: float
    J: float
    theta: float
    epsilon_r: float
    plateau_size: int
    halvings: int


def verify_negative_valley(cache: PairingCache, lam: float, omega, consts: GeometryConstants,
                           *, mode: str = "full_Q", max_halvings: int = 40) -> ValleyReport:
    """Find ``t`` with ``J(t omega) < 0`` using the prescribed threshold.

    The plateau ``O`` is the set of nodes where ``omega == 1`` and
    ``r <= r- + eps``. Fills ``theta_valley`` and ``epsilon_r`` of ``consts``.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0) or not np.any(omega):
        raise ValueError("omega must be nonnegative and not identically zero")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    r = cache.r
    top = omega >= 1.0 - 1e-12
    if not np.any(top):
        raise ValueError("omega must reach the value 1 somewhere")
    half = 0.5 * (consts.P_mm - consts.r_minus)
    osc = float(np.max(r[top])) - consts.r_minus
    eps = min(half, osc) if osc > 0 else half
    plateau = top & (r <= consts.r_minus + eps)
    if not np.any(plateau):
        raise ValleyNotFound("no plateau node satisfies r <= r- + eps")
    mass = float(np.sum(omega[plateau] ** r[plateau]) * cache.volume)
    rho = combined_modular(cache, omega, mode)
    theta = min(1.0, lam * consts.P_mm * mass / (consts.r_plus * rho)) * (1.0 - 1e-6)
    t = theta ** (1.0 / (consts.P_mm - consts.r_minus - eps)) / 2.0
    consts.theta_valley = theta
    consts.epsilon_r = eps
    for k in range(max_halvings + 1):
        J = energy_J(cache, t * omega, lam, mode)
        if J < 0:
            return ValleyReport(t, J, theta, eps, int(np.sum(plateau)), k)
        t /= 2.0
    raise ValleyNotFound(f"J(t omega) >= 0 after {max_halvings} halvings of t")


# -- descent --------------------------------------------------------------


@dataclass
class SolverSettings:
    max_iter: int = 10000
    grad_tol: float = 1e-5
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    step_init: float = 1.0
    max_backtracks: int = 60
    # w = 0 is itself critical, so the tiny valley start can pass the
    # gradient test before any descent; require this many accepted steps
    min_iter: int = 1


@dataclass
class SolutionReport:
    w0: np.ndarray
    J_value: float
    grad_norm: float
    iterations: int
    lam: float
    ball_radius: float
    inside_ball: bool
    converged: bool
    log: list
    grad_tol: float
    stalled: bool = False

    @property
    def success(self) -> bool:
        return (self.converged and self.J_value < 0 and self.grad_norm < self.grad_tol
                and self.inside_ball and bool(np.any(self.w0)))


def gradient_norm(g, volume: float) -> float:
    """L2 norm of the nodal Riesz representative ``g / |cell|``."""
    return math.sqrt(float(np.sum((g / volume) ** 2)) * volume)


def _log_row(cache, k, w, J, gnorm, step, lam, consts, mode):
    report = full_norm(cache, w, mode)
    slack = math.nan if consts is None else J - float(consts.minoration(report.full_norm, lam))
    return (k, J, gnorm, step, report.full_norm, report.seminorm_total, slack)


def minimize_in_ball(cache: PairingCache, lam: float, m: float, start, *,
                     settings: SolverSettings | None = None,
                     consts: GeometryConstants | None = None,
                     mode: str = "full_Q") -> SolutionReport:
    """Projected gradient descent with Armijo backtracking in ``{||w|| <= m}``.

    The norm is ``[w] + ||w||_{p_M}``; iterates leaving the ball are rescaled
    onto its boundary. Raises :class:`BoundaryTrap` when the final iterate
    sits on the boundary and :class:`MaxIterExceeded` when the gradient
    tolerance is not reached inside the ball; both carry the partial report.
    """
    cfg = settings or SolverSettings()
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if consts is not None and lam > 0:
        _check_lambda(lam, consts)
    V = cache.volume
    w = np.array(start, dtype=float)
    nrm = norm_value(cache, w, mode)
    if nrm > m:
        w *= m / nrm
    J = energy_J(cache, w, lam, mode)
    log = []
    converged = stalled = False
    k = 0
    step = 0.0
    while True:
        g = grad_J(cache, w, lam, mode)
        gnorm = gradient_norm(g, V)
        log.append(_log_row(cache, k, w, J, gnorm, step, lam, consts, mode))
        if gnorm < cfg.grad_tol and k >= cfg.min_iter:
            converged = True
            break
        if k >= cfg.max_iter:
            break
        d = -g / V
        step = cfg.step_init
        for _ in range(cfg.max_backtracks):
            trial = w + step * d
            tn = norm_value(cache, trial, mode)
            if tn > m:
                trial *= m / tn
            Jt = energy_J(cache, trial, lam, mode)
            if Jt <= J + cfg.armijo_c * float(np.dot(g, trial - w)) and Jt <= J:
                break
            step *= cfg.armijo_shrink
        else:
            stalled = True
            break
        w, J = trial, Jt
        k += 1

    nrm = norm_value(cache, w, mode)
    report = SolutionReport(
        w0=w, J_value=J, grad_norm=gnorm, iterations=k, lam=lam, ball_radius=m,
        inside_ball=nrm < m * (1.0 - 1e-9), converged=converged, log=log,
        grad_tol=cfg.grad_tol, stalled=stalled,
    )
    if not report.inside_ball:
        # projected descent pinned to the sphere: the ball is too small
        state = "converged" if converged else "stopped"
        raise BoundaryTrap(f"descent {state} on the ball boundary (m = {m:.6g})", report)
    if not converged:
        why = "line search stalled" if stalled else "iteration limit reached"
        raise MaxIterExceeded(
            f"{why}: grad_norm = {gnorm:.3e} after {k} iterations "
            f"(tolerance {cfg.grad_tol:.1e})", report)
    return report


# -- diagnostics ----------------------------------------------------------


@dataclass
class PSReport:
    min_J: float
    floor: float
    bounded: bool
    monotone: bool
    final_grad: float
    grad_below_tol: bool
    cauchy_spread: float
    min_minoration_slack: float
    minoration_ok: bool

    @property
    def unbounded_descent(self) -> bool:
        return not self.bounded


def descent_floor(consts: GeometryConstants, m: float, lam: float | None = None,
                  samples: int = 4001) -> float:
    """Minimum of the minoration bound over norms in ``[0, m]``.

    With ``lam`` defaulting to ``lambda*`` this is the lowest energy the
    bound allows for any admissible ``lambda``.
    """
    lam = consts.lambda_star if lam is None else lam
    rho = np.linspace(0.0, m, samples)
    return float(np.min(consts.minoration(rho, lam)))


def ps_diagnostic(log, grad_tol: float, floor: float = -math.inf, window: int = 100) -> PSReport:
    """Boundedness, monotonicity, gradient decay and minoration slack along a run."""
    if not log:
        raise ValueError("empty run log")
    J = np.array([row[1] for row in log])
    slack = np.array([row[6] for row in log])
    tail = J[-window:]
    finite = slack[np.isfinite(slack)]
    min_slack = float(np.min(finite)) if finite.size else math.nan
    return PSReport(
        min_J=float(np.min(J)),
        floor=floor,
        bounded=bool(np.min(J) >= floor),
        monotone=bool(np.all(np.diff(J) <= 0)),
        final_grad=float(log[-1][2]),
        grad_below_tol=bool(log[-1][2] < grad_tol),
        cauchy_spread=float(np.max(tail) - np.min(tail)),
        min_minoration_slack=min_slack,
        minoration_ok=bool(finite.size and min_slack >= 0),
    )
