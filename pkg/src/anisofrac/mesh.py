"""Uniform box meshes, the truncated exterior collar and pair quadrature.

Functions on the domain are nodal arrays over the cell centers of a
:class:`DomainMesh`; they are implicitly zero outside the box. Double
integrals use the midpoint rule with same-cell pairs excluded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AsymmetricKernel, BadResolution, CollarTooSmall, NonFiniteIntegrand

DEFAULT_CHUNK = 1 << 15

MODES = ("omega_omega", "full_Q")


@dataclass(frozen=True)
class DomainMesh:
    box_min: tuple
    box_max: tuple
    resolution: tuple
    nodes: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.box_max) - np.array(self.box_min)) / np.array(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.box_min) + np.array(self.box_max)) / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.box_max) - np.array(self.box_min)))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.array(self.box_max) - np.array(self.box_min)))

    @property
    def circumradius(self) -> float:
        return self.diameter / 2.0

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts > np.array(self.box_min)) & (pts < np.array(self.box_max)), axis=1)


@dataclass(frozen=True)
class CollarMesh:
    radius: float
    spacing: np.ndarray
    nodes: np.ndarray

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]


def build_mesh(box_min, box_max, resolution) -> DomainMesh:
    """Cell-center nodes of a uniform grid on an axis-aligned box."""
    box_min = tuple(float(v) for v in np.atleast_1d(box_min))
    box_max = tuple(float(v) for v in np.atleast_1d(box_max))
    if len(box_min) != len(box_max):
        raise BadResolution("box_min and box_max differ in dimension")
    dim = len(box_min)
    res = np.atleast_1d(resolution).astype(int)
    if res.size == 1:
        res = np.repeat(res, dim)
    if res.size != dim:
        raise BadResolution(f"resolution has {res.size} entries for a {dim}-d box")
    if np.any(res < 2):
        raise BadResolution(f"resolution must be >= 2 per axis, got {tuple(res)}")
    if any(not hi > lo for lo, hi in zip(box_min, box_max)):
        raise BadResolution("degenerate box")
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n
            for lo, hi, n in zip(box_min, box_max, res)]
    grid = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in grid], axis=1)
    return DomainMesh(box_min, box_max, tuple(int(n) for n in res), nodes)


def build_collar(mesh: DomainMesh, radius: float, resolution=None) -> CollarMesh:
    """Cells of the ambient grid (anchored at ``box_min``) inside ``B_R \\ Omega``.

    ``resolution`` is the number of collar cells per box side and defaults
    to the domain resolution, so both grids share one spacing.
    """
    if not radius > mesh.circumradius:
        raise CollarTooSmall(
            f"collar radius {radius} does not exceed the domain circumradius "
            f"{mesh.circumradius:.6g}"
        )
    res = mesh.resolution if resolution is None else np.atleast_1d(resolution).astype(int)
    res = np.broadcast_to(np.asarray(res, dtype=int), (mesh.dimension,))
    if np.any(res < 2):
        raise BadResolution(f"collar resolution must be >= 2 per axis, got {tuple(res)}")
    lo = np.array(mesh.box_min)
    h = (np.array(mesh.box_max) - lo) / res
    c = mesh.center
    axes = []
    for d in range(mesh.dimension):
        kmin = math.floor((c[d] - radius - lo[d]) / h[d]) - 1
        kmax = math.ceil((c[d] + radius - lo[d]) / h[d]) + 1
        axes.append(lo[d] + (np.arange(kmin, kmax + 1) + 0.5) * h[d])
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=1)
    inside_ball = np.sum((pts - c) ** 2, axis=1) <= radius ** 2
    outside_box = np.any((pts < lo) | (pts > np.array(mesh.box_max)), axis=1)
    return CollarMesh(float(radius), h, pts[inside_ball & outside_box])


def lebesgue_integral(g, mesh: DomainMesh) -> float:
    """Midpoint rule ``sum_k g_k * |cell|`` in node order."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteIntegrand("integrand is not finite at every node")
    return float(np.sum(g) * mesh.cell_volume)


# -- deterministic chunked reductions -------------------------------------


def chunks(n: int, chunk_size: int = DEFAULT_CHUNK):
    return [(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]


def ordered_sum(term: Callable[[int, int], float], n: int, *,
                chunk_size: int = DEFAULT_CHUNK, workers: int = 1) -> float:
    """Sum ``term(lo, hi)`` over fixed chunks, combining partials in chunk order.

    The chunk layout depends only on ``chunk_size``, so the result is bitwise
    identical for every worker count.
    """
    spans = chunks(n, chunk_size)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda s: term(*s), spans))
    else:
        partials = [term(lo, hi) for lo, hi in spans]
    total = 0.0
    for p in partials:
        total += p
    return total


def ordered_accumulate(term: Callable[[int, int], np.ndarray], n: int, size: int, *,
                       chunk_size: int = DEFAULT_CHUNK, workers: int = 1) -> np.ndarray:
    """Vector version of :func:`ordered_sum`; each chunk returns a length-``size`` array."""
    spans = chunks(n, chunk_size)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda s: term(*s), spans))
    else:
        partials = [term(lo, hi) for lo, hi in spans]
    total = np.zeros(size)
    for p in partials:
        total += p
    return total


# -- pair quadrature ------------------------------------------------------


def omega_pairs(mesh: DomainMesh):
    """Canonical ``(a, b)`` node pairs with ``a < b``."""
    return np.triu_indices(mesh.n_nodes, k=1)


def collar_pairs(mesh: DomainMesh, collar: CollarMesh):
    """All ``(domain node, collar node)`` pairs, domain index varying slowest."""
    a = np.repeat(np.arange(mesh.n_nodes), collar.n_nodes)
    c = np.tile(np.arange(collar.n_nodes), mesh.n_nodes)
    return a, c


def pair_integral(kernel, mesh: DomainMesh, collar: CollarMesh | None = None,
                  mode: str = "omega_omega", values=None, *,
                  chunk_size: int = DEFAULT_CHUNK, workers: int = 1,
                  symmetry_samples: int = 32) -> float:
    """Midpoint double integral of a pair integrand.

    ``kernel(x, y, ux, uy)`` receives paired point arrays and the values of
    the attached nodal function ``values`` at those points (zero on collar
    points; zeros everywhere when ``values`` is None).

    ``omega_omega`` sums both orientations of every domain pair, same-cell
    pairs skipped; ``full_Q`` adds twice the domain-by-collar sum, which is the
    split of the integral over ``R^2N \\ (Omega^c x Omega^c)`` for functions
    vanishing outside the domain. ``full_Q`` needs a symmetric kernel; a
    sampled spot check raises :class:`AsymmetricKernel` otherwise.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    u = np.zeros(mesh.n_nodes) if values is None else np.asarray(values, dtype=float)
    x = mesh.nodes
    ia, ib = omega_pairs(mesh)
    vol = mesh.cell_volume

    if mode == "full_Q":
        if collar is None:
            raise ValueError("full_Q mode needs a collar mesh")
        k = min(symmetry_samples, ia.size)
        if k:
            idx = np.linspace(0, ia.size - 1, k).astype(int)
            fwd = kernel(x[ia[idx]], x[ib[idx]], u[ia[idx]], u[ib[idx]])
            bwd = kernel(x[ib[idx]], x[ia[idx]], u[ib[idx]], u[ia[idx]])
            if not np.allclose(fwd, bwd, rtol=1e-12, atol=0.0):
                raise AsymmetricKernel("kernel is not symmetric in its point arguments")

    def omega_term(lo, hi):
        a, b = ia[lo:hi], ib[lo:hi]
        # both orientations, so the sum is exact under swapping the kernel's arguments
        vals = kernel(x[a], x[b], u[a], u[b]) + kernel(x[b], x[a], u[b], u[a])
        if not np.all(np.isfinite(vals)):
            raise NonFiniteIntegrand("pair integrand is not finite")
        return float(np.sum(vals))

    total = vol * vol * ordered_sum(omega_term, ia.size,
                                          chunk_size=chunk_size, workers=workers)
    if mode == "full_Q":
        ca, cc = collar_pairs(mesh, collar)
        zeros = np.zeros(chunk_size)

        def collar_term(lo, hi):
            a, c = ca[lo:hi], cc[lo:hi]
            vals = kernel(x[a], collar.nodes[c], u[a], zeros[: hi - lo])
            if not np.all(np.isfinite(vals)):
                raise NonFiniteIntegrand("pair integrand is not finite")
            return float(np.sum(vals))

        total += 2.0 * vol * collar.cell_volume * ordered_sum(
            collar_term, ca.size, chunk_size=chunk_size, workers=workers)
    return total


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (dimension / 2.0) / math.gamma(dimension / 2.0)


def tail_estimate(radius: float, s: float, p_minus: float, sup_w: float,
                  vol_omega: float, *, diameter: float, p_plus: float,
                  dimension: int) -> float:
    """Upper bound for the part of the exterior integral beyond ``radius``.

    Bounds ``int_Omega int_{|y - c| > R} |w(x)|^p / |x - y|^(N + s p)`` by
    ``|Omega| max(sup|w|, 1)^p+ sigma_N (R - diam)^(-s p-) / (s p-)``.
    Returns ``inf`` when ``R <= 2 diam`` (no bound claimed there).
    """
    if sup_w == 0.0:
        return 0.0
    if not radius > 2.0 * diameter:
        return math.inf
    sp = s * p_minus
    return (vol_omega * max(sup_w, 1.0) ** p_plus * sphere_area(dimension)
            * (radius - diameter) ** (-sp) / sp)
