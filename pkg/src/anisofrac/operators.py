"""Discrete fractional p(x,.)-Laplacian functionals on the pair cache.

All double sums run over the canonical pair list of :class:`PairingCache`:
domain pairs ``a < b`` (weighted twice, standing for both orders) and, for
``full_Q``, domain-by-collar pairs (weighted twice, standing for
``Omega x Omega^c`` and ``Omega^c x Omega``). Nodal functions are zero on the
collar.

``grad_J`` is the exact gradient of ``energy_J``; the optimizer relies on
that, and :func:`apply_operator` is kept as a diagnostic.
"""

from __future__ import annotations

import numpy as np

from .errors import RExponentTooLarge
from .exponents import ExponentField, bounds_from_samples, p_M
from .mesh import (
    DEFAULT_CHUNK,
    MODES,
    CollarMesh,
    DomainMesh,
    collar_pairs,
    omega_pairs,
    ordered_accumulate,
    ordered_sum,
)


def odd_power(t, p):
    """``|t|^(p-2) t`` written as ``sign(t) |t|^(p-1)`` so ``t = 0`` is safe."""
    return np.sign(t) * np.power(np.abs(t), p - 1.0)


def abs_power(t, p):
    """``|t|^p`` evaluated as ``|t|^(p-1) |t|`` to match :func:`odd_power` bitwise."""
    a = np.abs(t)
    return np.power(a, p - 1.0) * a


def _group_collar(a, p, w):
    """Merge collar pairs sharing ``(domain node, exponent)`` by summing weights."""
    order = np.lexsort((p, a))
    a, p, w = a[order], p[order], w[order]
    if a.size == 0:
        return a, p, w
    new = np.ones(a.size, dtype=bool)
    new[1:] = (a[1:] != a[:-1]) | (p[1:] != p[:-1])
    starts = np.flatnonzero(new)
    return a[starts], p[starts], np.add.reduceat(w, starts)


class PairingCache:
    """Per-pair exponents and kernel weights for one (mesh, collar, field).

    Domain pairs carry ``2 |cell|^2 |x - y|^-(N + s p_i(x, y))``; collar pairs
    carry ``2 |cell| |collar cell| |x - y|^-(N + s p_i)`` and are merged per
    domain node and exponent value, which collapses them to one entry per
    node when ``p_i`` does not depend on ``y``. Immutable after construction.
    """

    def __init__(self, mesh: DomainMesh, field: ExponentField,
                 collar: CollarMesh | None = None, *, n_random_pairs: int = 1000,
                 seed: int = 0, chunk_size: int = DEFAULT_CHUNK, workers: int = 1):
        self.mesh = mesh
        self.field = field
        self.collar = collar
        self.chunk_size = chunk_size
        self.workers = workers
        self.dimension = mesh.dimension
        self.s = field.s
        self.volume = mesh.cell_volume
        n = mesh.n_nodes
        self.n = n
        x = mesh.nodes
        N = mesh.dimension

        self.ia, self.ib = omega_pairs(mesh)
        d = np.sqrt(np.sum((x[self.ia] - x[self.ib]) ** 2, axis=1))
        self.omega_p = []
        self.omega_w = []
        samples = []
        for comp in field.components:
            p = comp(x[self.ia], x[self.ib])
            self.omega_p.append(p)
            self.omega_w.append(2.0 * self.volume ** 2 * np.power(d, -(N + self.s * p)))
            samples.append([p])

        self.ext_a, self.ext_p, self.ext_w = [], [], []
        if collar is not None:
            ca, cc = collar_pairs(mesh, collar)
            y = collar.nodes[cc]
            dc = np.sqrt(np.sum((x[ca] - y) ** 2, axis=1))
            for i, comp in enumerate(field.components):
                p = comp(x[ca], y)
                w = 2.0 * self.volume * collar.cell_volume * np.power(dc, -(N + self.s * p))
                a_g, p_g, w_g = _group_collar(ca, p, w)
                self.ext_a.append(a_g)
                self.ext_p.append(p_g)
                self.ext_w.append(w_g)
                samples[i].append(p)
            del ca, cc, y, dc

        rng = np.random.default_rng(seed)
        lo, hi = np.array(mesh.box_min), np.array(mesh.box_max)
        rx = rng.uniform(lo, hi, size=(n_random_pairs, N))
        ry = rng.uniform(lo, hi, size=(n_random_pairs, N))
        for i, comp in enumerate(field.components):
            samples[i].append(comp(rx, ry))
        values = [np.concatenate(v) for v in samples]
        points = np.concatenate([x, rx])
        # coordinates are only needed to report a violation
        self.bounds = bounds_from_samples(
            values, _Lazy(values[0].size), _Lazy(values[0].size), points, field)

        self.p_M = p_M(field, x)
        self.r = field.r(x)
        self.q = field.q(x)
        for w in self.omega_w + self.ext_w:
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("pair weights must be positive and finite")
            w.setflags(write=False)

    @property
    def n_components(self) -> int:
        return len(self.omega_p)

    @property
    def has_collar(self) -> bool:
        return self.collar is not None

    def _check_mode(self, mode):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "full_Q" and self.collar is None:
            raise ValueError("full_Q mode needs a cache built with a collar")

    # -- reductions -------------------------------------------------------

    def _sum(self, i, mode, omega_fn, ext_fn):
        total = ordered_sum(omega_fn, self.ia.size,
                            chunk_size=self.chunk_size, workers=self.workers)
        if mode == "full_Q":
            total += ordered_sum(ext_fn, self.ext_a[i].size,
                                 chunk_size=self.chunk_size, workers=self.workers)
        return total

    def _scatter(self, i, mode, omega_fn, ext_fn):
        n = self.n
        ia, ib = self.ia, self.ib

        def omega_part(lo, hi):
            v = omega_fn(lo, hi)
            return (np.bincount(ia[lo:hi], weights=v, minlength=n)
                    - np.bincount(ib[lo:hi], weights=v, minlength=n))

        out = ordered_accumulate(omega_part, ia.size, n,
                                 chunk_size=self.chunk_size, workers=self.workers)
        if mode == "full_Q":
            ea = self.ext_a[i]

            def ext_part(lo, hi):
                return np.bincount(ea[lo:hi], weights=ext_fn(lo, hi), minlength=n)

            out += ordered_accumulate(ext_part, ea.size, n,
                                      chunk_size=self.chunk_size, workers=self.workers)
        return out

    # -- per-component primitives ----------------------------------------

    def modular_terms(self, w, i, mode="full_Q"):
        """``(coefficients, exponents)`` with ``rho0_i(w / nu) = sum c nu^-p``."""
        self._check_mode(mode)
        w = np.asarray(w, dtype=float)
        d = w[self.ia] - w[self.ib]
        c = [self.omega_w[i] * abs_power(d, self.omega_p[i])]
        p = [self.omega_p[i]]
        if mode == "full_Q":
            c.append(self.ext_w[i] * abs_power(w[self.ext_a[i]], self.ext_p[i]))
            p.append(self.ext_p[i])
        return np.concatenate(c), np.concatenate(p)

    def rho0(self, w, i, mode="full_Q"):
        """Gagliardo modular of component ``i``."""
        self._check_mode(mode)
        w = np.asarray(w, dtype=float)
        ia, ib, P, W = self.ia, self.ib, self.omega_p[i], self.omega_w[i]

        def om(lo, hi):
            return float(np.sum(W[lo:hi] * abs_power(w[ia[lo:hi]] - w[ib[lo:hi]], P[lo:hi])))

        def ex(lo, hi):
            a = self.ext_a[i][lo:hi]
            return float(np.sum(self.ext_w[i][lo:hi] * abs_power(w[a], self.ext_p[i][lo:hi])))

        return self._sum(i, mode, om, ex)

    def weighted_rho0(self, w, i, mode="full_Q"):
        """Like :meth:`rho0` with each term divided by its exponent."""
        self._check_mode(mode)
        w = np.asarray(w, dtype=float)
        ia, ib, P, W = self.ia, self.ib, self.omega_p[i], self.omega_w[i]

        def om(lo, hi):
            p = P[lo:hi]
            return float(np.sum(W[lo:hi] * abs_power(w[ia[lo:hi]] - w[ib[lo:hi]], p) / p))

        def ex(lo, hi):
            a, p = self.ext_a[i][lo:hi], self.ext_p[i][lo:hi]
            return float(np.sum(self.ext_w[i][lo:hi] * abs_power(w[a], p) / p))

        return self._sum(i, mode, om, ex)

    def pairing(self, v, w, i, mode="full_Q"):
        """Component ``i`` of the pairing ``<I(v), w>``."""
        self._check_mode(mode)
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        ia, ib, P, W = self.ia, self.ib, self.omega_p[i], self.omega_w[i]

        def om(lo, hi):
            a, b = ia[lo:hi], ib[lo:hi]
            return float(np.sum(W[lo:hi] * (odd_power(v[a] - v[b], P[lo:hi]) * (w[a] - w[b]))))

        def ex(lo, hi):
            a = self.ext_a[i][lo:hi]
            return float(np.sum(self.ext_w[i][lo:hi] * (odd_power(v[a], self.ext_p[i][lo:hi]) * w[a])))

        return self._sum(i, mode, om, ex)

    def gap(self, v, w, i, mode="full_Q"):
        """Component ``i`` of ``<I(v) - I(w), v - w>`` as a sum of nonnegative terms."""
        self._check_mode(mode)
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        ia, ib, P, W = self.ia, self.ib, self.omega_p[i], self.omega_w[i]

        def om(lo, hi):
            a, b, p = ia[lo:hi], ib[lo:hi], P[lo:hi]
            dv, dw = v[a] - v[b], w[a] - w[b]
            return float(np.sum(W[lo:hi] * ((odd_power(dv, p) - odd_power(dw, p)) * (dv - dw))))

        def ex(lo, hi):
            a, p = self.ext_a[i][lo:hi], self.ext_p[i][lo:hi]
            dv, dw = v[a], w[a]
            return float(np.sum(self.ext_w[i][lo:hi] * ((odd_power(dv, p) - odd_power(dw, p)) * (dv - dw))))

        return self._sum(i, mode, om, ex)

    def gradient(self, w, i, mode="full_Q"):
        """Nodal gradient of component ``i`` of ``energy_I``."""
        self._check_mode(mode)
        w = np.asarray(w, dtype=float)
        ia, ib, P, W = self.ia, self.ib, self.omega_p[i], self.omega_w[i]

        def om(lo, hi):
            return W[lo:hi] * odd_power(w[ia[lo:hi]] - w[ib[lo:hi]], P[lo:hi])

        def ex(lo, hi):
            a = self.ext_a[i][lo:hi]
            return self.ext_w[i][lo:hi] * odd_power(w[a], self.ext_p[i][lo:hi])

        return self._scatter(i, mode, om, ex)

    def all_pair_exponents(self, i, mode="full_Q"):
        if mode == "full_Q":
            return np.concatenate([self.omega_p[i], self.ext_p[i]])
        return self.omega_p[i]


class _Lazy:
    """Placeholder coordinate array; violations are reported by index only."""

    def __init__(self, n):
        self.n = n

    def __getitem__(self, k):
        return ("pair", int(k))


# -- functionals ----------------------------------------------------------


def _modes(cache, mode):
    mode = "full_Q" if mode is None and cache.has_collar else (mode or "omega_omega")
    cache._check_mode(mode)
    return mode


def rho0_total(cache: PairingCache, w, mode=None) -> float:
    """Anisotropic Gagliardo modular ``sum_i rho0_i(w)``."""
    mode = _modes(cache, mode)
    total = 0.0
    for i in range(cache.n_components):
        total += cache.rho0(w, i, mode)
    return total


def lebesgue_pM_energy(cache: PairingCache, w) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.sum(abs_power(w, cache.p_M) / cache.p_M) * cache.volume)


def energy_I(cache: PairingCache, w, mode=None) -> float:
    """``sum_i int_Q |w(x) - w(y)|^p_i / (p_i |x - y|^(N + s p_i))``."""
    mode = _modes(cache, mode)
    total = 0.0
    for i in range(cache.n_components):
        total += cache.weighted_rho0(w, i, mode)
    return total


def energy_L(cache: PairingCache, w, mode=None) -> float:
    """``energy_I`` plus ``int_Omega |w|^p_M / p_M``."""
    return energy_I(cache, w, mode) + lebesgue_pM_energy(cache, w)


def pairing_I(cache: PairingCache, v, w, mode=None) -> float:
    mode = _modes(cache, mode)
    total = 0.0
    for i in range(cache.n_components):
        total += cache.pairing(v, w, i, mode)
    return total


def pairing_L(cache: PairingCache, v, w, mode=None) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    lebesgue = float(np.sum(odd_power(v, cache.p_M) * w) * cache.volume)
    return pairing_I(cache, v, w, mode) + lebesgue


def monotonicity_gap(cache: PairingCache, v, w, mode=None) -> float:
    """``<I(v), v - w> - <I(w), v - w>``, summed termwise so every term is >= 0."""
    mode = _modes(cache, mode)
    total = 0.0
    for i in range(cache.n_components):
        total += cache.gap(v, w, i, mode)
    return total


def grad_I(cache: PairingCache, w, mode=None) -> np.ndarray:
    mode = _modes(cache, mode)
    g = np.zeros(cache.n)
    for i in range(cache.n_components):
        g += cache.gradient(w, i, mode)
    return g


def apply_operator(cache: PairingCache, u, x_index=None, mode=None):
    """Fractional anisotropic p(x,.)-Laplacian of ``u`` at domain nodes.

    Principal value by same-cell exclusion; collar nodes see ``u = 0``.
    Returns the whole nodal field when ``x_index`` is None.
    """
    mode = _modes(cache, mode)
    u = np.asarray(u, dtype=float)
    field = np.zeros(cache.n)
    for i in range(cache.n_components):
        field += cache.gradient(u, i, mode)
    # pair weights carry 2 |cell| for the domain-side measure
    field = field / (2.0 * cache.volume)
    return field if x_index is None else float(field[x_index])


def check_r_exponent(cache: PairingCache):
    b = cache.bounds
    if not b.r_plus < b.P_mm:
        raise RExponentTooLarge(
            f"sampled r+ = {b.r_plus:.6g} must be below P-- = {b.P_mm:.6g}"
        )


def reaction_energy(cache: PairingCache, w) -> float:
    """``int_Omega |w|^r / r``."""
    w = np.asarray(w, dtype=float)
    return float(np.sum(abs_power(w, cache.r) / cache.r) * cache.volume)


def energy_J(cache: PairingCache, w, lam: float, mode=None) -> float:
    """``energy_L(w) - lam * int |w|^r / r``."""
    check_r_exponent(cache)
    return energy_L(cache, w, mode) - lam * reaction_energy(cache, w)


def grad_J(cache: PairingCache, w, lam: float, mode=None) -> np.ndarray:
    """Component ``k`` is ``<J'(w), e_k>`` for the nodal indicator ``e_k``."""
    check_r_exponent(cache)
    w = np.asarray(w, dtype=float)
    g = grad_I(cache, w, mode)
    g += odd_power(w, cache.p_M) * cache.volume
    g -= lam * odd_power(w, cache.r) * cache.volume
    return g
