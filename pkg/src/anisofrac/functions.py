"""Nodal test functions and the portable random generator behind them.

Spec strings accepted by :func:`parse_function_spec`::

    bump:<c1>,<c2>,...:<radius>
    block:<lo1>,<lo2>,...:<hi1>,<hi2>,...
    random:<amplitude>[:<seed>]
    scaled:<factor>:<inner spec>

All functions vanish outside the domain box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .mesh import DomainMesh

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    """64-bit linear congruential generator.

    ``state <- (6364136223846793005 * state + 1442695040888963407) mod 2^64``;
    a uniform draw in ``[0, 1)`` is the top 53 bits of the new state times
    ``2^-53``. The sequence is fully determined by the seed on any platform.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.state = int(seed)

    def next_u64(self) -> int:
        self.state = (LCG_MULTIPLIER * self.state + LCG_INCREMENT) & _MASK
        return self.state

    def uniform(self, n: int) -> np.ndarray:
        out = np.empty(n)
        for k in range(n):
            out[k] = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return out


def random_nodal(mesh: DomainMesh, amplitude: float, rng: Lcg64) -> np.ndarray:
    """Independent values ``amplitude * (2u - 1)`` per node, in node order."""
    return amplitude * (2.0 * rng.uniform(mesh.n_nodes) - 1.0)


def bump(mesh: DomainMesh, center, radius: float) -> np.ndarray:
    """Smooth bump ``exp(1 - 1 / (1 - |x - c|^2 / R^2))``, peak 1 at the center."""
    if not radius > 0:
        raise ConfigError("bump radius must be positive")
    c = np.asarray(center, dtype=float)
    rho2 = np.sum((mesh.nodes - c) ** 2, axis=1) / radius ** 2
    out = np.zeros(mesh.n_nodes)
    inside = rho2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return out


def block(mesh: DomainMesh, lo, hi) -> np.ndarray:
    """Indicator of the nodes inside the closed sub-box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo < np.array(mesh.box_min)) or np.any(hi > np.array(mesh.box_max)) or np.any(lo >= hi):
        raise ConfigError("block sub-box must be nondegenerate and inside the domain")
    return np.all((mesh.nodes >= lo) & (mesh.nodes <= hi), axis=1).astype(float)


@dataclass(frozen=True)
class TestFunctionSpec:
    kind: str
    center: tuple = ()
    radius: float = 0.0
    lo: tuple = ()
    hi: tuple = ()
    amplitude: float = 1.0
    seed: int | None = None
    factor: float = 1.0
    inner: "TestFunctionSpec | None" = field(default=None)

    __test__ = False  # not a pytest class

    def label(self) -> str:
        if self.kind == "bump":
            return f"bump:{_join(self.center)}:{self.radius!r}"
        if self.kind == "block":
            return f"block:{_join(self.lo)}:{_join(self.hi)}"
        if self.kind == "random":
            return f"random:{self.amplitude!r}" + ("" if self.seed is None else f":{self.seed}")
        return f"scaled:{self.factor!r}:{self.inner.label()}"


def _join(values):
    return ",".join(repr(float(v)) for v in values)


def _floats(text, what):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad {what} list {text!r}") from None


def parse_function_spec(text: str) -> TestFunctionSpec:
    parts = text.strip().split(":", 2)
    kind = parts[0]
    try:
        if kind == "bump" and len(parts) == 3:
            return TestFunctionSpec("bump", center=_floats(parts[1], "center"),
                                    radius=float(parts[2]))
        if kind == "block" and len(parts) == 3:
            return TestFunctionSpec("block", lo=_floats(parts[1], "lower corner"),
                                    hi=_floats(parts[2], "upper corner"))
        if kind == "random" and len(parts) in (2, 3):
            seed = int(parts[2]) if len(parts) == 3 else None
            return TestFunctionSpec("random", amplitude=float(parts[1]), seed=seed)
        if kind == "scaled" and len(parts) == 3:
            return TestFunctionSpec("scaled", factor=float(parts[1]),
                                    inner=parse_function_spec(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad function spec {text!r}: {exc}") from None
    raise ConfigError(f"bad function spec {text!r}")


def make_function(spec: TestFunctionSpec, mesh: DomainMesh, seed: int = 0) -> np.ndarray:
    if spec.kind == "bump":
        if len(spec.center) != mesh.dimension:
            raise ConfigError("bump center dimension does not match the mesh")
        return bump(mesh, spec.center, spec.radius)
    if spec.kind == "block":
        return block(mesh, spec.lo, spec.hi)
    if spec.kind == "random":
        return random_nodal(mesh, spec.amplitude, Lcg64(seed if spec.seed is None else spec.seed))
    if spec.kind == "scaled":
        return spec.factor * make_function(spec.inner, mesh, seed)
    raise ConfigError(f"unknown function kind {spec.kind!r}")


def default_family(mesh: DomainMesh, seed: int = 0, n_random: int = 4) -> list:
    """The declared embedding family: random nodal, three bump widths, two blocks.

    Geometry is relative to the box, so the family means the same functions
    at every resolution.
    """
    lo = np.array(mesh.box_min)
    side = np.array(mesh.box_max) - lo
    c = tuple(lo + side / 2)
    short = float(np.min(side))
    specs = [TestFunctionSpec("bump", center=c, radius=f * short) for f in (0.2, 0.35, 0.5)]
    specs.append(TestFunctionSpec("block", lo=tuple(lo + 0.25 * side), hi=tuple(lo + 0.75 * side)))
    specs.append(TestFunctionSpec("block", lo=tuple(lo + 0.1 * side), hi=tuple(lo + 0.4 * side)))
    specs += [TestFunctionSpec("random", amplitude=1.0, seed=seed + k) for k in range(n_random)]
    return [(s.label(), make_function(s, mesh)) for s in specs]
