"""INI run configuration: parsing, defaults and validation.

Sections and keys (``#`` starts a comment, lists are whitespace separated)::

    [domain]      dimension, box_min, box_max, resolution, collar_radius,
                  collar_resolution, allow_component_mismatch
    [fractional]  s
    [exponents]   p1 .. pK, q, r          (expression text)
    [problem]     lambda | lambda_frac
    [solver]      max_iter, grad_tol, armijo_c, armijo_shrink, step_init,
                  ball_radius, delta, seed, workers, geometry_samples
    [scan]        resolutions, mode
    [output]      directory, formats
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import math
from dataclasses import dataclass, field

from .errors import ConfigParseError, ConfigValidationError, ExpressionSyntaxError, UnknownIdentifier
from .exponents import ExponentField, parse_exponent
from .mesh import MODES

log = logging.getLogger("anisofrac")

SECTIONS = ("domain", "fractional", "exponents", "problem", "solver", "scan", "output")


@dataclass
class RunConfig:
    dimension: int
    box_min: tuple
    box_max: tuple
    resolution: tuple
    collar_radius: float
    collar_resolution: tuple | None
    s: float
    components: list
    q: str
    r: str
    lam: float | None
    lambda_frac: float | None
    max_iter: int
    grad_tol: float
    armijo_c: float
    armijo_shrink: float
    step_init: float
    ball_radius: float
    delta: float
    seed: int
    workers: int
    geometry_samples: int
    scan_resolutions: tuple
    scan_mode: str
    output_directory: str
    formats: tuple
    allow_component_mismatch: bool = False
    sha256: str = ""
    defaulted: list = field(default_factory=list)

    def exponent_field(self) -> ExponentField:
        return ExponentField.from_text(self.components, self.q, self.r, self.s, self.dimension)


class _Reader:
    """Typed access to one parsed file, remembering which keys fell back to defaults."""

    def __init__(self, parser):
        self.p = parser
        self.defaulted = []

    def raw(self, section, key, default=None):
        if self.p.has_option(section, key):
            return self.p.get(section, key).strip()
        if default is None:
            raise ConfigValidationError(f"{section}.{key}", "required key is missing")
        self.defaulted.append((f"{section}.{key}", default))
        return default

    def number(self, section, key, default=None, kind=float):
        text = self.raw(section, key, None if default is None else str(default))
        try:
            value = kind(text)
        except ValueError:
            raise ConfigValidationError(f"{section}.{key}", f"not a valid {kind.__name__}: {text!r}") from None
        if kind is float and not math.isfinite(value):
            raise ConfigValidationError(f"{section}.{key}", "must be finite")
        return value

    def numbers(self, section, key, default=None, kind=float):
        text = self.raw(section, key, default)
        try:
            values = tuple(kind(v) for v in text.split())
        except ValueError:
            raise ConfigValidationError(f"{section}.{key}", f"bad list {text!r}") from None
        if not values:
            raise ConfigValidationError(f"{section}.{key}", "empty list")
        if kind is float and not all(math.isfinite(v) for v in values):
            raise ConfigValidationError(f"{section}.{key}", "must be finite")
        return values

    def flag(self, section, key, default):
        text = self.raw(section, key, default).lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigValidationError(f"{section}.{key}", f"not a boolean: {text!r}")


def _broadcast(name, values, dim):
    if len(values) == 1:
        return values * dim
    if len(values) != dim:
        raise ConfigValidationError(name, f"needs 1 or {dim} entries, got {len(values)}")
    return values


def parse_config(text: str, sha256: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), comment_prefixes=("#",),
        interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 0
        raise ConfigParseError(line, "malformed line") from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError(exc.lineno, "key outside of any section") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigParseError(exc.lineno, str(exc).split(":")[-1].strip()) from None
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigValidationError(section, "unknown section")

    rd = _Reader(parser)
    dim = rd.number("domain", "dimension", 2, int)
    if dim < 1:
        raise ConfigValidationError("domain.dimension", "must be at least 1")
    box_min = _broadcast("domain.box_min", rd.numbers("domain", "box_min", "0"), dim)
    box_max = _broadcast("domain.box_max", rd.numbers("domain", "box_max", "1"), dim)
    if any(not hi > lo for lo, hi in zip(box_min, box_max)):
        raise ConfigValidationError("domain.box_max", "must exceed box_min on every axis")
    resolution = _broadcast("domain.resolution", rd.numbers("domain", "resolution", "12", int), dim)
    if any(n < 2 for n in resolution):
        raise ConfigValidationError("domain.resolution", "must be at least 2 per axis")
    collar_radius = rd.number("domain", "collar_radius", 3.0)
    if parser.has_option("domain", "collar_resolution"):
        collar_res = _broadcast("domain.collar_resolution",
                                rd.numbers("domain", "collar_resolution", kind=int), dim)
        if any(n < 2 for n in collar_res):
            raise ConfigValidationError("domain.collar_resolution", "must be at least 2 per axis")
    else:
        collar_res = None
        rd.defaulted.append(("domain.collar_resolution", "same as resolution"))
    mismatch = rd.flag("domain", "allow_component_mismatch", "false")

    s = rd.number("fractional", "s", 0.5)
    if not 0.0 < s < 1.0:
        raise ConfigValidationError("fractional.s", "must lie in (0,1)")

    if not parser.has_section("exponents"):
        raise ConfigValidationError("exponents", "section is missing")
    keys = sorted((k for k in parser.options("exponents") if k[:1] == "p" and k[1:].isdigit()),
                  key=lambda k: int(k[1:]))
    count = len(keys)
    if keys != [f"p{i + 1}" for i in range(count)]:
        raise ConfigValidationError("exponents", f"components must be numbered p1..pK, got {keys}")
    if count == 0 or (count != dim and not mismatch):
        missing = f"p{count + 1}" if count < dim else f"p{count}"
        raise ConfigValidationError(
            f"exponents.{missing}",
            f"expected exactly {dim} components for dimension {dim}, got {count}")
    for k in parser.options("exponents"):
        if k not in keys and k not in ("q", "r"):
            raise ConfigValidationError(f"exponents.{k}", "unknown key")
    components = [rd.raw("exponents", k) for k in keys]
    q = rd.raw("exponents", "q", "2")
    r = rd.raw("exponents", "r", "1.5")
    for name, src in [(k, c) for k, c in zip(keys, components)] + [("q", q), ("r", r)]:
        try:
            parse_exponent(src, dim)
        except (ExpressionSyntaxError, UnknownIdentifier) as exc:
            raise ConfigValidationError(f"exponents.{name}", str(exc)) from None

    has_lam = parser.has_option("problem", "lambda")
    has_frac = parser.has_option("problem", "lambda_frac")
    if has_lam and has_frac:
        raise ConfigValidationError("problem.lambda", "give either lambda or lambda_frac, not both")
    lam = frac = None
    if has_lam:
        lam = rd.number("problem", "lambda")
        if not lam > 0:
            raise ConfigValidationError("problem.lambda", "must be positive")
    else:
        frac = rd.number("problem", "lambda_frac", 0.5)
        if not 0.0 < frac < 1.0:
            raise ConfigValidationError("problem.lambda_frac", "must lie in (0,1)")

    max_iter = rd.number("solver", "max_iter", 10000, int)
    grad_tol = rd.number("solver", "grad_tol", 1e-5)
    armijo_c = rd.number("solver", "armijo_c", 1e-4)
    shrink = rd.number("solver", "armijo_shrink", 0.5)
    step_init = rd.number("solver", "step_init", 1.0)
    delta = rd.number("solver", "delta", 1.0)
    if parser.has_option("solver", "ball_radius"):
        ball = rd.number("solver", "ball_radius")
    else:
        ball = 10.0 * delta
        rd.defaulted.append(("solver.ball_radius", "10 * delta"))
    seed = rd.number("solver", "seed", 0, int)
    workers = rd.number("solver", "workers", 1, int)
    samples = rd.number("solver", "geometry_samples", 32, int)
    checks = [
        ("solver.max_iter", max_iter >= 1, "must be at least 1"),
        ("solver.grad_tol", grad_tol > 0, "must be positive"),
        ("solver.armijo_c", 0 < armijo_c < 1, "must lie in (0,1)"),
        ("solver.armijo_shrink", 0 < shrink < 1, "must lie in (0,1)"),
        ("solver.step_init", step_init > 0, "must be positive"),
        ("solver.delta", delta > 0, "must be positive"),
        ("solver.ball_radius", ball > delta, "must exceed delta"),
        ("solver.seed", 0 <= seed < 2 ** 64, "must be an unsigned 64-bit integer"),
        ("solver.workers", workers >= 1, "must be at least 1"),
        ("solver.geometry_samples", samples >= 1, "must be at least 1"),
    ]
    for name, ok, reason in checks:
        if not ok:
            raise ConfigValidationError(name, reason)

    scan_res = rd.numbers("scan", "resolutions", "8 16 32", int)
    if any(n < 2 for n in scan_res):
        raise ConfigValidationError("scan.resolutions", "must be at least 2")
    scan_mode = rd.raw("scan", "mode", "omega_omega")
    if scan_mode not in MODES:
        raise ConfigValidationError("scan.mode", f"must be one of {MODES}")

    directory = rd.raw("output", "directory", "out")
    formats = tuple(rd.raw("output", "formats", "csv jsonl").split())
    if not set(formats) <= {"csv", "jsonl"}:
        raise ConfigValidationError("output.formats", "allowed formats are csv and jsonl")

    cfg = RunConfig(
        dimension=dim, box_min=tuple(box_min), box_max=tuple(box_max),
        resolution=tuple(resolution), collar_radius=collar_radius,
        collar_resolution=None if collar_res is None else tuple(collar_res),
        s=s, components=components, q=q, r=r, lam=lam, lambda_frac=frac,
        max_iter=max_iter, grad_tol=grad_tol, armijo_c=armijo_c, armijo_shrink=shrink,
        step_init=step_init, ball_radius=ball, delta=delta, seed=seed, workers=workers,
        geometry_samples=samples, scan_resolutions=scan_res, scan_mode=scan_mode,
        output_directory=directory, formats=formats, allow_component_mismatch=mismatch,
        sha256=sha256 or hashlib.sha256(text.encode()).hexdigest(),
        defaulted=rd.defaulted,
    )
    for name, value in rd.defaulted:
        log.info("default %s = %s", name, value)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigParseError(data[: exc.start].count(b"\n") + 1, "not valid UTF-8") from None
    return parse_config(text, hashlib.sha256(data).hexdigest())
