"""Command line entry point: ``anisofrac {check,norms,solve,embed-scan,apply-op}``.

Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import (
    AnisofracError,
    BoundaryTrap,
    ConfigError,
    GeometryViolated,
    InvariantError,
    LambdaOutOfRange,
    NumericalError,
)
from .functions import default_family, make_function, parse_function_spec
from .mesh import build_collar, build_mesh
from .norms import full_norm
from .operators import PairingCache, apply_operator
from .solver import (
    LOG_COLUMNS,
    SolverSettings,
    compute_lambda_star,
    descent_floor,
    estimate_embedding_constant,
    minimize_in_ball,
    ps_diagnostic,
    valley_bump,
    verify_mountain_geometry,
    verify_negative_valley,
)
from .suite import CANONICAL, COLUMNS, canonical_cache, run_suite

log = logging.getLogger("anisofrac")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
MAX_GEOMETRY_ROUNDS = 3
MAX_BALL_DOUBLINGS = 3


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.16e" % float(value)
    return str(value)


class Output:
    """Writes versioned, hash-stamped CSV and JSON-lines files into one directory."""

    def __init__(self, directory: str, cfg: RunConfig):
        self.directory = directory
        self.cfg = cfg
        os.makedirs(directory, exist_ok=True)
        self.written = []

    @property
    def stamp(self) -> str:
        return f"anisofrac {__version__} config_sha256={self.cfg.sha256}"

    def csv(self, name, columns, rows):
        if "csv" not in self.cfg.formats:
            return
        path = os.path.join(self.directory, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {self.stamp}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
        self.written.append(path)

    def jsonl(self, name, records):
        if "jsonl" not in self.cfg.formats:
            return
        path = os.path.join(self.directory, name)
        with open(path, "w", encoding="utf-8") as fh:
            head = {"artifact": "anisofrac", "version": __version__, "config_sha256": self.cfg.sha256}
            fh.write(json.dumps(head, sort_keys=False) + "\n")
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=False, allow_nan=True) + "\n")
        self.written.append(path)


def build_cache(cfg: RunConfig, *, resolution=None, collar: bool = True) -> PairingCache:
    mesh = build_mesh(cfg.box_min, cfg.box_max, resolution or cfg.resolution)
    col = build_collar(mesh, cfg.collar_radius, cfg.collar_resolution) if collar else None
    return PairingCache(mesh, cfg.exponent_field(), col, seed=cfg.seed, workers=cfg.workers)


def node_columns(dim):
    return [f"x{k + 1}" for k in range(dim)]


# -- subcommands ------------------------------------------------------------


def cmd_check(cfg: RunConfig, out: Output) -> int:
    rows = []
    cache = build_cache(cfg)
    rows += run_suite(cache, "configured", seed=cfg.seed)
    for name in CANONICAL:
        rows += run_suite(canonical_cache(name, collar_radius=cfg.collar_radius), name, seed=cfg.seed)
    out.csv("check.csv", COLUMNS, [r.row() for r in rows])
    failed = [r for r in rows if not r.passed]
    for r in failed:
        log.error("FAIL %s %s %s", r.instance, r.check, r.detail)
    log.info("%d checks, %d failed", len(rows), len(failed))
    return EXIT_INVARIANT if failed else EXIT_OK


def cmd_norms(cfg: RunConfig, out: Output, spec_text: str) -> int:
    cache = build_cache(cfg)
    w = make_function(parse_function_spec(spec_text), cache.mesh, cfg.seed)
    reports = [full_norm(cache, w, mode) for mode in ("omega_omega", "full_Q")]
    out.csv("norms.csv", reports[0].csv_header(), [r.csv_row() for r in reports])
    return EXIT_OK


def cmd_apply_op(cfg: RunConfig, out: Output, spec_text: str) -> int:
    cache = build_cache(cfg)
    u = make_function(parse_function_spec(spec_text), cache.mesh, cfg.seed)
    op = apply_operator(cache, u)
    rows = [list(x) + [a, b] for x, a, b in zip(cache.mesh.nodes, u, op)]
    out.csv("operator.csv", node_columns(cfg.dimension) + ["u", "operator"], rows)
    return EXIT_OK


def cmd_embed_scan(cfg: RunConfig, out: Output) -> int:
    table, summary = [], []
    previous = None
    ok = True
    for res in cfg.scan_resolutions:
        cache = build_cache(cfg, resolution=res, collar=cfg.scan_mode == "full_Q")
        est = estimate_embedding_constant(cache, default_family(cache.mesh, cfg.seed),
                                          target="q", mode=cfg.scan_mode)
        table += [[res, label, ratio] for label, ratio in est.ratios]
        growth = math.nan if previous is None else est.value / previous
        if previous is not None and not growth < 2.0:
            ok = False
        summary.append([res, est.value, growth])
        log.info("resolution %d: estimate %.6g", res, est.value)
        previous = est.value
    out.csv("embed_scan.csv", ["resolution", "function", "ratio"], table)
    out.csv("embed_summary.csv", ["resolution", "estimate", "ratio_to_previous"], summary)
    return EXIT_OK if ok else EXIT_INVARIANT


def solve_instance(cfg: RunConfig):
    """The full existence pipeline; returns everything the writers need."""
    cache = build_cache(cfg)
    family = default_family(cache.mesh, cfg.seed)
    for _ in range(MAX_GEOMETRY_ROUNDS + 1):
        est = estimate_embedding_constant(cache, family, target="r")
        consts = compute_lambda_star(est.value, cache.bounds, cfg.delta,
                                     cache.n_components, est.labels)
        lam = cfg.lam if cfg.lam is not None else cfg.lambda_frac * consts.lambda_star
        if not 0 < lam < consts.lambda_star:
            raise LambdaOutOfRange(
                f"lambda = {lam:.6g} is not in (0, lambda* = {consts.lambda_star:.6g})")
        try:
            geometry = verify_mountain_geometry(cache, lam, consts,
                                                samples=cfg.geometry_samples, seed=cfg.seed,
                                                family=family)
            break
        except GeometryViolated as exc:
            log.warning("%s; enlarging the embedding family", exc)
            family = family + [exc.witness]
    else:
        raise GeometryViolated("sphere check still fails after enlarging the family")

    omega = valley_bump(cache)
    valley = verify_negative_valley(cache, lam, omega, consts)
    settings = SolverSettings(max_iter=cfg.max_iter, grad_tol=cfg.grad_tol,
                              armijo_c=cfg.armijo_c, armijo_shrink=cfg.armijo_shrink,
                              step_init=cfg.step_init)
    m = cfg.ball_radius
    for attempt in range(MAX_BALL_DOUBLINGS + 1):
        try:
            report = minimize_in_ball(cache, lam, m, valley.t * omega,
                                      settings=settings, consts=consts)
            break
        except BoundaryTrap as exc:
            if attempt == MAX_BALL_DOUBLINGS:
                raise
            log.warning("%s; retrying with radius %g", exc, 2 * m)
            m *= 2.0
    ps = ps_diagnostic(report.log, cfg.grad_tol, descent_floor(consts, m))
    return cache, est, consts, lam, geometry, valley, report, ps


def cmd_solve(cfg: RunConfig, out: Output) -> int:
    cache, est, consts, lam, geometry, valley, report, ps = solve_instance(cfg)
    dim = cfg.dimension
    out.csv("solution.csv", node_columns(dim) + ["value"],
            [list(x) + [v] for x, v in zip(cache.mesh.nodes, report.w0)])
    out.csv("iterations.csv", list(LOG_COLUMNS), report.log)
    facts = [
        ("C_embed", consts.C_embed), ("C_tilde", consts.C_tilde), ("P_tilde", consts.P_tilde),
        ("delta", consts.delta), ("lambda_star", consts.lambda_star), ("lambda", lam),
        ("vartheta_chain", geometry.vartheta), ("vartheta_stated", geometry.vartheta_stated),
        ("sphere_min_J", geometry.min_J), ("sphere_slack", geometry.slack),
        ("sphere_samples", geometry.n_samples),
        ("theta_valley", consts.theta_valley), ("epsilon_r", consts.epsilon_r),
        ("t_valley", valley.t), ("J_valley", valley.J), ("valley_halvings", valley.halvings),
        ("ball_radius", report.ball_radius), ("ps_floor", ps.floor), ("ps_bounded", ps.bounded),
        ("ps_monotone", ps.monotone), ("ps_cauchy_spread", ps.cauchy_spread),
        ("ps_min_minoration_slack", ps.min_minoration_slack),
    ] + [(f"embedding_ratio[{label}]", ratio) for label, ratio in est.ratios]
    out.csv("geometry.csv", ["quantity", "value"], facts)
    out.jsonl("summary.jsonl", [{
        "lambda": lam,
        "lambda_star": consts.lambda_star,
        "delta": consts.delta,
        "theta": consts.theta_valley,
        "J_value": report.J_value,
        "grad_norm": report.grad_norm,
        "iterations": report.iterations,
        "node_count": cache.n,
    }])
    log.info("J = %.10g, grad_norm = %.3g after %d iterations", report.J_value,
             report.grad_norm, report.iterations)
    return EXIT_OK if report.success else EXIT_NUMERICAL


# -- dispatch ---------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisofrac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anisofrac {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "norms", "solve", "embed-scan", "apply-op"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--workers", type=int, help="threads for pair reductions")
        if name in ("norms", "apply-op"):
            p.add_argument("--function", required=True,
                           help="bump:C:R | block:LO:HI | random:A[:SEED] | scaled:F:SPEC")
    return parser


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg.workers = args.workers
        out = Output(args.out or cfg.output_directory, cfg)
        if args.command == "check":
            code = cmd_check(cfg, out)
        elif args.command == "norms":
            code = cmd_norms(cfg, out, args.function)
        elif args.command == "solve":
            code = cmd_solve(cfg, out)
        elif args.command == "embed-scan":
            code = cmd_embed_scan(cfg, out)
        else:
            code = cmd_apply_op(cfg, out, args.function)
        for path in out.written:
            print(path)
        return code
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_CONFIG
    except InvariantError as exc:
        log.error("invariant failure: %s: %s", type(exc).__name__, exc)
        return EXIT_INVARIANT
    except NumericalError as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except AnisofracError as exc:
        log.error("failure: %s", exc)
        return EXIT_NUMERICAL
    except (ArithmeticError, ValueError, FloatingPointError) as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
