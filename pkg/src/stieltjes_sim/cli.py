"""Command-line front end.

Subcommands map one-to-one onto library operations; no numerics live
here.  A single JSON config file describes a problem (dimension, window,
field, drivers, optional bracket); quick scalar integrals and the
built-in tank model take plain flags.  Numbers on flag values go through
the expression parser, so "--c pi" works.

Exit codes: 0 success, 2 verification failure, 3 convergence failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import expr as ex
from .errors import ConfigError, StieltjesSimError, ToleranceNotMetError
from .extremal import (
    Bracket,
    FunctionalField,
    check_jump_monotone,
    check_quasimonotone,
    extremal_solve,
    functional_extremal,
    verify_lower,
    verify_upper,
)
from .integrator import AcPart, Integrator, Jump, VectorIntegrator
from .ksint import indefinite_integral, ks_integrate
from .models import (
    BacteriaParams,
    bacteria_build,
    bacteria_functional_build,
    bacteria_g,
    bacteria_system,
    run_bacteria,
)
from .regulated import RegulatedGrid
from .solver import Field, solve_mde, stieltjes_derivative

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_CONVERGENCE = 3
EXIT_CONFIG = 4

THREADS_ENV = "STIELTJES_SIM_THREADS"

_AC_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["none", "identity", "density", "primitive"]},
        "expr": {"type": "string"},
        "kinks": {"type": "array", "items": {"type": "number"}},
        "density": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_INTEGRATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "ac": _AC_SCHEMA,
        "jumps": {
            "oneOf": [
                {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "t": {"type": "number"},
                            "size": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "required": ["t", "size"],
                        "additionalProperties": False,
                    },
                },
                {
                    "type": "object",
                    "properties": {
                        "rule": {
                            "type": "object",
                            "properties": {
                                "period": {"type": "number", "exclusiveMinimum": 0},
                                "size": {"type": "number", "exclusiveMinimum": 0},
                                "start": {"type": "number"},
                            },
                            "required": ["period", "size", "start"],
                            "additionalProperties": False,
                        }
                    },
                    "required": ["rule"],
                    "additionalProperties": False,
                },
            ]
        },
    },
    "required": ["ac"],
    "additionalProperties": False,
}

_BRACKET_SIDE_SCHEMA = {
    "type": "array",
    "items": {
        "oneOf": [
            {"type": "string"},
            {
                "type": "object",
                "properties": {"csv": {"type": "string"}},
                "required": ["csv"],
                "additionalProperties": False,
            },
        ]
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "stieltjes-sim problem configuration",
    "type": "object",
    "properties": {
        "problem": {
            "type": "object",
            "properties": {
                "builtin": {"enum": ["bacteria"]},
                "params": {"type": "object"},
                "n": {"type": "integer", "minimum": 1},
                "window": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 2,
                    "maxItems": 2,
                    "description": "[t0, length]; the solve runs on [t0, t0+length]",
                },
                "y0": {"type": "array", "items": {"type": "number"}},
                "field": {
                    "type": "object",
                    "properties": {
                        "components": {"type": "array", "items": {"type": "string"}},
                        "jump_components": {
                            "type": "array",
                            "items": {"type": ["string", "null"]},
                        },
                    },
                    "required": ["components"],
                    "additionalProperties": False,
                },
                "integrators": {"type": "array", "items": _INTEGRATOR_SCHEMA},
                "parameters": {
                    "type": "object",
                    "additionalProperties": {"type": "number"},
                },
            },
            "additionalProperties": False,
        },
        "method": {
            "type": "object",
            "properties": {
                "scheme": {"enum": ["euler_g", "rk4_density"]},
                "mesh": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "extra_events": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "bracket": {
            "type": "object",
            "properties": {
                "alpha": _BRACKET_SIDE_SCHEMA,
                "beta": _BRACKET_SIDE_SCHEMA,
                "mesh": {"type": "integer", "minimum": 1},
            },
            "required": ["alpha", "beta"],
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["problem"],
    "additionalProperties": False,
}


def _fmt(x: float) -> str:
    return repr(float(x))


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"$: config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"$: invalid JSON: {e}") from e
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"{e.json_path}: {e.message}") from e
    return cfg


def _number(text: str) -> float:
    """Parse a numeric flag through the expression language (allows 'pi')."""
    return ex.evaluate(ex.parse(text), {})


def _expand_jumps(desc, t0: float, t1: float) -> list[Jump]:
    if desc is None:
        return []
    if isinstance(desc, dict):
        rule = desc["rule"]
        out = []
        t = float(rule["start"])
        while t <= t1 + 1e-12:
            if t > t0:
                out.append(Jump(t, float(rule["size"])))
            t += float(rule["period"])
        return out
    return [Jump(float(j["t"]), float(j["size"])) for j in desc]


def _build_integrator(desc: dict, t0: float, t1: float) -> Integrator:
    ac_desc = desc["ac"]
    kind = ac_desc["kind"]
    kinks = ac_desc.get("kinks", ())
    if kind == "none":
        ac = AcPart.none()
    elif kind == "identity":
        ac = AcPart.identity()
    elif kind == "density":
        ac = AcPart.from_density(ac_desc["expr"], kinks)
    else:
        ac = AcPart.from_primitive(
            ac_desc["expr"], kinks, ac_desc.get("density")
        )
    return Integrator(t0, t1, ac, _expand_jumps(desc.get("jumps"), t0, t1))


class Problem:
    def __init__(self, field, vg, y0, window, params, bracket=None, functional=None):
        self.field = field
        self.vg = vg
        self.y0 = y0
        self.window = window
        self.params = params
        self.bracket = bracket
        self.functional = functional


def _build_problem(cfg: dict) -> Problem:
    pb = cfg["problem"]
    method = cfg.get("method", {})
    if "builtin" in pb:
        raw = dict(pb.get("params", {}))
        if "N" in raw:
            raw["N_spec"] = raw.pop("N")
        try:
            params = BacteriaParams(**raw)
        except TypeError as e:
            raise ConfigError(f"$.problem.params: {e}") from e
        field, vg, y0, bracket = bacteria_build(
            params, mesh=cfg.get("bracket", {}).get("mesh", method.get("mesh", 2000))
        )
        functional = bacteria_functional_build(params)
        return Problem(
            field, vg, y0, (0.0, params.T), params, bracket, functional
        )

    for key in ("n", "window", "y0", "field", "integrators"):
        if key not in pb:
            raise ConfigError(f"$.problem.{key}: required for non-builtin problems")
    n = pb["n"]
    t0, length = pb["window"]
    t1 = t0 + length
    if len(pb["y0"]) != n or len(pb["integrators"]) != n:
        raise ConfigError("$.problem: y0 and integrators must have length n")
    comps = pb["field"]["components"]
    if len(comps) != n:
        raise ConfigError("$.problem.field.components: must have length n")
    jumps = pb["field"].get("jump_components")
    params = pb.get("parameters", {})
    try:
        field = Field.from_exprs(comps, jumps, params)
        vg = VectorIntegrator(
            [_build_integrator(d, t0, t1) for d in pb["integrators"]]
        )
    except StieltjesSimError as e:
        raise ConfigError(f"$.problem: {e}") from e
    bracket = None
    if "bracket" in cfg:
        bracket = _build_bracket(cfg, field, vg, pb["y0"], params)
    return Problem(field, vg, list(pb["y0"]), (t0, t1), params, bracket)


def _grid_from_csv(path: str) -> RegulatedGrid:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["t"]), float(row["value"]), float(row["post"])))
    rows.sort()
    nodes = [r[0] for r in rows]
    vals = [r[1] for r in rows]
    posts = [r[2] for r in rows]
    posts[-1] = vals[-1]
    return RegulatedGrid(nodes, vals, posts)


def _build_bracket(cfg, field, vg, y0, params) -> Bracket:
    bc = cfg["bracket"]
    mesh = bc.get("mesh", cfg.get("method", {}).get("mesh", 400))
    t0, t1 = vg.t0, vg.t1
    pieces = [
        np.linspace(t0, t1, mesh + 1),
        np.array(vg.merged_events(t0, t1)),
        np.array([k for k in vg.all_kinks() if t0 < k < t1]),
    ]
    nodes = np.unique(np.concatenate([p for p in pieces if p.size]))

    def side(entries) -> list[RegulatedGrid]:
        out = []
        for entry in entries:
            if isinstance(entry, dict):
                out.append(_grid_from_csv(entry["csv"]).resample(nodes))
            else:
                ast = ex.parse(entry)
                fn = lambda t, ast=ast: ex.evaluate(ast, {"t": t, **params})
                out.append(RegulatedGrid.from_function(fn, nodes))
        return out

    try:
        return Bracket(side(bc["alpha"]), side(bc["beta"]))
    except (ValueError, StieltjesSimError) as e:
        raise ConfigError(f"$.bracket: {e}") from e


def _quick_driver(spec: str, t0: float, t1: float) -> Integrator:
    if spec == "identity":
        return Integrator(t0, t1, AcPart.identity())
    if spec == "bacteria":
        if t0 != 0.0:
            raise ConfigError("$: the bacteria driver starts at t=0")
        return bacteria_g(t1)
    if spec.startswith("@"):
        desc = json.loads(Path(spec[1:]).read_text())
    else:
        try:
            desc = json.loads(spec)
        except json.JSONDecodeError as e:
            raise ConfigError(
                "$: --g must be 'identity', 'bacteria', inline JSON or @file"
            ) from e
    try:
        jsonschema.validate(desc, _INTEGRATOR_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"$.g{e.json_path[1:]}: {e.message}") from e
    return _build_integrator(desc, t0, t1)


# --- output writers -------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, float) else x for x in row])


def _write_grid(path: Path, grid: RegulatedGrid) -> None:
    _write_csv(
        path,
        ["t", "value", "post"],
        zip(
            (float(t) for t in grid.nodes),
            (float(v) for v in grid.values),
            (float(p) for p in grid.posts),
        ),
    )


def _write_solution(out_dir: Path, report, vg) -> None:
    for i, grid in enumerate(report.solution):
        gi = vg.components[i]
        rows = [
            (float(t), float(v), float(p), gi.g_eval(float(t)).value)
            for t, v, p in zip(grid.nodes, grid.values, grid.posts)
        ]
        _write_csv(out_dir / f"solution_y{i + 1}.csv", ["t", "value", "post", "g_value"], rows)
    _write_csv(
        out_dir / "events.csv",
        ["t", "i", "dg", "dy"],
        [(e.time, e.component + 1, e.dg, e.dy) for e in report.events],
    )


def _max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _sharded_quasimonotone(field, bracket, samples, seed, tol, vg):
    """Split sampling into seeded shards; parallel when the env cap allows."""
    workers = min(_max_workers(), 8)
    if workers == 1:
        return check_quasimonotone(field, bracket, samples, seed, tol, vg=vg)
    per = max(1, samples // workers)

    def run(shard: int):
        return check_quasimonotone(
            field, bracket, per, seed * 1000 + shard, tol, vg=vg if shard == 0 else None
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(run, range(workers)))
    worst = max(reports, key=lambda r: r.worst_violation)
    total = sum(r.samples_checked for r in reports)
    return type(worst)(
        worst.passed and all(r.passed for r in reports),
        worst.worst_violation,
        worst.location,
        total,
        tol,
    )


# --- subcommands -----------------------------------------------------------------


def _cmd_integrate(args) -> int:
    t0, t1 = _number(args.frm), _number(args.to)
    g = _quick_driver(args.g, 0.0 if args.g == "bacteria" else t0, t1)
    f = ex.parse(args.f)
    if args.indefinite:
        events = g.jump_times_in(t0, t1)
        nodes = np.unique(
            np.concatenate([np.linspace(t0, t1, args.mesh + 1), np.array(events)])
        )
        grid = indefinite_integral(f, g, t0, nodes, tol=args.tol)
        _write_grid(Path(args.indefinite), grid)
        print(f"wrote {args.indefinite}")
    else:
        print(_fmt(ks_integrate(f, g, t0, t1, tol=args.tol)))
    return EXIT_OK


def _cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    problem = _build_problem(cfg)
    method = cfg.get("method", {})
    report = solve_mde(
        problem.field,
        problem.vg,
        problem.y0,
        problem.window,
        scheme=method.get("scheme", "euler_g"),
        mesh=method.get("mesh", 1000),
        extra_events=method.get("extra_events", ()),
        tol=method.get("tol", 1e-9),
    )
    out_dir = Path(cfg.get("output", {}).get("dir", args.out_dir))
    _write_solution(out_dir, report, problem.vg)
    print(
        f"solved on {report.node_count} nodes ({report.scheme}); "
        f"residual {_fmt(report.residual)}; outputs in {out_dir}"
    )
    return EXIT_OK


def _cmd_derivative(args) -> int:
    cfg = _load_config(args.config)
    problem = _build_problem(cfg)
    grid = _grid_from_csv(args.grid)
    g = problem.vg.components[args.component - 1]
    d = stieltjes_derivative(grid, g, _number(args.at))
    print("undefined" if d is None else _fmt(d))
    return EXIT_OK


def _verification_reports(cfg, problem) -> dict:
    ver = cfg.get("verify", {})
    tol = ver.get("tol", 1e-8)
    samples = ver.get("samples", 10_000)
    seed = ver.get("seed", 0)
    b = problem.bracket
    lower = verify_lower(b.alphas, problem.field, problem.vg, problem.y0, tol)
    upper = verify_upper(b.betas, problem.field, problem.vg, problem.y0, tol)
    quasi = _sharded_quasimonotone(
        problem.field, b, samples, seed, tol, vg=problem.vg
    )
    jumps = check_jump_monotone(problem.field, problem.vg, b, tol=tol)
    return {
        "lower": lower.as_dict(),
        "upper": upper.as_dict(),
        "quasimonotone": quasi.as_dict(),
        "jump_monotone": jumps.as_dict(),
        "passed": all(r.passed for r in (lower, upper, quasi, jumps)),
    }


def _cmd_verify_bracket(args) -> int:
    cfg = _load_config(args.config)
    problem = _build_problem(cfg)
    if problem.bracket is None:
        raise ConfigError("$.bracket: required for verify-bracket")
    report = _verification_reports(cfg, problem)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def _cmd_extremal(args) -> int:
    cfg = _load_config(args.config)
    problem = _build_problem(cfg)
    if problem.bracket is None:
        raise ConfigError("$.bracket: required for extremal")
    method = cfg.get("method", {})
    report = extremal_solve(
        problem.field,
        problem.vg,
        problem.y0,
        problem.bracket,
        args.direction,
        mesh=method.get("mesh"),
        tol=method.get("tol", 1e-6),
        max_iter=method.get("max_iter", 60),
    )
    out_dir = Path(cfg.get("output", {}).get("dir", args.out_dir))
    for i, grid in enumerate(report.solution):
        _write_grid(out_dir / f"{args.direction}_y{i + 1}.csv", grid)
    trace = {
        "direction": report.direction,
        "iterations": report.iterations,
        "converged": report.converged,
        "monotone": report.monotone,
        "residual": report.residual,
        "changes": [s.change for s in report.trace],
    }
    print(json.dumps(trace, indent=2))
    return EXIT_OK if report.converged else EXIT_CONVERGENCE


def _cmd_extremal_functional(args) -> int:
    cfg = _load_config(args.config)
    problem = _build_problem(cfg)
    if problem.bracket is None:
        raise ConfigError("$.bracket: required for extremal-functional")
    if problem.functional is None:
        # degenerate functional problem: the trajectory argument is unused
        plain = problem.field
        problem.functional = FunctionalField(
            [
                (lambda t, y, gamma, fn=fn: fn(t, y))
                for fn in plain.components
            ],
            [
                (lambda t, y, gamma, fn=fn: fn(t, y)) if fn is not None else None
                for fn in plain.jump_components
            ],
        )
    method = cfg.get("method", {})
    report = functional_extremal(
        problem.functional,
        problem.vg,
        problem.y0,
        problem.bracket,
        args.direction,
        outer_tol=method.get("tol", 1e-6),
        outer_max=method.get("max_iter", 30),
        mesh=method.get("mesh"),
    )
    out_dir = Path(cfg.get("output", {}).get("dir", args.out_dir))
    for i, grid in enumerate(report.solution):
        _write_grid(out_dir / f"functional_{args.direction}_y{i + 1}.csv", grid)
    trace = {
        "direction": report.direction,
        "outer_iterations": report.outer_iterations,
        "converged": report.converged,
        "monotone": report.monotone,
        "residual": report.residual,
        "changes": [s.change for s in report.trace],
    }
    print(json.dumps(trace, indent=2))
    return EXIT_OK if report.converged else EXIT_CONVERGENCE


def _cmd_model(args) -> int:
    if args.model != "bacteria":
        raise ConfigError(f"$: unknown model '{args.model}'")
    try:
        params = BacteriaParams(
            L=_number(args.L),
            c=_number(args.c),
            a=_number(args.a),
            r=_number(args.r),
            p0=_number(args.p0),
            T=_number(args.T),
            N_spec=args.N,
        )
    except StieltjesSimError as e:
        raise ConfigError(f"$: {e}") from e
    report, ref = run_bacteria(params, scheme=args.scheme, mesh=args.mesh)
    out_dir = Path(args.out_dir)
    _write_solution(out_dir, report, _bacteria_vg(params))
    g = bacteria_g(params.T)
    driver_rows = [
        (float(t), g.g_eval(float(t)).value, g.g_eval(float(t)).right_limit)
        for t in report.solution[0].nodes
    ]
    _write_csv(out_dir / "driver.csv", ["t", "g", "g_post"], driver_rows)
    if ref is not None:
        p_solved = report.solution[0]
        oracle_rows = [
            (float(t), ref.W(float(t)), ref.p(float(t)))
            for t in p_solved.nodes
        ]
        _write_csv(out_dir / "oracle.csv", ["t", "W", "p"], oracle_rows)
    print(f"model outputs in {out_dir}")
    return EXIT_OK


def _bacteria_vg(params: BacteriaParams) -> VectorIntegrator:
    _field, vg, _y0 = bacteria_system(params)
    return vg


# --- argument parsing ---------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stieltjes-sim",
        description="Solve and verify measure/Stieltjes differential equations.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("integrate", help="scalar KS integral or indefinite integral CSV")
    q.add_argument("--f", required=True, help="integrand expression in t")
    q.add_argument("--g", required=True, help="'identity', 'bacteria', inline JSON or @file")
    q.add_argument("--from", dest="frm", required=True, help="lower limit")
    q.add_argument("--to", dest="to", required=True, help="upper limit")
    q.add_argument("--tol", type=float, default=1e-9)
    q.add_argument("--indefinite", metavar="CSV", help="write the indefinite integral here")
    q.add_argument("--mesh", type=int, default=200)
    q.set_defaults(fn=_cmd_integrate)

    s = sub.add_parser("solve", help="solve the configured system")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", default="out")
    s.set_defaults(fn=_cmd_solve)

    d = sub.add_parser("derivative", help="Stieltjes derivative of a grid CSV")
    d.add_argument("--config", required=True)
    d.add_argument("--grid", required=True, help="CSV with columns t,value,post")
    d.add_argument("--component", type=int, default=1, help="1-based driver index")
    d.add_argument("--at", required=True, help="evaluation time")
    d.set_defaults(fn=_cmd_derivative)

    v = sub.add_parser("verify-bracket", help="verify lower/upper solutions and conditions")
    v.add_argument("--config", required=True)
    v.add_argument("--out", help="also write the JSON report here")
    v.set_defaults(fn=_cmd_verify_bracket)

    e = sub.add_parser("extremal", help="approximate the greatest/least solution")
    e.add_argument("--config", required=True)
    e.add_argument("--direction", choices=["greatest", "least"], required=True)
    e.add_argument("--out-dir", default="out")
    e.set_defaults(fn=_cmd_extremal)

    f = sub.add_parser("extremal-functional", help="outer fixed-point loop for functional fields")
    f.add_argument("--config", required=True)
    f.add_argument("--direction", choices=["greatest", "least"], required=True)
    f.add_argument("--out-dir", default="out")
    f.set_defaults(fn=_cmd_extremal_functional)

    m = sub.add_parser("model", help="run a built-in model")
    m.add_argument("model", choices=["bacteria"])
    m.add_argument("--L", default="10")
    m.add_argument("--c", default="pi")
    m.add_argument("--a", default="1/7")
    m.add_argument("--r", default="1")
    m.add_argument("--p0", default="5")
    m.add_argument("--T", default="14")
    m.add_argument("--N", default="floor")
    m.add_argument("--scheme", choices=["euler_g", "rk4_density"], default="rk4_density")
    m.add_argument("--mesh", type=int, default=4000)
    m.add_argument("--out-dir", default="out")
    m.set_defaults(fn=_cmd_model)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ToleranceNotMetError as e:
        print(f"convergence failure: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except StieltjesSimError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
