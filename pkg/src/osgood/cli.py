"""``osgood`` command line: reproducible experiments with file-based reports.

Every subcommand writes its artifacts into ``--out`` and prints a short
summary.  Report files hold only deterministic content; the wall-clock
timestamp and argv go to a sibling ``*.meta.json`` file.

Exit codes: 0 all checks passed, 1 a verification failed, 2 usage or
configuration error, 3 numeric failure (step failure or exhausted budget).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundKind, verify_proposition
from .errors import ConfigError, DomainError, OsgoodError, OutOfRangeError
from .fields import PiecewiseLogLinearField, SamplingPlan, check_osgood_difference, parse_field_spec
from .integrator import (
    Grid,
    IntegratorConfig,
    Termination,
    Trajectory,
    crossings_to_csv,
    detect_level_crossings,
    estimate_blowup,
    hitting_time_zero,
    integrate,
    integrate_logspace,
)
from .modulus import Verdict, classify_series, parse_modulus_spec

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

#: config-file keys and the converters applied to their values
_CONFIG_KEYS = {
    "modulus": str, "field": str, "y0": float, "span": str, "rel_tol": float,
    "abs_tol": float, "ymax": float, "nmax": int, "out": str, "jobs": int, "seed": int,
    "prop": str, "trajectory": str, "logspace": lambda v: v.lower() in ("1", "true", "yes"),
    "family": str, "param": str, "grid": str, "budget": int, "samples": int,
}


class UsageError(OsgoodError):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _plain(obj):
    """JSON-ready copy: enums to values, non-finite floats to strings."""
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n"


def _write(out: Path, name: str, text: str, argv) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    meta = {"file": name, "argv": list(argv), "version": __version__,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    (out / f"{name}.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return path


def _span(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--span expects a:b, got {text!r}") from None
    if a == b:
        raise UsageError("--span must be nonempty")
    return a, b


def _config(args) -> IntegratorConfig:
    kw = {"rel_tol": args.rel_tol, "abs_tol": args.abs_tol, "y_max": args.ymax}
    return IntegratorConfig(**{k: v for k, v in kw.items() if v is not None})


def _modulus(args, required=True):
    if not args.modulus:
        if required:
            raise UsageError("--modulus is required")
        return None
    return parse_modulus_spec(args.modulus)


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, summary)
# ---------------------------------------------------------------------------

def cmd_classify(args, argv):
    m = _modulus(args)
    est = classify_series(m, budget=args.budget) if args.budget else classify_series(m)
    report = {"schema": "osgood-report/1", "kind": "classify", "modulus": m.spec or m.family_name,
              "tag": m.series_tag, **dataclasses.asdict(est)}
    path = _write(args.out, "classify.json", dumps(report), argv)
    code = EXIT_OK if est.consistent else EXIT_FAILED
    return code, (f"{m.family_name}: sum 1/phi(n) {est.verdict.value} "
                  f"(partial {est.partial:.6g} at N={est.N}; {est.evidence}). Report: {path}")


def cmd_dump_field(args, argv):
    m = _modulus(args)
    f = parse_field_spec(args.field or "nonuniq", m)
    if not isinstance(f, PiecewiseLogLinearField):
        raise UsageError("dump-field needs --field blowup or nonuniq")
    n = args.nmax or 20
    lo, hi = (0, n) if f.variant == "blowup" else (-n, -1)
    path = _write(args.out, "field.csv", f.to_csv(lo, hi), argv)
    summary = f"{f.variant} field for {m.family_name}: breakpoints n in [{lo}, {hi}] written to {path}"
    if f.variant == "nonuniq":
        plan = SamplingPlan(n_samples=args.samples or 100_000, seed=args.seed)
        rep = check_osgood_difference(f, m, 1.0, plan)
        _write(args.out, "osgood-check.json",
               dumps({"schema": "osgood-report/1", "kind": "osgood-difference", "seed": args.seed,
                      **rep.to_dict()}), argv)
        summary += (f". Difference condition with psi=1: "
                    f"{'holds' if rep.passed else 'fails'} (worst ratio {rep.worst_ratio:.6g}).")
        return (EXIT_OK if rep.passed else EXIT_FAILED), summary
    return EXIT_OK, summary


def cmd_integrate(args, argv):
    m = _modulus(args, required=args.field in ("blowup", "nonuniq"))
    f = parse_field_spec(args.field or "riccati", m)
    cfg = _config(args)
    span = _span(args.span or "0:1")
    y0 = 0.0 if args.y0 is None else args.y0
    if args.logspace:
        if not y0 > 0:
            raise UsageError("--logspace needs --y0 > 0")
        traj = integrate_logspace(f, math.log(y0), span, cfg)
    else:
        traj = integrate(f, y0, span, cfg)
    _write(args.out, "trajectory.csv", traj.to_csv(), argv)
    path = _write(args.out, "trajectory.json", traj.to_json() + "\n", argv)
    code = EXIT_NUMERIC if traj.termination is Termination.STEP_FAILURE else EXIT_OK
    return code, (f"{f.label}: {len(traj)} nodes on [{traj.span[0]:g}, {traj.span[1]:g}], "
                  f"termination {traj.termination.value}, final {traj.state_name}="
                  f"{traj.y[-1]:.10g}. Trajectory: {path}")


def cmd_crossings(args, argv):
    if not args.trajectory:
        raise UsageError("crossings needs --trajectory <file> from a prior integrate run")
    src = Path(args.trajectory)
    if not src.is_file():
        raise UsageError(f"trajectory file {src} not found")
    text = src.read_text()
    traj = Trajectory.from_json(text) if src.suffix == ".json" else Trajectory.from_csv(text)
    try:
        grid = Grid(args.grid or "Decay")
    except ValueError:
        raise UsageError(f"--grid must be Decay or Growth, got {args.grid!r}") from None
    n = args.nmax or 50
    recs = detect_level_crossings(traj, range(0, n + 1), grid)
    path = _write(args.out, "crossings.csv", crossings_to_csv(recs), argv)
    return EXIT_OK, f"{len(recs)} level crossings ({grid.value} grid) written to {path}"


def _blowup_code(rep) -> int:
    if rep.budget_exceeded:
        return EXIT_NUMERIC
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_blowup(args, argv):
    field = args.field or "blowup"
    m = _modulus(args, required=field == "blowup")
    f = parse_field_spec(field, m)
    rep = estimate_blowup(f, m, 0.0 if args.y0 is None else args.y0, _config(args))
    path = _write(args.out, "blowup.json", dumps(rep.to_dict()), argv)
    lo, hi = rep.x_infinity_bracket
    return _blowup_code(rep), (f"{f.label}: y_max reached at x={rep.x_reach:.10g}; escape time in "
                               f"[{lo:.10g}, {hi:.10g}]; gap bound "
                               f"{'holds' if rep.gaps_ok else 'VIOLATED'}. {rep.message}. Report: {path}")


def cmd_nonuniq(args, argv):
    m = _modulus(args)
    f = parse_field_spec("nonuniq", m)
    y0 = math.exp(-1) if args.y0 is None else args.y0
    rep = hitting_time_zero(f, m, y0, _config(args), n_max=args.nmax or 300)
    path = _write(args.out, "nonuniq.json", dumps(rep.to_dict()), argv)
    lo, hi = rep.x_infinity_bracket
    checks = ", ".join(f"{k} {'ok' if v else 'VIOLATED'}" for k, v in
                       (("upper gaps", rep.gaps_ok), ("lower gaps", rep.lower_gaps_ok),
                        ("floor", rep.floor_ok)))
    return _blowup_code(rep), (f"decay from y0={y0:.6g}: zero-hitting time in [{lo:.10g}, {hi:.10g}]; "
                               f"{checks}. {rep.message}. Report: {path}")


def cmd_verify(args, argv):
    kinds = list(BoundKind) if (args.prop or "all") == "all" else [BoundKind.parse(args.prop)]
    lines, code = [], EXIT_OK
    for kind in kinds:
        rep = verify_proposition(kind, L=args.L)
        _write(args.out, f"verify-{kind.value}.json", rep.to_json() + "\n", argv)
        lines.append(rep.summary())
        if not rep.passed:
            code = EXIT_NUMERIC if rep.cause else EXIT_FAILED
    return code, " ".join(lines)


def _sweep_point(job):
    """One sweep point: series classification plus blow-up bracket."""
    spec, value, budget, cfg_kw, y0 = job
    m = parse_modulus_spec(spec)
    est = classify_series(m, budget=budget)
    rep = estimate_blowup(parse_field_spec("blowup", m), m, y0, IntegratorConfig(**cfg_kw))
    series_sum = est.partial + est.tail_upper if est.verdict is Verdict.CONVERGES else math.inf
    return {"schema": "osgood-report/1", "kind": "sweep-point", "modulus": spec, "param": value,
            "series": dataclasses.asdict(est), "blowup": rep.to_dict(),
            "series_sum": series_sum,
            "x_infinity_lower": rep.x_infinity_bracket[0],
            "x_infinity_upper": rep.x_infinity_bracket[1]}


def cmd_sweep(args, argv):
    family, param = args.family or "power", args.param or "p"
    try:
        a, b, k = args.grid.split(":") if args.grid else ("1.5", "4", "6")
        values = np.linspace(float(a), float(b), int(k))
    except ValueError:
        raise UsageError(f"--grid expects a:b:count, got {args.grid!r}") from None
    cfg = _config(args)
    cfg_kw = {"rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol, "y_max": cfg.y_max}
    jobs = [(f"family={family},{param}={float(v)!r}", float(v), args.budget or 2 ** 16, cfg_kw,
             0.0 if args.y0 is None else args.y0) for v in values]
    for spec, *_ in jobs:
        parse_modulus_spec(spec)  # fail fast on a bad family or parameter
    n_jobs = max(1, args.jobs or 1)
    if n_jobs == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_sweep_point, jobs))
    sweep_dir = args.out / "sweep"
    for i, res in enumerate(results):
        _write(sweep_dir, f"point-{i:03d}.json", dumps(res), argv)
    rows = [["param", "series_sum", "x_infinity_lower", "x_infinity_upper"]]
    rows += [[repr(r["param"]), repr(float(r["series_sum"])), repr(float(r["x_infinity_lower"])),
              repr(float(r["x_infinity_upper"]))] for r in results]
    buf = "".join(",".join(row) + "\n" for row in rows)
    path = _write(args.out, "sweep.csv", buf, argv)
    failed = [r for r in results if not r["blowup"]["passed"]]
    code = EXIT_OK
    if any(r["blowup"]["budget_exceeded"] for r in results):
        code = EXIT_NUMERIC
    elif failed:
        code = EXIT_FAILED
    return code, f"{len(results)} sweep points over {param} for family {family}; aggregate {path}"


COMMANDS = {
    "classify": (cmd_classify, "classify sum 1/phi(n) for a modulus"),
    "dump-field": (cmd_dump_field, "write the breakpoint table of a constructed field"),
    "integrate": (cmd_integrate, "integrate y' = F(x, y) and export the trajectory"),
    "crossings": (cmd_crossings, "locate level crossings on a saved trajectory"),
    "blowup": (cmd_blowup, "bracket the blow-up time of a blow-up field"),
    "nonuniq": (cmd_nonuniq, "bracket the zero-hitting time of a decay run"),
    "verify": (cmd_verify, "check an envelope bound on its extremal equation"),
    "sweep": (cmd_sweep, "blow-up race across a parametric modulus family"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value file; command-line flags win")
    common.add_argument("--modulus", help="family=<name>[,k=v...] or table=<path>[,tag=...]")
    common.add_argument("--field", help="blowup | nonuniq | sqrt | riccati | linear:<L>")
    common.add_argument("--y0", type=float)
    common.add_argument("--span", help="integration interval a:b")
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--ymax", type=float, help="blow-up threshold")
    common.add_argument("--nmax", type=int, help="deepest level index")
    common.add_argument("--out", type=Path, default=Path("osgood-out"))
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--logspace", action="store_true", default=None)
    common.add_argument("--trajectory", help="trajectory file (.json or .csv)")
    common.add_argument("--grid", help="Decay | Growth (crossings) or a:b:count (sweep)")
    common.add_argument("--prop", help="bound kind, e.g. growth-sqrt, or all")
    common.add_argument("--L", type=float, default=2.0, help="Lipschitz constant for verify")
    common.add_argument("--family", help="sweep family name")
    common.add_argument("--param", help="sweep parameter name")
    common.add_argument("--budget", type=int, help="series term budget")
    common.add_argument("--samples", type=int, help="Osgood check sample count")
    parser = argparse.ArgumentParser(prog="osgood", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"osgood {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _read_config(path: Path) -> dict:
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}") from None
    return values


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        file_values = _read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        explicit = {a.dest for a in sub._actions
                    if any(opt in argv or any(s.startswith(opt + "=") for s in argv)
                           for opt in a.option_strings)}
        for key, val in file_values.items():
            if key not in explicit:
                setattr(args, key, Path(val) if key == "out" else val)
    return args


def run_command(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(f"osgood: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handler = COMMANDS[args.command][0]
    try:
        code, summary = handler(args, argv)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"osgood {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OutOfRangeError, ArithmeticError) as exc:
        print(f"osgood {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(summary)
    return code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
