"""Command-line entry point: ``ivpcomplexity <subcommand> ...``.

Exit codes: 0 pass, 1 acceptance failure, 2 configuration error,
3 internal assertion.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .bump import ParallelepipedBump, eval_h, integral_h, prefactor_table, recheck_bump
from .fooling import ConstructionError, build_pair, certified_amplitude, class_check_points, fd_class_bound
from .harness import (ConfigError, ExperimentConfig, SweepError, audit_inequalities, build_information,
                      check_residuals, fit_exponent, fit_window, measure_separation, read_csv, run_sweep)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def _load_config(args, required: bool = True) -> ExperimentConfig:
    if args.config is None:
        if required:
            raise ConfigError("--config is required for this subcommand")
        data = {"d": 2, "r": 2, "variant": "thm1", "schedule": [16, 64, 256, 1024]}
    else:
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if args.variant:
        data["variant"] = args.variant
    if args.seed is not None:
        data["seed"] = args.seed
    return ExperimentConfig.from_dict(data)


def _emit(args, text: str):
    if not args.quiet:
        print(text)


def _pair_for(cfg: ExperimentConfig, n: int):
    spec = cfg.spec()
    if cfg.variant == "control":
        return build_pair("control", spec, n=n), None
    N = build_information(cfg, spec, n)
    pair = build_pair(cfg.variant, spec, N, p=None if cfg.variant == "thm2ii" else cfg.p,
                      alpha_info=cfg.alpha_info)
    return pair, N


def cmd_adversary(args) -> int:
    cfg = _load_config(args)
    if cfg.variant.startswith("solver"):
        raise ConfigError("adversary needs a construction variant")
    n = args.n or cfg.schedule[0]
    pair, N = _pair_for(cfg, n)
    residual = check_residuals(pair, N, 0) if N is not None else 0.0
    Y, steps = class_check_points(pair)
    bounds = {name: fd_class_bound(f, Y, steps, pair.spec.r) for name, f in (("f1", pair.f1), ("f2", pair.f2))}
    ok = all(v <= 1.05 * pair.spec.D for v in bounds.values())
    payload = {"pair": pair.to_dict(), "information": N.to_dict() if N is not None else None}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=1)
    _emit(args, f"variant={pair.variant} n={n} residual_max={residual!r} "
                f"class_f1={bounds['f1']!r} class_f2={bounds['f2']!r} verdict={'pass' if ok else 'fail'}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    run = run_sweep(cfg, log=None if args.quiet else (lambda s: print(s, file=sys.stderr)))
    out = args.out or cfg.out
    if out:
        run.write(out)
    else:
        sys.stdout.write(run.to_csv())
    if out:
        _emit(args, f"slope={run.slope!r} stderr={run.stderr!r} theory={run.theory!r} verdict={run.verdict}")
    return EXIT_PASS if run.passed else EXIT_FAIL


def cmd_audit(args) -> int:
    cfg = _load_config(args)
    if cfg.variant not in ("thm1", "control"):
        raise ConfigError("audit applies to thm1 and control pairs")
    n = args.n or cfg.schedule[0]
    pair, _ = _pair_for(cfg, n)
    measured, z1, z2, _ = measure_separation(pair, cfg.tol, cfg.samples)
    report = audit_inequalities(pair, z1, z2)
    text = "\n".join(report.lines() + [f"measured={measured!r} verdict={'pass' if report.passed else 'fail'}"])
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    _emit(args, text)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_verify_bump(args) -> int:
    cfg = _load_config(args, required=False)
    spec = cfg.spec()
    lines = []
    table = prefactor_table(max(8, spec.r + 2))
    table.check_recurrence()
    lines.append(f"prefactor_recurrence: pass up to order {table.k_max}")
    h_half = float(eval_h(0.5))
    ok_half = abs(h_half - math.exp(-4.0)) <= 1e-12
    lines.append(f"h(1/2)={h_half!r} e^-4={math.exp(-4.0)!r} {'pass' if ok_half else 'fail'}")
    nodes, weights = np.polynomial.legendre.leggauss(200)
    # composite Gauss-Legendre on 64 panels as an independent check of the adaptive value
    edges = np.linspace(0.0, 1.0, 65)
    oracle = float(sum(0.5 * (v - u) * np.dot(weights, eval_h(0.5 * (v - u) * nodes + 0.5 * (u + v)))
                       for u, v in zip(edges[:-1], edges[1:])))
    ok_int = abs(integral_h() - oracle) <= 1e-10
    lines.append(f"integral_h={integral_h()!r} oracle={oracle!r} {'pass' if ok_int else 'fail'}")
    n = args.n or cfg.schedule[0]
    pair, _ = _pair_for(cfg, n)
    cells = [pair.grid.cells[0], pair.grid.cells[-1]]
    c_hat = certified_amplitude(pair.grid, spec.r, spec.D)
    ok_re = all(recheck_bump(ParallelepipedBump(c, spec.r, c_hat, spec.D), 65) for c in cells)
    lines.append(f"certified_amplitude={c_hat!r} recheck_65={'pass' if ok_re else 'fail'}")
    ok = ok_half and ok_int and ok_re
    lines.append(f"verdict={'pass' if ok else 'fail'}")
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    _emit(args, text)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_report(args) -> int:
    try:
        with open(args.csv) as fh:
            config, rows = read_csv(fh.read())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    if len(rows) < 3:
        raise ConfigError("need at least 3 rows to fit")
    cfg = ExperimentConfig.from_dict(config) if config else None
    fraction = cfg.fit_fraction if cfg else 0.5
    sel = rows[fit_window(len(rows), fraction)]
    slope, stderr, intercept = fit_exponent([(r.n, r.measured) for r in sel])
    line = f"slope={slope!r} stderr={stderr!r} intercept={intercept!r}"
    ok = True
    if cfg is not None and not math.isnan(cfg.theory_slope):
        ok = abs(slope - cfg.theory_slope) <= cfg.tolerance
        line += f" theory={cfg.theory_slope!r} verdict={'pass' if ok else 'fail'}"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(line + "\n")
    _emit(args, line)
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivpcomplexity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON experiment configuration")
            p.add_argument("--variant", help="override the configured variant")
            p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output path")
        p.add_argument("--quiet", action="store_true", help="suppress console output")

    p = sub.add_parser("adversary", help="build and verify one fooling pair, emit it as JSON")
    common(p)
    p.add_argument("--n", type=int, help="information budget (default: first schedule entry)")
    p.set_defaults(func=cmd_adversary)
    p = sub.add_parser("sweep", help="separation or solver sweep, CSV output")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("audit", help="integral inequality report for a thm1 pair")
    common(p)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_audit)
    p = sub.add_parser("verify-bump", help="bump constants and amplitude certification")
    common(p)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_verify_bump)
    p = sub.add_parser("report", help="re-fit the exponent of an existing sweep CSV")
    p.add_argument("csv")
    common(p, config=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConstructionError, SweepError, AssertionError, ArithmeticError) as exc:
        print(f"internal assertion: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
