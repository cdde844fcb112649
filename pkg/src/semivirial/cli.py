"""Command line entry point: ``semivirial <command> ...``.

Exit status is 0 when every summary verdict passes, 2 when a verdict fails
or a hypothesis does not hold (a result, not an error) and 1 on execution
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .harness import (
    ConfigError,
    Report,
    balance_ok,
    check_conditions,
    emit,
    load_config,
    load_sweep,
    run_scenario,
    save_sweep,
)
from .separable import (
    UnmatchedEigenvalueError,
    balance_demo,
    cross_validate_2d,
    scaling_for,
    solve_1d_power,
    write_balance_csv,
)

log = logging.getLogger("semivirial")

EXIT_OK, EXIT_ERROR, EXIT_HYPOTHESIS = 0, 1, 2


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output"] = str(args.out)
    if args.max_points is not None:
        changes["resolution"] = replace(cfg.resolution, max_points=args.max_points)
    return replace(cfg, **changes) if changes else cfg


def _print_summary(report: Report) -> None:
    for name, status in report.summary.items():
        print(f"{name:>12}: {status}")
    for where, msg in report.failures.items():
        print(f"  failure at {where}: {msg}")


def _write(report: Report, out: Path, fmt: str) -> None:
    for p in emit(report, out, fmt):
        log.info("wrote %s", p)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    report = run_scenario(cfg)
    out = Path(cfg.output)
    save_sweep(report, out)
    _write(report, out, args.format)
    print(f"{cfg.name}: {len(report.rows)} rows over {len(cfg.hbars)} hbar values -> {out}")
    _print_summary(report)
    return report.exit_code


def cmd_verify_virial(args) -> int:
    cfg = _load(args)
    cfg = replace(cfg, checks=("virial",))
    report = run_scenario(cfg)
    out = Path(cfg.output)
    save_sweep(report, out)
    _write(report, out, args.format)
    print(f"{'hbar':>8} {'lambda':>12} {'generalized':>12} {'classic':>12}")
    for r in report.rows:
        gen = "n/a" if r.virial_residual is None else f"{r.virial_residual:.3e}"
        print(f"{r.hbar:>8g} {r.lam:>12.8f} {gen:>12} {r.classic_residual:>12.3e}")
    _print_summary(report)
    return report.exit_code


def cmd_check_conditions(args) -> int:
    cfg = _load(args)
    cond = check_conditions(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "conditions.json").write_text(json.dumps(asdict(cond), indent=1, default=str) + "\n")
    st = cond.stability
    print(f"stability: {'pass' if st['passed'] else 'fail'} (well counts {st['counts']})")
    for w in st["witnesses"]:
        print(f"  {w}")
    print(f"c0 = {cond.c0}, c1 = {cond.c1}, c_pred = {cond.c_pred}")
    print(f"c0_dual = {cond.c0_dual}, prop37 constant = {cond.prop37_c}")
    for n in cond.notes:
        print(f"  note: {n}")
    ok = cond.thm33_ready or "theorem33" not in cfg.checks
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def cmd_separable(args) -> int:
    cfg = _load(args)
    if cfg.separable is None:
        raise ConfigError("separable", "config has no separable section")
    s = cfg.separable
    rows = balance_demo(s.lam, s.u, s.alpha1, s.alpha2, s.hbars)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_balance_csv(out / "balance.csv", rows)
    for r in rows:
        print(f"hbar={r.hbar:<7g} n=({r.n1},{r.n2}) lambda={r.lam:.6f} U={r.U:.6f} "
              f"gaps=({r.gap_lambda:.2e}, {r.gap_U:.2e})")
    ok = balance_ok(rows, s.final_gap)
    for a in sorted({s.alpha1, s.alpha2}):
        sc = scaling_for(a, solve_1d_power(a, 100))
        print(f"alpha={a:g}: Weyl constant {sc.weyl:.5f}, gamma={sc.gamma:.4f}, beta={sc.beta:.4f}")
    if s.cross_validate:
        cv = s.cross_validate
        try:
            res = cross_validate_2d(float(cv.get("hbar", 0.2)), tuple(cv.get("window", (0.7, 1.3))),
                                    float(cv.get("alpha1", 2.0)), float(cv.get("alpha2", 2.0)),
                                    float(cv.get("tolerance", 1e-3)), seed=cfg.seed)
            print(f"2D cross-check: {len(res.eigenvalues)} eigenvalues, worst gap {res.worst_gap:.2e}")
        except UnmatchedEigenvalueError as exc:
            print(f"2D cross-check failed: {exc}")
            ok = False
    print(f"separable: {'pass' if ok else 'fail'}")
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def cmd_report(args) -> int:
    directory = Path(args.directory)
    report = load_sweep(directory)
    out = Path(args.out) if args.out is not None else directory
    _write(report, out, args.format)
    _print_summary(report)
    return report.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semivirial", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
        p.add_argument("--max-points", type=int, default=None, dest="max_points")

    common(sub.add_parser("sweep", help="run the hbar sweep and write the report"))
    common(sub.add_parser("verify-virial", help="virial residuals of every window pair"))
    common(sub.add_parser("check-conditions", help="hypotheses and constants, no eigensolve"))
    common(sub.add_parser("separable", help="tensor-product balance demonstration"))
    rp = sub.add_parser("report", help="re-emit a report from a saved sweep directory")
    rp.add_argument("directory")
    common(rp, config=False)
    return parser


COMMANDS = {
    "sweep": cmd_sweep,
    "verify-virial": cmd_verify_virial,
    "check-conditions": cmd_check_conditions,
    "separable": cmd_separable,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # any other failure is an execution error
        log.debug("unhandled", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
