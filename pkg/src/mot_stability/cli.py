"""Command-line front door.

Subcommands: validate, aw-dist, strassen, decompose, approx, converge.
Every path is a thin adapter over the library: parse, call, format.  Exit
codes: 0 on success, 2 on domain errors (malformed files, convex-order
failures), 3 on pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .martingale import (
    ConvexOrderViolation,
    martingale_diagnostics,
    strassen_coupling,
)
from .measures import DiscreteMeasure
from .pipeline import PipelineFailure, approximate, convergence_experiment
from .potentials import irreducible_components
from .transport import Coupling, adapted_wasserstein, set_threads

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_PIPELINE = 3


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_measure(path: str) -> DiscreteMeasure:
    text = _read_text(path)
    if text.lstrip().startswith("{"):
        return DiscreteMeasure.from_json(text)
    return DiscreteMeasure.from_csv(text)


def _load_coupling(path: str) -> Coupling:
    text = _read_text(path)
    if text.lstrip().startswith("{"):
        return Coupling.from_json(text)
    return Coupling.from_csv(text)


def _sniff_kind(text: str) -> str:
    head = text.lstrip()
    if head.startswith("{"):
        obj = json.loads(head)
        if "atoms" in obj:
            return "measure"
        if "rows" in obj:
            return "coupling"
        raise ValueError("JSON input has neither 'atoms' nor 'rows'")
    first = head.splitlines()[0].replace(" ", "") if head else ""
    if first == "position,weight":
        return "measure"
    if first == "x,y,mass":
        return "coupling"
    raise ValueError("line 1: unrecognized header (expected 'position,weight' or 'x,y,mass')")


def _write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _figure_path(output: str | None, suffix: str) -> str | None:
    if output is None:
        return None
    stem = Path(output)
    return str(stem.with_name(stem.stem + suffix + ".png"))


def cmd_validate(args) -> int:
    text = _read_text(args.path)
    kind = _sniff_kind(text)
    if kind == "measure":
        m = _load_measure(args.path)
        print(f"measure: {len(m)} atoms, total mass {m.total_mass:.9f}")
        if not m.is_zero():
            lo, hi = m.support_bounds()
            print(f"support: [{lo:.9f}, {hi:.9f}], barycenter {m.barycenter():.9f}")
        print("invariants: positions strictly increasing, weights positive")
    else:
        c = _load_coupling(args.path)
        diag = martingale_diagnostics(c, tol=args.tol)
        print(f"coupling: {len(c)} rows, total mass {c.total_mass:.9f}")
        print("kernels: all probability kernels (mass 1 within 1e-9)")
        print(f"martingale defects: max {diag.max_defect:.9f}, mean {diag.mean_defect:.9f}")
        print(f"is martingale: {diag.is_martingale}")
    return EXIT_OK


def cmd_aw_dist(args) -> int:
    p = _load_coupling(args.p)
    q = _load_coupling(args.q)
    result = adapted_wasserstein(p, q, args.order)
    print(f"{result.distance:.9f}")
    if args.output:
        if args.format == "json":
            payload = {
                "order": args.order,
                "distance": result.distance,
                "objective": result.outer_plan.objective,
                "entries": [[i, j, m] for i, j, m in result.outer_plan.entries],
            }
            _write_output(json.dumps(payload, indent=2) + "\n", args.output)
        else:
            lines = ["source_index,target_index,mass"]
            lines += [f"{i},{j},{m!r}" for i, j, m in result.outer_plan.entries]
            _write_output("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_strassen(args) -> int:
    mu = _load_measure(args.mu)
    nu = _load_measure(args.nu)
    coupling = strassen_coupling(mu, nu)
    diag = martingale_diagnostics(coupling)
    text = coupling.to_json() + "\n" if args.format == "json" else coupling.to_csv()
    _write_output(text, args.output)
    print(f"martingale coupling: {len(coupling)} rows, max defect {diag.max_defect:.9f}", file=sys.stderr)
    return EXIT_OK


def cmd_decompose(args) -> int:
    mu = _load_measure(args.mu)
    nu = _load_measure(args.nu)
    decomposition = irreducible_components(mu, nu)
    _write_output(json.dumps(decomposition.to_json_obj(), indent=2) + "\n", args.output)
    print(
        f"{len(decomposition.components)} irreducible component(s), "
        f"common mass {decomposition.eta.total_mass:.9f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_approx(args) -> int:
    p = _load_coupling(args.coupling)
    mu_new = _load_measure(args.mu)
    nu_new = _load_measure(args.nu)
    out, report = approximate(p, mu_new, nu_new, eps=args.eps)
    text = out.to_json() + "\n" if args.format == "json" else out.to_csv()
    _write_output(text, args.output)
    if args.output:
        report_path = str(Path(args.output).with_suffix(".report.json"))
        Path(report_path).write_text(json.dumps(report.to_json_obj(), indent=2) + "\n", encoding="utf-8")
        if not args.no_figures:
            from .plots import render_approx_figure

            render_approx_figure(p, out, report, _figure_path(args.output, "_report"))
    print(f"adapted_w1 {report.final_aw1:.9f}")
    print(f"w1_mu_error {report.w1_mu_error:.9f}")
    print(f"w1_nu_error {report.w1_nu_error:.9f}")
    print(f"max_defect {report.max_defect:.9f}")
    print(f"fallbacks {report.fallbacks}")
    return EXIT_OK


def _format_row(row: dict) -> str:
    if "error" in row:
        return f"{row['level']},nan,nan,nan,nan,nan"
    return (
        f"{row['level']},{row['w1_mu']:.9f},{row['w1_nu']:.9f},"
        f"{row['aw1']:.9f},{row['fallbacks']},{row['ms']:.3f}"
    )


def cmd_converge(args) -> int:
    config = json.loads(_read_text(args.config))
    coupling = _load_coupling(config["coupling"])
    levels = config.get("levels", [])
    eps = float(config.get("eps", 0.05))
    seed = int(config.get("seed", 0)) if args.seed is None else args.seed
    rows = convergence_experiment(coupling, levels, seed=seed, eps=eps)
    lines = ["level,w1_mu,w1_nu,aw1,fallbacks,ms"] + [_format_row(r) for r in rows]
    _write_output("\n".join(lines) + "\n", args.output)
    for row in rows:
        if "error" in row:
            print(f"level {row['level']} failed: {row['error']}", file=sys.stderr)
        elif args.output:
            print(_format_row(row))
    if args.output and not args.no_figures:
        from .plots import render_convergence_figure

        render_convergence_figure(rows, _figure_path(args.output, "_convergence"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mot-stability",
        description="Adapted Wasserstein distances and stable martingale coupling approximation.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=float, default=1.0, help="distance order r >= 1")
    common.add_argument("--tol", type=float, default=None, help="tolerance override")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads")
    common.add_argument("--output", type=str, default=None, help="output file path")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="output format")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", parents=[common], help="check a measure or coupling file")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("aw-dist", parents=[common], help="adapted Wasserstein distance of two couplings")
    sp.add_argument("p")
    sp.add_argument("q")
    sp.set_defaults(func=cmd_aw_dist)

    sp = sub.add_parser("strassen", parents=[common], help="martingale coupling between ordered measures")
    sp.add_argument("mu")
    sp.add_argument("nu")
    sp.set_defaults(func=cmd_strassen)

    sp = sub.add_parser("decompose", parents=[common], help="irreducible decomposition of an ordered pair")
    sp.add_argument("mu")
    sp.add_argument("nu")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("approx", parents=[common], help="approximate a coupling on new marginals")
    sp.add_argument("coupling")
    sp.add_argument("mu")
    sp.add_argument("nu")
    sp.add_argument("--eps", type=float, default=0.05, help="pipeline accuracy parameter in (0, 1/2)")
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("converge", parents=[common], help="run a convergence experiment from a config")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_converge)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads
    if threads is None:
        env = os.environ.get("MOT_STABILITY_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        set_threads(threads)
    try:
        return args.func(args)
    except PipelineFailure as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (ConvexOrderViolation, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
