"""Command-line entry point: ``tdtransport {validate,sweep,figure,oracle}``.

Exit codes: 0 on success, 2 if any sweep point failed to converge, 1 on
configuration or complete-positivity errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .chain import ChainSpec
from .evolution import find_steady_state, steady_state_nullspace, trace_distance
from .liouvillian import make_context
from .rates import Constant

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2
ORACLE_TOL = 1e-8

log = logging.getLogger("tdtransport")


def _overrides(args) -> dict:
    out = {}
    if args.tmax is not None:
        out["t_max"] = args.tmax
    if args.rtol is not None:
        out["rtol"] = args.rtol
    return out


def _add_common(p, config_required=False):
    p.add_argument("--config", type=Path, required=config_required, help="JSON experiment config")
    p.add_argument("--out", type=Path, help="output CSV file or directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes per sweep")
    p.add_argument("--tmax", type=float, help="override the integration horizon")
    p.add_argument("--rtol", type=float, help="override the integrator relative tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdtransport",
        description="Exciton transport through a dephased two-level chain.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("validate", help="complete-positivity check of a config"),
                config_required=True)
    _add_common(sub.add_parser("sweep", help="run every experiment of a config"),
                config_required=True)
    fig = sub.add_parser("figure", help="run the bundled config of one figure")
    fig.add_argument("n", type=int, choices=ex.FIGURES)
    _add_common(fig)
    orc = sub.add_parser("oracle", help="small-chain cross-check against the null-space solve")
    _add_common(orc)
    orc.add_argument("--sites", type=int, nargs="+", default=[2, 3, 4])
    orc.add_argument("--gammas", type=float, nargs="+", default=[0.0, 0.05, 0.5])
    return parser


def _experiments(args) -> list[ex.ExperimentConfig]:
    if args.command == "figure":
        return ex.parse_document(ex.figure_document(args.n), _overrides(args))
    return ex.load_config(args.config, _overrides(args))


def _csv_path(out: Path | None, name: str, single: bool, default_dir: Path) -> Path:
    if out is None:
        return default_dir / f"{name}.csv"
    if single and out.suffix == ".csv":
        return out
    return out / f"{name}.csv"


def cmd_validate(args) -> int:
    for exp in _experiments(args):
        rows = ex.validate(exp)
        print(f"{exp.name}: {len(rows)} models pass the CP check up to t={exp.integrator.t_max:g}")
    return EXIT_OK


def cmd_run(args) -> int:
    exps = _experiments(args)
    default_dir = ex.default_out_dir(args.n) if args.command == "figure" else Path.cwd()
    single = len(exps) == 1
    summaries, status = {}, EXIT_OK
    for exp in exps:
        path = _csv_path(args.out, exp.name, single, default_dir)
        path.parent.mkdir(parents=True, exist_ok=True)
        if exp.kind == "rate_curves":
            path.write_text(ex.rate_curves_csv(exp))
            print(f"{exp.name}: wrote {path}")
            continue
        t0 = time.perf_counter()
        records = ex.run_sweep(exp, threads=args.threads, out=path)
        summary = ex.report_figure_summary(records, ex.crossover_for(exp))
        summaries[exp.name] = summary
        if not summary["complete"]:
            status = EXIT_NONCONVERGED
            for r in records:
                if not r.converged:
                    log.warning("%s: %s=%g did not converge: %s", exp.name,
                                exp.sweep.parameter, r.parameter, r.message)
        print(f"{exp.name}: {summary['converged']}/{summary['points']} converged, "
              f"verdict {summary['verdict']}, argmax {summary['argmax']}, "
              f"max J~ {summary['max_J_tilde']}  ({time.perf_counter() - t0:.0f} s) -> {path}")
    if summaries:
        spath = (path.parent if (args.out is None or not single or args.out.suffix != ".csv")
                 else args.out.parent) / "summary.json"
        spath.write_text(json.dumps(summaries, indent=2, default=float) + "\n")
    return status


def cmd_oracle(args) -> int:
    worst = 0.0
    for n in args.sites:
        for g in args.gammas:
            spec = ChainSpec.uniform(n, extraction_site=n if n < 3 else n - 1)
            ctx = make_context(spec, Constant(g))
            res = find_steady_state(ctx)
            ref = steady_state_nullspace(ctx, g)
            dist = trace_distance(res.rho, ref) if res.converged else float("inf")
            worst = max(worst, dist)
            print(f"N={n} k={spec.extraction_site} gamma={g:g}: trace distance {dist:.2e}")
    ok = worst <= ORACLE_TOL
    print(f"oracle {'passed' if ok else 'FAILED'}: worst {worst:.2e} (limit {ORACLE_TOL:g})")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors count as configuration errors; --help exits cleanly
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "oracle":
            return cmd_oracle(args)
        return cmd_run(args)
    except (ex.ConfigError, ex.CPViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
