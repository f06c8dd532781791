"""``npgc`` command-line interface.

Exit status 0 means the command ran; test decisions are reported in the
output files, never through the exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import DataError, ingest_csv, ingest_directories, prepare
from .dimension import select_feature_dim
from .estimator import npgc_test
from .simulate import SimulationError, StudyDesign, assemble_study_dataset
from .study import StudyConfig, StudyResumeError, emit_plot_data, run_study
from .theory import null_uniformity_study, sampler_agreement

logger = logging.getLogger("npgc")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", nargs="+", metavar="DIR", help="directories holding X.csv, Y.csv and optional Z.csv, one per realization")
    g.add_argument("--covariates", nargs="+", metavar="CSV", help="X series, one file per realization")
    g.add_argument("--response", nargs="+", metavar="CSV", help="Y series, one file per realization")
    g.add_argument("--conditioning", nargs="+", metavar="CSV", help="Z series, one file per realization")
    g.add_argument("--lag", type=int, default=3)
    g.add_argument("--z-lag", type=int, default=1, choices=(0, 1), help="1 conditions on Z_{t-1}, 0 on Z_t")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--featurizations", type=int, default=50)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--fold-mode", choices=("random", "contiguous"), default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=None, help="output directory")


def _load_panel(args):
    if args.data:
        if args.covariates or args.response:
            raise DataError("use either --data or --covariates/--response, not both")
        return ingest_directories(args.data)
    if not (args.covariates and args.response):
        raise DataError("--covariates and --response are required unless --data is given")
    cov = args.covariates if len(args.covariates) > 1 else args.covariates[0]
    resp = args.response if len(args.response) > 1 else args.response[0]
    cond = None
    if args.conditioning:
        cond = args.conditioning if len(args.conditioning) > 1 else args.conditioning[0]
    return ingest_csv(cov, resp, cond)


def _emit(payload: dict, out: Path | None, name: str) -> None:
    text = json.dumps(payload, indent=2)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    print(text)


def cmd_run(args) -> None:
    prepared = prepare(_load_panel(args), args.lag, z_lag=args.z_lag)
    scan = None
    test_folds = None
    n_features = args.dim
    if args.auto_dim:
        scan = select_feature_dim(
            prepared, n_featurizations=args.featurizations, n_folds=args.folds, k_star=args.k_star,
            seed=args.seed, fold_mode=args.fold_mode, n_jobs=args.threads,
        )
        n_features = scan.chosen
        test_folds = list(range(scan.k_star, args.folds))
    result = npgc_test(
        prepared, n_permutations=args.perms, n_featurizations=args.featurizations, n_folds=args.folds,
        n_features=n_features, alpha=args.alpha, seed=args.seed, fold_mode=args.fold_mode,
        test_folds=test_folds, n_jobs=args.threads,
    )
    payload = result.to_dict()
    if scan is not None:
        payload["dimension_scan"] = {"chosen": scan.chosen, "k_star": scan.k_star, "n_max": scan.n_max}
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        result.write_theta_csv(args.out / "theta.csv")
        if scan is not None:
            scan.write_csv(args.out / "dimension_scan.csv")
    _emit(payload, args.out, "result.json")


def cmd_select_dim(args) -> None:
    prepared = prepare(_load_panel(args), args.lag, z_lag=args.z_lag)
    scan = select_feature_dim(
        prepared, n_featurizations=args.featurizations, n_folds=args.folds, k_star=args.k_star,
        seed=args.seed, fold_mode=args.fold_mode, n_jobs=args.threads,
    )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        scan.write_csv(args.out / "dimension_scan.csv")
    _emit({"chosen": scan.chosen, "k_star": scan.k_star, "n_max": scan.n_max}, args.out, "dimension.json")


def cmd_simulate(args) -> None:
    design = StudyDesign(
        args.process, args.samples, args.causal_x, args.causal_z, args.lag, tuple(args.groups), args.seed
    )
    out = args.out or Path("simulated")
    written = []
    for i in range(args.replicates):
        ds = assemble_study_dataset(design, i)
        d = ds.export(out / f"replicate_{i:04d}")
        written.append({"replicate": i, "path": str(d), "gc_label": ds.gc_label, "sha256": ds.digest()})
    _emit({"design": design.__dict__ | {"groups": list(design.groups)}, "datasets": written}, out, "simulate.json")


def cmd_study(args) -> None:
    config = StudyConfig.from_file(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    report = run_study(config, args.out, n_jobs=args.threads)
    if args.out is not None:
        report.save(args.out / "report.json")
        emit_plot_data(report, args.out / "plot_data")
    summary = {"config": report.config, "settings": report.setting_table(), "runtime": report.runtime}
    print(json.dumps(summary, indent=2))


def cmd_validate_theory(args) -> None:
    rows = sampler_agreement(args.models, args.draws, seed=args.seed)
    payload = {
        "sampler_agreement": rows,
        "max_ks": max(r["ks_distance"] for r in rows) if rows else None,
        "max_abs_mean_z": max(abs(r["mean_z"]) for r in rows) if rows else None,
    }
    if args.null_replicates:
        null = null_uniformity_study(
            args.null_replicates, n_permutations=args.perms, n_featurizations=args.featurizations,
            seed=args.seed, n_jobs=args.threads,
        )
        payload["null_uniformity"] = null.to_dict()
        if args.out is not None:
            null.write(args.out)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        lines = ["model,d,T_k,ks_distance,mean,expected_mean,mean_z"]
        lines += [f"{r['model']},{r['d']},{r['T_k']},{r['ks_distance']!r},{r['mean']!r},{r['expected_mean']!r},{r['mean_z']!r}" for r in rows]
        (args.out / "sampler_agreement.csv").write_text("\n".join(lines) + "\n")
    _emit(payload, args.out, "theory.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npgc", description="Nonparametric permutation Granger-causality tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="test X -> Y given Z on CSV data")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--perms", type=int, default=400)
    dim = p.add_mutually_exclusive_group()
    dim.add_argument("--dim", type=int, default=100, help="feature dimension N")
    dim.add_argument("--auto-dim", action="store_true", help="choose N on the first k* folds")
    p.add_argument("--k-star", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("select-dim", help="scan the feature dimension on held-aside folds")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--k-star", type=int, default=None)
    p.set_defaults(func=cmd_select_dim)

    p = sub.add_parser("simulate", help="write synthetic two-group datasets")
    p.add_argument("--process", choices=("tar2", "lorenz96"), default="tar2", help="response process")
    p.add_argument("--groups", nargs=2, default=["lorenz96", "tar2"], metavar=("G1", "G2"))
    p.add_argument("--samples", type=int, default=500, help="rows remaining after lagging")
    p.add_argument("--causal-x", type=int, default=2)
    p.add_argument("--causal-z", type=int, default=0)
    p.add_argument("--lag", type=int, default=3)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a simulation study from a config file")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("validate-theory", help="Monte Carlo checks of the null distribution theory")
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--null-replicates", type=int, default=0)
    p.add_argument("--perms", type=int, default=100)
    p.add_argument("--featurizations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_validate_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (DataError, ValueError, OSError, StudyResumeError, SimulationError) as exc:
        print(f"npgc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
