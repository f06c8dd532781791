"""Simulation-study runner: cell grid, paired method runs, outcome proportions and plot data.

A study is described by a small key-value file::

    [study]
    profile = desk                 # desk | paper
    methods = NPGC, GNS, RU
    response_processes = tar2, lorenz96
    groups = lorenz96, tar2        # processes of series 1-6 and 7-12
    sample_sizes = 250, 500, 1000
    causal_x = 0, 2
    causal_z = 0, 2
    seed = 2024

Any profile value (``replicates``, ``n_permutations``, ``n_featurizations``,
``baseline_featurizations``) and ``n_features``, ``n_folds``, ``lag``,
``alpha``, ``fold_mode``, ``z_lag`` may be overridden in the file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from ._random import stream
from .baselines import ratio_tests
from .data import TimeSeriesPanel, prepare
from .estimator import npgc_test
from .simulate import StudyDesign, assemble_study_dataset

logger = logging.getLogger(__name__)

__all__ = [
    "PROFILES",
    "StudyConfig",
    "StudyReport",
    "StudyResumeError",
    "run_study",
    "run_replicate",
    "emit_plot_data",
    "DEFAULT_ALPHAS",
]

METHODS = ("NPGC", "RU", "GNS")

PROFILES = {
    "desk": {"replicates": 50, "n_permutations": 100, "n_featurizations": 10, "baseline_featurizations": 1000},
    "paper": {"replicates": 200, "n_permutations": 400, "n_featurizations": 50, "baseline_featurizations": 1000},
}

DEFAULT_ALPHAS = tuple(np.round(np.arange(1, 26) / 100, 2).tolist())


class StudyResumeError(RuntimeError):
    """Existing artifacts were produced by a different configuration."""


@dataclass(frozen=True)
class StudyConfig:
    profile: str = "desk"
    methods: tuple = ("NPGC",)
    response_processes: tuple = ("tar2", "lorenz96")
    groups: tuple = ("lorenz96", "tar2")
    sample_sizes: tuple = (250, 500, 1000)
    causal_x: tuple = (0, 2)
    causal_z: tuple = (0, 2)
    replicates: int | None = None
    n_permutations: int | None = None
    n_featurizations: int | None = None
    baseline_featurizations: int | None = None
    n_features: int = 100
    n_folds: int = 5
    lag: int = 3
    z_lag: int = 1
    alpha: float = 0.05
    fold_mode: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")
        for name, value in PROFILES[self.profile].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

    @classmethod
    def from_mapping(cls, values: dict) -> "StudyConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown study keys: {sorted(unknown)}")
        parsed = {}
        for key, raw in values.items():
            default = known[key].default
            if isinstance(default, tuple):
                items = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else list(raw)
                items = [s for s in items if s != ""]
                parsed[key] = tuple(int(s) if isinstance(s, str) and s.lstrip("-").isdigit() else s for s in items)
            elif key in ("profile", "fold_mode"):
                parsed[key] = str(raw)
            elif key == "alpha":
                parsed[key] = float(raw)
            else:
                parsed[key] = int(raw)
        return cls(**parsed)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        text = Path(path).read_text()
        if not text.lstrip().startswith("["):
            text = "[study]\n" + text
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read_string(text)
        if "study" not in parser:
            raise ValueError(f"{path}: missing [study] section")
        return cls.from_mapping(dict(parser["study"]))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def cells(self) -> list[StudyDesign]:
        out = []
        for proc in self.response_processes:
            for T in self.sample_sizes:
                for cx in self.causal_x:
                    for cz in self.causal_z:
                        c = len(out)
                        cell_seed = int(stream(self.seed, "design", 10_000, c).integers(2**62))
                        out.append(StudyDesign(proc, int(T), int(cx), int(cz), self.lag, tuple(self.groups), cell_seed))
        return out


def run_replicate(config: StudyConfig, cell: int, design: StudyDesign, replicate: int) -> dict:
    """Simulate one dataset and run every requested method on it."""
    t0 = time.perf_counter()
    ds = assemble_study_dataset(design, replicate)
    prepared = prepare(TimeSeriesPanel.from_arrays(ds.X, ds.Y, ds.Z), config.lag, z_lag=config.z_lag)
    method_seed = int(stream(config.seed, "permutations", 10_000, cell, replicate).integers(2**62))
    results = {}
    if "NPGC" in config.methods:
        r = npgc_test(
            prepared,
            n_permutations=config.n_permutations,
            n_featurizations=config.n_featurizations,
            n_folds=config.n_folds,
            n_features=config.n_features,
            alpha=config.alpha,
            seed=method_seed,
            fold_mode=config.fold_mode,
        )
        results["NPGC"] = {"q_hat": r.q_hat, "causal": r.causal, "theta": r.theta.tolist()}
    baselines = [m for m in ("RU", "GNS") if m in config.methods]
    if baselines:
        rr = ratio_tests(
            prepared,
            n_featurizations=config.baseline_featurizations,
            n_features=config.n_features,
            alpha=config.alpha,
            seed=method_seed,
            variants=baselines,
        )
        for m, res in rr.items():
            results[m] = {"q_hat": res.quantile, "causal": res.causal, "statistic": res.statistic}
    return {
        "cell": cell,
        "replicate": replicate,
        "process": design.response_process,
        "T": design.n_samples,
        "causal_x": design.n_causal_x,
        "causal_z": design.n_causal_z,
        "gc": design.gc_label,
        "indices": ds.indices,
        "sha256": ds.digest(),
        "results": results,
        "seconds": time.perf_counter() - t0,
    }


def _proportions(decisions: np.ndarray, gc: np.ndarray) -> dict:
    n1, n0 = int(np.sum(gc == 1)), int(np.sum(gc == 0))
    d1 = decisions[gc == 1]
    d0 = decisions[gc == 0]
    return {
        "N1": n1,
        "N0": n0,
        "rho1": float(d1.mean()) if n1 else None,
        "rho01": float(1 - d1.mean()) if n1 else None,
        "rho10": float(d0.mean()) if n0 else None,
        "rho0": float(1 - d0.mean()) if n0 else None,
    }


@dataclass
class StudyReport:
    config: dict
    methods: tuple
    records: list
    runtime: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, config: dict, methods, records, runtime=None) -> "StudyReport":
        records = sorted(records, key=lambda r: (r["cell"], r["replicate"]))
        return cls(config, tuple(methods), records, runtime or {})

    def _select(self, **match):
        return [r for r in self.records if all(r[k] == v for k, v in match.items())]

    def _table(self, group_keys):
        groups = {}
        for r in self.records:
            groups.setdefault(tuple(r[k] for k in group_keys), []).append(r)
        rows = []
        for key, recs in sorted(groups.items()):
            gc = np.array([r["gc"] for r in recs])
            row = dict(zip(group_keys, key))
            row["replicates"] = len(recs)
            for m in self.methods:
                dec = np.array([bool(r["results"][m]["causal"]) for r in recs], dtype=float)
                row[m] = _proportions(dec, gc)
            rows.append(row)
        return rows

    def cell_table(self) -> list[dict]:
        return self._table(("cell", "process", "T", "causal_x", "causal_z"))

    def setting_table(self) -> list[dict]:
        """Outcome proportions per (response process, T), pooling causal counts."""
        return self._table(("process", "T"))

    def q_values(self, method: str, gc: int | None = 0) -> np.ndarray:
        recs = self.records if gc is None else [r for r in self.records if r["gc"] == gc]
        return np.array([r["results"][method]["q_hat"] for r in recs], dtype=float)

    def type1_curve(self, method: str, alphas=DEFAULT_ALPHAS) -> np.ndarray:
        q = self.q_values(method, gc=0)
        return np.array([np.mean(q <= a) if q.size else np.nan for a in alphas])

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "methods": list(self.methods),
            "cells": self.cell_table(),
            "settings": self.setting_table(),
            "records": self.records,
            "runtime": self.runtime,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def run_study(config: StudyConfig, out_dir=None, n_jobs: int = 1) -> StudyReport:
    """Run every cell of the grid; resumable through per-replicate artifacts in ``out_dir``."""
    t0 = time.perf_counter()
    cells = config.cells()
    if config.replicates <= 0:
        warnings.warn("zero replicates requested; every cell is omitted from the report", stacklevel=2)
    rep_dir = None
    done: dict[tuple, dict] = {}
    if out_dir is not None:
        out = Path(out_dir)
        rep_dir = out / "replicates"
        rep_dir.mkdir(parents=True, exist_ok=True)
        manifest = out / "manifest.json"
        if manifest.exists():
            prior = json.loads(manifest.read_text())
            if prior.get("fingerprint") != config.fingerprint():
                raise StudyResumeError(f"{out} holds a run with a different configuration; refusing to resume")
        else:
            manifest.write_text(json.dumps({"fingerprint": config.fingerprint(), "config": config.to_dict()}, indent=2))
        for f in sorted(rep_dir.glob("c*_r*.json")):
            rec = json.loads(f.read_text())
            done[(rec["cell"], rec["replicate"])] = rec

    todo = [
        (c, design, i)
        for c, design in enumerate(cells)
        for i in range(config.replicates)
        if (c, i) not in done
    ]
    logger.info("study: %d replicates to run, %d resumed", len(todo), len(done))

    def _job(c, design, i):
        rec = run_replicate(config, c, design, i)
        if rep_dir is not None:
            # write-then-rename so an interrupted run never leaves a truncated artifact
            final = rep_dir / f"c{c:03d}_r{i:04d}.json"
            tmp = final.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(rec))
            os.replace(tmp, final)
        return rec

    if n_jobs == 1:
        fresh = [_job(*args) for args in todo]
    else:
        fresh = Parallel(n_jobs=n_jobs)(delayed(_job)(*args) for args in todo)
    records = list(done.values()) + fresh
    runtime = {"seconds": time.perf_counter() - t0, "resumed": len(done), "ran": len(fresh), "n_jobs": n_jobs}
    return StudyReport.from_records(config.to_dict(), config.methods, records, runtime)


def emit_plot_data(report: StudyReport, out_dir, alphas=DEFAULT_ALPHAS, bins: int = 20) -> dict:
    """Write per-method Type-1 curves and null quantile histograms as CSV plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve_rows = ["method,alpha,type1_rate,n_null"]
    hist_rows = ["method,bin_lo,bin_hi,count"]
    edges = np.linspace(0.0, 1.0, bins + 1)
    for m in report.methods:
        q = report.q_values(m, gc=0)
        for a, rate in zip(alphas, report.type1_curve(m, alphas)):
            curve_rows.append(f"{m},{float(a)!r},{float(rate)!r},{q.size}")
        counts, _ = np.histogram(q, bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            hist_rows.append(f"{m},{float(lo)!r},{float(hi)!r},{int(c)}")
    paths = {"type1_curves": out / "type1_curves.csv", "q_histograms": out / "q_histograms.csv"}
    paths["type1_curves"].write_text("\n".join(curve_rows) + "\n")
    paths["q_histograms"].write_text("\n".join(hist_rows) + "\n")
    manifest = {
        "methods": list(report.methods),
        "alphas": list(alphas),
        "bins": bins,
        "files": {k: p.name for k, p in paths.items()},
        "rows": {"type1_curves": len(curve_rows) - 1, "q_histograms": len(hist_rows) - 1},
    }
    paths["manifest"] = out / "plot_manifest.json"
    paths["manifest"].write_text(json.dumps(manifest, indent=2))
    return paths
