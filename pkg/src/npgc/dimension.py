"""Feature-dimension scan on held-aside folds.

Only the rows of folds ``0..k_star-1`` are read.  For every candidate
dimension ``n = 10, 20, ...`` a fresh bank is drawn and the unpermuted
model is cross-validated within those folds; the dimension with the
smallest mean held-out residual variance wins (ties go to the smaller
``n``).  The permutation test afterwards scores only folds
``k_star..K-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FoldPlan, PreparedPanel, fold_plan
from .estimator import permutation_variances
from .featurize import generate_bank

__all__ = ["DimensionScanResult", "select_feature_dim", "default_k_star", "dimension_grid"]


def default_k_star(K: int) -> int:
    return math.ceil(K / 2)


def dimension_grid(sizes, k_star: int) -> np.ndarray:
    """``10, 20, ..., N_max`` with ``N_max = sum(T_1..T_k*) - 1``."""
    n_max = int(np.sum(sizes[:k_star])) - 1
    return np.arange(10, n_max + 1, 10)


@dataclass(frozen=True)
class DimensionScanResult:
    grid: np.ndarray
    scores: np.ndarray
    chosen: int
    k_star: int
    n_max: int

    def write_csv(self, path) -> None:
        rows = ["n,score"] + [f"{int(n)},{float(s)!r}" for n, s in zip(self.grid, self.scores)]
        Path(path).write_text("\n".join(rows) + "\n")


def select_feature_dim(
    prepared: PreparedPanel,
    *,
    n_featurizations: int = 50,
    n_folds: int = 5,
    k_star: int | None = None,
    seed: int = 0,
    fold_mode: str = "random",
    plan: FoldPlan | None = None,
    n_jobs: int = 1,
) -> DimensionScanResult:
    """Pick the feature dimension minimizing held-out variance on the selection folds.

    Grid points whose dimension reaches the smallest selection-phase
    training size admit no unique least-squares fit; they are reported with
    an infinite score and never chosen.
    """
    if plan is None:
        plan = fold_plan(prepared.n_rows, n_folds, seed, fold_mode)
    K = plan.n_folds
    k_star = default_k_star(K) if k_star is None else int(k_star)
    if not 1 <= k_star < K:
        raise ValueError(f"k_star must satisfy 1 <= k_star < K={K}, got {k_star}")
    grid = dimension_grid(plan.sizes, k_star)
    n_max = int(np.sum(plan.sizes[:k_star])) - 1
    if grid.size == 0:
        raise ValueError(f"insufficient data for dimension scan (N_max={n_max} < 10)")

    keep = np.flatnonzero(plan.assignment < k_star)
    sub = prepared.take_rows(keep)
    sub_plan = FoldPlan(plan.assignment[keep], plan.sizes[:k_star], plan.seed, plan.mode)
    identity = np.arange(sub.n_rows)[None]
    min_train = sub.n_rows - int(np.max(sub_plan.sizes)) if k_star > 1 else 0

    scores = np.full(grid.size, np.inf)
    for i, n in enumerate(grid):
        if k_star == 1 or n >= min_train:
            continue
        bank = generate_bank(sub.dims, int(n), n_featurizations, seed)
        traces = permutation_variances(sub, bank, identity, sub_plan, n_jobs=n_jobs)
        scores[i] = traces[0].mean()
    if not np.isfinite(scores).any():
        raise ValueError(
            f"insufficient data for dimension scan: no grid point below the selection training size {min_train}"
        )
    chosen = int(grid[int(np.argmin(scores))])  # argmin returns the first, i.e. smallest, minimizer
    return DimensionScanResult(grid, scores, chosen, k_star, n_max)
