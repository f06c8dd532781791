"""Permuted out-of-sample variance test.

For every permutation ``m`` of the augmented covariate rows, every
realization ``w``, featurization ``r`` and test fold ``k`` a random-feature
regression is fit on the training rows and scored on the test rows.  The
averaged per-row squared prediction error ``theta[m]`` of the unpermuted
data (``m = 0``) is then ranked within all ``theta``; a low rank means the
ordering of X carries predictive information about Y.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator

from ._random import resolve_seed, stream
from ._validation import RankDeficiencyError, check_alpha, check_positive_int
from .data import FoldPlan, PreparedPanel, TimeSeriesPanel, fold_plan, prepare
from .featurize import ACTIVATIONS, FeaturizerBank, generate_bank

logger = logging.getLogger(__name__)

__all__ = [
    "PermutationSet",
    "PermutationTestResult",
    "generate_permutations",
    "oos_residuals",
    "variance_estimate",
    "quantile_estimate",
    "permutation_variances",
    "npgc_test",
    "NPGC",
]

# permutations processed per batched solve; fixed so results never depend on it
_CHUNK = 25
# Cholesky pivots below this ratio (squared) fall back to the orthogonal path
_COND_FLOOR = 1e-12


@dataclass(frozen=True)
class PermutationSet:
    perms: np.ndarray
    seed: int | None = None

    @property
    def M(self) -> int:
        return self.perms.shape[0]

    @property
    def T(self) -> int:
        return self.perms.shape[1]


def generate_permutations(T: int, M: int, seed: int) -> PermutationSet:
    """Identity first, then ``M - 1`` uniform random permutations (no deduplication)."""
    T = check_positive_int(T, "T", minimum=2)
    M = check_positive_int(M, "M", minimum=2)
    perms = np.empty((M, T), dtype=np.intp)
    perms[0] = np.arange(T)
    for m in range(1, M):
        perms[m] = stream(seed, "permutations", m).permutation(T)
    perms.setflags(write=False)
    return PermutationSet(perms, seed)


# --------------------------------------------------------------------------- #
# Elementary pieces
# --------------------------------------------------------------------------- #


def _ridge_solve(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    N = G.shape[-1]
    lam = 1e-8 * np.trace(G, axis1=-2, axis2=-1) / N
    return np.linalg.solve(G + lam[..., None, None] * np.eye(N), b)


def oos_residuals(H_train, H_test, Y_train, Y_test, *, ridge: bool = False) -> np.ndarray:
    """Test-set residuals ``H_test @ beta - Y_test`` of the least-squares fit on the training rows.

    ``beta`` comes from a Householder QR of ``H_train``.  A numerically
    rank-deficient ``H_train`` raises :class:`RankDeficiencyError` unless
    ``ridge`` is set.
    """
    H_train = np.atleast_2d(np.asarray(H_train, dtype=float))
    H_test = np.atleast_2d(np.asarray(H_test, dtype=float))
    Y_train = np.asarray(Y_train, dtype=float).reshape(H_train.shape[0], -1)
    Y_test = np.asarray(Y_test, dtype=float).reshape(H_test.shape[0], -1)
    n, N = H_train.shape
    if H_test.shape[1] != N or Y_train.shape[1] != Y_test.shape[1]:
        raise ValueError("non-conformable training/test blocks")
    full_rank = n > N
    if full_rank:
        Q, R = np.linalg.qr(H_train)
        s = np.linalg.svd(R, compute_uv=False)
        full_rank = s[-1] > max(n, N) * np.finfo(float).eps * s[0]
    if not full_rank:
        if not ridge:
            raise RankDeficiencyError(f"featurization rank-deficient: training block {n}x{N}")
        beta = _ridge_solve(H_train.T @ H_train, H_train.T @ Y_train)
    else:
        beta = solve_triangular(R, Q.T @ Y_train)
    return H_test @ beta - Y_test


def variance_estimate(residuals) -> float:
    """Average of ``tr(R'R) / T_k`` over a complete ``[w][r][k]`` grid of residual blocks."""
    total, count, shape = 0.0, 0, None
    for w, per_w in enumerate(residuals):
        for r, per_r in enumerate(per_w):
            if shape is None:
                shape = (len(residuals), len(per_w), len(per_r))
            if len(per_w) != shape[1] or len(per_r) != shape[2]:
                raise ValueError(f"residual grid is ragged at realization {w}, featurization {r}")
            for k, R in enumerate(per_r):
                if R is None:
                    raise ValueError(f"missing residual cell (w={w}, r={r}, k={k})")
                R = np.asarray(R, dtype=float).reshape(len(R), -1)
                total += float(np.sum(R * R)) / R.shape[0]
                count += 1
    if count == 0:
        raise ValueError("empty residual grid")
    return total / count


def quantile_estimate(theta: Sequence[float]) -> float:
    """Fraction of ``theta`` at or below ``theta[0]`` (ties count)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 2:
        raise ValueError("need at least two variance estimates")
    return float(np.count_nonzero(theta <= theta[0])) / theta.size


# --------------------------------------------------------------------------- #
# Batched engine
# --------------------------------------------------------------------------- #


def _qr_fold_residuals(H, Y, fold_rows, ridge):
    """Held-out residuals for every fold from a single QR of the full feature matrix.

    With ``H = QR`` and full-data residuals ``e``, the residual of fold ``k``
    under the fit on the remaining rows is ``-(I - Q_k Q_k')^{-1} e_k``.
    """
    mc, T, N = H.shape
    Q, Rf = np.linalg.qr(H)
    s = np.linalg.svd(Rf, compute_uv=False)
    if np.any(s[:, -1] <= max(T, N) * np.finfo(float).eps * s[:, 0]):
        if not ridge:
            raise RankDeficiencyError("featurization rank-deficient on the full sample")
        return None
    E = Y - Q @ (np.swapaxes(Q, 1, 2) @ Y)
    out = []
    for rows in fold_rows:
        Qk = Q[:, rows]
        A = np.eye(len(rows)) - Qk @ np.swapaxes(Qk, 1, 2)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            L = None
        if L is None or np.min(np.diagonal(L, axis1=1, axis2=2)) ** 2 < _COND_FLOOR:
            if not ridge:
                raise RankDeficiencyError("featurization rank-deficient on a training block")
            return None
        out.append(-np.linalg.solve(A, E[:, rows]))
    return out


def _gram_fold_residuals(H, Y, fold_rows):
    """Held-out residuals via Cholesky-checked solves of fold-downdated Gram matrices.

    Returns ``None`` when any training Gram matrix is not safely positive
    definite so the caller can take the orthogonal route.
    """
    HT = np.swapaxes(H, 1, 2)
    G = HT @ H
    b = HT @ Y
    out = []
    for rows in fold_rows:
        Hk = H[:, rows]
        HkT = np.swapaxes(Hk, 1, 2)
        Gk = G - HkT @ Hk
        try:
            L = np.linalg.cholesky(Gk)
        except np.linalg.LinAlgError:
            return None
        piv = np.diagonal(L, axis1=1, axis2=2)
        if np.any((piv.min(axis=1) / piv.max(axis=1)) ** 2 < _COND_FLOOR):
            return None
        beta = np.linalg.solve(Gk, b - HkT @ Y[rows])
        out.append(Hk @ beta - Y[rows])
    return out


def _fold_residuals(H, Y, fold_rows, solver, ridge):
    res = _gram_fold_residuals(H, Y, fold_rows) if solver == "cholesky" else None
    if res is None:
        res = _qr_fold_residuals(H, Y, fold_rows, ridge)
    if res is None:  # ridge requested and the orthogonal check failed
        res = []
        for rows in fold_rows:
            Ht = np.delete(H, rows, axis=1)
            HtT = np.swapaxes(Ht, 1, 2)
            beta = _ridge_solve(HtT @ Ht, HtT @ np.delete(Y, rows, axis=0))
            res.append(H[:, rows] @ beta - Y[rows])
    return res


def _featurization_traces(prepared, W, perms, fold_rows, activation, solver, ridge, x_blocks=None):
    """``tr(R'R) / T_k`` for one weight matrix: array of shape ``(M, phi, n_folds)``."""
    g = ACTIVATIONS[activation]
    c0 = 1 + prepared.dims[0] + prepared.dims[1]
    M = perms.shape[0]
    out = np.empty((M, prepared.phi, len(fold_rows)))
    for w in range(prepared.phi):
        base = prepared.base_design(w) @ W[:c0]
        xblk = prepared.xaug[w] if x_blocks is None else x_blocks[w]
        proj = xblk @ W[c0:]
        Y = prepared.y[w]
        for start in range(0, M, _CHUNK):
            sl = slice(start, min(start + _CHUNK, M))
            H = g(base[None] + proj[perms[sl]])
            for j, R in enumerate(_fold_residuals(H, Y, fold_rows, solver, ridge)):
                out[sl, w, j] = np.einsum("mtd,mtd->m", R, R) / len(fold_rows[j])
    return out


def permutation_variances(
    prepared: PreparedPanel,
    bank: FeaturizerBank,
    perms: np.ndarray,
    plan: FoldPlan,
    test_folds: Sequence[int] | None = None,
    *,
    solver: str = "cholesky",
    ridge: bool = False,
    n_jobs: int = 1,
    x_blocks=None,
) -> np.ndarray:
    """Per-cell traces of shape ``(M, phi, R, n_test_folds)``.

    The mean over the last three axes is the variance estimate per
    permutation.  Work is split by featurization; the result does not
    depend on ``n_jobs``.
    """
    if solver not in ("cholesky", "qr"):
        raise ValueError(f"unknown solver {solver!r}")
    perms = np.asarray(perms)
    if perms.ndim != 2 or perms.shape[1] != prepared.n_rows:
        raise ValueError(f"permutations must have shape (M, {prepared.n_rows})")
    if bank.n_inputs != prepared.n_inputs:
        raise ValueError(f"bank expects {bank.n_inputs} design columns, panel has {prepared.n_inputs}")
    folds = range(plan.n_folds) if test_folds is None else list(test_folds)
    fold_rows = [plan.test_rows(k) for k in folds]
    if not fold_rows:
        raise ValueError("no test folds selected")
    min_train = prepared.n_rows - max(len(r) for r in fold_rows)
    if bank.n_features >= min_train:
        raise ValueError(
            f"feature dimension N={bank.n_features} must be below the smallest training size {min_train}"
        )
    job = delayed(_featurization_traces)
    cells = Parallel(n_jobs=n_jobs, prefer="threads")(
        job(prepared, W, perms, fold_rows, bank.activation, solver, ridge, x_blocks) for W in bank.weights
    )
    return np.stack(cells, axis=2)


# --------------------------------------------------------------------------- #
# Full test
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PermutationTestResult:
    theta: np.ndarray
    q_hat: float
    alpha: float
    config: dict = field(default_factory=dict)
    trace: np.ndarray | None = None

    @property
    def causal(self) -> bool:
        return self.q_hat <= self.alpha

    @property
    def decision(self) -> str:
        return "causal" if self.causal else "not-causal"

    def to_dict(self) -> dict:
        return {
            "method": "NPGC",
            "decision": self.decision,
            "q_hat": self.q_hat,
            "alpha": self.alpha,
            "theta_unpermuted": float(self.theta[0]),
            "config": self.config,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def write_theta_csv(self, path) -> None:
        lines = ["m,theta"] + [f"{m + 1},{float(t)!r}" for m, t in enumerate(self.theta)]
        Path(path).write_text("\n".join(lines) + "\n")


def npgc_test(
    prepared: PreparedPanel,
    *,
    n_permutations: int = 400,
    n_featurizations: int = 50,
    n_folds: int = 5,
    n_features: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    fold_mode: str = "random",
    test_folds: Sequence[int] | None = None,
    permutations: np.ndarray | None = None,
    bank: FeaturizerBank | None = None,
    plan: FoldPlan | None = None,
    activation: str = "tanh",
    solver: str = "cholesky",
    ridge: bool = False,
    n_jobs: int = 1,
    keep_trace: bool = False,
) -> PermutationTestResult:
    """Run the permuted Granger causality test on a prepared panel.

    Only the augmented covariate rows are permuted; intercept, response
    lags and conditioning set keep their order.  One bank of weight
    matrices and one fold plan serve every permutation and realization.
    ``test_folds`` restricts scoring to a subset of folds (used after
    automatic feature-dimension selection).
    """
    alpha = check_alpha(alpha)
    T = prepared.n_rows
    if permutations is None:
        perms = generate_permutations(T, n_permutations, seed).perms
    else:
        perms = np.asarray(permutations, dtype=np.intp)
        if perms.shape[0] < 2:
            raise ValueError("need at least two permutations")
    if bank is None:
        bank = generate_bank(prepared.dims, n_features, n_featurizations, seed, activation)
    if plan is None:
        plan = fold_plan(T, n_folds, seed, fold_mode)
    traces = permutation_variances(
        prepared, bank, perms, plan, test_folds, solver=solver, ridge=ridge, n_jobs=n_jobs
    )
    theta = traces.mean(axis=(1, 2, 3))
    config = {
        "lag": prepared.lag,
        "z_lag": prepared.z_lag,
        "M": int(perms.shape[0]),
        "R": len(bank),
        "K": plan.n_folds,
        "N": bank.n_features,
        "test_folds": list(range(plan.n_folds) if test_folds is None else test_folds),
        "fold_mode": plan.mode,
        "phi": prepared.phi,
        "T": T,
        "seeds": {"permutations": seed, "bank": bank.seed, "folds": plan.seed},
        "solver": solver,
        "ridge": ridge,
    }
    return PermutationTestResult(theta, quantile_estimate(theta), alpha, config, traces if keep_trace else None)


class NPGC(BaseEstimator):
    """Nonlinear permuted Granger causality test as an sklearn-style estimator.

    ``fit(X, y, Z)`` runs the test of whether the covariate block ``X``
    Granger-causes ``y`` given ``Z`` and the lags of ``y``.  Arrays are
    ``(T_raw, columns)``; pass lists of arrays for repeated realizations.

    Parameters
    ----------
    lag : int, default 3
    n_permutations : int, default 400
    n_featurizations : int, default 50
    n_folds : int, default 5
    n_features : int or "auto", default 100
        ``"auto"`` scans dimensions on the first ``k_star`` folds and tests
        on the rest.
    k_star : int, optional
        Selection folds for ``n_features="auto"``; defaults to ``ceil(K/2)``.
    alpha : float, default 0.05
    fold_mode : {"random", "contiguous"}
    z_lag : int, default 1
    solver : {"cholesky", "qr"}
    n_jobs : int, default 1
    random_state : int, optional

    Attributes
    ----------
    theta_ : ndarray of shape (M,)
    quantile_ : float
    causal_ : bool
    result_ : PermutationTestResult
    scan_ : DimensionScanResult or None
    """

    def __init__(
        self,
        lag=3,
        n_permutations=400,
        n_featurizations=50,
        n_folds=5,
        n_features=100,
        k_star=None,
        alpha=0.05,
        fold_mode="random",
        z_lag=1,
        solver="cholesky",
        n_jobs=1,
        random_state=None,
    ):
        self.lag = lag
        self.n_permutations = n_permutations
        self.n_featurizations = n_featurizations
        self.n_folds = n_folds
        self.n_features = n_features
        self.k_star = k_star
        self.alpha = alpha
        self.fold_mode = fold_mode
        self.z_lag = z_lag
        self.solver = solver
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, X, y, Z=None):
        panel = TimeSeriesPanel.from_arrays(X, y, Z)
        prepared = prepare(panel, self.lag, z_lag=self.z_lag, min_rows=self.n_folds + 1)
        seed = resolve_seed(self.random_state)
        plan = fold_plan(prepared.n_rows, self.n_folds, seed, self.fold_mode)
        test_folds, self.scan_ = None, None
        n_features = self.n_features
        if n_features == "auto":
            from .dimension import default_k_star, select_feature_dim

            k_star = default_k_star(self.n_folds) if self.k_star is None else self.k_star
            self.scan_ = select_feature_dim(
                prepared, n_featurizations=self.n_featurizations, n_folds=self.n_folds, k_star=k_star,
                seed=seed, plan=plan, n_jobs=self.n_jobs,
            )
            n_features = self.scan_.chosen
            test_folds = range(k_star, self.n_folds)
        self.result_ = npgc_test(
            prepared,
            n_permutations=self.n_permutations,
            n_featurizations=self.n_featurizations,
            n_features=n_features,
            alpha=self.alpha,
            seed=seed,
            plan=plan,
            test_folds=test_folds,
            solver=self.solver,
            n_jobs=self.n_jobs,
        )
        self.theta_ = self.result_.theta
        self.quantile_ = self.result_.q_hat
        self.causal_ = self.result_.causal
        self.n_features_ = n_features
        return self
