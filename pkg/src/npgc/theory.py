"""Monte Carlo checks of the distribution theory under Gaussian model errors.

The held-out residual block of one fold is matrix normal,
``R ~ MN(0, Phi + I, S)``, where ``Phi`` is the test-block leverage
``H_k (H_-k' H_-k)^{-1} H_k'`` and ``S`` the error covariance.  Its trace
``tr(R'R)`` is a generalized chi-square variable; three samplers are
provided:

* ``"direct"`` draws ``R = (Phi + I)^{1/2} V S^{1/2}``;
* ``"spectral"`` draws ``sum_ij lambda_i mu_j chi2_1`` with ``lambda``,
  ``mu`` the eigenvalues of ``Phi + I`` and ``S`` (exact in law);
* ``"pairwise"`` expands the quadratic form entrywise over the
  ``(time, response)`` ordering with independent chi-square terms for
  each cross product.  It matches the first two moments only; the
  comparison against ``"direct"`` is reported, not assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from ._random import stream
from .data import TimeSeriesPanel, fold_plan, prepare
from .estimator import npgc_test, permutation_variances
from .featurize import generate_bank

__all__ = [
    "SyntheticErrorModel",
    "random_error_model",
    "sample_generalized_chisq",
    "pairwise_weights",
    "NullStudyReport",
    "synthetic_panel",
    "null_uniformity_study",
    "consistency_trend",
    "sampler_agreement",
]


def _sqrtm_psd(A: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(A)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True)
class SyntheticErrorModel:
    S: np.ndarray
    Phi: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        for name, A in (("S", S), ("Phi", Phi)):
            if A.shape[0] != A.shape[1] or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
                raise ValueError(f"{name} must be a symmetric square matrix")
        tol = 1e-10 * max(1.0, np.abs(Phi).max())
        if np.linalg.eigvalsh(Phi).min() < -tol:
            raise ValueError("Phi must be positive semidefinite")
        if np.linalg.eigvalsh(S).min() <= 0:
            raise ValueError("S must be positive definite")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Phi", Phi)

    @property
    def d(self) -> int:
        return self.S.shape[0]

    @property
    def T_k(self) -> int:
        return self.Phi.shape[0]

    @property
    def mean(self) -> float:
        """``E tr(R'R) = tr(Phi + I) tr(S)``."""
        return float(np.trace(self.Phi + np.eye(self.T_k)) * np.trace(self.S))

    @property
    def variance(self) -> float:
        """``2 tr((Phi + I)^2) tr(S^2)``."""
        A = self.Phi + np.eye(self.T_k)
        return float(2.0 * np.trace(A @ A) * np.trace(self.S @ self.S))


def random_error_model(d: int, T_k: int, rng: np.random.Generator, n_features: int | None = None) -> SyntheticErrorModel:
    """Leverage from a random tanh feature matrix and a random SPD covariance."""
    N = n_features or max(1, min(4, T_k))
    n_train = N + 2 + int(rng.integers(0, 3 * N + 1))
    H_train = np.tanh(rng.standard_normal((n_train, N)))
    H_test = np.tanh(rng.standard_normal((T_k, N)))
    Phi = H_test @ np.linalg.solve(H_train.T @ H_train, H_test.T)
    Phi = 0.5 * (Phi + Phi.T)
    B = rng.standard_normal((d, d))
    S = B @ B.T + 0.1 * np.eye(d)
    return SyntheticErrorModel(S, Phi)


def pairwise_weights(model: SyntheticErrorModel):
    """Diagonal and strictly-lower weights of ``vec(R)`` ordered time-major.

    Entry ``i`` (1-based) sits at time ``ceil(i/d)`` and response
    ``i mod d`` with a residue of 0 read as ``d``.  The weight of pair
    ``(i, j)`` is ``(phi_{i'j'} + [i' = j']) s_{i*j*}``.
    """
    d, Tk = model.d, model.T_k
    n = Tk * d
    i = np.arange(1, n + 1)
    t_idx = (i - 1) // d  # ceil(i/d) - 1
    r_idx = (i % d - 1) % d  # residue 0 -> d, then 0-based
    A = model.Phi + np.eye(Tk)
    Delta = A[np.ix_(t_idx, t_idx)] * model.S[np.ix_(r_idx, r_idx)]
    lower = np.tril_indices(n, -1)
    return np.diag(Delta).copy(), Delta[lower]


def sample_generalized_chisq(model: SyntheticErrorModel, draws: int, seed: int, method: str = "direct") -> np.ndarray:
    """Draws of ``tr(R'R)`` for the given error model."""
    keys = {"direct": 0, "spectral": 1, "pairwise": 2}
    if method not in keys:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(keys)}")
    rng = stream(seed, "theory", keys[method])
    Tk, d = model.T_k, model.d
    if method == "direct":
        left = _sqrtm_psd(model.Phi + np.eye(Tk))
        right = _sqrtm_psd(model.S)
        out = np.empty(draws)
        step = max(1, 2_000_000 // (Tk * d))
        for start in range(0, draws, step):
            n = min(step, draws - start)
            R = left @ rng.standard_normal((n, Tk, d)) @ right
            out[start : start + n] = np.einsum("ntd,ntd->n", R, R)
        return out
    if method == "spectral":
        w = np.outer(np.linalg.eigvalsh(model.Phi + np.eye(Tk)), np.linalg.eigvalsh(model.S)).ravel()
        return _weighted_chisq(rng, w, draws)
    diag, off = pairwise_weights(model)
    total = _weighted_chisq(rng, diag, draws)
    if off.size:
        total += _weighted_chisq(rng, off, draws) - _weighted_chisq(rng, off, draws)
    return total


def _weighted_chisq(rng, weights, draws):
    out = np.zeros(draws)
    step = max(1, 2_000_000 // max(1, weights.size))
    for start in range(0, draws, step):
        n = min(step, draws - start)
        out[start : start + n] = rng.chisquare(1, size=(n, weights.size)) @ weights
    return out


def sampler_agreement(
    n_models: int = 20,
    draws: int = 100_000,
    *,
    seed: int = 0,
    max_d: int = 3,
    max_T_k: int = 8,
    methods=("direct", "spectral"),
) -> list[dict]:
    """Cross-check two samplers and the mean on randomized error models.

    For each model the two-sample KS distance between ``methods`` is
    reported together with the standardized error of the first sampler's
    mean against ``tr(Phi + I) tr(S)``.
    """
    a, b = methods
    rows = []
    for i in range(n_models):
        rng = stream(seed, "theory", 30, i)
        d = int(rng.integers(1, max_d + 1))
        T_k = int(rng.integers(1, max_T_k + 1))
        model = random_error_model(d, T_k, rng)
        x = sample_generalized_chisq(model, draws, int(rng.integers(2**62)), a)
        y = sample_generalized_chisq(model, draws, int(rng.integers(2**62)), b)
        ks = stats.ks_2samp(x, y)
        z = (x.mean() - model.mean) / (x.std(ddof=1) / np.sqrt(draws))
        rows.append({
            "model": i, "d": d, "T_k": T_k, "methods": [a, b],
            "ks_distance": float(ks.statistic), "mean": float(x.mean()),
            "expected_mean": model.mean, "mean_z": float(z),
        })
    return rows


# --------------------------------------------------------------------------- #
# Studies on synthetic panels
# --------------------------------------------------------------------------- #


def synthetic_panel(
    T_raw: int,
    rng: np.random.Generator,
    *,
    phi: int = 1,
    p_base: int = 3,
    q: int = 2,
    signal: float = 0.0,
    noise_sd: float = 1.0,
) -> TimeSeriesPanel:
    """Response with Gaussian errors driven by its own lag, Z and (if ``signal``) X.

    ``y_t = 0.5 tanh(y_{t-1}) + 0.3 z_{1,t-1} + signal * tanh(x_{1,t-1}) + e_t``
    with X and Z independent Gaussian AR(1) series.
    """
    X, Y, Z = [], [], []
    for _ in range(phi):
        x = _ar1(rng, T_raw, p_base)
        z = _ar1(rng, T_raw, max(q, 1))
        e = noise_sd * rng.standard_normal(T_raw)
        y = np.zeros(T_raw)
        for t in range(1, T_raw):
            y[t] = 0.5 * np.tanh(y[t - 1]) + 0.3 * z[t - 1, 0] + signal * np.tanh(x[t - 1, 0]) + e[t]
        X.append(x)
        Y.append(y[:, None])
        Z.append(z[:, :q])
    return TimeSeriesPanel.from_arrays(X, Y, Z)


def _ar1(rng, T, k, coef=0.5):
    e = rng.standard_normal((T, k))
    out = np.empty((T, k))
    out[0] = e[0] / np.sqrt(1 - coef**2)
    for t in range(1, T):
        out[t] = coef * out[t - 1] + e[t]
    return out


@dataclass(frozen=True)
class NullStudyReport:
    q_values: np.ndarray
    ks_distance: float
    ks_pvalue: float
    level: float
    alphas: np.ndarray
    rejection_rates: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def sufficient(self) -> bool:
        return self.q_values.size >= 2

    @property
    def passed(self) -> bool:
        return self.sufficient and self.ks_pvalue >= self.level

    def to_dict(self) -> dict:
        return {
            "replicates": int(self.q_values.size),
            "status": "ok" if self.sufficient else "insufficient replicates",
            "ks_distance": self.ks_distance,
            "ks_pvalue": self.ks_pvalue,
            "level": self.level,
            "passed": self.passed,
            "curve": [{"alpha": float(a), "rejection_rate": float(r)} for a, r in zip(self.alphas, self.rejection_rates)],
            "config": self.config,
        }

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "null_uniformity.json").write_text(json.dumps(self.to_dict(), indent=2))
        q = np.sort(self.q_values)
        ecdf = np.arange(1, q.size + 1) / max(q.size, 1)
        lines = ["q_hat,ecdf"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(q, ecdf)]
        (d / "null_uniformity_ecdf.csv").write_text("\n".join(lines) + "\n")


def null_uniformity_study(
    replicates: int = 200,
    *,
    T: int = 300,
    lag: int = 2,
    n_permutations: int = 100,
    n_featurizations: int = 10,
    n_features: int = 30,
    n_folds: int = 5,
    level: float = 0.01,
    seed: int = 0,
    alphas=None,
    n_jobs: int = 1,
) -> NullStudyReport:
    """Distribution of the quantile statistic over independent null panels."""
    alphas = np.round(np.arange(1, 26) / 100, 2) if alphas is None else np.asarray(alphas, dtype=float)
    qs = np.empty(replicates)
    for i in range(replicates):
        panel = synthetic_panel(T + lag, stream(seed, "theory", 10, i))
        prepared = prepare(panel, lag)
        qs[i] = npgc_test(
            prepared,
            n_permutations=n_permutations,
            n_featurizations=n_featurizations,
            n_features=n_features,
            n_folds=n_folds,
            seed=int(stream(seed, "theory", 11, i).integers(2**62)),
            n_jobs=n_jobs,
        ).q_hat
    if replicates >= 1:
        ks = stats.kstest(qs, "uniform")
        ks_d, ks_p = float(ks.statistic), float(ks.pvalue)
    else:
        ks_d, ks_p = float("nan"), float("nan")
    rates = np.array([np.mean(qs <= a) if qs.size else np.nan for a in alphas])
    config = {
        "replicates": replicates, "T": T, "lag": lag, "M": n_permutations, "R": n_featurizations,
        "N": n_features, "K": n_folds, "seed": seed,
    }
    return NullStudyReport(qs, ks_d, ks_p, level, alphas, rates, config)


def consistency_trend(
    phis=(1, 4, 16),
    replicates: int = 200,
    *,
    T: int = 150,
    lag: int = 1,
    n_featurizations: int = 4,
    n_features: int = 15,
    n_folds: int = 5,
    seed: int = 0,
) -> dict:
    """Sampling spread of the unpermuted variance estimate as the number of realizations grows.

    Returns the standard deviations per ``phi`` and the least-squares slope
    of ``log sd`` on ``log phi``.
    """
    sds = []
    for phi in phis:
        vals = np.empty(replicates)
        for i in range(replicates):
            panel = synthetic_panel(T + lag, stream(seed, "theory", 20, phi, i), phi=phi)
            prepared = prepare(panel, lag)
            bank = generate_bank(prepared.dims, n_features, n_featurizations, seed)
            plan = fold_plan(prepared.n_rows, n_folds, seed)
            identity = np.arange(prepared.n_rows)[None]
            vals[i] = permutation_variances(prepared, bank, identity, plan).mean()
        sds.append(float(np.std(vals, ddof=1)))
    slope = float(np.polyfit(np.log(phis), np.log(sds), 1)[0])
    return {"phis": list(phis), "sd": sds, "slope": slope}
