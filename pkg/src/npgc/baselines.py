"""In-sample ratio comparators: restricted/unrestricted (RU) and Gaussian noise substitution (GNS).

For each random featurization the residual variance of an in-sample fit
with X removed (RU: X block zeroed; GNS: X replaced by white noise) is
divided by that of the unrestricted fit.  The mean ratio over
featurizations is referred to its normal approximation under the null.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from ._random import resolve_seed, stream
from ._validation import RankDeficiencyError, check_alpha
from .data import PreparedPanel, TimeSeriesPanel, prepare
from .featurize import featurize, generate_bank

__all__ = [
    "RatioTestResult",
    "null_moments",
    "residual_variance",
    "ratio_tests",
    "ru_test",
    "gns_test",
    "RatioTest",
]

VARIANTS = ("RU", "GNS")


def null_moments(T: int, N: int, R: int) -> tuple[float, float]:
    """Mean and variance of the averaged F(T-N, T-N) ratio over ``R`` featurizations."""
    nu = T - N
    if nu <= 4:
        raise ValueError(f"T - N = {nu} must exceed 4 for the null variance to exist")
    mean = nu / (nu - 2)
    var = 4 * nu**2 * (nu - 1) / (R * nu * (nu - 2) ** 2 * (nu - 4))
    return mean, var


def residual_variance(H: np.ndarray, Y: np.ndarray) -> float:
    """``tr(U'U) / T`` of the in-sample least-squares fit of ``Y`` on ``H``."""
    T, N = H.shape
    Q, R = np.linalg.qr(H)
    if np.min(np.abs(np.diag(R))) <= max(T, N) * np.finfo(float).eps * np.max(np.abs(np.diag(R))):
        raise RankDeficiencyError("featurization rank-deficient")
    U = Y - Q @ (Q.T @ Y)
    return float(np.sum(U * U)) / T


@dataclass(frozen=True)
class RatioTestResult:
    variant: str
    statistic: float
    ratios: np.ndarray
    unrestricted: np.ndarray
    null_mean: float
    null_var: float
    alpha: float
    config: dict = field(default_factory=dict)

    @property
    def z(self) -> float:
        return (self.statistic - self.null_mean) / np.sqrt(self.null_var)

    @property
    def quantile(self) -> float:
        """Upper-tail null probability; small when the restricted variance is inflated."""
        return float(stats.norm.sf(self.z))

    @property
    def causal(self) -> bool:
        return self.quantile <= self.alpha

    @property
    def decision(self) -> str:
        return "causal" if self.causal else "not-causal"

    def to_dict(self) -> dict:
        return {
            "method": self.variant,
            "decision": self.decision,
            "q_hat": self.quantile,
            "alpha": self.alpha,
            "statistic": self.statistic,
            "null_mean": self.null_mean,
            "null_var": self.null_var,
            "config": self.config,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def ratio_tests(
    prepared: PreparedPanel,
    *,
    n_featurizations: int = 1000,
    n_features: int = 100,
    alpha: float = 0.05,
    seed: int = 0,
    variants=VARIANTS,
) -> dict[str, RatioTestResult]:
    """Run the requested ratio variants, sharing the unrestricted fit per featurization.

    With several realizations every ``(realization, featurization)`` pair
    contributes one ratio.
    """
    alpha = check_alpha(alpha)
    variants = tuple(variants)
    if not set(variants) <= set(VARIANTS):
        raise ValueError(f"variants must be among {VARIANTS}")
    T = prepared.n_rows
    mean, var = null_moments(T, n_features, n_featurizations * prepared.phi)
    bank = generate_bank(prepared.dims, n_features, n_featurizations, seed)
    unres = np.empty((prepared.phi, n_featurizations))
    restricted = {v: np.empty_like(unres) for v in variants}
    for w in range(prepared.phi):
        Y = prepared.y[w]
        zeros = np.zeros_like(prepared.xaug[w])
        for r, W in enumerate(bank.weights):
            unres[w, r] = residual_variance(featurize(prepared.design(w), W), Y)
            if "RU" in restricted:
                restricted["RU"][w, r] = residual_variance(featurize(prepared.design(w, x_block=zeros), W), Y)
            if "GNS" in restricted:
                E = stream(seed, "noise", w, r).standard_normal(zeros.shape)
                restricted["GNS"][w, r] = residual_variance(featurize(prepared.design(w, x_block=E), W), Y)
    config = {"R": n_featurizations, "N": n_features, "T": T, "phi": prepared.phi, "lag": prepared.lag, "seed": seed}
    out = {}
    for v in variants:
        ratios = (restricted[v] / unres).ravel()
        out[v] = RatioTestResult(v, float(ratios.mean()), ratios, unres.ravel(), mean, var, alpha, dict(config))
    return out


def ru_test(prepared: PreparedPanel, **kwargs) -> RatioTestResult:
    return ratio_tests(prepared, variants=("RU",), **kwargs)["RU"]


def gns_test(prepared: PreparedPanel, **kwargs) -> RatioTestResult:
    return ratio_tests(prepared, variants=("GNS",), **kwargs)["GNS"]


class RatioTest(BaseEstimator):
    """sklearn-style wrapper around :func:`ratio_tests` for one variant."""

    def __init__(self, variant="GNS", lag=3, n_featurizations=1000, n_features=100, alpha=0.05,
                 z_lag=1, random_state=None):
        self.variant = variant
        self.lag = lag
        self.n_featurizations = n_featurizations
        self.n_features = n_features
        self.alpha = alpha
        self.z_lag = z_lag
        self.random_state = random_state

    def fit(self, X, y, Z=None):
        prepared = prepare(TimeSeriesPanel.from_arrays(X, y, Z), self.lag, z_lag=self.z_lag)
        self.result_ = ratio_tests(
            prepared,
            n_featurizations=self.n_featurizations,
            n_features=self.n_features,
            alpha=self.alpha,
            seed=resolve_seed(self.random_state),
            variants=(self.variant,),
        )[self.variant]
        self.statistic_ = self.result_.statistic
        self.quantile_ = self.result_.quantile
        self.causal_ = self.result_.causal
        return self
