"""Random one-layer feed-forward featurization.

A bank holds ``R`` fixed Gaussian weight matrices.  The first row of each
matrix multiplies the intercept column, so ``featurize`` expects designs
that start with a column of ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._random import resolve_seed, stream
from ._validation import check_positive_int

__all__ = ["FeaturizerBank", "generate_bank", "featurize", "RandomFeatureTransformer", "ACTIVATIONS"]

ACTIVATIONS = {
    "tanh": np.tanh,
    # alternates kept bounded, as the theory requires
    "logistic": lambda a: 1.0 / (1.0 + np.exp(-a)),
}

_MAX_RETRIES = 10


@dataclass(frozen=True)
class FeaturizerBank:
    weights: tuple
    dims: tuple
    n_features: int
    seed: int
    activation: str = "tanh"

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def n_inputs(self) -> int:
        return 1 + sum(self.dims)

    def to_dict(self, include_weights: bool = True) -> dict:
        out = {
            "dims": list(self.dims),
            "n_features": self.n_features,
            "n_featurizations": len(self),
            "seed": self.seed,
            "activation": self.activation,
        }
        if include_weights:
            out["weights"] = [w.tolist() for w in self.weights]
        return out

    def save(self, path) -> None:
        """JSON artifact; float64 values round-trip exactly through ``repr``."""
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "FeaturizerBank":
        raw = json.loads(Path(path).read_text())
        weights = tuple(_frozen(np.asarray(w, dtype=float)) for w in raw["weights"])
        return cls(weights, tuple(raw["dims"]), raw["n_features"], raw["seed"], raw["activation"])


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def generate_bank(
    dims: tuple[int, int, int],
    n_features: int,
    n_featurizations: int,
    seed: int,
    activation: str = "tanh",
) -> FeaturizerBank:
    """Draw ``n_featurizations`` standard-normal matrices of shape ``(1 + sum(dims), n_features)``.

    ``dims`` is ``(lag * d, q, p)``.  A draw whose numerical rank is below
    ``min(shape)`` is redrawn from the same stream, up to 10 times.
    """
    n_features = check_positive_int(n_features, "n_features")
    n_featurizations = check_positive_int(n_featurizations, "n_featurizations")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    n_in = 1 + int(sum(dims))
    weights = []
    for r in range(n_featurizations):
        rng = stream(seed, "bank", n_features, r)
        for _ in range(_MAX_RETRIES + 1):
            W = rng.standard_normal((n_in, n_features))
            if np.linalg.matrix_rank(W) == min(W.shape):
                break
        else:
            raise np.linalg.LinAlgError(
                f"featurization {r}: weight matrix rank-deficient after {_MAX_RETRIES} retries"
            )
        weights.append(_frozen(W))
    return FeaturizerBank(tuple(weights), tuple(int(x) for x in dims), n_features, int(seed), activation)


def featurize(design: np.ndarray, W: np.ndarray, activation: str = "tanh") -> np.ndarray:
    """``g(design @ W)`` applied entrywise."""
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[1] != W.shape[0]:
        raise ValueError(f"design has shape {design.shape}, weights expect {W.shape[0]} columns")
    return ACTIVATIONS[activation](design @ W)


class RandomFeatureTransformer(TransformerMixin, BaseEstimator):
    """sklearn transformer mapping ``X`` to ``tanh([1 X] W)`` with fixed Gaussian ``W``.

    Paired with ``LinearRegression(fit_intercept=False)`` this is the
    random-feature regression the permutation test is built on.
    """

    def __init__(self, n_features=100, activation="tanh", random_state=None):
        self.n_features = n_features
        self.activation = activation
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        bank = generate_bank((X.shape[1], 0, 0), self.n_features, 1, resolve_seed(self.random_state), self.activation)
        self.weights_ = bank.weights[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return featurize(np.hstack([np.ones((X.shape[0], 1)), X]), self.weights_, self.activation)
