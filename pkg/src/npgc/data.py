"""Time-series containers, CSV ingestion, lag embedding and fold plans.

Conventions: rows are time points, columns are variables.  A panel holds
one or more independent realizations of the blocks ``X`` (covariates),
``Y`` (response) and ``Z`` (conditioning set).  Fold labels are 0-based.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._random import stream
from ._validation import DataError, as_block, check_positive_int

__all__ = [
    "Realization",
    "TimeSeriesPanel",
    "PreparedPanel",
    "FoldPlan",
    "ingest_csv",
    "ingest_directories",
    "prepare",
    "fold_plan",
    "fold_sizes",
]


@dataclass(frozen=True)
class Realization:
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    dt: float = 1.0
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        X = as_block(self.X, "X")
        Y = as_block(self.Y, "Y")
        Z = np.zeros((X.shape[0], 0)) if self.Z is None else as_block(self.Z, "Z", allow_empty=True)
        if not (X.shape[0] == Y.shape[0] == Z.shape[0]):
            raise DataError(
                f"row count mismatch: X has {X.shape[0]}, Y has {Y.shape[0]}, Z has {Z.shape[0]} rows"
            )
        if Z.shape[1] and not np.all(np.isfinite(Z)):
            raise DataError("Z contains non-finite values")
        for name, arr in (("X", X), ("Y", Y), ("Z", Z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class TimeSeriesPanel:
    realizations: tuple

    def __post_init__(self):
        reals = tuple(self.realizations)
        if not reals:
            raise DataError("a panel needs at least one realization")
        shape0 = _block_widths(reals[0])
        for i, r in enumerate(reals[1:], start=1):
            if _block_widths(r) != shape0:
                raise DataError(
                    f"realization {i} has block widths (p, d, q)={_block_widths(r)}, "
                    f"expected {shape0}"
                )
        object.__setattr__(self, "realizations", reals)

    @classmethod
    def from_arrays(cls, X, Y, Z=None, dt: float = 1.0) -> "TimeSeriesPanel":
        """Single realization when given arrays, several when given lists of arrays."""
        multi = isinstance(X, (list, tuple)) and len(X) > 0 and isinstance(X[0], np.ndarray)
        if not multi:
            Xs, Ys, Zs = [X], [Y], [Z]
        else:
            Xs, Ys = list(X), list(Y)
            Zs = [None] * len(Xs) if Z is None else list(Z)
        if not (len(Xs) == len(Ys) == len(Zs)):
            raise DataError("X, Y and Z must list the same number of realizations")
        return cls(tuple(Realization(x, y, z, dt=dt) for x, y, z in zip(Xs, Ys, Zs)))

    @property
    def phi(self) -> int:
        return len(self.realizations)

    @property
    def p_base(self) -> int:
        return self.realizations[0].X.shape[1]

    @property
    def d(self) -> int:
        return self.realizations[0].Y.shape[1]

    @property
    def q(self) -> int:
        return self.realizations[0].Z.shape[1]

    def summary(self) -> dict:
        return {
            "realizations": self.phi,
            "rows": [r.n_rows for r in self.realizations],
            "p_base": self.p_base,
            "d": self.d,
            "q": self.q,
            "labels": [r.labels for r in self.realizations],
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _block_widths(r: Realization) -> tuple:
    return (r.X.shape[1], r.Y.shape[1], r.Z.shape[1])


# --------------------------------------------------------------------------- #
# CSV ingestion
# --------------------------------------------------------------------------- #


def _read_csv_block(path) -> tuple[np.ndarray, list[str] | None]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(header) if header is not None else len(rows[0]) if rows else 0
    values = np.empty((len(rows), width))
    offset = 2 if header is not None else 1
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + offset} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {i + offset}, column {j + 1}: non-numeric cell {cell!r}"
                ) from None
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0, 0])
        raise DataError(f"{path}: row {bad + offset} contains a non-finite value")
    return values, header


def ingest_csv(
    covariates: Sequence | str | Path,
    response: Sequence | str | Path,
    conditioning: Sequence | str | Path | None = None,
    dt: float = 1.0,
) -> TimeSeriesPanel:
    """Read one CSV per block per realization into a panel.

    Each argument is a path or a list of paths (one per realization).  A
    header row is detected when the first row is not numeric.
    """

    def _as_list(p):
        if p is None:
            return None
        return [p] if isinstance(p, (str, Path)) else list(p)

    xs, ys, zs = _as_list(covariates), _as_list(response), _as_list(conditioning)
    if len(xs) != len(ys) or (zs is not None and len(zs) != len(xs)):
        raise DataError("every realization needs one covariate, response (and conditioning) file")
    reals = []
    for i, (xp, yp) in enumerate(zip(xs, ys)):
        X, xh = _read_csv_block(xp)
        Y, yh = _read_csv_block(yp)
        if zs is not None:
            Z, zh = _read_csv_block(zs[i])
        else:
            Z, zh = np.zeros((X.shape[0], 0)), []
        if not (X.shape[0] == Y.shape[0] == Z.shape[0]):
            raise DataError(
                f"realization {i}: row count mismatch ({xp}: {X.shape[0]}, {yp}: {Y.shape[0]}, "
                f"conditioning: {Z.shape[0]})"
            )
        labels = {"X": xh, "Y": yh, "Z": zh, "files": [str(xp), str(yp)] + ([str(zs[i])] if zs else [])}
        reals.append(Realization(X, Y, Z, dt=dt, labels=labels))
    try:
        return TimeSeriesPanel(tuple(reals))
    except DataError as exc:
        raise DataError(f"mismatched dimensions across realizations: {exc}") from exc


def ingest_directories(dirs: Sequence, dt: float = 1.0) -> TimeSeriesPanel:
    """Each directory holds ``X.csv``, ``Y.csv`` and optionally ``Z.csv``."""
    dirs = [Path(d) for d in dirs]
    has_z = [(d / "Z.csv").is_file() for d in dirs]
    if any(has_z) and not all(has_z):
        raise DataError("Z.csv must be present in every realization directory or in none")
    return ingest_csv(
        [d / "X.csv" for d in dirs],
        [d / "Y.csv" for d in dirs],
        [d / "Z.csv" for d in dirs] if all(has_z) else None,
        dt=dt,
    )


# --------------------------------------------------------------------------- #
# Lag embedding and standardization
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PreparedPanel:
    """Standardized, lag-embedded blocks, one tuple entry per realization.

    ``xaug[w][t]`` holds ``x_{t-1}, ..., x_{t-lag}`` (lag-major), ``ylag``
    likewise for the response, ``z`` the conditioning set at ``t - z_lag``.
    """

    ylag: tuple
    z: tuple
    xaug: tuple
    y: tuple
    lag: int
    z_lag: int = 1

    def __post_init__(self):
        T = {a.shape[0] for blk in (self.ylag, self.z, self.xaug, self.y) for a in blk}
        if len(T) != 1:
            raise DataError("all prepared blocks must share one row count")
        if self.n_rows < 1:
            raise DataError("no usable rows after lag truncation")

    @property
    def phi(self) -> int:
        return len(self.y)

    @property
    def n_rows(self) -> int:
        return self.y[0].shape[0]

    @property
    def d(self) -> int:
        return self.y[0].shape[1]

    @property
    def q(self) -> int:
        return self.z[0].shape[1]

    @property
    def p(self) -> int:
        return self.xaug[0].shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(lag * d, q, p)`` as consumed by the featurizer bank."""
        return (self.ylag[0].shape[1], self.q, self.p)

    @property
    def n_inputs(self) -> int:
        return 1 + sum(self.dims)

    def base_design(self, w: int) -> np.ndarray:
        """``[1 | Ylag | Z]`` for realization ``w``; the part no permutation touches."""
        ones = np.ones((self.n_rows, 1))
        return np.hstack([ones, self.ylag[w], self.z[w]])

    def design(self, w: int, perm: np.ndarray | None = None, x_block: np.ndarray | None = None) -> np.ndarray:
        """``[1 | Ylag | Z | X~]`` with the augmented covariate rows permuted by ``perm``."""
        x = self.xaug[w] if x_block is None else x_block
        if perm is not None:
            x = x[perm]
        return np.hstack([self.base_design(w), x])

    def take_rows(self, rows: np.ndarray) -> "PreparedPanel":
        """Sub-panel restricted to ``rows`` (no re-standardization)."""
        rows = np.asarray(rows)
        pick = lambda blk: tuple(a[rows] for a in blk)  # noqa: E731
        return PreparedPanel(pick(self.ylag), pick(self.z), pick(self.xaug), pick(self.y), self.lag, self.z_lag)


def _lag_block(A: np.ndarray, lag: int) -> np.ndarray:
    """Rows t = lag..T_raw-1 of ``[a_{t-1}, ..., a_{t-lag}]``."""
    T_raw = A.shape[0]
    return np.hstack([A[lag - j : T_raw - j] for j in range(1, lag + 1)])


def _standardize(blocks: list[np.ndarray], names: list[str], pooled: bool) -> list[np.ndarray]:
    if pooled:
        stacked = np.vstack(blocks)
        mu, sd = stacked.mean(axis=0), stacked.std(axis=0)
        stats = [(mu, sd)] * len(blocks)
    else:
        stats = [(b.mean(axis=0), b.std(axis=0)) for b in blocks]
    out = []
    for w, (b, (mu, sd)) in enumerate(zip(blocks, stats)):
        scale = np.maximum(np.abs(mu), 1.0)
        bad = np.flatnonzero(sd <= 1e-12 * scale)
        if bad.size:
            raise DataError(f"zero-variance column {names[bad[0]]} in realization {w}")
        out.append((b - mu) / sd)
    return out


def prepare(
    panel: TimeSeriesPanel,
    lag: int,
    *,
    z_lag: int = 1,
    pooled: bool = False,
    min_rows: int = 2,
) -> PreparedPanel:
    """Lag-embed and standardize every block of ``panel``.

    Parameters
    ----------
    panel : TimeSeriesPanel
    lag : int
        Number of past values of Y and of each X column entering the design.
    z_lag : int, default 1
        Offset of the conditioning block; 1 uses ``z_{t-1}``, 0 uses ``z_t``.
    pooled : bool, default False
        Standardize with statistics pooled over realizations instead of
        per realization.
    min_rows : int
        Minimum number of usable rows ``T = T_raw - lag`` (set to ``K + 1``
        when a fold count is already planned).
    """
    lag = check_positive_int(lag, "lag")
    if not 0 <= z_lag <= lag:
        raise ValueError(f"z_lag must lie in [0, lag], got {z_lag}")
    lengths = {r.n_rows for r in panel.realizations}
    if len(lengths) != 1:
        raise DataError(f"realizations must share one length, got {sorted(lengths)}")
    T_raw = lengths.pop()
    T = T_raw - lag
    if T < min_rows:
        raise DataError(f"only {T} usable rows after removing {lag} lags (need {min_rows})")

    p_base, d, q = panel.p_base, panel.d, panel.q
    reals = panel.realizations
    ylag = [_lag_block(r.Y, lag) for r in reals]
    xaug = [_lag_block(r.X, lag) for r in reals]
    ycut = [r.Y[lag:] for r in reals]
    zcut = [r.Z[lag - z_lag : T_raw - z_lag] for r in reals]

    lab = lambda blk, width: [f"{blk}[lag {j + 1}, col {i}]" for j in range(lag) for i in range(width)]  # noqa: E731
    ylag = _standardize(ylag, lab("Y", d), pooled)
    xaug = _standardize(xaug, lab("X", p_base), pooled)
    ycut = _standardize(ycut, [f"Y[col {i}]" for i in range(d)], pooled)
    zcut = _standardize(zcut, [f"Z[col {i}]" for i in range(q)], pooled) if q else zcut
    return PreparedPanel(tuple(ylag), tuple(zcut), tuple(xaug), tuple(ycut), lag, z_lag)


# --------------------------------------------------------------------------- #
# Fold plans
# --------------------------------------------------------------------------- #


def fold_sizes(T: int, K: int) -> np.ndarray:
    """``T_k = floor(T/K) + 1{(T mod K) >= k}`` for k = 1..K."""
    k = np.arange(1, K + 1)
    return T // K + ((T % K) >= k).astype(int)


@dataclass(frozen=True)
class FoldPlan:
    assignment: np.ndarray
    sizes: np.ndarray
    seed: int | None = None
    mode: str = "random"

    @property
    def n_folds(self) -> int:
        return len(self.sizes)

    def test_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def train_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)


def fold_plan(T: int, K: int, seed: int | None = 0, mode: str = "random") -> FoldPlan:
    """Partition ``0..T-1`` into K folds with the balanced size formula.

    ``mode="random"`` interleaves time points across folds (seeded);
    ``mode="contiguous"`` assigns consecutive blocks.
    """
    T = check_positive_int(T, "T")
    K = check_positive_int(K, "K", minimum=2)
    if K > T:
        raise ValueError(f"fold count K={K} exceeds the number of rows T={T}")
    sizes = fold_sizes(T, K)
    labels = np.repeat(np.arange(K), sizes)
    if mode == "random":
        assignment = np.empty(T, dtype=int)
        assignment[stream(seed, "folds").permutation(T)] = labels
    elif mode == "contiguous":
        assignment = labels
    else:
        raise ValueError(f"unknown fold mode {mode!r}")
    assignment.setflags(write=False)
    return FoldPlan(assignment, sizes, seed, mode)
