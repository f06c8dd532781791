"""Lorenz-96 and TAR(2) generators and the two-group study datasets built from them."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ._random import stream

__all__ = [
    "Lorenz96Config",
    "Tar2Config",
    "StudyDesign",
    "StudyDataset",
    "lorenz96_derivative",
    "simulate_lorenz96",
    "draw_tar2_coefficients",
    "companion_matrix",
    "spectral_radius",
    "simulate_tar2",
    "tar2_regimes",
    "assemble_study_dataset",
]

PROCESSES = ("lorenz96", "tar2")


class SimulationError(RuntimeError):
    pass


# --------------------------------------------------------------------------- #
# Lorenz-96
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Lorenz96Config:
    n_samples: int = 1000
    p: int = 6
    F: float | None = None  # None draws Uniform(5, 20)
    dt: float = 0.05
    burn_in: int = 500
    substeps: int = 10
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.p < 4:
            raise ValueError("Lorenz-96 needs p >= 4")
        if self.dt <= 0 or self.substeps < 1 or self.burn_in < 0 or self.n_samples < 1:
            raise ValueError("invalid Lorenz-96 integration settings")

    def forcing(self) -> float:
        if self.F is not None:
            return float(self.F)
        return float(stream(self.seed, "simulate", 96, 0).uniform(5.0, 20.0))


def lorenz96_derivative(x: np.ndarray, F: float) -> np.ndarray:
    """``(x_{i+1} - x_{i-2}) x_{i-1} - x_i + F`` with cyclic indices."""
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + F


def _rk4_integrator(p: int, F: float, h: float):
    ip1 = np.roll(np.arange(p), -1)
    im1 = np.roll(np.arange(p), 1)
    im2 = np.roll(np.arange(p), 2)

    def f(x):
        return (x[ip1] - x[im2]) * x[im1] - x + F

    def step(x):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    return step


def simulate_lorenz96(config: Lorenz96Config, initial_state: np.ndarray | None = None) -> np.ndarray:
    """Fixed-step RK4 trajectory sampled every ``dt``; the first ``burn_in`` samples are dropped.

    The default initial state is ``F`` in every coordinate plus
    ``N(0, init_scale^2)`` noise.
    """
    F = config.forcing()
    if initial_state is None:
        x = F + config.init_scale * stream(config.seed, "simulate", 96, 1).standard_normal(config.p)
    else:
        x = np.array(initial_state, dtype=float)
        if x.shape != (config.p,):
            raise ValueError(f"initial state must have shape ({config.p},)")
    step = _rk4_integrator(config.p, F, config.dt / config.substeps)
    out = np.empty((config.n_samples, config.p))
    for t in range(config.burn_in + config.n_samples):
        for _ in range(config.substeps):
            x = step(x)
        if not np.all(np.abs(x) < 1e6):
            raise SimulationError(f"integration blow-up at sample {t}")
        if t >= config.burn_in:
            out[t - config.burn_in] = x
    return out


# --------------------------------------------------------------------------- #
# TAR(2)
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Tar2Config:
    n_samples: int = 1000
    p: int = 6
    sigma: tuple = (0.5, 0.2)
    coef_range: tuple = (-0.5, 0.5)
    sparsity: float = 0.1
    radius_cap: float = 0.8
    burn_in: int = 500
    noise: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.radius_cap < 1:
            raise ValueError("radius_cap must lie in (0, 1)")
        if min(self.sigma) <= 0:
            raise ValueError("regime noise scales must be positive")


def companion_matrix(A1: np.ndarray, A2: np.ndarray) -> np.ndarray:
    p = A1.shape[0]
    top = np.hstack([A1, A2])
    bottom = np.hstack([np.eye(p), np.zeros((p, p))])
    return np.vstack([top, bottom])


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def draw_tar2_coefficients(config: Tar2Config) -> np.ndarray:
    """Coefficients of shape ``(2 regimes, 2 lags, p, p)``.

    Entries are uniform on ``coef_range`` and zeroed below ``sparsity`` in
    magnitude.  A regime whose companion matrix exceeds ``radius_cap`` has
    its lag-1 block scaled by ``c`` and lag-2 block by ``c**2`` with
    ``c = 0.99 * cap / rho``, which scales every companion eigenvalue by
    exactly ``c`` and keeps the zero pattern.
    """
    rng = stream(config.seed, "simulate", 2, 0)
    p = config.p
    A = rng.uniform(*config.coef_range, size=(2, 2, p, p))
    A[np.abs(A) < config.sparsity] = 0.0
    for k in range(2):
        rho = spectral_radius(companion_matrix(A[k, 0], A[k, 1]))
        if rho > config.radius_cap:
            c = 0.99 * config.radius_cap / rho
            A[k, 0] *= c
            A[k, 1] *= c * c
    return A


def tar2_regimes(x: np.ndarray, start: int = 2) -> np.ndarray:
    """Regime (1 or 2) used to produce rows ``start..``: 1 when the lag-2 cross-sectional sum is <= 0."""
    return np.where(x[start - 2 : len(x) - 2].sum(axis=1) <= 0.0, 1, 2)


def simulate_tar2(config: Tar2Config, coefficients: np.ndarray | None = None):
    """Threshold VAR(2) path.

    Returns ``(series, regimes)`` where ``series`` has ``n_samples`` rows
    after ``burn_in`` and ``regimes[t]`` is the regime that generated
    ``series[t]``.  The recursion starts from zeros.
    """
    A = draw_tar2_coefficients(config) if coefficients is None else np.asarray(coefficients, dtype=float)
    p = config.p
    total = config.burn_in + config.n_samples
    x = np.zeros((total + 2, p))
    reg = np.empty(total + 2, dtype=int)
    reg[:2] = 0
    rng = stream(config.seed, "simulate", 2, 1)
    sig = np.asarray(config.sigma, dtype=float)
    eps = rng.standard_normal((total + 2, p)) if config.noise else np.zeros((total + 2, p))
    for t in range(2, total + 2):
        k = 0 if x[t - 2].sum() <= 0.0 else 1
        reg[t] = k + 1
        x[t] = A[k, 0] @ x[t - 1] + A[k, 1] @ x[t - 2] + sig[k] * eps[t]
    keep = slice(2 + config.burn_in, None)
    return x[keep].copy(), reg[keep].copy()


# --------------------------------------------------------------------------- #
# Study datasets
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class StudyDesign:
    """One simulation cell.

    ``groups`` names the generating process of series 1-6 and 7-12.  The
    response comes from the first group whose process matches
    ``response_process``; "causal" series share the response's group.
    """

    response_process: str = "tar2"
    n_samples: int = 500
    n_causal_x: int = 2
    n_causal_z: int = 0
    lag: int = 3
    groups: tuple = ("lorenz96", "tar2")
    seed: int = 0
    group_size: int = 6
    block_size: int = 3

    def __post_init__(self):
        if self.response_process not in PROCESSES or any(g not in PROCESSES for g in self.groups):
            raise ValueError(f"processes must be among {PROCESSES}")
        if self.response_process not in self.groups:
            raise ValueError("response process must be one of the generating groups")
        if len(self.groups) != 2:
            raise ValueError("exactly two generating groups are used")
        b, g = self.block_size, self.group_size
        cx, cz = self.n_causal_x, self.n_causal_z
        if not (0 <= cx <= b and 0 <= cz <= b):
            raise ValueError("causal counts must lie between 0 and the block size")
        if cx + cz > g - 1 or (b - cx) + (b - cz) > g:
            raise ValueError(
                f"infeasible design: {cx}+{cz} causal series from {g - 1} available, "
                f"{2 * b - cx - cz} non-causal from {g}"
            )

    @property
    def gc_label(self) -> int:
        return int(self.n_causal_x > 0)


@dataclass(frozen=True)
class StudyDataset:
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    gc_label: int
    indices: dict
    meta: dict = field(default_factory=dict)

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.X, self.Y, self.Z):
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()

    def export(self, directory) -> Path:
        """Write ``X.csv``, ``Y.csv``, ``Z.csv`` and ``truth.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name, arr, cols in (
            ("X", self.X, self.indices["X"]),
            ("Y", self.Y, [self.indices["Y"]]),
            ("Z", self.Z, self.indices["Z"]),
        ):
            header = ",".join(f"x{i}" for i in cols)
            np.savetxt(d / f"{name}.csv", arr, delimiter=",", header=header, comments="", fmt="%.17g")
        truth = {"gc_label": self.gc_label, "indices": self.indices, "meta": self.meta, "sha256": self.digest()}
        (d / "truth.json").write_text(json.dumps(truth, indent=2))
        return d


def _simulate_group(process: str, n: int, seed: int) -> tuple[np.ndarray, dict]:
    if process == "lorenz96":
        cfg = Lorenz96Config(n_samples=n, seed=seed)
        cfg = replace(cfg, F=cfg.forcing())
        return simulate_lorenz96(cfg), {"process": process, "F": cfg.F}
    cfg = Tar2Config(n_samples=n, seed=seed)
    series, regimes = simulate_tar2(cfg)
    return series, {"process": process, "regime_share_1": float(np.mean(regimes == 1))}


def assemble_study_dataset(design: StudyDesign, replicate: int = 0) -> StudyDataset:
    """Simulate both groups and pick response, X and Z series per the design.

    Series are numbered 1-12 (group one 1-6, group two 7-12).  Raw length
    is ``n_samples + lag`` so ``n_samples`` rows remain after lagging.
    """
    n_raw = design.n_samples + design.lag
    g = design.group_size
    series, group_meta = [], []
    for gi, proc in enumerate(design.groups):
        s, meta = _simulate_group(proc, n_raw, int(stream(design.seed, "simulate", replicate, gi).integers(2**62)))
        series.append(s)
        group_meta.append(meta)
    data = np.hstack(series)

    rng = stream(design.seed, "design", replicate)
    resp_group = design.groups.index(design.response_process)
    same = np.arange(g) + resp_group * g
    other = np.arange(g) + (1 - resp_group) * g
    response = int(rng.choice(same))
    same = rng.permutation(same[same != response])
    other = rng.permutation(other)
    b, cx, cz = design.block_size, design.n_causal_x, design.n_causal_z
    x_cols = np.concatenate([same[:cx], other[: b - cx]])
    z_cols = np.concatenate([same[cx : cx + cz], other[b - cx : 2 * b - cx - cz]])

    to_label = lambda cols: [int(c) + 1 for c in cols]  # noqa: E731
    indices = {"Y": response + 1, "X": to_label(x_cols), "Z": to_label(z_cols)}
    meta = {"design": asdict(design), "replicate": replicate, "groups": group_meta}
    return StudyDataset(
        data[:, x_cols], data[:, [response]], data[:, z_cols], design.gc_label, indices, meta
    )
