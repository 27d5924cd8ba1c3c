"""Measurement matrices, the AWGN channel, the transmit-power check and
Monte-Carlo (S-)REC certification."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .signals import FEATURES_PER_SENSOR, SourceStats, sensor_blocks

SCHEMES = ("prop1", "unit-variance-baseline", "sensor-selection", "prop1-l2norm")
MATRIX_FORMAT_VERSION = 1


def power_matched_variance(P_T: float, n: int, d: float, sigma_x: float, mu_x: float) -> float:
    """Entry variance that keeps (1/m)||Ax||_2 within ``P_T`` for all but a
    ~1/d^2 fraction of source frames: P_T / (n^2 d^2 (d sigma_x + mu_x)^2)."""
    denom_term = d * sigma_x + mu_x
    if denom_term == 0:
        raise ValueError("d * sigma_x + mu_x must be nonzero")
    return P_T / (n**2 * d**2 * denom_term**2)


@dataclass
class MatrixDesign:
    scheme: str
    m: int
    n: int
    P_T: float = 1.0
    d: float = 3.0
    stats: SourceStats | None = None
    seed: int = 0
    selected_indices: list[int] | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if self.P_T <= 0 or self.d <= 0:
            raise ValueError("P_T and d must be positive")
        if self.scheme in ("prop1", "prop1-l2norm") and self.stats is None:
            raise ValueError("power-matched schemes need source statistics")

    @property
    def normalize_l2(self) -> bool:
        return self.scheme == "prop1-l2norm"

    def entry_variance(self) -> float | None:
        if self.scheme in ("prop1", "prop1-l2norm"):
            return power_matched_variance(self.P_T, self.n, self.d,
                                          self.stats.sigma_x, self.stats.mu_x)
        if self.scheme == "unit-variance-baseline":
            return 1.0 / self.m
        return None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["stats"] = self.stats.to_dict() if self.stats else None
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixDesign":
        d = dict(d)
        if d.get("stats") is not None:
            d["stats"] = SourceStats(**d["stats"])
        return cls(**d)


@dataclass
class MeasurementMatrix:
    entries: np.ndarray
    design: MatrixDesign

    @property
    def shape(self):
        return self.entries.shape

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = json.dumps({"version": MATRIX_FORMAT_VERSION, "design": self.design.to_dict()})
        with path.open("wb") as fh:
            np.savez(fh, entries=np.ascontiguousarray(self.entries), meta=np.array(meta))
        return path

    @classmethod
    def load(cls, path) -> "MeasurementMatrix":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            entries = z["entries"].copy()
        if meta.get("version") != MATRIX_FORMAT_VERSION:
            raise ValueError(f"unsupported matrix format version {meta.get('version')}")
        return cls(entries=entries, design=MatrixDesign.from_dict(meta["design"]))


def default_sensor_indices(m: int, n: int, seed: int,
                           per_sensor: int = FEATURES_PER_SENSOR) -> list[int]:
    """Pick whole sensors in a seeded order until ``m`` features are covered."""
    blocks = sensor_blocks(n, per_sensor)
    order = np.random.default_rng(seed).permutation(len(blocks))
    picked = np.concatenate([blocks[i] for i in order])[:m]
    return sorted(int(i) for i in picked)


def build_matrix(design: MatrixDesign) -> MeasurementMatrix:
    m, n = design.m, design.n
    if design.scheme == "sensor-selection":
        idx = design.selected_indices
        if idx is None:
            idx = default_sensor_indices(m, n, design.seed)
            design.selected_indices = idx
        idx = [int(i) for i in idx]
        if len(idx) != m:
            raise ValueError(f"sensor selection needs m={m} indices, got {len(idx)}")
        if len(set(idx)) != len(idx):
            raise ValueError("selected indices contain duplicates")
        if min(idx) < 0 or max(idx) >= n:
            raise ValueError("selected index out of range")
        entries = np.zeros((m, n))
        entries[np.arange(m), idx] = 1.0
    else:
        std = np.sqrt(design.entry_variance())
        rng = np.random.default_rng(design.seed)
        entries = rng.standard_normal((m, n)) * std
    return MeasurementMatrix(entries=entries, design=design)


def project(A: MeasurementMatrix, x) -> np.ndarray:
    """y = A x. ``x`` may be one frame or a 2-D stack of frames (rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != A.entries.shape[1]:
        raise ValueError(f"signal length {x.shape[-1]} != matrix width {A.entries.shape[1]}")
    return x @ A.entries.T


@dataclass
class ChannelConfig:
    sigma_N: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_N < 0:
            raise ValueError("sigma_N must be nonnegative")


@dataclass
class NoisyMeasurement:
    y_clean: np.ndarray
    y_received: np.ndarray
    sigma_N: float


def l2_normalize(y: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot l2-normalize a zero measurement vector")
    return y / norms


def apply_channel(y, channel: ChannelConfig, normalize_l2: bool = False,
                  rng: np.random.Generator | None = None) -> NoisyMeasurement:
    """Add N(0, sigma_N^2) noise. With ``normalize_l2`` the transmitted vector
    is y/||y||_2; the receiver never learns the norm.

    Noise comes from ``rng`` when given (training draws a fresh stream per
    epoch), else from a generator seeded with ``channel.seed``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] < 1:
        raise ValueError("empty measurement")
    clean = l2_normalize(y) if normalize_l2 else y.copy()
    if channel.sigma_N == 0:
        return NoisyMeasurement(clean, clean.copy(), 0.0)
    if rng is None:
        rng = np.random.default_rng(channel.seed)
    received = clean + channel.sigma_N * rng.standard_normal(clean.shape)
    return NoisyMeasurement(clean, received, channel.sigma_N)


@dataclass
class PowerCheck:
    satisfied: bool
    ratio: float


def check_power(y, P_T: float, squared: bool = False) -> PowerCheck:
    """Test (1/m)||y||_2 <= P_T. ``squared`` switches to the average-power
    reading (1/m)||y||_2^2 <= P_T."""
    y = np.asarray(y, dtype=np.float64)
    norm = float(np.linalg.norm(y))
    level = norm**2 if squared else norm
    ratio = level / y.size / P_T
    return PowerCheck(satisfied=ratio <= 1.0, ratio=ratio)


def power_ratios(Y, P_T: float, squared: bool = False) -> np.ndarray:
    """Row-wise version of :func:`check_power` returning the ratios."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    norms = np.linalg.norm(Y, axis=1)
    level = norms**2 if squared else norms
    return level / Y.shape[1] / P_T


def expected_measurement_power(A_or_design, stats: SourceStats) -> float:
    """E[y_i^2] for zero-mean i.i.d. Gaussian entries: var_a * n * E[x^2]."""
    design = getattr(A_or_design, "design", A_or_design)
    var = design.entry_variance()
    return var * design.n * (stats.sigma_x**2 + stats.mu_x**2)


# ---------------------------------------------------------------- S-REC

@dataclass
class SRecCertificate:
    gamma_hat: float
    kappa: float
    pairs_tested: int
    violation_rate: float
    degenerate_pairs: int = 0
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SRecCertificate":
        return cls(**json.loads(text))


def certify_srec(A: MeasurementMatrix, sampler, kappa: float, pairs: int, seed: int) -> SRecCertificate:
    """Largest gamma consistent with ||A(x1-x2)|| >= gamma ||x1-x2|| - kappa
    over ``pairs`` sampled pairs.

    ``sampler(rng, count)`` returns two (count, n) arrays. With kappa = 0 and
    a k-sparse sampler this estimates the REC constant.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    rng = np.random.default_rng(seed)
    X1, X2 = sampler(rng, pairs)
    diff = np.asarray(X1, dtype=np.float64) - np.asarray(X2, dtype=np.float64)
    dn = np.linalg.norm(diff, axis=1)
    keep = dn >= 1e-9
    if not keep.any():
        raise ValueError("all sampled pairs are degenerate")
    an = np.linalg.norm(diff[keep] @ A.entries.T, axis=1)
    ratios = (an + kappa) / dn[keep]
    gamma = float(ratios.min())
    # by construction no kept pair violates the bound at gamma; recheck anyway
    violations = an < gamma * dn[keep] - kappa - 1e-12 * np.maximum(1.0, an)
    return SRecCertificate(gamma_hat=gamma, kappa=float(kappa), pairs_tested=int(keep.sum()),
                           violation_rate=float(violations.mean()),
                           degenerate_pairs=int((~keep).sum()),
                           meta={"scheme": A.design.scheme, "m": A.design.m, "n": A.design.n,
                                 "matrix_seed": A.design.seed, "sample_seed": seed})


def sparse_pair_sampler(n: int, k: int):
    """Pairs of independent k-sparse Gaussian vectors (REC certification)."""
    def sample(rng, count):
        out = []
        for _ in range(2):
            X = np.zeros((count, n))
            for i in range(count):
                idx = rng.choice(n, size=k, replace=False)
                X[i, idx] = rng.standard_normal(k)
            out.append(X)
        return out[0], out[1]
    return sample


def frame_pair_sampler(frames: np.ndarray):
    """Pairs drawn uniformly (with replacement) from a frame matrix."""
    frames = np.asarray(frames, dtype=np.float64)

    def sample(rng, count):
        i = rng.integers(0, len(frames), size=count)
        j = rng.integers(0, len(frames), size=count)
        return frames[i], frames[j]
    return sample
