"""IMU frame datasets: ingestion, synthetic generation, normalization and
frequency-domain sparsity analysis.

A frame is one time sample of all ``n`` features (204 for 17 sensors with
9 orientation + 3 acceleration values each). Frames are stored row-wise in
2-D float64 arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

N_FEATURES = 204
FEATURES_PER_SENSOR = 12
FRAME_RATE_HZ = 60.0


@dataclass
class Dataset:
    """Train/test frame matrices plus the bookkeeping needed to undo or
    reapply normalization."""

    train: np.ndarray
    test: np.ndarray
    source: str = "loaded"
    feature_min: np.ndarray | None = None
    feature_max: np.ndarray | None = None
    normalized: bool = False
    dropped: int = 0
    clamped: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.train.shape[1] if self.train.size else self.test.shape[1]

    def __len__(self):
        return len(self.train) + len(self.test)


@dataclass(frozen=True)
class SourceStats:
    mu_x: float
    sigma_x: float

    def to_dict(self):
        return {"mu_x": self.mu_x, "sigma_x": self.sigma_x}


@dataclass
class SparsityReport:
    k: int
    energy_fraction: float
    dominant_bins: list[int]

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "energy_fraction": self.energy_fraction,
                           "dominant_bins": self.dominant_bins})


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters for the sinusoidal stand-in dataset.

    Every channel is ``gain * sum_j w_j sin(2 pi f_j t / window + phase_j)``
    with integer ``f_j`` drawn from bins ``1 .. low_bins - 1`` (bin 0 is DC),
    mixing weights ``w`` summing to one, and a per-channel gain drawn
    log-uniformly from ``gain_range``, plus Gaussian jitter whose standard
    deviation is ``perturbation`` times the channel gain. Small gains on most channels make the
    frames compressible in the canonical basis, as body-worn sensors on
    slow-moving segments are.
    """

    n: int = N_FEATURES
    n_sinusoids: int = 4
    low_bins: int = 16
    window: int = 256
    perturbation: float = 0.01
    gain_range: tuple[float, float] = (0.02, 0.9)
    frame_rate: float = FRAME_RATE_HZ

    def __post_init__(self):
        if self.n < 1 or self.n_sinusoids < 0 or self.perturbation < 0:
            raise ValueError("invalid generator configuration")
        if not 2 <= self.low_bins <= self.window // 2:
            raise ValueError("low_bins must lie in [2, window/2]")
        lo, hi = self.gain_range
        if not 0 < lo <= hi < 1:
            raise ValueError("gain_range must satisfy 0 < lo <= hi < 1")


# ---------------------------------------------------------------- ingestion

def read_frame_table(path, n: int | None = None) -> tuple[np.ndarray, int]:
    """Parse a comma-separated frame table.

    Lines starting with ``#`` are headers/comments. Returns the finite frames
    and the number of rows dropped for containing NaN/Inf.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"frame table not found: {path}")
    rows = []
    dropped = 0
    width = n
    with path.open(encoding="utf-8") as fh:
        row_index = 0
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            if len(parts) != width:
                raise ValueError(
                    f"row {row_index}: expected {width} columns, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"row {row_index}: non-numeric entry ({exc})") from None
            if all(math.isfinite(v) for v in vals):
                rows.append(vals)
            else:
                dropped += 1
            row_index += 1
    if not rows:
        raise ValueError("no frames")
    return np.asarray(rows, dtype=np.float64), dropped


def load_dataset(path, test_path=None, n: int | None = None) -> Dataset:
    """Load a frame table as the training split (and optionally a second
    table as the test split). Non-finite rows are dropped and counted."""
    train, dropped = read_frame_table(path, n)
    if test_path is not None:
        test, dropped_test = read_frame_table(test_path, train.shape[1])
        dropped += dropped_test
    else:
        test = np.empty((0, train.shape[1]))
    return Dataset(train=train, test=test, source="loaded", dropped=dropped,
                   meta={"path": str(path), "test_path": str(test_path) if test_path else None})


def write_frame_table(path, frames: np.ndarray, header: str | None = None) -> Path:
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        # repr-level precision so a reload is exact
        np.savetxt(fh, frames, delimiter=",", fmt="%.17g")
    return path


# ------------------------------------------------------------ normalization

def normalize(dataset: Dataset) -> Dataset:
    """Per-feature min-max map to [-1, 1] using training-split extrema.

    Test frames go through the same affine map and are clamped to [-1, 1];
    the number of clamped entries is recorded on the result.
    """
    if len(dataset.train) == 0:
        raise ValueError("training split is empty")
    lo = dataset.train.min(axis=0)
    hi = dataset.train.max(axis=0)
    const = np.flatnonzero(hi <= lo)
    if const.size:
        raise ValueError(f"feature {int(const[0])} is constant (max == min)")
    span = hi - lo
    train = 2.0 * (dataset.train - lo) / span - 1.0
    # guard against rounding just outside the interval
    np.clip(train, -1.0, 1.0, out=train)
    test = 2.0 * (dataset.test - lo) / span - 1.0
    clamped = int(np.count_nonzero((test < -1.0) | (test > 1.0)))
    np.clip(test, -1.0, 1.0, out=test)
    return replace(dataset, train=train, test=test, feature_min=lo, feature_max=hi,
                   normalized=True, clamped=clamped)


def denormalize(frames: np.ndarray, dataset: Dataset) -> np.ndarray:
    if dataset.feature_min is None:
        raise ValueError("dataset carries no normalization statistics")
    span = dataset.feature_max - dataset.feature_min
    return (np.asarray(frames) + 1.0) * 0.5 * span + dataset.feature_min


def source_stats(dataset: Dataset) -> SourceStats:
    """Pooled scalar mean and population standard deviation over every entry
    of the training split."""
    if len(dataset.train) == 0:
        raise ValueError("training split is empty")
    v = dataset.train
    mu = float(v.mean())
    sigma = float(np.sqrt(np.mean((v - mu) ** 2)))
    return SourceStats(mu_x=mu, sigma_x=sigma)


# --------------------------------------------------------------- synthetic

def synthesize(config: SynthConfig, count: int, seed: int, test_count: int = 0) -> Dataset:
    """Generate ``count`` training frames followed in time by ``test_count``
    test frames. Deterministic in ``seed``."""
    if count <= 0 or test_count < 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    n, J = config.n, config.n_sinusoids
    total = count + test_count
    freqs = rng.integers(1, config.low_bins, size=(n, J))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, J))
    weights = rng.uniform(0.0, 1.0, size=(n, J))
    if J:
        weights /= weights.sum(axis=1, keepdims=True)
    lo, hi = config.gain_range
    gains = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(n, 1)))
    amps = weights * gains

    frames = np.zeros((total, n))
    t = np.arange(total, dtype=np.float64)[:, None]
    omega = 2.0 * np.pi / config.window
    for j in range(J):
        frames += amps[:, j] * np.sin(omega * freqs[:, j] * t + phases[:, j])
    if config.perturbation > 0:
        frames += config.perturbation * gains.T * rng.standard_normal((total, n))
    np.clip(frames, -0.999, 0.999, out=frames)

    return Dataset(train=frames[:count].copy(), test=frames[count:].copy(),
                   source="synthetic", normalized=True,
                   meta={"seed": seed, "config": _synth_meta(config),
                         "frequencies": freqs, "gains": gains.ravel()})


def _synth_meta(config: SynthConfig) -> dict:
    return {"n": config.n, "n_sinusoids": config.n_sinusoids, "low_bins": config.low_bins,
            "window": config.window, "perturbation": config.perturbation,
            "gain_range": list(config.gain_range), "frame_rate": config.frame_rate}


# ---------------------------------------------------------------- sparsity

def sparsity_report(channel, k: int) -> SparsityReport:
    """Fraction of DFT energy held by the ``k`` largest-magnitude bins."""
    x = np.asarray(channel, dtype=np.float64)
    N = x.size
    if N < 2 or not 1 <= k <= N:
        raise ValueError("need N >= 2 and 1 <= k <= N")
    power = np.abs(np.fft.fft(x)) ** 2
    total = power.sum()
    if total == 0.0:
        raise ValueError("zero signal")
    # stable sort keeps conjugate pairs ordered by index on ties
    order = np.argsort(-power, kind="stable")[:k]
    if k == N:
        frac = 1.0
    else:
        frac = float(power[order].sum() / total)
    return SparsityReport(k=k, energy_fraction=frac, dominant_bins=sorted(int(i) for i in order))


def sensor_blocks(n: int = N_FEATURES, per_sensor: int = FEATURES_PER_SENSOR) -> list[np.ndarray]:
    """Feature indices grouped by sensor, assuming contiguous per-sensor blocks."""
    return [np.arange(s, min(s + per_sensor, n)) for s in range(0, n, per_sensor)]
