"""Reconstruction error, channel SNR, power accounting and decode timing."""
from __future__ import annotations

import json
import math
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .sensing import power_ratios


def mse(x_true, x_hat) -> float:
    x_true = np.asarray(x_true, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_true.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x_true.shape} vs {x_hat.shape}")
    return float(np.mean((x_true - x_hat) ** 2))


def frame_mse(X_true, X_hat) -> np.ndarray:
    """Per-frame (per-entry normalized) MSE for row-stacked frames."""
    X_true = np.atleast_2d(np.asarray(X_true, dtype=np.float64))
    X_hat = np.atleast_2d(np.asarray(X_hat, dtype=np.float64))
    if X_true.shape != X_hat.shape:
        raise ValueError(f"shape mismatch: {X_true.shape} vs {X_hat.shape}")
    return np.mean((X_true - X_hat) ** 2, axis=1)


def snr_db(y_clean, sigma_N: float) -> float:
    """10 log10(mean signal power / sigma_N^2). Returns +inf for a
    noiseless channel and -inf for a zero signal."""
    y = np.asarray(y_clean, dtype=np.float64)
    if sigma_N < 0:
        raise ValueError("sigma_N must be nonnegative")
    if sigma_N == 0:
        return math.inf
    power = float(np.mean(y**2))
    if power == 0:
        return -math.inf
    return 10.0 * math.log10(power / sigma_N**2)


@dataclass
class EvalReport:
    method: str
    m: int
    mse: float
    per_frame_mse: dict
    power_violation_rate: float
    snr_db: float
    frames: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def evaluate(method: str, X_true, X_hat, Y_tx, sigma_N: float, P_T: float,
             squared_power: bool = False) -> EvalReport:
    """Summarize a batch reconstruction.

    ``Y_tx`` are the transmitted (pre-noise) vectors, used for the power
    constraint and SNR.
    """
    per = frame_mse(X_true, X_hat)
    Y_tx = np.atleast_2d(Y_tx)
    viol = float(np.mean(power_ratios(Y_tx, P_T, squared_power) > 1.0))
    return EvalReport(method=method, m=int(Y_tx.shape[1]), mse=float(per.mean()),
                      per_frame_mse={"mean": float(per.mean()), "std": float(per.std()),
                                     "max": float(per.max())},
                      power_violation_rate=viol, snr_db=snr_db(Y_tx, sigma_N),
                      frames=int(len(per)))


@dataclass
class LatencyReport:
    method: str
    input_samples: int
    batch: int
    median_seconds: float
    runs: int
    warmup_runs: int
    times: list[float] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def environment_descriptor() -> dict:
    info = time.get_clock_info("perf_counter")
    return {"host": platform.node(), "machine": platform.machine(),
            "python": platform.python_version(), "clock": info.implementation,
            "clock_resolution": info.resolution}


def time_decode(decoder, batch, runs: int = 5, warmup: int = 2, method: str = "decoder") -> LatencyReport:
    """Median wall-clock of ``decoder(Y)`` on the whole batch.

    ``batch`` is a sequence of NoisyMeasurement or a (b, m) array of
    received vectors.
    """
    if runs < 5 or warmup < 2:
        raise ValueError("need runs >= 5 and warmup >= 2")
    if len(batch) == 0:
        raise ValueError("empty batch")
    if isinstance(batch, np.ndarray):
        Y = np.atleast_2d(batch)
    else:
        Y = np.stack([np.asarray(b.y_received) for b in batch])
    for _ in range(warmup):
        decoder(Y)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        decoder(Y)
        times.append(time.perf_counter() - t0)
    return LatencyReport(method=method, input_samples=int(Y.shape[0] * Y.shape[1]),
                         batch=int(Y.shape[0]), median_seconds=float(statistics.median(times)),
                         runs=runs, warmup_runs=warmup, times=times,
                         environment=environment_descriptor())
