"""Experiment orchestration: configuration, the MSE-vs-m sweep, the decode
latency sweep, S-REC certification runs and export of recovered frames."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .genmodel import (TrainConfig, VaeArchitecture, VaeModel, bound_diagnostic, decoder_pair_sampler,
                       encode, init_model, reconstruct, reconstruct_via_latent_opt,
                       representation_error, train)
from .lasso import LassoConfig, solve_batch
from .metrics import evaluate, time_decode
from .sensing import (ChannelConfig, MatrixDesign, MeasurementMatrix, apply_channel, build_matrix,
                      certify_srec, expected_measurement_power, frame_pair_sampler, project,
                      sparse_pair_sampler)
from .signals import (Dataset, SynthConfig, load_dataset, normalize, source_stats, synthesize,
                      write_frame_table)

log = logging.getLogger(__name__)

METHODS = ("cs-vae", "cs-vae-latentopt", "lasso-pt", "lasso-no-pt", "sensor-selection", "l2norm")
METHOD_SCHEME = {
    "cs-vae": "prop1",
    "cs-vae-latentopt": "prop1",
    "lasso-pt": "prop1",
    "lasso-no-pt": "unit-variance-baseline",
    "sensor-selection": "sensor-selection",
    "l2norm": "prop1-l2norm",
}
# which trained generative model a method decodes with (None: Lasso receiver)
METHOD_MODEL = {"cs-vae": "cs-vae", "cs-vae-latentopt": "cs-vae", "l2norm": "l2norm"}

SWEEP_COLUMNS = ("method", "m", "seed", "mse", "mse_std", "mse_max", "power_violation_rate",
                 "snr_db", "frames", "decode_seconds", "status", "error")
LATENCY_COLUMNS = ("method", "m", "batch", "input_samples", "median_seconds", "runs",
                   "warmup_runs", "lasso_mode", "status", "error")
LATENCY_FIELDS = ("decode_seconds", "median_seconds")
# keys that do not influence any numeric result
_PRESENTATION_KEYS = ("output_dir", "cache_dir", "use_cache", "plot")


@dataclass
class ExperimentConfig:
    # data source: a frame table path, else the synthetic generator
    data_path: str | None = None
    test_path: str | None = None
    test_fraction: float = 0.2
    train_frames: int = 20000
    test_frames: int = 5000
    data_seed: int = 0
    n_sinusoids: int = 4
    low_bins: int = 16
    window: int = 256
    perturbation: float = 0.01
    gain_lo: float = 0.02
    gain_hi: float = 0.9

    m_values: tuple[int, ...] = (48, 72, 96, 120, 144, 168, 192)
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = (0, 1, 2)

    # transmitter and channel
    P_T: float = 1.0
    d: float = 3.0
    snr_db: float = -5.0
    sigma_N: float | None = None
    power_squared: bool = False
    identity_matrix: bool = False

    # Lasso receiver
    lasso_lambda: float = 1e-5
    lasso_max_iter: int = 1000
    lasso_tol: float = 1e-6
    lasso_mode: str = "blocked"

    # generative receiver
    encoder_hidden: int = 64
    latent_dim: int = 10
    decoder_hidden: int = 64
    epochs: int = 50
    batch_size: int = 60
    learning_rate: float = 1e-4
    lambda_l1: float = 1e-5
    beta_kl: float | None = None
    standardize_input: bool = True
    latent_restarts: int = 1
    latent_steps: int = 100
    latent_lr: float = 0.05

    eval_frames: int = 1000
    latency_m: int = 168
    latency_batches: tuple[int, ...] = (10, 100, 1000)
    latency_runs: int = 5
    latency_warmup: int = 2

    output_dir: str = "results"
    cache_dir: str | None = None
    use_cache: bool = True
    plot: bool = True

    def __post_init__(self):
        self.m_values = tuple(int(v) for v in self.m_values)
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(v) for v in self.seeds)
        self.latency_batches = tuple(int(v) for v in self.latency_batches)
        if not self.methods:
            raise ValueError("methods must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not self.m_values or not self.seeds:
            raise ValueError("m_values and seeds must be non-empty")
        if self.sigma_N is not None and self.sigma_N < 0:
            raise ValueError("sigma_N must be nonnegative")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _PRESENTATION_KEYS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_sinusoids=self.n_sinusoids, low_bins=self.low_bins, window=self.window,
                           perturbation=self.perturbation, gain_range=(self.gain_lo, self.gain_hi))

    def train_config(self, seed: int, sigma_N: float, normalize_l2: bool = False) -> TrainConfig:
        beta = self.beta_kl if self.beta_kl is not None else 2.0 * sigma_N**2
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, lambda_l1=self.lambda_l1,
                           beta_kl=beta, seed=seed, normalize_l2=normalize_l2)

    def lasso_config(self) -> LassoConfig:
        return LassoConfig(lam=self.lasso_lambda, max_iter=self.lasso_max_iter, tol=self.lasso_tol)


# ------------------------------------------------------------ config files

def _convert(name: str, annotation: str, raw: str):
    raw = raw.strip()
    if "None" in annotation and raw.lower() in ("none", ""):
        return None
    if annotation.startswith("tuple"):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return tuple(items) if "str" in annotation else tuple(int(s) for s in items)
    if annotation.startswith("bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if annotation.startswith("int"):
        return int(raw)
    if annotation.startswith("float"):
        return float(raw)
    return raw


def parse_overrides(pairs) -> dict:
    """Turn ``key=value`` strings (or a dict of raw strings) into typed values."""
    types = {f.name: str(f.type) for f in dataclasses.fields(ExperimentConfig)}
    items = pairs.items() if isinstance(pairs, dict) else (p.split("=", 1) for p in pairs)
    out = {}
    for key, value in items:
        key = key.strip()
        if key not in types:
            raise KeyError(f"unknown config key {key!r}")
        out[key] = _convert(key, types[key], str(value))
    return out


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    raw = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    values = parse_overrides(raw)
    if overrides:
        values.update(parse_overrides(overrides))
    return ExperimentConfig(**values)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for k, v in config.to_dict().items():
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


def derive_seed(base: int, *tags) -> int:
    words = [int(base) & 0xFFFFFFFF] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# ------------------------------------------------------------- experiment

@dataclass
class SweepResult:
    rows: list[dict]
    provenance: dict
    kind: str = "sweep"

    @property
    def columns(self):
        return SWEEP_COLUMNS if self.kind == "sweep" else LATENCY_COLUMNS

    def numeric_view(self) -> list[tuple]:
        """Rows with latency columns removed, for reproducibility checks."""
        return [tuple(r[c] for c in self.columns if c not in LATENCY_FIELDS) for r in self.rows]

    def write(self, out_dir, stem: str | None = None) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.kind
        csv_path = out_dir / f"{stem}.csv"
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            for key in ("config_hash", "code_version", "kind"):
                fh.write(f"# {key}: {self.provenance.get(key, self.kind)}\n")
            writer = csv.DictWriter(fh, fieldnames=self.columns, lineterminator="\n")
            writer.writeheader()
            for r in self.rows:
                writer.writerow({c: _fmt(r[c]) for c in self.columns})
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(json.dumps({"provenance": self.provenance, "rows": self.rows},
                                        indent=2, default=_json_default), encoding="utf-8")
        return {"csv": csv_path, "json": json_path}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def read_sweep_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class Experiment:
    """Shared state for one configuration: data, statistics, matrices and
    trained receivers (memoized, and cached on disk when enabled)."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.dataset = self._load_data()
        self.stats = source_stats(self.dataset)
        self.n = self.dataset.n
        for m in config.m_values + (config.latency_m,):
            if not 1 <= m <= self.n:
                raise ValueError(f"m={m} outside [1, {self.n}]")
        test = self.dataset.test
        k = config.eval_frames if 0 < config.eval_frames < len(test) else len(test)
        self.eval_index = np.linspace(0, len(test) - 1, k).round().astype(int)
        self.X_eval = test[self.eval_index]
        self._matrices: dict = {}
        self._models: dict = {}
        self.cache_dir = Path(config.cache_dir) if config.cache_dir else Path(config.output_dir) / "models"

    # ---- data
    def _load_data(self) -> Dataset:
        c = self.config
        if c.data_path:
            ds = load_dataset(c.data_path, c.test_path)
            if len(ds.test) == 0:
                cut = int(round(len(ds.train) * (1.0 - c.test_fraction)))
                ds = dataclasses.replace(ds, train=ds.train[:cut], test=ds.train[cut:])
            if len(ds.test) == 0:
                raise ValueError("no test frames")
            return normalize(ds)
        return synthesize(c.synth_config(), c.train_frames, c.data_seed, c.test_frames)

    @property
    def sigma_N(self) -> float:
        c = self.config
        if c.sigma_N is not None:
            return float(c.sigma_N)
        design = MatrixDesign("prop1", 1, self.n, c.P_T, c.d, self.stats)
        power = expected_measurement_power(design, self.stats)
        return float(np.sqrt(power / 10.0 ** (c.snr_db / 10.0)))

    # ---- transmitter
    def matrix(self, method: str, m: int, seed: int) -> MeasurementMatrix:
        scheme = METHOD_SCHEME[method]
        key = (scheme, m, seed)
        if key not in self._matrices:
            c = self.config
            family = "prop1" if scheme.startswith("prop1") else scheme
            design = MatrixDesign(scheme, m, self.n, c.P_T, c.d,
                                  self.stats if family == "prop1" else None,
                                  seed=derive_seed(seed, "matrix", family, m))
            if c.identity_matrix:
                if m != self.n:
                    raise ValueError("identity_matrix requires m == n")
                A = MeasurementMatrix(np.eye(self.n), design)
            else:
                A = build_matrix(design)
            self._matrices[key] = A
        return self._matrices[key]

    def transmit(self, method: str, A: MeasurementMatrix, X: np.ndarray, noise_seed: int):
        meas = apply_channel(project(A, X), ChannelConfig(self.sigma_N, noise_seed),
                             normalize_l2=A.design.normalize_l2)
        return meas.y_clean, meas.y_received

    # ---- receivers
    def model_path(self, kind: str, m: int, seed: int) -> Path:
        return self.cache_dir / f"{kind}_m{m}_s{seed}_{self.config.config_hash()}.npz"

    def model(self, kind: str, m: int, seed: int) -> VaeModel:
        key = (kind, m, seed)
        if key in self._models:
            return self._models[key]
        path = self.model_path(kind, m, seed)
        if self.config.use_cache and path.exists():
            model = VaeModel.load(path)
            log.info("loaded cached model %s", path.name)
        else:
            model = self.train_model(kind, m, seed)
            if self.config.use_cache:
                model.save(path)
        self._models[key] = model
        return model

    def train_model(self, kind: str, m: int, seed: int) -> VaeModel:
        c = self.config
        A = self.matrix(kind, m, seed)
        arch = VaeArchitecture(input_dim=m, output_dim=self.n, encoder_hidden=c.encoder_hidden,
                               latent_dim=c.latent_dim, decoder_hidden=c.decoder_hidden)
        model = init_model(arch, derive_seed(seed, "init", kind, m))
        tc = c.train_config(derive_seed(seed, "train", kind, m), self.sigma_N,
                            normalize_l2=A.design.normalize_l2)
        channel = ChannelConfig(self.sigma_N, derive_seed(seed, "train-noise", kind, m))
        t0 = time.perf_counter()
        model = train(model, self.dataset.train, A, channel, tc,
                      standardize_input=c.standardize_input)
        log.info("trained %s m=%d seed=%d in %.1fs (loss %.4g -> %.4g)", kind, m, seed,
                 time.perf_counter() - t0, model.training_trace[0] if model.training_trace else float("nan"),
                 model.training_trace[-1] if model.training_trace else float("nan"))
        return model

    def decoder(self, method: str, m: int, seed: int):
        """Callable mapping received vectors (rows) to recovered frames."""
        c = self.config
        A = self.matrix(method, m, seed)
        kind = METHOD_MODEL.get(method)
        if kind is None:
            lc = c.lasso_config()
            return lambda Y: solve_batch(A, Y, lc, mode=c.lasso_mode)[0]
        model = self.model(kind, m, seed)
        if method == "cs-vae-latentopt":
            opt_seed = derive_seed(seed, "latent-opt", m)

            def latent(Y):
                init = encode(model, Y, noise_draw=np.zeros((len(Y), model.arch.latent_dim))).mean
                res = reconstruct_via_latent_opt(model, Y, A, restarts=c.latent_restarts,
                                                 steps=c.latent_steps, lr=c.latent_lr,
                                                 lambda_l1=c.lambda_l1, seed=opt_seed, init=init)
                return res["x_hat"]
            return latent
        return lambda Y: reconstruct(model, Y)

    def eval_noise_seed(self, m: int, seed: int) -> int:
        return derive_seed(seed, "eval-noise", m)

    def run_row(self, method: str, m: int, seed: int) -> dict:
        row = {"method": method, "m": m, "seed": seed}
        try:
            A = self.matrix(method, m, seed)
            decode_fn = self.decoder(method, m, seed)
            Y_tx, Y_rx = self.transmit(method, A, self.X_eval, self.eval_noise_seed(m, seed))
            t0 = time.perf_counter()
            X_hat = decode_fn(Y_rx)
            dt = time.perf_counter() - t0
            rep = evaluate(method, self.X_eval, X_hat, Y_tx, self.sigma_N, self.config.P_T,
                           self.config.power_squared)
            row.update(mse=rep.mse, mse_std=rep.per_frame_mse["std"], mse_max=rep.per_frame_mse["max"],
                       power_violation_rate=rep.power_violation_rate, snr_db=rep.snr_db,
                       frames=rep.frames, decode_seconds=dt, status="ok", error="")
        except Exception as exc:  # recorded, sweep continues
            log.exception("row %s m=%d seed=%d failed", method, m, seed)
            row.update(mse=None, mse_std=None, mse_max=None, power_violation_rate=None, snr_db=None,
                       frames=0, decode_seconds=None, status="error", error=f"{type(exc).__name__}: {exc}")
        return row

    def provenance(self, kind: str) -> dict:
        return {"config_hash": self.config.config_hash(), "code_version": __version__, "kind": kind,
                "config": self.config.to_dict(), "sigma_N": self.sigma_N,
                "source_stats": self.stats.to_dict(), "n": self.n,
                "eval_frames": int(len(self.eval_index)), "dataset": self.dataset.source}


def run_sweep(config: ExperimentConfig, experiment: Experiment | None = None,
              write: bool = True) -> SweepResult:
    exp = experiment or Experiment(config)
    rows = [exp.run_row(method, m, seed)
            for seed in config.seeds for m in config.m_values for method in config.methods]
    order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (order[r["method"]], r["m"], r["seed"]))
    result = SweepResult(rows=rows, provenance=exp.provenance("sweep"))
    if write:
        result.write(config.output_dir)
        if config.plot:
            from .plots import plot_sweep
            plot_sweep(result, Path(config.output_dir) / "mse_vs_m.svg")
    return result


def run_latency(config: ExperimentConfig, batch_sizes=None, experiment: Experiment | None = None,
                write: bool = True) -> SweepResult:
    exp = experiment or Experiment(config)
    batch_sizes = tuple(batch_sizes or config.latency_batches)
    m, seed = config.latency_m, config.seeds[0]
    test = exp.dataset.test
    rows = []
    env = {}
    for method in config.methods:
        try:
            A = exp.matrix(method, m, seed)
            decode_fn = exp.decoder(method, m, seed)
        except Exception as exc:
            rows += [_latency_error(method, m, b, exc) for b in batch_sizes]
            continue
        for b in batch_sizes:
            try:
                X = test[np.arange(b) % len(test)]
                _, Y_rx = exp.transmit(method, A, X, derive_seed(seed, "latency-noise", m, b))
                rep = time_decode(decode_fn, Y_rx, runs=config.latency_runs,
                                  warmup=config.latency_warmup, method=method)
                rows.append({"method": method, "m": m, "batch": b, "input_samples": rep.input_samples,
                             "median_seconds": rep.median_seconds, "runs": rep.runs,
                             "warmup_runs": rep.warmup_runs,
                             "lasso_mode": config.lasso_mode if method not in METHOD_MODEL else "",
                             "status": "ok", "error": "", "times": rep.times})
                env = rep.environment
            except Exception as exc:
                rows.append(_latency_error(method, m, b, exc))
    prov = exp.provenance("latency")
    prov["environment"] = env
    result = SweepResult(rows=rows, provenance=prov, kind="latency")
    if write:
        result.write(config.output_dir)
        if config.plot:
            from .plots import plot_latency
            plot_latency(result, Path(config.output_dir) / "latency.svg")
    return result


def _latency_error(method, m, b, exc):
    return {"method": method, "m": m, "batch": b, "input_samples": m * b, "median_seconds": None,
            "runs": 0, "warmup_runs": 0, "lasso_mode": "", "status": "error",
            "error": f"{type(exc).__name__}: {exc}"}


def export_recovered(experiment: Experiment, method: str, m: int, seed: int, start: int,
                     count: int, path) -> Path:
    """Decode test frames [start, start+count) and write them as a frame table."""
    test = experiment.dataset.test
    if not 0 <= start < len(test) or count < 1:
        raise ValueError("slice outside the test split")
    X = test[start:start + count]
    A = experiment.matrix(method, m, seed)
    _, Y_rx = experiment.transmit(method, A, X, derive_seed(seed, "export-noise", m, start))
    X_hat = experiment.decoder(method, m, seed)(Y_rx)
    header = (f"recovered frames: method={method} m={m} seed={seed} test[{start}:{start + len(X)}]\n"
              f"config_hash={experiment.config.config_hash()} code_version={__version__}")
    return write_frame_table(path, X_hat, header=header)


def srec_check(experiment: Experiment, m: int, seed: int, pairs: int = 1000, kappa: float = 0.0,
               sampler: str = "decoder", sample_seed: int = 0, sparsity: int = 10,
               method: str = "cs-vae"):
    """Certify the matrix used by ``method`` over pairs from the decoder
    range, the data, or k-sparse vectors."""
    A = experiment.matrix(method, m, seed)
    if sampler == "decoder":
        source = decoder_pair_sampler(experiment.model(METHOD_MODEL.get(method, "cs-vae"), m, seed))
    elif sampler == "frames":
        source = frame_pair_sampler(experiment.dataset.test)
    elif sampler == "sparse":
        source = sparse_pair_sampler(experiment.n, sparsity)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    cert = certify_srec(A, source, kappa, pairs, sample_seed)
    cert.meta["sampler"] = sampler
    cert.meta["method"] = method
    return cert


def run_bound_diagnostic(experiment: Experiment, m: int, seed: int, frames: int = 100,
                         epsilon: float = 0.0, restarts: int = 3, steps: int = 300) -> dict:
    """Per-frame check of the generative-recovery error bound over the first
    ``frames`` evaluation frames, using the single-pass reconstruction."""
    X = experiment.X_eval[:frames]
    model = experiment.model("cs-vae", m, seed)
    A = experiment.matrix("cs-vae", m, seed)
    Y_tx, Y_rx = experiment.transmit("cs-vae", A, X, experiment.eval_noise_seed(m, seed))
    X_hat = reconstruct(model, Y_rx)
    eta = np.linalg.norm(Y_rx - Y_tx, axis=1)
    init = encode(model, Y_rx, noise_draw=np.zeros((len(X), model.arch.latent_dim))).mean
    rep_err = representation_error(model, X, restarts=restarts, steps=steps,
                                   seed=derive_seed(seed, "rep-err", m), init=init)
    diag = bound_diagnostic(X, X_hat, eta, rep_err, epsilon)
    return {"m": m, "seed": seed, "frames": int(len(X)), "epsilon": epsilon,
            "fraction_holding": float(np.mean(diag["holds"])),
            "lhs": diag["lhs"].tolist(), "rhs": diag["rhs"].tolist(),
            "representation_error": rep_err.tolist(), "eta_norm": eta.tolist()}
