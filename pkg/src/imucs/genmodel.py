"""Variational auto-encoder trained on compressed, noisy measurements.

The encoder reads the received measurement vector (length m) and emits a
latent mean and log-variance; the decoder maps a latent code back to a full
frame through a tanh output, so every reconstruction lies in (-1, 1).
Training minimizes, per frame,

    ||A G(z) - y||^2 + lambda_l1 ||G(z)||_1 + beta_kl KL(q(z|y) || N(0, I))

with hand-written backpropagation and Adam, all in float64.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .sensing import ChannelConfig, MatrixDesign, MeasurementMatrix, apply_channel, project

LOGVAR_CLAMP = 10.0
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class VaeArchitecture:
    input_dim: int
    output_dim: int = 204
    encoder_hidden: int = 64
    latent_dim: int = 10
    decoder_hidden: int = 64

    def shapes(self) -> dict[str, tuple[int, ...]]:
        k = self.latent_dim
        return {
            "W1": (self.input_dim, self.encoder_hidden), "b1": (self.encoder_hidden,),
            "W2": (self.encoder_hidden, 2 * k), "b2": (2 * k,),
            "W3": (k, self.decoder_hidden), "b3": (self.decoder_hidden,),
            "W4": (self.decoder_hidden, self.output_dim), "b4": (self.output_dim,),
        }


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 60
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_l1: float = 1e-5
    beta_kl: float = 1.0
    seed: int = 0
    normalize_l2: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("invalid training configuration")
        if self.lambda_l1 < 0 or self.beta_kl < 0:
            raise ValueError("penalty weights must be nonnegative")


@dataclass
class LatentSample:
    mean: np.ndarray
    log_var: np.ndarray
    z: np.ndarray
    noise_draw: np.ndarray
    log_var_raw: np.ndarray | None = None


@dataclass
class VaeModel:
    arch: VaeArchitecture
    params: dict[str, np.ndarray]
    # fixed gain applied to the received vector before the first layer;
    # power-matched measurements are O(1e-2) and would otherwise stall Adam
    input_scale: float = 1.0
    bound_matrix: MeasurementMatrix | None = None
    training_trace: list[float] = field(default_factory=list)
    train_config: TrainConfig | None = None

    def copy(self) -> "VaeModel":
        return VaeModel(arch=self.arch, params={k: v.copy() for k, v in self.params.items()},
                        input_scale=self.input_scale, bound_matrix=self.bound_matrix,
                        training_trace=list(self.training_trace), train_config=self.train_config)

    # -------------------------------------------------------- checkpoints
    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "version": CHECKPOINT_VERSION,
            "arch": asdict(self.arch),
            "input_scale": self.input_scale,
            "training_trace": self.training_trace,
            "train_config": asdict(self.train_config) if self.train_config else None,
            "bound_design": self.bound_matrix.design.to_dict() if self.bound_matrix else None,
        }
        arrays = {k: v for k, v in self.params.items()}
        if self.bound_matrix is not None:
            arrays["bound_entries"] = self.bound_matrix.entries
        with path.open("wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
        return path

    @classmethod
    def load(cls, path) -> "VaeModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            params = {k: z[k].copy() for k in PARAM_NAMES}
            bound = None
            if meta["bound_design"] is not None:
                bound = MeasurementMatrix(entries=z["bound_entries"].copy(),
                                          design=MatrixDesign.from_dict(meta["bound_design"]))
        tc = TrainConfig(**meta["train_config"]) if meta["train_config"] else None
        return cls(arch=VaeArchitecture(**meta["arch"]), params=params,
                   input_scale=meta["input_scale"], bound_matrix=bound,
                   training_trace=list(meta["training_trace"]), train_config=tc)


def init_model(arch: VaeArchitecture, seed: int) -> VaeModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.shapes().items():
        if name.startswith("W"):
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return VaeModel(arch=arch, params=params)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


# ------------------------------------------------------------ forward pass

def _encoder_forward(model: VaeModel, Y: np.ndarray):
    p = model.params
    a1 = (Y * model.input_scale) @ p["W1"] + p["b1"]
    h1 = np.maximum(a1, 0.0)
    e = h1 @ p["W2"] + p["b2"]
    k = model.arch.latent_dim
    return a1, h1, e[..., :k], e[..., k:]


def _decoder_forward(model: VaeModel, Z: np.ndarray):
    p = model.params
    a3 = Z @ p["W3"] + p["b3"]
    h3 = np.maximum(a3, 0.0)
    g = np.tanh(h3 @ p["W4"] + p["b4"])
    return a3, h3, g


def encode(model: VaeModel, y, seed: int | None = None,
           noise_draw: np.ndarray | None = None) -> LatentSample:
    """Latent posterior parameters plus a reparameterized draw.

    ``y`` may be a single vector or a batch of rows. The standard-normal draw
    comes from ``noise_draw`` if given, else from ``seed``.
    """
    y = np.asarray(y, dtype=np.float64)
    _check_finite(y)
    if y.shape[-1] != model.arch.input_dim:
        raise ValueError(f"input length {y.shape[-1]} != {model.arch.input_dim}")
    _, _, mean, lv_raw = _encoder_forward(model, y)
    log_var = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    if noise_draw is None:
        noise_draw = np.random.default_rng(seed).standard_normal(mean.shape)
    noise_draw = np.asarray(noise_draw, dtype=np.float64)
    z = mean + np.exp(0.5 * log_var) * noise_draw
    return LatentSample(mean=mean, log_var=log_var, z=z, noise_draw=noise_draw,
                        log_var_raw=lv_raw)


def decode(model: VaeModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    _check_finite(z)
    if z.shape[-1] != model.arch.latent_dim:
        raise ValueError(f"latent length {z.shape[-1]} != {model.arch.latent_dim}")
    return _decoder_forward(model, z)[2]


def decoder_jacobian(model: VaeModel, z) -> np.ndarray:
    """Analytic dG/dz at a single latent point, shape (n, k)."""
    z = np.asarray(z, dtype=np.float64)
    p = model.params
    a3, h3, g = _decoder_forward(model, z)
    # dG/dz = diag(1-g^2) W4^T diag(relu'(a3)) W3^T
    inner = (p["W3"] * (a3 > 0.0)) @ p["W4"]          # (k, n)
    return (inner * (1.0 - g**2)).T


def reconstruct(model: VaeModel, y_received) -> np.ndarray:
    """Deterministic decode through the latent mean (single forward pass)."""
    y = np.asarray(y_received, dtype=np.float64)
    _check_finite(y)
    if y.shape[-1] != model.arch.input_dim:
        raise ValueError(f"input length {y.shape[-1]} != {model.arch.input_dim}")
    _, _, mean, _ = _encoder_forward(model, y)
    return _decoder_forward(model, mean)[2]


# ------------------------------------------------------------------ losses

def kl_divergence(mean, log_var):
    return 0.5 * np.sum(np.exp(log_var) + mean**2 - 1.0 - log_var, axis=-1)


def loss(model: VaeModel, y_received, A, lambda_l1: float, beta_kl: float,
         sample: LatentSample) -> dict[str, float]:
    """Loss terms for one frame or the batch mean over rows."""
    entries = getattr(A, "entries", A)
    g = decode(model, sample.z)
    resid = g @ entries.T - y_received
    recon = np.sum(resid**2, axis=-1)
    l1 = np.sum(np.abs(g), axis=-1)
    kl = kl_divergence(sample.mean, sample.log_var)
    total = recon + lambda_l1 * l1 + beta_kl * kl
    return {"total": float(np.mean(total)), "recon": float(np.mean(recon)),
            "l1": float(np.mean(l1)), "kl": float(np.mean(kl))}


def loss_and_grads(model: VaeModel, Y: np.ndarray, A_entries: np.ndarray,
                   lambda_l1: float, beta_kl: float, noise_draw: np.ndarray):
    """Mean batch loss and its gradient with respect to every parameter."""
    p = model.params
    B = Y.shape[0]
    Ys = Y * model.input_scale
    a1 = Ys @ p["W1"] + p["b1"]
    h1 = np.maximum(a1, 0.0)
    e = h1 @ p["W2"] + p["b2"]
    k = model.arch.latent_dim
    mean, lv_raw = e[:, :k], e[:, k:]
    log_var = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    std = np.exp(0.5 * log_var)
    z = mean + std * noise_draw
    a3 = z @ p["W3"] + p["b3"]
    h3 = np.maximum(a3, 0.0)
    g = np.tanh(h3 @ p["W4"] + p["b4"])

    resid = g @ A_entries.T - Y
    recon = np.sum(resid**2, axis=1)
    l1 = np.sum(np.abs(g), axis=1)
    var = np.exp(log_var)
    kl = 0.5 * np.sum(var + mean**2 - 1.0 - log_var, axis=1)
    total = recon + lambda_l1 * l1 + beta_kl * kl
    parts = {"total": float(total.mean()), "recon": float(recon.mean()),
             "l1": float(l1.mean()), "kl": float(kl.mean())}

    inv_b = 1.0 / B
    dg = (2.0 * resid @ A_entries + lambda_l1 * np.sign(g)) * inv_b
    da4 = dg * (1.0 - g**2)
    grads = {"W4": h3.T @ da4, "b4": da4.sum(axis=0)}
    da3 = (da4 @ p["W4"].T) * (a3 > 0.0)
    grads["W3"] = z.T @ da3
    grads["b3"] = da3.sum(axis=0)
    dz = da3 @ p["W3"].T
    dmean = dz + beta_kl * mean * inv_b
    dlv = dz * noise_draw * 0.5 * std + 0.5 * beta_kl * (var - 1.0) * inv_b
    dlv *= np.abs(lv_raw) < LOGVAR_CLAMP
    de = np.concatenate([dmean, dlv], axis=1)
    grads["W2"] = h1.T @ de
    grads["b2"] = de.sum(axis=0)
    da1 = (de @ p["W2"].T) * (a1 > 0.0)
    grads["W1"] = Ys.T @ da1
    grads["b1"] = da1.sum(axis=0)
    return parts, grads


# ---------------------------------------------------------------- training

class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        if self.lr == 0:
            return
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def measurement_scale(A: MeasurementMatrix, frames: np.ndarray, sigma_N: float,
                      normalize_l2: bool = False) -> float:
    """Reciprocal RMS of the received entries expected for ``frames``."""
    Y = project(A, frames)
    if normalize_l2:
        Y = Y / np.linalg.norm(Y, axis=1, keepdims=True)
    rms = np.sqrt(np.mean(Y**2) + sigma_N**2)
    return 1.0 / rms if rms > 0 else 1.0


def train(model: VaeModel, frames, A: MeasurementMatrix, channel: ChannelConfig,
          config: TrainConfig, standardize_input: bool = True, log=None) -> VaeModel:
    """Train a copy of ``model`` against the fixed matrix ``A``.

    Every epoch reshuffles the frames and draws fresh channel noise; one Adam
    step is taken per mini-batch on the mean loss. ``frames`` is the training
    frame matrix (or a Dataset, whose training split is used).
    """
    X = getattr(frames, "train", frames)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.arch.output_dim or A.entries.shape != (model.arch.input_dim, X.shape[1]):
        raise ValueError("matrix/model/data dimensions disagree")
    model = model.copy()
    model.bound_matrix = A
    model.train_config = config
    if standardize_input:
        model.input_scale = measurement_scale(A, X, channel.sigma_N, config.normalize_l2)

    rng = np.random.default_rng(config.seed)
    noise_rng = np.random.default_rng([config.seed, channel.seed])
    opt = Adam(model.params, config.learning_rate, config.beta1, config.beta2, config.eps)
    Y_clean = project(A, X)
    if config.normalize_l2:
        Y_clean = Y_clean / np.linalg.norm(Y_clean, axis=1, keepdims=True)
    A_entries = A.entries
    k = model.arch.latent_dim
    trace = []
    for epoch in range(config.epochs):
        Y = Y_clean + channel.sigma_N * noise_rng.standard_normal(Y_clean.shape)
        order = rng.permutation(len(X))
        eps = rng.standard_normal((len(X), k))
        losses = []
        for b, start in enumerate(range(0, len(X), config.batch_size)):
            idx = order[start:start + config.batch_size]
            parts, grads = loss_and_grads(model, Y[idx], A_entries, config.lambda_l1,
                                          config.beta_kl, eps[start:start + len(idx)])
            if not np.isfinite(parts["total"]):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(model.params, grads)
            losses.append(parts["total"] * len(idx))
        for name, value in model.params.items():
            if not np.all(np.isfinite(value)):
                raise TrainingDiverged(f"non-finite parameter {name} after epoch {epoch}")
        trace.append(float(np.sum(losses) / len(X)))
        if log is not None:
            log(epoch, trace[-1])
    model.training_trace = trace
    return model


# ------------------------------------------------- latent-space recovery

def _latent_objective(model, Z, A_entries, Y, lam):
    g = _decoder_forward(model, Z)[2]
    r = g @ A_entries.T - Y
    return np.sum(r**2, axis=1) + lam * np.sum(np.abs(g), axis=1), g


def _latent_grad(model, Z, A_entries, Y, lam):
    p = model.params
    a3, h3, g = _decoder_forward(model, Z)
    r = g @ A_entries.T - Y
    obj = np.sum(r**2, axis=1) + lam * np.sum(np.abs(g), axis=1)
    dg = 2.0 * r @ A_entries + lam * np.sign(g)
    da3 = ((dg * (1.0 - g**2)) @ p["W4"].T) * (a3 > 0.0)
    return obj, g, da3 @ p["W3"].T


def reconstruct_via_latent_opt(model: VaeModel, y_received, A=None, restarts: int = 3,
                               steps: int = 200, lr: float = 0.05, lambda_l1: float | None = None,
                               seed: int = 0, init: np.ndarray | None = None):
    """Minimize ||A G(z) - y||^2 + lambda ||G(z)||_1 over z with the decoder frozen.

    Plain gradient descent from ``restarts`` N(0, I) starting points (plus
    ``init`` if supplied); a step that would raise the objective is rejected
    and the step size for that frame halved, an accepted one grows it by 1.25. Accepts a batch of rows and
    returns ``{"x_hat", "best_objective", "z"}``.
    """
    A = A if A is not None else model.bound_matrix
    entries = getattr(A, "entries", A)
    lam = lambda_l1 if lambda_l1 is not None else (
        model.train_config.lambda_l1 if model.train_config else 1e-5)
    Y = np.atleast_2d(np.asarray(y_received, dtype=np.float64))
    single = np.ndim(y_received) == 1
    rng = np.random.default_rng(seed)
    B, k = Y.shape[0], model.arch.latent_dim

    starts = [rng.standard_normal((B, k)) for _ in range(restarts)]
    if init is not None:
        starts.append(np.atleast_2d(np.asarray(init, dtype=np.float64)).copy())
    best_obj = np.full(B, np.inf)
    best_z = np.zeros((B, k))
    best_g = np.zeros((B, model.arch.output_dim))
    for Z in starts:
        step = np.full(B, lr)
        obj, g, grad = _latent_grad(model, Z, entries, Y, lam)
        for _ in range(steps):
            Zn = Z - step[:, None] * grad
            obj_n, g_n, grad_n = _latent_grad(model, Zn, entries, Y, lam)
            ok = obj_n <= obj
            Z = np.where(ok[:, None], Zn, Z)
            obj = np.where(ok, obj_n, obj)
            g = np.where(ok[:, None], g_n, g)
            grad = np.where(ok[:, None], grad_n, grad)
            step = np.where(ok, np.minimum(1.25 * step, 1e4 * lr), 0.5 * step)
        better = obj < best_obj
        best_obj = np.where(better, obj, best_obj)
        best_z[better] = Z[better]
        best_g[better] = g[better]
    if single:
        return {"x_hat": best_g[0], "best_objective": float(best_obj[0]), "z": best_z[0]}
    return {"x_hat": best_g, "best_objective": best_obj, "z": best_z}


def representation_error(model: VaeModel, x_star, restarts: int = 3, steps: int = 300,
                         lr: float = 0.05, seed: int = 0, init=None) -> np.ndarray:
    """Approximate min_z ||G(z) - x*||_2 by latent descent with A = I."""
    X = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    eye = np.eye(model.arch.output_dim)
    res = reconstruct_via_latent_opt(model, X, eye, restarts=restarts, steps=steps, lr=lr,
                                     lambda_l1=0.0, seed=seed, init=init)
    return np.sqrt(np.maximum(res["best_objective"], 0.0))


def bound_diagnostic(x_star, x_hat, eta_norm, representation_error, epsilon=0.0) -> dict:
    """Compare ||x_hat - x*|| against 6*rep_err + 3*||eta|| + 2*epsilon.

    Vectorized over rows. The representation error is only approximated, so
    this is a diagnostic rather than a check.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    lhs = np.linalg.norm(x_hat - x_star, axis=-1)
    rhs = 6.0 * np.asarray(representation_error) + 3.0 * np.asarray(eta_norm) + 2.0 * epsilon
    holds = lhs <= rhs
    if np.ndim(lhs) == 0:
        return {"lhs": float(lhs), "rhs": float(rhs), "holds": bool(holds)}
    return {"lhs": lhs, "rhs": rhs, "holds": holds}


def decoder_pair_sampler(model: VaeModel):
    """Pairs G(z1), G(z2) with z ~ N(0, I): samples from the decoder range."""
    def sample(rng, count):
        k = model.arch.latent_dim
        return decode(model, rng.standard_normal((count, k))), decode(model, rng.standard_normal((count, k)))
    return sample
