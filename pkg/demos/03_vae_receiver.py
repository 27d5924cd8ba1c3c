"""
Training the generative receiver
================================

A small VAE (m -> 64 -> 2x10 latent -> 64 -> 204) is trained directly on the
received measurements with the loss ||A G(z) - y||^2 + lambda ||G||_1 +
beta KL. Decoding is one encoder/decoder pass; latent optimization refines
the code against the measurement when more time is available.
"""
import time

import numpy as np

from imucs.genmodel import (TrainConfig, VaeArchitecture, VaeModel, init_model, reconstruct,
                            reconstruct_via_latent_opt, train)
from imucs.metrics import mse
from imucs.sensing import ChannelConfig, MatrixDesign, apply_channel, build_matrix, expected_measurement_power, project
from imucs.signals import SynthConfig, source_stats, synthesize

ds = synthesize(SynthConfig(), 20000, seed=0, test_count=5000)
stats = source_stats(ds)
m = 168
A = build_matrix(MatrixDesign("prop1", m, ds.n, stats=stats, seed=0))
sigma_N = np.sqrt(expected_measurement_power(A, stats) / 10 ** (-5 / 10))

# KL weight 2 sigma_N^2 matches the Gaussian likelihood of the squared residual
cfg = TrainConfig(epochs=20, beta_kl=2 * sigma_N**2, seed=0)
t0 = time.perf_counter()
model = train(init_model(VaeArchitecture(input_dim=m), seed=0), ds, A, ChannelConfig(sigma_N, seed=1), cfg)
print(f"trained {cfg.epochs} epochs in {time.perf_counter() - t0:.1f}s, "
      f"loss {model.training_trace[0]:.4g} -> {model.training_trace[-1]:.4g}")

X = ds.test[::5]
y = apply_channel(project(A, X), ChannelConfig(sigma_N, seed=2)).y_received
X_hat = reconstruct(model, y)
print(f"single pass mse={mse(X, X_hat):.4g} (predicting zero gives {np.mean(X**2):.4g})")

res = reconstruct_via_latent_opt(model, y[:100], restarts=1, steps=100, init=None)
print(f"latent optimization mse={mse(X[:100], res['x_hat']):.4g} on 100 frames")

path = model.save("vae_m168.npz")
back = VaeModel.load(path)
print("reload reproduces reconstructions:", np.array_equal(reconstruct(back, y), X_hat))
