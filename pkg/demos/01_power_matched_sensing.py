"""
Power-matched measurement matrices
==================================

Build the synthetic frame set, estimate the source statistics and draw a
Gaussian measurement matrix whose entry variance keeps the transmitted
measurement inside the power budget for most frames.
"""
import numpy as np

from imucs.metrics import snr_db
from imucs.sensing import (ChannelConfig, MatrixDesign, apply_channel, build_matrix, check_power,
                           expected_measurement_power, power_ratios, project)
from imucs.signals import SynthConfig, source_stats, synthesize

ds = synthesize(SynthConfig(), 20000, seed=0, test_count=5000)
stats = source_stats(ds)
print(f"{ds.train.shape[0]} train / {ds.test.shape[0]} test frames of n={ds.n}")
print(f"pooled mu_x={stats.mu_x:.4f} sigma_x={stats.sigma_x:.4f}")

# entry variance P_T / (n^2 d^2 (d sigma_x + mu_x)^2) with d = 3
A = build_matrix(MatrixDesign("prop1", m=168, n=ds.n, P_T=1.0, d=3.0, stats=stats, seed=0))
print(f"entry variance {A.design.entry_variance():.3e}, sample {A.entries.var():.3e}")

# share of test frames meeting (1/m)||Ax||_2 <= P_T; Chebyshev promises 8/9
Y = project(A, ds.test)
r = power_ratios(Y, 1.0)
print(f"frames within budget: {np.mean(r <= 1):.4f}  (worst ratio {r.max():.3g})")
print("first frame:", check_power(Y[0], 1.0))

# the unconstrained baseline, entries N(0, 1/m), also fits this loose budget
# but sends measurements an order of magnitude larger
B = build_matrix(MatrixDesign("unit-variance-baseline", 168, ds.n, seed=0))
rb = power_ratios(project(B, ds.test), 1.0)
print(f"baseline frames within budget: {np.mean(rb <= 1):.4f}, "
      f"{np.median(rb) / np.median(r):.1f}x the power-matched norm")
# the average-power reading (1/m)||y||^2 <= P_T is available as a switch
print("squared reading, first frame:", check_power(Y[0], 1.0, squared=True))

# choose the channel noise for a -5 dB received SNR under the power-matched matrix
power = expected_measurement_power(A, stats)
sigma_N = np.sqrt(power / 10 ** (-5 / 10))
meas = apply_channel(Y, ChannelConfig(sigma_N, seed=1))
print(f"sigma_N={sigma_N:.3e}, measured SNR {snr_db(meas.y_clean, sigma_N):.2f} dB")
