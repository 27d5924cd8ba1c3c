"""
MSE versus measurements and decode latency
==========================================

A reduced version of the default sweep: every method at three values of m,
one seed, plus the latency comparison across batch sizes. The full sweep is
``imucs sweep`` with the default configuration.
"""
from imucs.experiment import ExperimentConfig, run_latency, run_sweep

cfg = ExperimentConfig(train_frames=5000, test_frames=1000, epochs=20, m_values=(48, 120, 192), seeds=(0,),
                       eval_frames=300, output_dir="demo_out")
res = run_sweep(cfg)
for r in res.rows:
    print(f"{r['method']:17s} m={r['m']:3d}  mse={r['mse']:.4g}  power violations={r['power_violation_rate']:.3f}")

lat = run_latency(ExperimentConfig(**{**cfg.to_dict(), "methods": ("cs-vae", "lasso-no-pt"), "latency_m": 120,
                                      "m_values": (120,)}), batch_sizes=(10, 100, 1000))
for r in lat.rows:
    print(f"{r['method']:12s} b={r['batch']:5d}  median {r['median_seconds'] * 1e3:.2f} ms")
print("plots: demo_out/mse_vs_m.svg, demo_out/latency.svg")
