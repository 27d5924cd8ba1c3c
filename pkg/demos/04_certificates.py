"""
Restricted-eigenvalue certificates and the error-bound diagnostic
=================================================================

Monte-Carlo estimates of the (S-)REC constant of the power-matched matrix
over sparse vectors, data frames and, for a trained decoder, its range.
"""
import numpy as np

from imucs.genmodel import decoder_pair_sampler
from imucs.experiment import Experiment, ExperimentConfig, run_bound_diagnostic
from imucs.sensing import MatrixDesign, build_matrix, certify_srec, frame_pair_sampler, sparse_pair_sampler
from imucs.signals import SynthConfig, source_stats, synthesize

ds = synthesize(SynthConfig(), 5000, seed=0, test_count=1000)
A = build_matrix(MatrixDesign("prop1", 168, ds.n, stats=source_stats(ds), seed=0))
for name, sampler in (("10-sparse", sparse_pair_sampler(ds.n, 10)), ("frames", frame_pair_sampler(ds.test))):
    cert = certify_srec(A, sampler, kappa=0.0, pairs=1000, seed=0)
    print(f"{name:10s} gamma_hat={cert.gamma_hat:.4g} over {cert.pairs_tested} pairs")

# a small experiment trains one receiver, then certifies the matrix over its range
exp = Experiment(ExperimentConfig(train_frames=5000, test_frames=1000, epochs=10, m_values=(168,),
                                  output_dir="demo_out"))
model = exp.model("cs-vae", 168, 0)
cert = certify_srec(exp.matrix("cs-vae", 168, 0), decoder_pair_sampler(model), 0.0, 1000, 0)
print(cert.to_json())

rep = run_bound_diagnostic(exp, 168, 0, frames=100)
print(f"bound ||G(z) - x|| <= 6 rep + 3 ||eta|| holds on {rep['fraction_holding']:.0%} of frames")
print(f"median lhs {np.median(rep['lhs']):.3g}, median rhs {np.median(rep['rhs']):.3g}")
