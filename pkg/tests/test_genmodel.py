import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imucs.genmodel import (LOGVAR_CLAMP, PARAM_NAMES, Adam, TrainConfig, TrainingDiverged, VaeArchitecture,
                            VaeModel, bound_diagnostic, decode, decoder_jacobian, decoder_pair_sampler, encode,
                            init_model, kl_divergence, loss, loss_and_grads, reconstruct,
                            reconstruct_via_latent_opt, representation_error, train)
from imucs.sensing import ChannelConfig, MatrixDesign, build_matrix
from imucs.signals import SourceStats

TINY = VaeArchitecture(input_dim=6, output_dim=10, encoder_hidden=8, latent_dim=3, decoder_hidden=8)


def _tiny_setup(seed=0):
    rng = np.random.default_rng(seed)
    model = init_model(TINY, seed)
    for k in model.params:
        if k.startswith("b"):
            model.params[k] = 0.1 * rng.standard_normal(model.params[k].shape)
    model.input_scale = 1.7
    A = rng.standard_normal((6, 10)) / 3
    Y = rng.standard_normal((5, 6))
    eps = rng.standard_normal((5, 3))
    return model, A, Y, eps


def _numeric_grads(model, A, Y, eps, lam, beta, h=1e-5):
    out = {}
    for name in PARAM_NAMES:
        P = model.params[name]
        G = np.zeros_like(P)
        it = np.nditer(P, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = P[i]
            P[i] = old + h
            fp = loss_and_grads(model, Y, A, lam, beta, eps)[0]["total"]
            P[i] = old - h
            fm = loss_and_grads(model, Y, A, lam, beta, eps)[0]["total"]
            P[i] = old
            G[i] = (fp - fm) / (2 * h)
        out[name] = G
    return out


@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_finite_differences(seed):
    model, A, Y, eps = _tiny_setup(seed)
    _, ga = loss_and_grads(model, Y, A, 1e-2, 0.5, eps)
    gn = _numeric_grads(model, A, Y, eps, 1e-2, 0.5)
    for name in PARAM_NAMES:
        err = np.linalg.norm(ga[name] - gn[name]) / max(np.linalg.norm(gn[name]), 1e-12)
        assert err <= 1e-4, (name, err)


def test_loss_and_grads_agrees_with_loss():
    model, A, Y, eps = _tiny_setup(3)
    parts, _ = loss_and_grads(model, Y, A, 1e-3, 0.7, eps)
    sample = encode(model, Y, noise_draw=eps)
    ref = loss(model, Y, A, 1e-3, 0.7, sample)
    for k in ("total", "recon", "l1", "kl"):
        assert parts[k] == pytest.approx(ref[k], rel=1e-12)


def test_clamped_logvar_has_zero_gradient():
    model, A, Y, eps = _tiny_setup(4)
    # push the log-variance head far past the clamp
    model.params["b2"][TINY.latent_dim:] = 50.0
    sample = encode(model, Y, noise_draw=eps)
    assert np.all(sample.log_var == LOGVAR_CLAMP)
    _, g = loss_and_grads(model, Y, A, 1e-3, 1.0, eps)
    assert np.all(g["b2"][TINY.latent_dim:] == 0)


def test_kl_zero_at_prior():
    assert kl_divergence(np.zeros(4), np.zeros(4)) == 0.0
    # one dimension with mu=1, logvar=0: 0.5 * (1 + 1 - 1 - 0) = 0.5
    assert kl_divergence(np.array([1.0]), np.array([0.0])) == pytest.approx(0.5)


def test_init_and_shapes():
    arch = VaeArchitecture(input_dim=168)
    model = init_model(arch, 0)
    assert model.params["W1"].shape == (168, 64)
    assert model.params["W2"].shape == (64, 20)
    assert model.params["W3"].shape == (10, 64)
    assert model.params["W4"].shape == (64, 204)
    assert np.all(np.abs(model.params["W1"]) <= 1 / np.sqrt(168))
    assert np.all(model.params["b4"] == 0)


def test_encode_decode_shapes_and_range():
    model, _, Y, _ = _tiny_setup()
    s = encode(model, Y[0], seed=1)
    assert s.mean.shape == (3,) and s.z.shape == (3,)
    x = decode(model, s.z)
    assert x.shape == (10,) and np.all(np.abs(x) < 1)
    with pytest.raises(ValueError):
        encode(model, np.zeros(5))
    with pytest.raises(ValueError):
        decode(model, np.zeros(4))
    with pytest.raises(ValueError):
        encode(model, np.full(6, np.nan))


def test_encode_seeded():
    model, _, Y, _ = _tiny_setup()
    a, b = encode(model, Y, seed=5), encode(model, Y, seed=5)
    np.testing.assert_array_equal(a.z, b.z)


def test_reconstruct_uses_latent_mean():
    model, _, Y, _ = _tiny_setup()
    np.testing.assert_array_equal(reconstruct(model, Y), decode(model, encode(model, Y, seed=0).mean))


def test_decoder_jacobian_finite_difference():
    model, _, _, _ = _tiny_setup(2)
    z = np.random.default_rng(9).standard_normal(3)
    J = decoder_jacobian(model, z)
    h = 1e-6
    Jn = np.stack([(decode(model, z + h * e) - decode(model, z - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    np.testing.assert_allclose(J, Jn, atol=1e-7)


def test_adam_first_step_is_lr_sign():
    # with bias correction the first update is lr * g / (|g| + eps)
    params = {"w": np.array([1.0, 1.0, 1.0])}
    opt = Adam(params, lr=0.1)
    opt.step(params, {"w": np.array([2.0, -0.5, 0.0])})
    np.testing.assert_allclose(params["w"], [0.9, 1.1, 1.0], atol=1e-8)


def test_adam_zero_lr_is_noop():
    params = {"w": np.array([1.0])}
    Adam(params, lr=0.0).step(params, {"w": np.array([3.0])})
    assert params["w"][0] == 1.0


def _small_problem(seed=0, frames=120):
    rng = np.random.default_rng(seed)
    arch = VaeArchitecture(input_dim=6, output_dim=10, encoder_hidden=8, latent_dim=3, decoder_hidden=8)
    A = build_matrix(MatrixDesign("unit-variance-baseline", 6, 10, seed=seed))
    X = 0.5 * np.tanh(rng.standard_normal((frames, 3)) @ rng.standard_normal((3, 10)))
    return arch, A, X


def test_training_reduces_loss_and_is_deterministic():
    arch, A, X = _small_problem()
    cfg = TrainConfig(epochs=30, batch_size=20, learning_rate=1e-2, beta_kl=0.01, seed=1)
    ch = ChannelConfig(0.01, seed=2)
    m1 = train(init_model(arch, 0), X, A, ch, cfg)
    m2 = train(init_model(arch, 0), X, A, ch, cfg)
    assert m1.training_trace[-1] < m1.training_trace[0]
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(m1.params[k], m2.params[k])


def test_zero_lr_leaves_parameters():
    arch, A, X = _small_problem()
    m0 = init_model(arch, 0)
    m1 = train(m0, X, A, ChannelConfig(0.0), TrainConfig(epochs=2, batch_size=60, learning_rate=0.0))
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(m0.params[k], m1.params[k])


def test_training_divergence_is_reported():
    arch, A, X = _small_problem()
    m0 = init_model(arch, 0)
    m0.params["W4"][:] = np.nan
    with pytest.raises(TrainingDiverged, match="epoch 0"):
        train(m0, X, A, ChannelConfig(0.0), TrainConfig(epochs=1, batch_size=60))


def test_train_rejects_mismatched_dimensions():
    arch, A, X = _small_problem()
    with pytest.raises(ValueError):
        train(init_model(arch, 0), X[:, :9], A, ChannelConfig(0.0), TrainConfig(epochs=1))


def test_checkpoint_round_trip(tmp_path):
    arch, A, X = _small_problem()
    m = train(init_model(arch, 0), X, A, ChannelConfig(0.01), TrainConfig(epochs=2, batch_size=30))
    back = VaeModel.load(m.save(tmp_path / "m.npz"))
    Y = np.random.default_rng(0).standard_normal((4, 6))
    np.testing.assert_array_equal(reconstruct(m, Y), reconstruct(back, Y))
    np.testing.assert_array_equal(back.bound_matrix.entries, A.entries)
    assert back.input_scale == m.input_scale


def test_latent_opt_recovers_decoder_output():
    model, _, _, _ = _tiny_setup(5)
    A = np.eye(10)
    z_true = np.array([0.3, -0.2, 0.5])
    x = decode(model, z_true)
    # start in the right basin: the landscape is non-convex, this checks the descent itself
    init = z_true + np.array([0.05, -0.04, 0.03])
    res = reconstruct_via_latent_opt(model, x, A, restarts=0, steps=400, lr=0.1, lambda_l1=0.0, init=init)
    assert res["best_objective"] < 1e-6
    assert np.linalg.norm(res["x_hat"] - x) < 1e-3


def test_latent_opt_never_worse_than_init():
    model, _, _, _ = _tiny_setup(6)
    A = np.random.default_rng(0).standard_normal((6, 10))
    Y = np.random.default_rng(1).standard_normal((4, 6))
    z0 = np.zeros((4, 3))
    g0 = decode(model, z0)
    obj0 = np.sum((g0 @ A.T - Y) ** 2, axis=1)
    res = reconstruct_via_latent_opt(model, Y, A, restarts=0, steps=20, lambda_l1=0.0, init=z0)
    assert np.all(res["best_objective"] <= obj0 + 1e-12)


def test_representation_error_zero_in_range():
    model, _, _, _ = _tiny_setup(7)
    z = np.array([[0.3, -0.2, 0.5]])
    x = decode(model, z)
    err = representation_error(model, x, restarts=3, steps=400, lr=0.1, init=z + 0.05)
    assert err[0] < 1e-3


def test_bound_diagnostic_arithmetic():
    out = bound_diagnostic(np.zeros(3), np.array([3.0, 4.0, 0.0]), eta_norm=1.0,
                           representation_error=0.25, epsilon=0.0)
    # lhs = 5, rhs = 6 * .25 + 3 = 4.5
    assert out["lhs"] == 5.0 and out["rhs"] == 4.5 and not out["holds"]
    out = bound_diagnostic(np.zeros((2, 2)), np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([0.1, 0.1]),
                           np.array([0.0, 0.0]), epsilon=0.5)
    np.testing.assert_array_equal(out["holds"], [True, True])


def test_decoder_pair_sampler_in_range():
    model, _, _, _ = _tiny_setup()
    X1, X2 = decoder_pair_sampler(model)(np.random.default_rng(0), 7)
    assert X1.shape == (7, 10) and np.all(np.abs(X1) < 1) and not np.array_equal(X1, X2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_decoder_output_bounded(seed):
    model = init_model(TINY, seed)
    z = 10 * np.random.default_rng(seed).standard_normal((5, 3))
    assert np.all(np.abs(decode(model, z)) <= 1)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.lists(st.floats(-5, 5), min_size=8, max_size=8))
def test_kl_nonnegative(mean, lv):
    mean = np.asarray(mean)
    assert kl_divergence(mean, np.asarray(lv[: len(mean)])) >= -1e-12


def test_prop1_matrix_model_binding():
    A = build_matrix(MatrixDesign("prop1", 6, 10, stats=SourceStats(0.0, 0.3)))
    arch, _, X = _small_problem()
    m = train(init_model(arch, 0), X, A, ChannelConfig(1e-3), TrainConfig(epochs=1, batch_size=60))
    assert m.bound_matrix is A and m.input_scale > 1
