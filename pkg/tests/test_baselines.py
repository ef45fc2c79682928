"""Baseline controller tests: handcrafted features + ridge, compact CNN."""
import numpy as np
import pytest

from orchardnav.controllers import (
    Baseline1Controller,
    Baseline2Controller,
    VaeController,
    load_controller,
    save_controller,
)
from orchardnav.controllers.baseline1 import (
    baseline1_act,
    baseline1_features,
    baseline1_fit,
    baseline1_predict,
)
from orchardnav.controllers.baseline2 import (
    Baseline2Config,
    Baseline2Hyper,
    Baseline2Net,
    baseline2_act,
    train_baseline2,
)
from orchardnav.controllers.policy import PolicyConfig, PolicyNet
from orchardnav.controllers.vae import VaeConfig, VaeNet
from orchardnav.render import Frame

B2_SMALL = Baseline2Config(resolution=16, channels=(4, 8), dense=16)


def frame_of(pixels):
    return Frame(pixels=np.asarray(pixels, dtype=np.float32))


def random_frames(n, res=64, seed=0):
    rng = np.random.default_rng(seed)
    return [frame_of(rng.uniform(size=(res, res, 3))) for _ in range(n)]


def test_constant_frames_give_null_features():
    frame = frame_of(np.full((64, 64, 3), 0.4))
    f = baseline1_features(frame, frame)
    w = 64
    assert np.allclose(f[w:2 * w], 0.0, atol=1e-6)  # edge energy
    assert np.allclose(f[2 * w:2 * w + 64], 0.0, atol=1e-6)  # flow proxy
    assert abs(f[-1]) < 1e-6  # asymmetry


def test_mirrored_pair_negates_asymmetry():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(size=(2, 64, 64, 3)).astype(np.float32)
    f = baseline1_features(frame_of(a), frame_of(b))
    f_mirror = baseline1_features(frame_of(a[:, ::-1]), frame_of(b[:, ::-1]))
    assert abs(f_mirror[-1] + f[-1]) < 1e-5


def test_feature_length_constant():
    frames = random_frames(5, seed=2)
    lengths = {len(baseline1_features(frames[i], frames[i - 1])) for i in range(1, 5)}
    assert lengths == {64 + 64 + 64 + 1}


def test_exact_linear_recovery_lambda_zero():
    rng = np.random.default_rng(3)
    frames = random_frames(420, seed=3)
    feats = np.stack([baseline1_features(frames[i], frames[i - 1])
                      for i in range(1, len(frames))])
    w_true = rng.normal(size=feats.shape[1])
    bias_true = 0.3
    y = feats @ w_true + bias_true
    params = baseline1_fit(feats, y, ridge_lambda=0.0)
    assert np.max(np.abs(params.weights[:-1] - w_true)) < 1e-6
    assert abs(params.weights[-1] - bias_true) < 1e-6


def test_large_lambda_shrinks_to_bias():
    rng = np.random.default_rng(4)
    frames = random_frames(50, seed=4)
    feats = np.stack([baseline1_features(frames[i], frames[i - 1])
                      for i in range(1, len(frames))])
    y = rng.uniform(0.1, 0.5, size=len(feats))
    params = baseline1_fit(feats, y, ridge_lambda=1e12)
    assert np.max(np.abs(params.weights[:-1])) < 1e-6
    assert abs(params.weights[-1] - y.mean()) < 1e-6
    out = baseline1_act(frames[1], frames[0], params)
    assert abs(out - np.clip(y.mean(), -1, 1)) < 1e-5


def test_singular_system_raises_without_ridge():
    frames = random_frames(6, seed=5)  # far fewer rows than features
    feats = np.stack([baseline1_features(frames[i], frames[i - 1])
                      for i in range(1, len(frames))])
    with pytest.raises(np.linalg.LinAlgError):
        baseline1_fit(feats, np.zeros(len(feats)), ridge_lambda=0.0)


def test_act_always_clamped():
    rng = np.random.default_rng(6)
    frames = random_frames(30, seed=6)
    feats = np.stack([baseline1_features(frames[i], frames[i - 1])
                      for i in range(1, len(frames))])
    params = baseline1_fit(feats, rng.uniform(-5, 5, size=len(feats)), ridge_lambda=1e-6)
    for i in range(1, len(frames)):
        assert -1.0 <= baseline1_act(frames[i], frames[i - 1], params) <= 1.0


def test_ridge_predictions_less_spread_than_targets():
    rng = np.random.default_rng(7)
    frames = random_frames(300, seed=7)
    feats = np.stack([baseline1_features(frames[i], frames[i - 1])
                      for i in range(1, len(frames))])
    y = np.clip(0.05 * feats[:, -1] + rng.normal(0, 0.4, size=len(feats)), -1, 1)
    train, hold = slice(0, 200), slice(200, None)
    params = baseline1_fit(feats[train], y[train], ridge_lambda=5.0)
    preds = baseline1_predict(feats[hold], params)
    assert np.var(preds) <= np.var(y[hold])


# ---------------------------------------------------------------- baseline2

def test_baseline2_zero_weights_zero_output():
    net = Baseline2Net(B2_SMALL, seed=0)
    for name in net.params:
        net.params[name] = np.zeros_like(net.params[name])
    assert baseline2_act(frame_of(np.ones((16, 16, 3))), net) == 0.0


def test_baseline2_single_demo_convergence():
    rng = np.random.default_rng(8)
    frames = np.tile(rng.uniform(size=(1, 16, 16, 3)).astype(np.float32), (32, 1, 1, 1))
    actions = np.full(32, -0.4, dtype=np.float32)
    net, losses = train_baseline2(frames, actions, B2_SMALL,
                                  Baseline2Hyper(epochs=150, batch_size=32, lr=3e-3, seed=0))
    assert abs(baseline2_act(frame_of(frames[0]), net) + 0.4) < 1e-2
    assert losses[-1] < losses[0]


def test_baseline2_training_reduces_mse():
    rng = np.random.default_rng(9)
    frames = rng.uniform(size=(64, 16, 16, 3)).astype(np.float32)
    actions = np.clip(frames[:, :, :8, 0].mean(axis=(1, 2)) - 0.5, -1, 1).astype(np.float32)
    net, losses = train_baseline2(frames, actions, B2_SMALL,
                                  Baseline2Hyper(epochs=30, batch_size=32, lr=2e-3, seed=1))
    assert losses[-1] < losses[0]


def test_baseline2_rejects_empty():
    with pytest.raises(ValueError, match="empty"):
        train_baseline2(np.zeros((0, 16, 16, 3)), np.zeros(0), B2_SMALL, Baseline2Hyper())


# ----------------------------------------------------- interface conformance

def make_all_controllers(res=16):
    vae = VaeNet(VaeConfig(resolution=res, channels=(4, 8), latent_dim=4), seed=0)
    policy = PolicyNet(PolicyConfig(latent_dim=4, hidden=16), seed=0)
    frames = random_frames(30, res=res, seed=10)
    feats = np.stack([baseline1_features(frames[i], frames[i - 1])
                      for i in range(1, len(frames))])
    b1 = baseline1_fit(feats, np.zeros(len(feats)), ridge_lambda=1.0)
    b2 = Baseline2Net(Baseline2Config(resolution=res, channels=(4, 8), dense=16), seed=0)
    return [
        VaeController(vae, policy, max_yaw_rate=0.7854),
        Baseline1Controller(b1, resolution=res),
        Baseline2Controller(b2),
    ]


def test_uniform_interface_identical_rollout():
    controllers = make_all_controllers()
    rng = np.random.default_rng(11)
    frames = random_frames(10, res=16, seed=11)
    state = rng.normal(0, 0.3, size=6)
    for controller in controllers:
        prev = frames[0]
        for frame in frames[1:]:
            out = controller.act(frame, prev, state)
            assert np.isfinite(out) and -1.0 <= out <= 1.0
            prev = frame


def test_act_refuses_mismatched_resolution():
    for controller in make_all_controllers(res=16):
        bad = frame_of(np.zeros((32, 32, 3)))
        with pytest.raises(ValueError):
            controller.act(bad, bad, np.zeros(6))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    frames = random_frames(4, res=16, seed=12)
    state = rng.normal(0, 0.2, size=6).astype(np.float32)
    for controller in make_all_controllers():
        directory = tmp_path / controller.kind
        save_controller(directory, controller)
        loaded = load_controller(directory)
        for frame, prev in zip(frames[1:], frames):
            assert abs(loaded.act(frame, prev, state)
                       - controller.act(frame, prev, state)) < 1e-6
