"""Policy MLP tests: bounds, convergence, gradients, state-vector build."""
import math

import numpy as np

from orchardnav.controllers.policy import (
    PolicyConfig,
    PolicyHyper,
    PolicyNet,
    drone_state_vec,
    policy_act,
    train_policy,
)
from orchardnav.estimator import EstimatedState
from orchardnav.geometry import quat_from_euler
from gradcheck_util import finite_difference_grad, relative_error

SMALL = PolicyConfig(latent_dim=4, hidden=16)


def test_output_bounded():
    rng = np.random.default_rng(0)
    net = PolicyNet(SMALL, seed=1)
    for name in net.params:  # inflate weights to force saturation attempts
        net.params[name] = (net.params[name] * 50).astype(np.float32)
    for _ in range(100):
        out = policy_act(rng.normal(size=4), rng.normal(size=6), net)
        assert -1.0 <= out <= 1.0


def test_zero_weights_zero_output():
    net = PolicyNet(SMALL, seed=0)
    for name in net.params:
        net.params[name] = np.zeros_like(net.params[name])
    assert policy_act(np.ones(4), np.ones(6), net) == 0.0


def test_deterministic():
    net = PolicyNet(SMALL, seed=2)
    latent, state = np.ones(4), np.full(6, 0.3)
    assert policy_act(latent, state, net) == policy_act(latent, state, net)


def test_single_target_regression_converges():
    latents = np.tile([0.2, -0.1, 0.4, 0.0], (64, 1)).astype(np.float32)
    states = np.tile([0.0, 0.1, 0.0, 0.4, 0.0, 0.0], (64, 1)).astype(np.float32)
    actions = np.full(64, 0.5, dtype=np.float32)
    net, losses = train_policy(latents, states, actions, SMALL,
                               PolicyHyper(epochs=200, batch_size=64, lr=3e-3, seed=0))
    assert abs(policy_act(latents[0], states[0], net) - 0.5) < 1e-2
    assert losses[-1] <= losses[0]


def test_policy_loss_gradients():
    rng = np.random.default_rng(3)
    net = PolicyNet(SMALL, seed=3)
    for name in net.params:
        net.params[name] = net.params[name].astype(np.float64)
        if name.endswith(".b"):
            net.params[name] = rng.normal(0.05, 0.1, net.params[name].shape)
    x = rng.normal(0, 0.4, size=(5, 10))
    y = rng.uniform(-0.8, 0.8, size=5)
    _, grads = net.loss_and_grads(x, y)
    for name, param in net.params.items():
        numeric = finite_difference_grad(lambda: net.loss_and_grads(x, y)[0], param)
        err = relative_error(grads[name], numeric)
        assert err < 1e-6, f"{name}: rel err {err}"


def test_train_deterministic():
    rng = np.random.default_rng(5)
    latents = rng.normal(size=(100, 4)).astype(np.float32)
    states = rng.normal(size=(100, 6)).astype(np.float32)
    actions = rng.uniform(-1, 1, size=100).astype(np.float32)
    hyper = PolicyHyper(epochs=5, batch_size=32, lr=1e-3, seed=7)
    net1, _ = train_policy(latents, states, actions, SMALL, hyper)
    net2, _ = train_policy(latents, states, actions, SMALL, hyper)
    for name in net1.params:
        np.testing.assert_array_equal(net1.params[name], net2.params[name])


def test_drone_state_vec_normalization():
    est = EstimatedState(
        altitude=1.8,
        attitude=quat_from_euler(math.pi / 8, -math.pi / 16, 0.7),
        body_velocity=np.array([0.6, -0.3, 0.15]),
        body_rates=np.array([0.0, 0.0, math.radians(22.5)]),
        covariance=np.eye(7),
    )
    vec = drone_state_vec(est, max_yaw_rate=math.radians(45))
    np.testing.assert_allclose(vec, [0.5, -0.25, 0.5, 0.4, -0.2, 0.1], atol=1e-6)
