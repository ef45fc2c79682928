"""Yaw-rate policy MLP on (latent, drone state) and its trainer."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..nn import AdamState, LayerSpec, adam_step, init_layer_params, layer_backward, layer_forward

STATE_DIM = 6
ATTITUDE_NORM = math.pi / 4
VELOCITY_NORM = 1.5


def drone_state_vec(est, max_yaw_rate: float) -> np.ndarray:
    """Normalized policy state input, built only from the estimator output."""
    from ..geometry import quat_to_euler

    roll, pitch, _ = quat_to_euler(est.attitude)
    return np.array([
        roll / ATTITUDE_NORM,
        pitch / ATTITUDE_NORM,
        est.body_rates[2] / max_yaw_rate,
        est.body_velocity[0] / VELOCITY_NORM,
        est.body_velocity[1] / VELOCITY_NORM,
        est.body_velocity[2] / VELOCITY_NORM,
    ], dtype=np.float32)


@dataclass(frozen=True)
class PolicyConfig:
    latent_dim: int = 64
    hidden: int = 256


@dataclass(frozen=True)
class PolicyHyper:
    epochs: int = 40
    batch_size: int = 256
    lr: float = 1e-3
    lr_final: float = 1e-4  # linear decay target over the epochs
    seed: int = 0


class PolicyNet:
    def __init__(self, config: PolicyConfig, params: dict | None = None, seed: int = 0):
        self.config = config
        in_dim = config.latent_dim + STATE_DIM
        self.specs = [
            LayerSpec("dense", in_dim, config.hidden, activation="relu"),
            LayerSpec("dense", config.hidden, config.hidden, activation="relu"),
            LayerSpec("dense", config.hidden, 1, activation="tanh"),
        ]
        if params is not None:
            self.params = params
        else:
            rng = np.random.default_rng(seed)
            self.params = {}
            for i, spec in enumerate(self.specs):
                p = init_layer_params(spec, rng)
                self.params[f"policy.fc{i}.W"] = p["W"]
                self.params[f"policy.fc{i}.b"] = p["b"]

    def _layer_params(self, i: int) -> dict:
        return {"W": self.params[f"policy.fc{i}.W"], "b": self.params[f"policy.fc{i}.b"]}

    def forward(self, x: np.ndarray, want_cache: bool = False):
        caches = []
        h = x
        for i, spec in enumerate(self.specs):
            h, cache = layer_forward(spec, self._layer_params(i), h)
            caches.append(cache)
        if want_cache:
            return h, caches
        return h

    def loss_and_grads(self, x: np.ndarray, targets: np.ndarray):
        """MSE between policy output and demonstrated actions."""
        n = x.shape[0]
        out, caches = self.forward(x, want_cache=True)
        diff = out[:, 0] - targets
        loss = float(np.mean(diff * diff))
        grads = {}
        h_grad = (2.0 / n) * diff[:, None].astype(np.float32)
        for i in range(len(self.specs) - 1, -1, -1):
            h_grad, layer_grads = layer_backward(self.specs[i], self._layer_params(i),
                                                 caches[i], h_grad)
            grads[f"policy.fc{i}.W"] = layer_grads["W"]
            grads[f"policy.fc{i}.b"] = layer_grads["b"]
        return loss, grads


def policy_act(latent: np.ndarray, state_vec: np.ndarray, policy: PolicyNet) -> float:
    """tanh-bounded yaw-rate command in [-1, 1]."""
    x = np.concatenate([latent, state_vec]).astype(np.float32)[None]
    return float(policy.forward(x)[0, 0])


def train_policy(latents: np.ndarray, state_vecs: np.ndarray, actions: np.ndarray,
                 config: PolicyConfig, hyper: PolicyHyper):
    """Adam on the demonstration MSE. Inputs must already be in canonical
    (dataset-id) order so retraining is invariant to collection order."""
    n = len(actions)
    if n < 1:
        raise ValueError("empty demonstration set")
    x = np.concatenate([latents, state_vecs], axis=1).astype(np.float32)
    y = np.asarray(actions, dtype=np.float32)

    net = PolicyNet(config, seed=hyper.seed)
    state = AdamState(lr=hyper.lr)
    rng = np.random.default_rng(hyper.seed + 1)
    losses = []
    for epoch in range(hyper.epochs):
        if hyper.epochs > 1:
            frac = epoch / (hyper.epochs - 1)
            state.lr = hyper.lr + (hyper.lr_final - hyper.lr) * frac
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grads = net.loss_and_grads(x[idx], y[idx])
            net.params, state = adam_step(net.params, grads, state)
            total += loss
            batches += 1
        losses.append(total / batches)
    return net, losses
