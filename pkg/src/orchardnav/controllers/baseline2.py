"""Compact end-to-end CNN steering baseline (pixels in, yaw rate out)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import AdamState, LayerSpec, adam_step, init_layer_params, layer_backward, layer_forward


@dataclass(frozen=True)
class Baseline2Config:
    resolution: int = 64
    channels: tuple = (16, 32, 64, 64)
    dense: int = 128

    @property
    def spatial(self) -> int:
        return self.resolution >> len(self.channels)

    @property
    def flat(self) -> int:
        return self.spatial * self.spatial * self.channels[-1]


@dataclass(frozen=True)
class Baseline2Hyper:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0


class Baseline2Net:
    def __init__(self, config: Baseline2Config, params: dict | None = None, seed: int = 0):
        self.config = config
        self.conv_specs = []
        in_ch = 3
        for ch in config.channels:
            self.conv_specs.append(LayerSpec("conv", in_ch, ch, kernel=4, stride=2,
                                             pad=1, activation="relu"))
            in_ch = ch
        self.fc_specs = [
            LayerSpec("dense", config.flat, config.dense, activation="relu"),
            LayerSpec("dense", config.dense, 1, activation="tanh"),
        ]
        if params is not None:
            self.params = params
        else:
            rng = np.random.default_rng(seed)
            self.params = {}
            for i, spec in enumerate(self.conv_specs):
                p = init_layer_params(spec, rng)
                self.params[f"cnn.conv{i}.W"] = p["W"]
                self.params[f"cnn.conv{i}.b"] = p["b"]
            for i, spec in enumerate(self.fc_specs):
                p = init_layer_params(spec, rng)
                self.params[f"cnn.fc{i}.W"] = p["W"]
                self.params[f"cnn.fc{i}.b"] = p["b"]

    def _lp(self, name: str) -> dict:
        return {"W": self.params[f"{name}.W"], "b": self.params[f"{name}.b"]}

    def forward(self, x: np.ndarray, want_cache: bool = False):
        if x.shape[1] != self.config.resolution:
            raise ValueError(f"expected {self.config.resolution}px input, got {x.shape}")
        caches = []
        h = x
        for i, spec in enumerate(self.conv_specs):
            h, cache = layer_forward(spec, self._lp(f"cnn.conv{i}"), h)
            caches.append(cache)
        shape = h.shape
        h = h.reshape(len(x), -1)
        for i, spec in enumerate(self.fc_specs):
            h, cache = layer_forward(spec, self._lp(f"cnn.fc{i}"), h)
            caches.append(cache)
        if want_cache:
            return h, (caches, shape)
        return h

    def loss_and_grads(self, x: np.ndarray, targets: np.ndarray):
        n = len(x)
        out, (caches, conv_shape) = self.forward(x, want_cache=True)
        diff = out[:, 0] - targets
        loss = float(np.mean(diff * diff))
        grads = {}
        h_grad = (2.0 / n) * diff[:, None].astype(np.float32)
        for i in range(len(self.fc_specs) - 1, -1, -1):
            h_grad, layer_grads = layer_backward(self.fc_specs[i], self._lp(f"cnn.fc{i}"),
                                                 caches[len(self.conv_specs) + i], h_grad)
            grads[f"cnn.fc{i}.W"] = layer_grads["W"]
            grads[f"cnn.fc{i}.b"] = layer_grads["b"]
        h_grad = h_grad.reshape(conv_shape)
        for i in range(len(self.conv_specs) - 1, -1, -1):
            h_grad, layer_grads = layer_backward(self.conv_specs[i], self._lp(f"cnn.conv{i}"),
                                                 caches[i], h_grad)
            grads[f"cnn.conv{i}.W"] = layer_grads["W"]
            grads[f"cnn.conv{i}.b"] = layer_grads["b"]
        return loss, grads


def baseline2_act(frame, net: Baseline2Net) -> float:
    x = frame.pixels[None].astype(np.float32)
    return float(net.forward(x)[0, 0])


def train_baseline2(frames: np.ndarray, actions: np.ndarray, config: Baseline2Config,
                    hyper: Baseline2Hyper):
    """Adam on demonstration MSE, end to end from pixels."""
    n = len(actions)
    if n < 1:
        raise ValueError("empty demonstration set")
    scale = np.float32(1.0 / 255.0) if frames.dtype == np.uint8 else np.float32(1.0)
    y = np.asarray(actions, dtype=np.float32)

    net = Baseline2Net(config, seed=hyper.seed)
    state = AdamState(lr=hyper.lr)
    rng = np.random.default_rng(hyper.seed + 1)
    losses = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grads = net.loss_and_grads(frames[idx].astype(np.float32) * scale, y[idx])
            net.params, state = adam_step(net.params, grads, state)
            total += loss
            batches += 1
        losses.append(total / batches)
    return net, losses
