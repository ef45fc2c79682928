"""Convolutional VAE: image compressor whose frozen encoder feeds the policy.

Encoder: stride-2 convs with LeakyReLU into mu / log-var heads. Decoder:
dense + stride-2 transpose convs with ReLU and a sigmoid output. Loss is
batch-averaged squared reconstruction error plus beta * KL to a unit normal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    AdamState,
    LayerSpec,
    adam_step,
    init_layer_params,
    kl_standard_normal,
    kl_standard_normal_backward,
    layer_backward,
    layer_forward,
    reparameterize,
    reparameterize_backward,
)
from ..render import AugmentParams, Frame, augment


@dataclass(frozen=True)
class VaeConfig:
    resolution: int = 64
    channels: tuple = (32, 64, 128, 256, 256)
    latent_dim: int = 64
    beta: float = 3.0

    @property
    def spatial(self) -> int:
        s = self.resolution >> len(self.channels)
        if s < 1:
            raise ValueError("too many stride-2 layers for this resolution")
        return s

    @property
    def flat(self) -> int:
        return self.spatial * self.spatial * self.channels[-1]


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


class VaeNet:
    """Parameter container plus forward/backward passes for the fixed shape."""

    def __init__(self, config: VaeConfig, params: dict | None = None,
                 seed: int = 0, dtype=np.float32):
        self.config = config
        self.enc_specs = []
        in_ch = 3
        for ch in config.channels:
            self.enc_specs.append(LayerSpec("conv", in_ch, ch, kernel=4, stride=2,
                                            pad=1, activation="leaky_relu"))
            in_ch = ch
        self.mu_spec = LayerSpec("dense", config.flat, config.latent_dim)
        self.logvar_spec = LayerSpec("dense", config.flat, config.latent_dim)
        self.dec_fc_spec = LayerSpec("dense", config.latent_dim, config.flat,
                                     activation="relu")
        self.dec_specs = []
        rev = list(config.channels[::-1])
        outs = rev[1:] + [3]
        for i, (cin, cout) in enumerate(zip(rev, outs)):
            activation = "sigmoid" if i == len(outs) - 1 else "relu"
            self.dec_specs.append(LayerSpec("tconv", cin, cout, kernel=4, stride=2,
                                            pad=1, activation=activation))
        if params is not None:
            self.params = params
        else:
            rng = np.random.default_rng(seed)
            self.params = {}
            for i, spec in enumerate(self.enc_specs):
                p = init_layer_params(spec, rng, dtype)
                self.params[f"enc.conv{i}.W"] = p["W"]
                self.params[f"enc.conv{i}.b"] = p["b"]
            for name, spec in (("enc.mu", self.mu_spec), ("enc.logvar", self.logvar_spec),
                               ("dec.fc", self.dec_fc_spec)):
                p = init_layer_params(spec, rng, dtype)
                self.params[f"{name}.W"] = p["W"]
                self.params[f"{name}.b"] = p["b"]
            for i, spec in enumerate(self.dec_specs):
                p = init_layer_params(spec, rng, dtype)
                self.params[f"dec.tconv{i}.W"] = p["W"]
                self.params[f"dec.tconv{i}.b"] = p["b"]

    def _layer_params(self, name: str) -> dict:
        return {"W": self.params[f"{name}.W"], "b": self.params[f"{name}.b"]}

    def encode(self, x: np.ndarray, want_cache: bool = False):
        """Image batch -> (mu, log_var); x is (N, H, W, 3) in [0, 1]."""
        if x.ndim != 4 or x.shape[1] != self.config.resolution \
                or x.shape[2] != self.config.resolution or x.shape[3] != 3:
            raise ValueError(
                f"expected (N, {self.config.resolution}, {self.config.resolution}, 3), "
                f"got {x.shape}")
        caches = []
        h = x
        for i, spec in enumerate(self.enc_specs):
            h, cache = layer_forward(spec, self._layer_params(f"enc.conv{i}"), h)
            caches.append(cache)
        n = h.shape[0]
        flat = h.reshape(n, -1)
        mu, mu_cache = layer_forward(self.mu_spec, self._layer_params("enc.mu"), flat)
        logvar, lv_cache = layer_forward(self.logvar_spec,
                                         self._layer_params("enc.logvar"), flat)
        if want_cache:
            return mu, logvar, (caches, mu_cache, lv_cache, h.shape)
        return mu, logvar

    def decode(self, z: np.ndarray, want_cache: bool = False):
        h, fc_cache = layer_forward(self.dec_fc_spec, self._layer_params("dec.fc"), z)
        s = self.config.spatial
        h = h.reshape(z.shape[0], s, s, self.config.channels[-1])
        caches = []
        for i, spec in enumerate(self.dec_specs):
            h, cache = layer_forward(spec, self._layer_params(f"dec.tconv{i}"), h)
            caches.append(cache)
        if want_cache:
            return h, (fc_cache, caches)
        return h

    def loss_and_grads(self, x: np.ndarray, eps: np.ndarray):
        """Returns (loss, grads, x_hat, (recon, kl)). Gradients reach every
        encoder/decoder parameter through the reparameterized sample."""
        n = x.shape[0]
        beta = self.config.beta
        mu, logvar, enc_cache = self.encode(x, want_cache=True)
        z = reparameterize(mu, logvar, eps)
        x_hat, dec_cache = self.decode(z, want_cache=True)

        diff = x_hat - x
        recon = float(np.sum(diff * diff)) / n
        kl = kl_standard_normal(mu, logvar)
        loss = recon + beta * kl

        grads = {}
        d_xhat = (2.0 / n) * diff
        fc_cache, dec_caches = dec_cache
        h_grad = d_xhat
        for i in range(len(self.dec_specs) - 1, -1, -1):
            h_grad, layer_grads = layer_backward(
                self.dec_specs[i], self._layer_params(f"dec.tconv{i}"),
                dec_caches[i], h_grad)
            grads[f"dec.tconv{i}.W"] = layer_grads["W"]
            grads[f"dec.tconv{i}.b"] = layer_grads["b"]
        dz, layer_grads = layer_backward(self.dec_fc_spec, self._layer_params("dec.fc"),
                                         fc_cache, h_grad.reshape(n, -1))
        grads["dec.fc.W"] = layer_grads["W"]
        grads["dec.fc.b"] = layer_grads["b"]

        dmu, dlogvar = reparameterize_backward(logvar, eps, dz)
        kl_dmu, kl_dlogvar = kl_standard_normal_backward(mu, logvar, beta)
        dmu = dmu + kl_dmu
        dlogvar = dlogvar + kl_dlogvar

        enc_caches, mu_cache, lv_cache, conv_shape = enc_cache
        dflat_mu, layer_grads = layer_backward(self.mu_spec, self._layer_params("enc.mu"),
                                               mu_cache, dmu)
        grads["enc.mu.W"] = layer_grads["W"]
        grads["enc.mu.b"] = layer_grads["b"]
        dflat_lv, layer_grads = layer_backward(self.logvar_spec,
                                               self._layer_params("enc.logvar"),
                                               lv_cache, dlogvar)
        grads["enc.logvar.W"] = layer_grads["W"]
        grads["enc.logvar.b"] = layer_grads["b"]

        h_grad = (dflat_mu + dflat_lv).reshape(conv_shape)
        for i in range(len(self.enc_specs) - 1, -1, -1):
            h_grad, layer_grads = layer_backward(
                self.enc_specs[i], self._layer_params(f"enc.conv{i}"),
                enc_caches[i], h_grad)
            grads[f"enc.conv{i}.W"] = layer_grads["W"]
            grads[f"enc.conv{i}.b"] = layer_grads["b"]
        return loss, grads, x_hat, (recon, kl)


def vae_loss(x: np.ndarray, vae: VaeNet, eps: np.ndarray):
    """Spec-facing wrapper: (loss, grads, reconstruction)."""
    loss, grads, x_hat, _ = vae.loss_and_grads(x, eps)
    return loss, grads, x_hat


def encode_frames(vae: VaeNet, pixels: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Deterministic latents (mu head) for a uint8 or float image stack."""
    x = pixels.astype(np.float32)
    if x.max() > 1.5:
        x = x / 255.0
    out = []
    for start in range(0, len(x), batch_size):
        mu, _ = vae.encode(x[start:start + batch_size])
        out.append(mu)
    return np.concatenate(out, axis=0)


def encode(frame: Frame, vae: VaeNet) -> np.ndarray:
    """Latent vector for one frame (no sampling at inference)."""
    mu, _ = vae.encode(frame.pixels[None].astype(np.float32))
    return mu[0]


def train_vae(images: np.ndarray, config: VaeConfig, hyper: TrainHyper,
              aug: AugmentParams | None = None):
    """Minibatch Adam over shuffled, augmented images.

    images: (N, H, W, 3) uint8 or float in [0, 1]. Returns (net, history)
    where history has per-epoch averaged loss / recon / kl.
    """
    if len(images) < 1:
        raise ValueError("empty image dataset")
    if hyper.epochs < 1:
        raise ValueError("need at least one epoch")
    if aug is None:
        aug = AugmentParams()

    net = VaeNet(config, seed=hyper.seed)
    state = AdamState(lr=hyper.lr)
    shuffle_rng = np.random.default_rng(hyper.seed + 1)
    eps_rng = np.random.default_rng(hyper.seed + 2)
    history = {"loss": [], "recon": [], "kl": []}

    scale = np.float32(1.0 / 255.0) if images.dtype == np.uint8 else np.float32(1.0)
    n = len(images)
    for epoch in range(hyper.epochs):
        order = shuffle_rng.permutation(n)
        totals = np.zeros(3)
        batches = 0
        for start in range(0, n, hyper.batch_size):
            batch_idx = order[start:start + hyper.batch_size]
            batch = images[batch_idx].astype(np.float32) * scale
            for k, global_idx in enumerate(batch_idx):
                view = augment(Frame(pixels=batch[k]), aug,
                               seed=hyper.seed * 1_000_003 + epoch * n + int(global_idx))
                batch[k] = view.pixels
            eps = eps_rng.standard_normal((len(batch), config.latent_dim)).astype(np.float32)
            loss, grads, _, (recon, kl) = net.loss_and_grads(batch, eps)
            net.params, state = adam_step(net.params, grads, state)
            totals += (loss, recon, kl)
            batches += 1
        history["loss"].append(totals[0] / batches)
        history["recon"].append(totals[1] / batches)
        history["kl"].append(totals[2] / batches)
    return net, history
