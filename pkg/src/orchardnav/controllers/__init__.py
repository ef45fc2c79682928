"""Navigation controllers behind one interface.

Every controller implements act(frame, prev_frame, state_vec) ->
yaw_rate_norm in [-1, 1]; a manifest records architecture, resolution and
normalization constants so act() can refuse mismatched inputs, and
checkpoints round-trip through the shared binary format.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..nn import load_checkpoint, save_checkpoint
from .baseline1 import (
    FEATURE_PIPELINE_ID,
    Baseline1Params,
    baseline1_act,
    baseline1_features,
    baseline1_fit,
    baseline1_predict,
)
from .baseline2 import (
    Baseline2Config,
    Baseline2Hyper,
    Baseline2Net,
    baseline2_act,
    train_baseline2,
)
from .policy import (
    ATTITUDE_NORM,
    STATE_DIM,
    VELOCITY_NORM,
    PolicyConfig,
    PolicyHyper,
    PolicyNet,
    drone_state_vec,
    policy_act,
    train_policy,
)
from .vae import TrainHyper, VaeConfig, VaeNet, encode, encode_frames, train_vae, vae_loss

MANIFEST_NAME = "manifest.json"
CHECKPOINT_NAME = "params.rrnn"


def _check_resolution(frame, resolution: int) -> None:
    if frame.pixels.shape[:2] != (resolution, resolution):
        raise ValueError(
            f"controller expects {resolution}x{resolution} frames, "
            f"got {frame.pixels.shape[:2]}")


class VaeController:
    kind = "vae"

    def __init__(self, encoder: VaeNet, policy: PolicyNet, max_yaw_rate: float):
        self.encoder = encoder
        self.policy = policy
        self.max_yaw_rate = max_yaw_rate

    @property
    def manifest(self) -> dict:
        return {
            "controller": self.kind,
            "resolution": self.encoder.config.resolution,
            "latent_dim": self.encoder.config.latent_dim,
            "channels": list(self.encoder.config.channels),
            "beta": self.encoder.config.beta,
            "policy_hidden": self.policy.config.hidden,
            "max_yaw_rate": self.max_yaw_rate,
            "state_norms": {"attitude": ATTITUDE_NORM, "velocity": VELOCITY_NORM},
        }

    def act(self, frame, prev_frame, state_vec) -> float:
        _check_resolution(frame, self.encoder.config.resolution)
        if len(state_vec) != STATE_DIM:
            raise ValueError(f"state_vec must have {STATE_DIM} entries")
        latent = encode(frame, self.encoder)
        return policy_act(latent, np.asarray(state_vec, dtype=np.float32), self.policy)


class Baseline1Controller:
    kind = "baseline1"

    def __init__(self, params: Baseline1Params, resolution: int):
        self.params = params
        self.resolution = resolution

    @property
    def manifest(self) -> dict:
        return {
            "controller": self.kind,
            "resolution": self.resolution,
            "feature_pipeline": self.params.feature_pipeline,
            "ridge_lambda": self.params.ridge_lambda,
        }

    def act(self, frame, prev_frame, state_vec) -> float:
        _check_resolution(frame, self.resolution)
        return baseline1_act(frame, prev_frame, self.params)


class Baseline2Controller:
    kind = "baseline2"

    def __init__(self, net: Baseline2Net):
        self.net = net

    @property
    def manifest(self) -> dict:
        return {
            "controller": self.kind,
            "resolution": self.net.config.resolution,
            "channels": list(self.net.config.channels),
            "dense": self.net.config.dense,
        }

    def act(self, frame, prev_frame, state_vec) -> float:
        _check_resolution(frame, self.net.config.resolution)
        return baseline2_act(frame, self.net)


def save_controller(directory, controller) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = controller.manifest
    if controller.kind == "vae":
        tensors = dict(controller.encoder.params)
        tensors.update(controller.policy.params)
    elif controller.kind == "baseline1":
        tensors = {"b1.weights": controller.params.weights.astype(np.float32)}
    else:
        tensors = dict(controller.net.params)
    save_checkpoint(directory / CHECKPOINT_NAME, tensors)
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_controller(directory):
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    tensors = load_checkpoint(directory / CHECKPOINT_NAME)
    kind = manifest["controller"]
    if kind == "vae":
        config = VaeConfig(resolution=manifest["resolution"],
                           channels=tuple(manifest["channels"]),
                           latent_dim=manifest["latent_dim"],
                           beta=manifest["beta"])
        enc_params = {k: v for k, v in tensors.items() if k.startswith(("enc.", "dec."))}
        pol_params = {k: v for k, v in tensors.items() if k.startswith("policy.")}
        encoder = VaeNet(config, params=enc_params)
        policy = PolicyNet(PolicyConfig(latent_dim=manifest["latent_dim"],
                                        hidden=manifest["policy_hidden"]),
                           params=pol_params)
        return VaeController(encoder, policy, manifest["max_yaw_rate"])
    if kind == "baseline1":
        params = Baseline1Params(feature_pipeline=manifest["feature_pipeline"],
                                 weights=tensors["b1.weights"].astype(np.float64),
                                 ridge_lambda=manifest["ridge_lambda"])
        return Baseline1Controller(params, manifest["resolution"])
    if kind == "baseline2":
        config = Baseline2Config(resolution=manifest["resolution"],
                                 channels=tuple(manifest["channels"]),
                                 dense=manifest["dense"])
        return Baseline2Controller(Baseline2Net(config, params=tensors))
    raise ValueError(f"unknown controller kind {kind!r}")
