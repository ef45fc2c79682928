"""Handcrafted-feature + ridge-regression steering baseline.

Features per (frame, prev_frame) pair: per-column mean intensity, per-column
vertical-edge energy, an 8x8 block flow proxy (mean absolute temporal
difference signed by the block's horizontal brightness-gradient direction),
and the left/right half intensity asymmetry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FLOW_GRID = 8
FEATURE_PIPELINE_ID = "colmean-vedge-flow8x8-asym-v1"


@dataclass
class Baseline1Params:
    feature_pipeline: str
    weights: np.ndarray  # feature weights plus trailing bias
    ridge_lambda: float


def _luma(pixels: np.ndarray) -> np.ndarray:
    return (0.299 * pixels[..., 0] + 0.587 * pixels[..., 1]
            + 0.114 * pixels[..., 2]).astype(np.float32)


def baseline1_features(frame, prev_frame) -> np.ndarray:
    gray = _luma(frame.pixels)
    prev = _luma(prev_frame.pixels)
    if gray.shape != prev.shape:
        raise ValueError(f"frame shapes differ: {gray.shape} vs {prev.shape}")
    h, w = gray.shape

    col_mean = gray.mean(axis=0)

    gx = np.gradient(gray, axis=1)  # one-sided at borders: no dead columns
    edge = np.abs(gx).mean(axis=0)

    bh, bw = h // FLOW_GRID, w // FLOW_GRID
    diff = np.abs(gray - prev)[:bh * FLOW_GRID, :bw * FLOW_GRID]
    diff_blocks = diff.reshape(FLOW_GRID, bh, FLOW_GRID, bw).mean(axis=(1, 3))
    gx_blocks = gx[:bh * FLOW_GRID, :bw * FLOW_GRID] \
        .reshape(FLOW_GRID, bh, FLOW_GRID, bw).mean(axis=(1, 3))
    flow = (diff_blocks * np.sign(gx_blocks)).reshape(-1)

    # plain channel mean (not luma): keeps this independent of col_mean
    plain = frame.pixels.mean(axis=2)
    asymmetry = float(plain[:, :w // 2].mean() - plain[:, w - w // 2:].mean())

    return np.concatenate([col_mean, edge, flow, [asymmetry]]).astype(np.float32)


def baseline1_fit(features: np.ndarray, actions: np.ndarray,
                  ridge_lambda: float = 1.0) -> Baseline1Params:
    """Closed-form ridge solution; the bias column is never penalized."""
    x = np.concatenate([features, np.ones((len(features), 1), features.dtype)], axis=1)
    y = np.asarray(actions, dtype=np.float64)
    gram = x.T.astype(np.float64) @ x.astype(np.float64)
    penalty = np.eye(x.shape[1]) * ridge_lambda
    penalty[-1, -1] = 0.0
    system = gram + penalty
    if ridge_lambda == 0.0 and np.linalg.cond(system) > 1e12:
        raise np.linalg.LinAlgError("singular normal equations with lambda=0")
    weights = np.linalg.solve(system, x.T.astype(np.float64) @ y)
    return Baseline1Params(feature_pipeline=FEATURE_PIPELINE_ID,
                           weights=weights, ridge_lambda=ridge_lambda)


def baseline1_predict(features: np.ndarray, params: Baseline1Params) -> np.ndarray:
    x = np.concatenate([features, np.ones((len(features), 1), features.dtype)], axis=1)
    return np.clip(x @ params.weights, -1.0, 1.0)


def baseline1_act(frame, prev_frame, params: Baseline1Params) -> float:
    f = baseline1_features(frame, prev_frame)
    raw = float(f @ params.weights[:-1] + params.weights[-1])
    return float(np.clip(raw, -1.0, 1.0))
