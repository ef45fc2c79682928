"""Dense / convolution / transpose-convolution kernels with manual gradients.

Data layout is NHWC, conv weights (KH, KW, Cin, Cout), transpose-conv weights
(Cin, KH, KW, Cout), dense weights (Din, Dout). Everything is plain numpy;
compute dtype follows the parameter arrays (float32 for training, float64 for
gradient verification).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.2

_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Enable finiteness assertions after every kernel (slow; tests only)."""
    global _debug_checks
    _debug_checks = enabled


def _check_finite(name: str, arr: np.ndarray) -> None:
    if _debug_checks and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "dense" | "conv" | "tconv"
    in_size: int  # input width (dense) or channels (conv/tconv)
    out_size: int
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    activation: str = "none"  # none | relu | leaky_relu | tanh | sigmoid

    def __post_init__(self):
        if self.kind not in ("dense", "conv", "tconv"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1 or self.kernel < 1:
            raise ValueError("stride and kernel must be >= 1")
        if self.activation not in ("none", "relu", "leaky_relu", "tanh", "sigmoid"):
            raise ValueError(f"unknown activation {self.activation!r}")


def conv_output_size(in_size: int, kernel: int, stride: int, pad: int) -> int:
    return (in_size + 2 * pad - kernel) // stride + 1


def tconv_output_size(in_size: int, kernel: int, stride: int, pad: int) -> int:
    return (in_size - 1) * stride + kernel - 2 * pad


# ------------------------------------------------------------- activations

def _activation_forward(name: str, pre: np.ndarray) -> tuple[np.ndarray, object]:
    if name == "none":
        return pre, None
    if name == "relu":
        return np.maximum(pre, 0.0), pre > 0
    if name == "leaky_relu":
        mask = pre > 0
        return np.where(mask, pre, LEAKY_SLOPE * pre), mask
    if name == "tanh":
        out = np.tanh(pre)
        return out, out
    out = 1.0 / (1.0 + np.exp(-pre))
    return out, out


def _activation_backward(name: str, act_cache, dy: np.ndarray) -> np.ndarray:
    if name == "none":
        return dy
    if name == "relu":
        return dy * act_cache
    if name == "leaky_relu":
        return dy * np.where(act_cache, 1.0, LEAKY_SLOPE)
    if name == "tanh":
        return dy * (1.0 - act_cache * act_cache)
    return dy * act_cache * (1.0 - act_cache)


# ------------------------------------------------------------ im2col core

def _im2col(x_pad: np.ndarray, kernel: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """(N, Hp, Wp, C) -> (N, out_h, out_w, kernel, kernel, C) patch copy."""
    windows = np.lib.stride_tricks.sliding_window_view(x_pad, (kernel, kernel), axis=(1, 2))
    # sliding_window_view yields (N, H', W', C, KH, KW); reorder to patches-last
    windows = windows[:, ::stride, ::stride]
    return np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3))


def _col2im(cols: np.ndarray, pad_shape: tuple, kernel: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patches back onto the padded image."""
    n, out_h, out_w = cols.shape[:3]
    acc = np.zeros(pad_shape, dtype=cols.dtype)
    for kh in range(kernel):
        for kw in range(kernel):
            acc[:, kh:kh + stride * out_h:stride, kw:kw + stride * out_w:stride, :] += \
                cols[:, :, :, kh, kw, :]
    return acc


# ----------------------------------------------------------------- layers

def layer_forward(spec: LayerSpec, params: dict, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run one layer; returns (output, cache) with cache consumed by backward."""
    w, b = params["W"], params["b"]
    if spec.kind == "dense":
        if x.ndim != 2 or x.shape[1] != spec.in_size:
            raise ShapeError(f"dense expects (N, {spec.in_size}), got {x.shape}")
        pre = x @ w + b
        cache_core = {"x": x}
    elif spec.kind == "conv":
        if x.ndim != 4 or x.shape[3] != spec.in_size:
            raise ShapeError(f"conv expects (N, H, W, {spec.in_size}), got {x.shape}")
        n, h, wd = x.shape[:3]
        out_h = conv_output_size(h, spec.kernel, spec.stride, spec.pad)
        out_w = conv_output_size(wd, spec.kernel, spec.stride, spec.pad)
        x_pad = np.pad(x, ((0, 0), (spec.pad, spec.pad), (spec.pad, spec.pad), (0, 0)))
        cols = _im2col(x_pad, spec.kernel, spec.stride, out_h, out_w)
        mat = cols.reshape(n * out_h * out_w, -1)
        pre = (mat @ w.reshape(-1, spec.out_size) + b).reshape(n, out_h, out_w, spec.out_size)
        cache_core = {"mat": mat, "x_pad_shape": x_pad.shape, "in_shape": x.shape}
    else:  # tconv
        if x.ndim != 4 or x.shape[3] != spec.in_size:
            raise ShapeError(f"tconv expects (N, H, W, {spec.in_size}), got {x.shape}")
        n, h, wd = x.shape[:3]
        out_h = tconv_output_size(h, spec.kernel, spec.stride, spec.pad)
        out_w = tconv_output_size(wd, spec.kernel, spec.stride, spec.pad)
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"tconv output collapses for input {x.shape}")
        cols = (x.reshape(n * h * wd, spec.in_size) @ w.reshape(spec.in_size, -1))
        cols = cols.reshape(n, h, wd, spec.kernel, spec.kernel, spec.out_size)
        full = _col2im(cols, (n, out_h + 2 * spec.pad, out_w + 2 * spec.pad, spec.out_size),
                       spec.kernel, spec.stride)
        pre = full[:, spec.pad:spec.pad + out_h, spec.pad:spec.pad + out_w, :] + b
        cache_core = {"x": x, "out_hw": (out_h, out_w)}

    out, act_cache = _activation_forward(spec.activation, pre)
    _check_finite(f"{spec.kind} output", out)
    return out, {"spec": spec, "act": act_cache, "out_shape": out.shape, **cache_core}


def layer_backward(spec: LayerSpec, params: dict, cache: dict,
                   output_grad: np.ndarray) -> tuple[np.ndarray, dict]:
    """Exact gradients of layer_forward; cache must come from a matching call."""
    if cache.get("spec") is not spec or cache.get("out_shape") != output_grad.shape:
        raise ValueError("stale or mismatched cache for layer_backward")
    w = params["W"]
    dpre = _activation_backward(spec.activation, cache["act"], output_grad)

    if spec.kind == "dense":
        x = cache["x"]
        dw = x.T @ dpre
        db = dpre.sum(axis=0)
        dx = dpre @ w.T
    elif spec.kind == "conv":
        n, out_h, out_w, _ = dpre.shape
        dmat = dpre.reshape(n * out_h * out_w, spec.out_size)
        dw = (cache["mat"].T @ dmat).reshape(w.shape)
        db = dmat.sum(axis=0)
        dcols = (dmat @ w.reshape(-1, spec.out_size).T).reshape(
            n, out_h, out_w, spec.kernel, spec.kernel, spec.in_size)
        dx_pad = _col2im(dcols, cache["x_pad_shape"], spec.kernel, spec.stride)
        in_h, in_w = cache["in_shape"][1:3]
        dx = dx_pad[:, spec.pad:spec.pad + in_h, spec.pad:spec.pad + in_w, :]
    else:  # tconv
        x = cache["x"]
        n, h, wd = x.shape[:3]
        dpre_pad = np.pad(dpre, ((0, 0), (spec.pad, spec.pad), (spec.pad, spec.pad), (0, 0)))
        dcols = _im2col(dpre_pad, spec.kernel, spec.stride, h, wd)
        dmat = dcols.reshape(n * h * wd, -1)
        dx = (dmat @ w.reshape(spec.in_size, -1).T).reshape(x.shape)
        dw = (x.reshape(n * h * wd, spec.in_size).T @ dmat).reshape(w.shape)
        db = dpre.sum(axis=(0, 1, 2))

    _check_finite(f"{spec.kind} input grad", dx)
    return dx, {"W": dw, "b": db}


def init_layer_params(spec: LayerSpec, rng: np.random.Generator,
                      dtype=np.float32) -> dict:
    """Kaiming-uniform for relu-family layers, Xavier-uniform otherwise."""
    if spec.kind == "dense":
        w_shape = (spec.in_size, spec.out_size)
        fan_in = spec.in_size
        fan_out = spec.out_size
    elif spec.kind == "conv":
        w_shape = (spec.kernel, spec.kernel, spec.in_size, spec.out_size)
        fan_in = spec.kernel * spec.kernel * spec.in_size
        fan_out = spec.kernel * spec.kernel * spec.out_size
    else:
        w_shape = (spec.in_size, spec.kernel, spec.kernel, spec.out_size)
        fan_in = spec.kernel * spec.kernel * spec.in_size
        fan_out = spec.kernel * spec.kernel * spec.out_size

    if spec.activation in ("relu", "leaky_relu"):
        bound = np.sqrt(6.0 / fan_in)
    else:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
    return {
        "W": rng.uniform(-bound, bound, size=w_shape).astype(dtype),
        "b": np.zeros(spec.out_size, dtype=dtype),
    }
