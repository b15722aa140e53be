"""The three architectures under test.

* U-Net with a relu head (clamped at 1) or a softmax head, output multiplied
  by the binary breast mask so non-breast activations are exactly zero.
* A VGG-like regressor: conv-conv-pool blocks, global average pool, affine,
  sigmoid scalar.
* A gradient-weighted class-activation map over the regressor's last conv
  layer, the attention baseline whose masks the dense-mask models are
  compared against.

The decoder upsamples nearest-neighbor and convolves (no transposed
convolution), and the final 2-channel projection reuses the 3x3 conv op.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import tensor as T
from .errors import DomainError, ShapeError
from .tensor import Precision, Tape, Tensor

MODEL_NAMES = ("unet_relu", "unet_softmax", "vgg_baseline")

Params = Dict[str, Tensor]


@dataclass
class UNetConfig:
    depth: int = 2
    base_channels: int = 8
    head: str = "relu"  # "relu" | "softmax"
    in_channels: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise DomainError("depth must be >= 1")
        if self.head not in ("relu", "softmax"):
            raise DomainError(f"head must be relu or softmax, got {self.head!r}")


@dataclass
class VGGConfig:
    blocks: int = 3
    base_channels: int = 8
    in_channels: int = 1


@dataclass
class MaskPair:
    """Per-pixel dense/fat maps in [0, 1], already zero outside the breast."""

    m_dense: Tensor
    m_fat: Tensor


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _conv_pair(rng, name, c_in, c_out, dtype, params):
    params[f"{name}_w"] = Tensor(
        _he_uniform(rng, (c_out, c_in, 3, 3), c_in * 9, dtype), requires_grad=True
    )
    params[f"{name}_b"] = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)


def _unet_channel_plan(cfg: UNetConfig):
    enc = []
    c_prev = cfg.in_channels
    for level in range(cfg.depth):
        c = cfg.base_channels * (1 << level)
        enc.append((c_prev, c))
        c_prev = c
    c_bottleneck = cfg.base_channels * (1 << cfg.depth)
    return enc, c_prev, c_bottleneck


def init_unet_params(cfg: UNetConfig, seed: int, precision: Precision = Precision.SINGLE) -> Params:
    """He-style fan-in uniform kernels, zero biases; deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dtype = precision.dtype
    params: Params = {}
    enc, c_last, c_bot = _unet_channel_plan(cfg)
    for level, (c_in, c_out) in enumerate(enc):
        _conv_pair(rng, f"enc{level}_conv1", c_in, c_out, dtype, params)
        _conv_pair(rng, f"enc{level}_conv2", c_out, c_out, dtype, params)
    _conv_pair(rng, "bottleneck_conv1", c_last, c_bot, dtype, params)
    _conv_pair(rng, "bottleneck_conv2", c_bot, c_bot, dtype, params)
    c_up = c_bot
    for level in reversed(range(cfg.depth)):
        c_skip = enc[level][1]
        _conv_pair(rng, f"dec{level}_conv1", c_up + c_skip, c_skip, dtype, params)
        _conv_pair(rng, f"dec{level}_conv2", c_skip, c_skip, dtype, params)
        c_up = c_skip
    _conv_pair(rng, "head", c_up, 2, dtype, params)
    return params


def _as_image_tensor(image, in_channels: int, dtype) -> Tensor:
    if isinstance(image, Tensor):
        return image
    arr = np.asarray(image, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] != in_channels:
        raise ShapeError(f"expected ({in_channels}, H, W) image, got {arr.shape}")
    return Tensor(arr)


def _conv_relu(params, name, x):
    return T.relu(T.conv2d(x, params[f"{name}_w"], params[f"{name}_b"]))


def unet_forward(cfg: UNetConfig, params: Params, image, breast_mask: np.ndarray) -> MaskPair:
    """Encoder, bottleneck, decoder with skips, 2-channel head, breast mask."""
    dtype = params["head_w"].dtype
    x = _as_image_tensor(image, cfg.in_channels, dtype)
    h, w = x.shape[1], x.shape[2]
    if h % (1 << cfg.depth) or w % (1 << cfg.depth):
        raise ShapeError(f"input size {h}x{w} not divisible by 2^depth = {1 << cfg.depth}")

    skips = []
    for level in range(cfg.depth):
        x = _conv_relu(params, f"enc{level}_conv1", x)
        x = _conv_relu(params, f"enc{level}_conv2", x)
        skips.append(x)
        x = T.maxpool2(x)
    x = _conv_relu(params, "bottleneck_conv1", x)
    x = _conv_relu(params, "bottleneck_conv2", x)
    for level in reversed(range(cfg.depth)):
        x = T.upsample2(x)
        x = T.concat_channels(x, skips[level])
        x = _conv_relu(params, f"dec{level}_conv1", x)
        x = _conv_relu(params, f"dec{level}_conv2", x)
    logits = T.conv2d(x, params["head_w"], params["head_b"])

    if cfg.head == "softmax":
        act = T.softmax_channels(logits)
    else:
        act = T.clip_max(T.relu(logits), 1.0)
    masked = T.mul_mask(act, np.asarray(breast_mask))
    return MaskPair(m_dense=T.take_channel(masked, 0), m_fat=T.take_channel(masked, 1))


# ---------------------------------------------------------------------------
# VGG-like regression baseline
# ---------------------------------------------------------------------------

def init_vgg_params(cfg: VGGConfig, seed: int, precision: Precision = Precision.SINGLE) -> Params:
    rng = np.random.Generator(np.random.PCG64(seed))
    dtype = precision.dtype
    params: Params = {}
    c_prev = cfg.in_channels
    for b in range(cfg.blocks):
        c = cfg.base_channels * (1 << b)
        _conv_pair(rng, f"block{b}_conv1", c_prev, c, dtype, params)
        _conv_pair(rng, f"block{b}_conv2", c, c, dtype, params)
        c_prev = c
    params["fc_w"] = Tensor(_he_uniform(rng, (c_prev,), c_prev, dtype), requires_grad=True)
    params["fc_b"] = Tensor(np.zeros((), dtype=dtype), requires_grad=True)
    return params


def _vgg_trunk(cfg: VGGConfig, params: Params, image) -> tuple[Tensor, Tensor]:
    """Returns (sigmoid scalar output, last conv activation) for grad-cam."""
    dtype = params["fc_w"].dtype
    x = _as_image_tensor(image, cfg.in_channels, dtype)
    last_act = None
    for b in range(cfg.blocks):
        x = _conv_relu(params, f"block{b}_conv1", x)
        x = _conv_relu(params, f"block{b}_conv2", x)
        last_act = x
        x = T.maxpool2(x)
    pooled = T.mean_spatial(x)
    out = T.sigmoid(T.affine_scalar(pooled, params["fc_w"], params["fc_b"]))
    return out, last_act


def vgg_forward(cfg: VGGConfig, params: Params, image) -> Tensor:
    """Scalar predicted percent density in (0, 1)."""
    out, _ = _vgg_trunk(cfg, params, image)
    return out


def attention_map(cfg: VGGConfig, params: Params, image) -> np.ndarray:
    """Grad-CAM over the last conv layer w.r.t. the scalar output.

    Channel-average of (spatial-mean gradient x activation), relu, nearest
    upsampling to the input size, then min-max normalization; a constant map
    collapses to all zeros.
    """
    with Tape() as tape:
        out, act = _vgg_trunk(cfg, params, image)
        tape.backward(out)
    a = act.data
    g = act.grad if act.grad is not None else np.zeros_like(a)
    weights = g.mean(axis=(1, 2))
    cam = (weights[:, None, None] * a).mean(axis=0)
    cam = np.maximum(cam, 0.0)
    side = np.asarray(image).shape[-1]
    factor = side // cam.shape[-1]
    cam = cam.repeat(factor, axis=0).repeat(factor, axis=1)
    lo, hi = cam.min(), cam.max()
    if hi == lo:
        return np.zeros_like(cam)
    return (cam - lo) / (hi - lo)
