"""Finite-difference verification of the tape's analytic gradients.

Checks run in double precision with central differences, step size
h = 1e-5 * max(1, |x|) per coordinate, and report the max relative error
|analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over the sampled
coordinates.  Non-scalar outputs are the caller's problem: each registered
case reduces its op through a fixed random projection so positional errors
in the backward pass cannot cancel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import DomainError
from .loss import LossConfig, percent_density, weak_density_loss
from .models import UNetConfig, init_unet_params, unet_forward
from .phantom import generate_phantom
from .tensor import Precision, Tape, Tensor

FD_STEP_SCALE = 1e-5
DEFAULT_TOLERANCE = 1e-4
COMPOSITION_TOLERANCE = 1e-3


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    per_input: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = DEFAULT_TOLERANCE,
    max_coords_per_input: Optional[int] = None,
    seed: int = 0,
    name: str = "op",
) -> GradCheckResult:
    """Compare tape gradients of a scalar-valued fn against central differences."""
    for t in inputs:
        if t.dtype != np.float64:
            raise DomainError("grad_check must run in double precision")
        if not t.requires_grad:
            raise DomainError("grad_check inputs must have requires_grad=True")

    with Tape() as tape:
        out = fn(*inputs)
        if out.ndim != 0:
            raise DomainError("grad_check requires a scalar loss head")
        tape.backward(out)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]
    for t in inputs:
        t.zero_grad()

    rng = np.random.Generator(np.random.PCG64(seed))
    per_input = []
    for i, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_input is not None and n > max_coords_per_input:
            coords = rng.choice(n, size=max_coords_per_input, replace=False)
        else:
            coords = np.arange(n)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            h = FD_STEP_SCALE * max(1.0, abs(orig))
            flat[c] = orig + h
            f_plus = fn(*inputs).item()
            flat[c] = orig - h
            f_minus = fn(*inputs).item()
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[i].reshape(-1)[c])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        per_input.append(worst)
    return GradCheckResult(
        name=name,
        max_rel_err=max(per_input) if per_input else 0.0,
        per_input=per_input,
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# registered cases (used by the CLI `gradcheck` subcommand and the tests)
# ---------------------------------------------------------------------------

def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _t(arr) -> Tensor:
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def _away_from(rng, shape, kink: float, margin: float = 1e-2, low=-2.0, high=2.0):
    """Uniform values in [low, high] at least `margin` away from `kink`."""
    x = rng.uniform(low, high, size=shape)
    near = np.abs(x - kink) < margin
    x[near] = kink + margin * np.where(x[near] >= kink, 1.0, -1.0) * 2.0
    return x

def _projection(rng, shape) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), dtype=np.float64)


def _projected(op: Callable, r: Tensor) -> Callable:
    return lambda *args: T.reduce_sum(T.mul(op(*args), r))


def _case_conv2d(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (2, 6, 6)))
    w = _t(rng.uniform(-1, 1, (3, 2, 3, 3)))
    b = _t(rng.uniform(-1, 1, 3))
    r = _projection(rng, (3, 6, 6))
    return _projected(T.conv2d, r), [x, w, b]


def _case_maxpool2(seed):
    rng = _rng(seed)
    # permuted grid: values pairwise distinct with gaps far above the FD step
    n = 2 * 6 * 6
    vals = rng.permutation(n).astype(np.float64) / n * 4.0 - 2.0
    x = _t(vals.reshape(2, 6, 6))
    r = _projection(rng, (2, 3, 3))
    return _projected(T.maxpool2, r), [x]


def _case_upsample2(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (2, 4, 4)))
    r = _projection(rng, (2, 8, 8))
    return _projected(T.upsample2, r), [x]


def _case_concat_channels(seed):
    rng = _rng(seed)
    a = _t(rng.uniform(-2, 2, (2, 4, 4)))
    b = _t(rng.uniform(-2, 2, (3, 4, 4)))
    r = _projection(rng, (5, 4, 4))
    return _projected(T.concat_channels, r), [a, b]


def _case_relu(seed):
    rng = _rng(seed)
    x = _t(_away_from(rng, (3, 5, 5), kink=0.0))
    r = _projection(rng, (3, 5, 5))
    return _projected(T.relu, r), [x]


def _case_softmax_channels(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (2, 5, 5)))
    r = _projection(rng, (2, 5, 5))
    return _projected(T.softmax_channels, r), [x]


def _case_sigmoid(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (3, 5, 5)))
    r = _projection(rng, (3, 5, 5))
    return _projected(T.sigmoid, r), [x]


def _case_clip_max(seed):
    rng = _rng(seed)
    x = _t(_away_from(rng, (3, 5, 5), kink=1.0))
    r = _projection(rng, (3, 5, 5))
    return _projected(lambda t: T.clip_max(t, 1.0), r), [x]


def _case_mul_mask(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (2, 6, 6)))
    mask = (rng.uniform(0, 1, (6, 6)) > 0.4).astype(np.float64)
    r = _projection(rng, (2, 6, 6))
    return _projected(lambda t: T.mul_mask(t, mask), r), [x]


def _case_binary(op):
    def build(seed):
        rng = _rng(seed)
        a = _t(rng.uniform(-2, 2, (4, 4)))
        if op is T.div:
            sign = np.where(rng.uniform(-1, 1, (4, 4)) >= 0, 1.0, -1.0)
            b = _t(sign * rng.uniform(0.5, 2.0, (4, 4)))
        else:
            b = _t(rng.uniform(-2, 2, (4, 4)))
        r = _projection(rng, (4, 4))
        return _projected(op, r), [a, b]

    return build


def _case_abs(seed):
    rng = _rng(seed)
    x = _t(_away_from(rng, (4, 4), kink=0.0))
    r = _projection(rng, (4, 4))
    return _projected(T.abs_, r), [x]


def _case_square(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (4, 4)))
    r = _projection(rng, (4, 4))
    return _projected(T.square, r), [x]


def _case_reduce_sum(seed):
    rng = _rng(seed)
    return T.reduce_sum, [_t(rng.uniform(-2, 2, (3, 4, 4)))]


def _case_reduce_mean(seed):
    rng = _rng(seed)
    return T.reduce_mean, [_t(rng.uniform(-2, 2, (3, 4, 4)))]


def _case_mean_spatial(seed):
    rng = _rng(seed)
    x = _t(rng.uniform(-2, 2, (3, 4, 4)))
    r = _projection(rng, (3,))
    return _projected(T.mean_spatial, r), [x]


def _case_affine_scalar(seed):
    rng = _rng(seed)
    v = _t(rng.uniform(-2, 2, 6))
    w = _t(rng.uniform(-2, 2, 6))
    b = _t(np.float64(rng.uniform(-1, 1)))
    return T.affine_scalar, [v, w, b]


def _case_percent_density(seed):
    rng = _rng(seed)
    mask = (rng.uniform(0, 1, (6, 6)) > 0.3).astype(np.uint8)
    if mask.sum() == 0:
        mask[3, 3] = 1
    m = _t(rng.uniform(0, 1, (6, 6)) * mask)
    return lambda t: percent_density(t, mask), [m]


def _case_unet_weak_loss(seed):
    """Full composition: unet_relu forward into the combined loss, 16x16."""
    cfg = UNetConfig(depth=2, base_channels=4, head="relu")
    params = init_unet_params(cfg, seed=seed, precision=Precision.DOUBLE)
    sample = generate_phantom(seed, size=32, target_class12=5)
    image = sample.image[::2, ::2].astype(np.float64)         # 16x16 probe input
    breast = sample.breast_mask[::2, ::2]
    if breast.sum() == 0:
        breast[8, 8] = 1
    config = LossConfig(density_term="l2", lambda_bin=0.1)
    names = sorted(params)

    def fn(*tensors):
        p = dict(zip(names, tensors))
        pair = unet_forward(cfg, p, image, breast)
        total, _ = weak_density_loss(pair, breast, 0.45, config)
        return total

    return fn, [params[n] for n in names]


CASES: Dict[str, Callable] = {
    "conv2d": _case_conv2d,
    "maxpool2": _case_maxpool2,
    "upsample2": _case_upsample2,
    "concat_channels": _case_concat_channels,
    "relu": _case_relu,
    "softmax_channels": _case_softmax_channels,
    "sigmoid": _case_sigmoid,
    "clip_max": _case_clip_max,
    "mul_mask": _case_mul_mask,
    "add": _case_binary(T.add),
    "sub": _case_binary(T.sub),
    "mul": _case_binary(T.mul),
    "div": _case_binary(T.div),
    "abs": _case_abs,
    "square": _case_square,
    "reduce_sum": _case_reduce_sum,
    "reduce_mean": _case_reduce_mean,
    "mean_spatial": _case_mean_spatial,
    "affine_scalar": _case_affine_scalar,
    "percent_density": _case_percent_density,
    "unet_weak_loss": _case_unet_weak_loss,
}


def run_case(name: str, seed: int = 0) -> GradCheckResult:
    if name not in CASES:
        raise DomainError(f"unknown gradcheck op {name!r}; valid: {', '.join(sorted(CASES))}")
    fn, inputs = CASES[name](seed)
    if name == "unet_weak_loss":
        return grad_check(
            fn,
            inputs,
            tolerance=COMPOSITION_TOLERANCE,
            max_coords_per_input=3,
            seed=seed,
            name=name,
        )
    return grad_check(fn, inputs, tolerance=DEFAULT_TOLERANCE, seed=seed, name=name)
