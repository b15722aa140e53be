"""Area-linkage loss: ties the dense-mask area inside the breast to the
image-level percent-density target.

total = d(pd_hat, pd_target) + lambda_bin * B(m_dense)

where pd_hat is the normalized mask area, d is squared (l2) or absolute (l1)
error, and B = mean of m*(1-m) over the breast pushes mask values toward
{0, 1}.  Without B the l2 loss has a degenerate optimum: its gradient is
identical at every in-breast pixel, so a uniform mask of value pd_target is
a perfect minimum with no spatial structure.  lambda_bin=0 keeps that
ablation available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .errors import DomainError
from .tensor import Tensor

DENSITY_TERMS = ("l1", "l2")


@dataclass
class LossConfig:
    density_term: str = "l2"
    lambda_bin: float = 0.1

    def __post_init__(self):
        if self.density_term not in DENSITY_TERMS:
            raise DomainError(f"density_term must be one of {DENSITY_TERMS}")
        if self.lambda_bin < 0:
            raise DomainError("lambda_bin must be >= 0")


@dataclass
class LossReport:
    total: float
    density_term: float
    bin_term: float
    pd_hat: float


def percent_density(m_dense: Tensor, breast_mask: np.ndarray) -> Tensor:
    """Differentiable pd_hat = sum(m_dense * mask) / |mask| as a scalar tensor.

    The mask multiplication is part of the op, so the gradient is exactly
    mask / |mask|: uniform inside the breast, zero outside.
    """
    n = int(np.asarray(breast_mask).sum())
    if n == 0:
        raise DomainError("empty breast mask")
    return T.div(T.reduce_sum(T.mul_mask(m_dense, breast_mask)), float(n))


def weak_density_loss(
    mask_pair,
    breast_mask: np.ndarray,
    pd_target: float,
    config: LossConfig,
) -> tuple[Tensor, LossReport]:
    """Combined loss on a model's mask pair; returns (loss tensor, report)."""
    if not 0.0 <= pd_target <= 1.0:
        raise DomainError(f"pd_target must be in [0, 1], got {pd_target}")
    m_dense = mask_pair.m_dense
    n = int(np.asarray(breast_mask).sum())
    if n == 0:
        raise DomainError("empty breast mask")

    pd_hat = percent_density(m_dense, breast_mask)
    diff = T.sub(pd_hat, float(pd_target))
    density = T.square(diff) if config.density_term == "l2" else T.abs_(diff)
    bin_term = T.div(T.reduce_sum(T.mul(m_dense, T.sub(1.0, m_dense))), float(n))
    total = T.add(density, T.mul(bin_term, float(config.lambda_bin)))
    report = LossReport(
        total=total.item(),
        density_term=density.item(),
        bin_term=bin_term.item(),
        pd_hat=pd_hat.item(),
    )
    return total, report


def batch_loss(
    samples: Sequence,
    forward_fn: Callable,
    config: LossConfig,
) -> tuple[Tensor, LossReport, list[LossReport]]:
    """Arithmetic mean of per-sample totals.

    forward_fn(sample) must return (mask_pair, breast_mask, pd_target).
    Returns (mean loss tensor, mean report, per-sample reports).
    """
    if len(samples) < 1:
        raise DomainError("batch must contain at least one sample")
    totals = []
    reports = []
    for sample in samples:
        mask_pair, breast_mask, pd_target = forward_fn(sample)
        total, rep = weak_density_loss(mask_pair, breast_mask, pd_target, config)
        totals.append(total)
        reports.append(rep)
    acc = totals[0]
    for t in totals[1:]:
        acc = T.add(acc, t)
    mean = T.div(acc, float(len(samples)))
    mean_report = LossReport(
        total=float(np.mean([r.total for r in reports])),
        density_term=float(np.mean([r.density_term for r in reports])),
        bin_term=float(np.mean([r.bin_term for r in reports])),
        pd_hat=float(np.mean([r.pd_hat for r in reports])),
    )
    return mean, mean_report, reports
