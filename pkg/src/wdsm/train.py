"""Deterministic training loop (Adam) and the evaluation pipeline.

Training is weakly supervised by contract: only the image, breast mask and
the class-derived density target are ever read; dense-truth files stay
untouched.  Given (config, manifest) the final checkpoint is reproduced
bitwise on one platform: parameter init and batch shuffling use separate
PCG64 streams derived from the master seed, and the loop is single-threaded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import grid
from .errors import CheckpointError, DomainError, ShapeError
from .checkpoint import save_checkpoint
from .loss import LossConfig, batch_loss, percent_density
from .metrics import (
    ClassificationReport,
    RegressionReport,
    SegmentationReport,
    c_index,
    classification_report,
    dice,
    mae,
    mxae,
)
from .models import (
    MODEL_NAMES,
    Params,
    UNetConfig,
    VGGConfig,
    attention_map,
    init_unet_params,
    init_vgg_params,
    unet_forward,
    vgg_forward,
)
from .phantom import Manifest, Sample, load_sample
from .tensor import Tape
from . import tensor as T

# master-seed derivations (PCG64 streams must not collide)
INIT_STREAM = 1
SHUFFLE_STREAM = 2


@dataclass
class TrainConfig:
    model: str = "unet_relu"
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    lambda_bin: float = 0.1
    density_term: str = "l2"
    use_exact_pd: bool = False   # ablation: train on exact pd instead of bin midpoint
    checkpoint_every: int = 0    # epochs between intermediate saves; 0 = final only
    depth: int = 2
    base_channels: int = 8
    vgg_blocks: int = 3

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise DomainError(f"model must be one of {MODEL_NAMES}, got {self.model!r}")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if self.batch_size < 1 or self.lr <= 0 or self.eps <= 0:
            raise DomainError("batch_size, lr and eps must be positive")


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_density: float
    loss_bin: float
    val_mae: Optional[float]
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        lines = ["epoch,loss_total,loss_density,loss_bin,val_mae,seconds"]
        for r in self.records:
            val = "" if r.val_mae is None else f"{r.val_mae:.6f}"
            lines.append(
                f"{r.epoch},{r.loss_total:.8f},{r.loss_density:.8f},"
                f"{r.loss_bin:.8f},{val},{r.seconds:.3f}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]


def adam_init(params: Dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float],
    eps: float,
    t: int,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh param/state dicts."""
    if t < 1:
        raise DomainError("Adam timestep t must be >= 1")
    b1, b2 = betas
    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for k, theta in params.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {theta.shape} for {k!r}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params[k] = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(m=new_m, v=new_v)


# ---------------------------------------------------------------------------
# model plumbing
# ---------------------------------------------------------------------------

def model_config_dict(cfg: TrainConfig) -> dict:
    doc = {"model": cfg.model, "precision": "single"}
    if cfg.model.startswith("unet"):
        doc.update(
            depth=cfg.depth,
            base_channels=cfg.base_channels,
            head="softmax" if cfg.model == "unet_softmax" else "relu",
        )
    else:
        doc.update(blocks=cfg.vgg_blocks, base_channels=cfg.base_channels)
    return doc


def build_arch(config: dict):
    """Reconstruct the architecture config recorded in a checkpoint."""
    model = config.get("model")
    if model in ("unet_relu", "unet_softmax"):
        return UNetConfig(
            depth=int(config["depth"]),
            base_channels=int(config["base_channels"]),
            head=config["head"],
        )
    if model == "vgg_baseline":
        return VGGConfig(
            blocks=int(config["blocks"]), base_channels=int(config["base_channels"])
        )
    raise CheckpointError(f"checkpoint names unknown model {model!r}")


def _init_params(cfg: TrainConfig, arch) -> Params:
    init_seed = np.random.SeedSequence((cfg.seed, INIT_STREAM))
    seed_int = int(init_seed.generate_state(1, dtype=np.uint32)[0])
    if isinstance(arch, UNetConfig):
        return init_unet_params(arch, seed_int)
    return init_vgg_params(arch, seed_int)


def predicted_pd(arch, params: Params, sample: Sample) -> tuple[float, Optional[np.ndarray]]:
    """(pd_hat, dense map used for Dice) for one sample, no tape."""
    if isinstance(arch, UNetConfig):
        pair = unet_forward(arch, params, sample.image, sample.breast_mask)
        pd_hat = percent_density(pair.m_dense, sample.breast_mask).item()
        return pd_hat, pair.m_dense.data
    out = vgg_forward(arch, params, sample.image)
    # the regressor has no mask head: its attention map stands in, breast-masked
    attn = attention_map(arch, params, sample.image) * sample.breast_mask
    return out.item(), attn


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(
    config: TrainConfig,
    manifest: Manifest,
    out_ckpt=None,
    val_samples: Optional[Sequence[Sample]] = None,
) -> tuple[Params, dict, TrainLog]:
    """Train on the manifest's train split; returns (params, config, log)."""
    entries = manifest.split("train")
    if not entries:
        raise DomainError("manifest has no train samples")
    # weak supervision firewall: dense truth is never loaded here
    samples = [load_sample(manifest, e, include_dense=False) for e in entries]
    targets = [
        e.pd if config.use_exact_pd else grid.class12_to_pd(e.class12) for e in entries
    ]

    cfg = config
    arch = build_arch(model_config_dict(cfg))
    params = _init_params(cfg, arch)
    loss_cfg = LossConfig(density_term=cfg.density_term, lambda_bin=cfg.lambda_bin)
    shuffle_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((cfg.seed, SHUFFLE_STREAM)))
    )

    is_unet = isinstance(arch, UNetConfig)

    def unet_item(i: int):
        s = samples[i]
        pair = unet_forward(arch, params, s.image, s.breast_mask)
        return pair, s.breast_mask, targets[i]

    def vgg_batch_loss(idx: Sequence[int]):
        totals = []
        for i in idx:
            out = vgg_forward(arch, params, samples[i].image)
            totals.append(T.square(T.sub(out, float(targets[i]))))
        acc = totals[0]
        for t_ in totals[1:]:
            acc = T.add(acc, t_)
        return T.div(acc, float(len(idx)))

    state = adam_init({k: p.data for k, p in params.items()})
    log = TrainLog()
    step = 0
    cfg_doc = model_config_dict(cfg)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(samples))
        sums = np.zeros(3)  # total, density, bin weighted by batch sizes
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            for p in params.values():
                p.zero_grad()
            with Tape() as tape:
                if is_unet:
                    mean_loss, mean_rep, _ = batch_loss(list(idx), unet_item, loss_cfg)
                    sums += len(idx) * np.array(
                        [mean_rep.total, mean_rep.density_term, mean_rep.bin_term]
                    )
                else:
                    mean_loss = vgg_batch_loss(idx)
                    mse = mean_loss.item()
                    sums += len(idx) * np.array([mse, mse, 0.0])
                tape.backward(mean_loss)
            grads = {
                k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()
            }
            step += 1
            new_data, state = adam_step(
                {k: p.data for k, p in params.items()},
                grads,
                state,
                lr=cfg.lr,
                betas=(cfg.beta1, cfg.beta2),
                eps=cfg.eps,
                t=step,
            )
            for k, p in params.items():
                p.data = new_data[k]

        val_mae = None
        if val_samples:
            preds = [predicted_pd(arch, params, s)[0] for s in val_samples]
            val_mae = mae(preds, [s.pd for s in val_samples])
        log.records.append(
            EpochRecord(
                epoch=epoch,
                loss_total=float(sums[0] / len(samples)),
                loss_density=float(sums[1] / len(samples)),
                loss_bin=float(sums[2] / len(samples)),
                val_mae=val_mae,
                seconds=time.perf_counter() - t0,
            )
        )
        if out_ckpt is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(params, cfg_doc, Path(f"{out_ckpt}.epoch{epoch}"))

    if out_ckpt is not None:
        save_checkpoint(params, cfg_doc, out_ckpt)
    return params, cfg_doc, log


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

DICE_THRESHOLD = 0.5


@dataclass
class EvalReport:
    model: str
    split: str
    n_samples: int
    regression: RegressionReport
    classification: ClassificationReport
    segmentation: Optional[SegmentationReport]
    per_sample: list

    def to_dict(self) -> dict:
        doc = {
            "model": self.model,
            "split": self.split,
            "n_samples": self.n_samples,
            "regression": self.regression.to_dict(),
            "classification": self.classification.to_dict(),
            "per_sample": self.per_sample,
        }
        if self.segmentation is not None:
            doc["segmentation"] = self.segmentation.to_dict()
        return doc

    def to_csv(self) -> str:
        """One row, columns ordered as in the reference result tables."""
        header = (
            "model,split,accuracy,precision,recall,f1_score,cohen_kappa,"
            "mae_percent,mxae_percent,c_index,dice_mean"
        )
        c, r = self.classification, self.regression
        dice_cell = "" if self.segmentation is None else f"{self.segmentation.dice_mean:.6f}"
        ci_cell = "" if r.c_index is None else f"{r.c_index:.6f}"
        row = (
            f"{self.model},{self.split},{c.accuracy:.6f},{c.precision_weighted:.6f},"
            f"{c.recall_weighted:.6f},{c.f1_weighted:.6f},{c.kappa_weighted:.6f},"
            f"{r.mae:.6f},{r.mxae:.6f},{ci_cell},{dice_cell}"
        )
        return header + "\n" + row + "\n"


def evaluate(params: Params, config: dict, manifest: Manifest, split: str) -> EvalReport:
    """Regression, classification, and (when truth exists) Dice on a split."""
    entries = manifest.split(split)
    if not entries:
        raise DomainError(f"manifest has no {split!r} samples")
    arch = build_arch(config)

    pd_true, pd_pred, dices, per_sample = [], [], [], []
    for e in entries:
        s = load_sample(manifest, e, include_dense=True)
        pd_hat, dense_map = predicted_pd(arch, params, s)
        pd_true.append(s.pd)
        pd_pred.append(pd_hat)
        rec = {
            "image": e.image,
            "pd": s.pd,
            "pd_hat": pd_hat,
            "class4": grid.pd_to_class4(s.pd),
            "pred4": grid.pd_to_class4(min(max(pd_hat, 0.0), 1.0)),
        }
        if s.dense_truth is not None and dense_map is not None:
            d = dice(dense_map, s.dense_truth, threshold=DICE_THRESHOLD)
            dices.append(d)
            rec["dice"] = d
        per_sample.append(rec)

    try:
        ci = c_index(pd_pred, pd_true)
    except DomainError:
        ci = None  # single sample or all-equal targets: no comparable pairs
    regression = RegressionReport(
        mae=mae(pd_pred, pd_true),
        mxae=mxae(pd_pred, pd_true),
        c_index=ci,
    )
    cls = classification_report(
        [r["pred4"] for r in per_sample], [r["class4"] for r in per_sample]
    )
    segmentation = None
    if dices:
        segmentation = SegmentationReport(
            dice_mean=float(np.mean(dices)),
            dice_per_sample=dices,
            threshold=DICE_THRESHOLD,
        )
    return EvalReport(
        model=config.get("model", "?"),
        split=split,
        n_samples=len(entries),
        regression=regression,
        classification=cls,
        segmentation=segmentation,
        per_sample=per_sample,
    )
