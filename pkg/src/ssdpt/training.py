"""Joint classification + masked-reconstruction training."""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .augment import MaskSpec, draw_lambda, generate_mask
from .errors import NonFiniteError, ShapeError
from .model import DPT, DptConfig, init_model
from .segmentation import SegmentBatch

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    alpha: float = 0.001
    learning_rate: float = 1e-4
    min_learning_rate: float = 1e-6
    lr_schedule: str = "cosine"
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 64
    mixup_a: float = 0.2
    mask_spec: MaskSpec = field(default_factory=MaskSpec)
    masked_cells_only: bool = False
    seed: int = 0

    def validate(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.mixup_a > 0:
            raise ValueError("mixup_a must be > 0")


def classification_loss(probs, soft_labels):
    """Soft-target cross-entropy ``-sum(l * ln z)``, averaged over leading axes."""
    probs = torch.as_tensor(probs)
    soft_labels = torch.as_tensor(soft_labels, dtype=probs.dtype)
    ce = -(soft_labels * torch.log(probs.clamp_min(PROB_FLOOR))).sum(dim=-1)
    return ce.mean()


def classification_loss_from_logits(logits, soft_labels):
    # same quantity as classification_loss(softmax(logits)), computed stably
    logp = torch.log_softmax(logits, dim=-1).clamp_min(math.log(PROB_FLOOR))
    return -(soft_labels * logp).sum(dim=-1).mean()


def reconstruction_loss(target, output, mask=None):
    """Mean squared error over all P x F cells, or over ``mask`` cells only."""
    target, output = torch.as_tensor(target), torch.as_tensor(output)
    if target.shape != output.shape:
        raise ShapeError(f"reconstruction target {tuple(target.shape)} != output {tuple(output.shape)}")
    sq = (target - output) ** 2
    if mask is None:
        return sq.mean()
    mask = torch.as_tensor(mask, dtype=sq.dtype)
    return (sq * mask).sum() / mask.sum().clamp_min(1.0)


def total_loss(l_c, l_r, alpha):
    return l_c + alpha * l_r


class AdamW:
    """Adam with decoupled weight decay and bias correction.

    Moments live on the optimizer so a training state can be snapshotted.
    """

    def __init__(self, params, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.exp_avg = [torch.zeros_like(p) for p in self.params]
        self.exp_avg_sq = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self, grads, lr, names=None):
        if len(grads) != len(self.params):
            raise ShapeError("gradient list does not match parameter list")
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g.shape != p.shape:
                raise ShapeError(f"gradient {i} has shape {tuple(g.shape)}, parameter {tuple(p.shape)}")
            if not torch.isfinite(g).all():
                where = names[i] if names else f"param[{i}]"
                raise NonFiniteError(where, f"non-finite gradient for {where}")
        self.step_count += 1
        t = self.step_count
        c1, c2 = 1 - self.beta1**t, 1 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.exp_avg, self.exp_avg_sq):
            p.mul_(1 - lr * self.weight_decay)
            m.mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            p.sub_(lr * (m / c1) / ((v / c2).sqrt() + self.eps))


@dataclass
class TrainState:
    model: DPT
    optimizer: AdamW
    history: list = field(default_factory=list)

    @property
    def step(self):
        return self.optimizer.step_count


def optimizer_step(state: TrainState, grads, lr) -> TrainState:
    names = [n for n, _ in state.model.named_parameters()]
    state.optimizer.step(grads, lr, names)
    return state


def learning_rate_at(cfg: TrainConfig, step, total_steps):
    if cfg.lr_schedule == "constant" or total_steps <= 1:
        return cfg.learning_rate
    frac = step / (total_steps - 1)
    return cfg.min_learning_rate + 0.5 * (cfg.learning_rate - cfg.min_learning_rate) * (1 + math.cos(math.pi * frac))


def stack_segments(batches):
    """Concatenate segment batches into (X, labels)."""
    if not batches:
        raise ValueError("empty training set")
    shapes = {b.segments.shape[1:] for b in batches}
    if len(shapes) != 1:
        raise ShapeError(f"segments have inconsistent shapes {sorted(shapes)}")
    X = np.concatenate([b.segments for b in batches])
    y = np.concatenate([np.full(len(b), b.machine_id, dtype=np.int64) for b in batches])
    return X, y


def make_batch(X, y, idx, num_ids, cfg: TrainConfig, rng: np.random.Generator):
    """Mixup with an in-batch partner, then masking.

    Returns (masked input, mixed target, soft labels, mask).
    """
    x = X[idx]
    onehot = np.eye(num_ids)[y[idx]]
    partner = rng.permutation(len(idx))
    lam = draw_lambda(cfg.mixup_a, rng, size=len(idx))
    mixed = lam[:, None, None] * x + (1 - lam[:, None, None]) * x[partner]
    soft = lam[:, None] * onehot + (1 - lam[:, None]) * onehot[partner]
    P, F = x.shape[1:]
    mask = np.stack([generate_mask(cfg.mask_spec, P, F, rng) for _ in idx])
    masked = np.where(mask, cfg.mask_spec.fill_value, mixed)
    return masked, mixed, soft, mask


def fit(dataset, cfg: TrainConfig, model_config: DptConfig | None = None, model: DPT | None = None,
        dtype=torch.float32, on_epoch=None) -> TrainState:
    """Train a DPT on segment batches.

    Args:
        dataset: SegmentBatch collection, all with the same (P, F).
        cfg: training hyper-parameters.
        model_config: used to build a fresh model when ``model`` is not given.
        model: optional pre-built model (e.g. a restored checkpoint).
        dtype: torch dtype for the forward/backward pass.
        on_epoch: optional callback ``(state, record)`` after each epoch.

    Returns:
        TrainState with per-epoch records ``{epoch, L, L_c, L_r, lr, wall_ms}``.
    """
    cfg.validate()
    batches = list(dataset)
    X, y = stack_segments(batches)
    if model is None:
        if model_config is None:
            raise ValueError("need model_config or model")
        model = init_model(model_config, seed=cfg.seed, dtype=dtype)
    mc = model.config
    if X.shape[1:] != (mc.frame_length, mc.bands):
        raise ShapeError(f"segments are {X.shape[1:]}, model expects ({mc.frame_length}, {mc.bands})")
    if y.max() >= mc.num_ids:
        raise ShapeError(f"machine id {y.max()} out of range for {mc.num_ids} ids")
    if len(np.unique(y)) < 2:
        warnings.warn("training set has a single machine ID; the classification task is degenerate")
    dtype = next(model.parameters()).dtype

    params = list(model.parameters())
    names = [n for n, _ in model.named_parameters()]
    state = TrainState(model, AdamW(params, weight_decay=cfg.weight_decay))
    rng = np.random.default_rng(cfg.seed)
    N = len(X)
    steps_per_epoch = math.ceil(N / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(N)
        sums = np.zeros(3)
        lr = cfg.learning_rate
        for start in range(0, N, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            masked, target, soft, mask = make_batch(X, y, idx, mc.num_ids, cfg, rng)
            out = model(torch.as_tensor(masked, dtype=dtype))
            l_c = classification_loss_from_logits(out.logits, torch.as_tensor(soft, dtype=dtype))
            l_r = reconstruction_loss(
                torch.as_tensor(target, dtype=dtype), out.reconstruction,
                torch.as_tensor(mask) if cfg.masked_cells_only else None,
            )
            loss = total_loss(l_c, l_r, cfg.alpha)
            if not torch.isfinite(loss):
                raise NonFiniteError(f"loss at epoch {epoch} step {state.step}")
            grads = torch.autograd.grad(loss, params)
            lr = learning_rate_at(cfg, state.step, total_steps)
            state.optimizer.step(grads, lr, names)
            sums += len(idx) * np.array([loss.item(), l_c.item(), l_r.item()])
        L, L_c, L_r = sums / N
        record = {"epoch": epoch, "L": L, "L_c": L_c, "L_r": L_r, "lr": lr,
                  "wall_ms": round(1000 * (time.perf_counter() - t0), 3)}
        state.history.append(record)
        log.info("epoch %d  L=%.5f  L_c=%.5f  L_r=%.5f  lr=%.2e", epoch, L, L_c, L_r, lr)
        if on_epoch is not None:
            on_epoch(state, record)
    return state
