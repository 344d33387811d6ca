"""Training loop and gradient checking for the scoring heads.

Cross-entropy with inverse-frequency class weights, AdamW-style updates
(decoupled weight decay), deterministic per seed on a single thread,
early stopping on validation loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import EmbeddingSequence
from .heads import (
    HeadConfig,
    N_CLASSES,
    TrainedHead,
    backward_logits,
    forward_logits,
    init_params,
)


class TrainError(Exception):
    pass


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int | None = 16  # None = full batch
    max_epochs: int = 500
    patience: int = 10
    val_fraction: float = 0.15
    class_weighting: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def sample_loss_and_grad(
    flat: np.ndarray,
    cfg: HeadConfig,
    seq: EmbeddingSequence,
    label: int,
    class_weights: np.ndarray | None = None,
    with_grad: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Weighted cross-entropy of one sample and its parameter gradient."""
    if not 1 <= label <= N_CLASSES:
        raise TrainError(f"label {label} outside 1-5")
    w = 1.0 if class_weights is None else float(class_weights[label - 1])
    logits, cache = forward_logits(flat, cfg, seq.embeddings)
    probs = _softmax(logits)
    loss = -w * float(np.log(max(probs[label - 1], 1e-300)))
    if not with_grad:
        return loss, None
    dlogits = w * probs.copy()
    dlogits[label - 1] -= w
    return loss, backward_logits(flat, cfg, seq.embeddings, cache, dlogits)


def _batch_loss_and_grad(flat, cfg, batch, class_weights):
    total_w = 0.0
    loss_sum = 0.0
    grad = np.zeros_like(flat)
    for seq, label in batch:
        w = 1.0 if class_weights is None else float(class_weights[label - 1])
        loss, g = sample_loss_and_grad(flat, cfg, seq, label, class_weights)
        loss_sum += loss
        grad += g
        total_w += w
    return loss_sum / total_w, grad / total_w


def _dataset_loss(flat, cfg, dataset, class_weights):
    total_w = 0.0
    loss_sum = 0.0
    for seq, label in dataset:
        w = 1.0 if class_weights is None else float(class_weights[label - 1])
        loss, _ = sample_loss_and_grad(flat, cfg, seq, label, class_weights, with_grad=False)
        loss_sum += loss
        total_w += w
    return loss_sum / total_w


def inverse_frequency_weights(labels: list[int]) -> np.ndarray:
    counts = np.bincount(labels, minlength=N_CLASSES + 1)[1:].astype(np.float64)
    weights = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
    nonzero = weights > 0
    weights[nonzero] *= nonzero.sum() / weights[nonzero].sum()
    return weights


def train_head(
    dataset: list[tuple[EmbeddingSequence, int]],
    cfg: HeadConfig,
    opt: OptimizerConfig | None = None,
) -> TrainedHead:
    """Fit a head on (embedding sequence, 1-5 label) pairs.

    Deterministic per seed; raises TrainError with the epoch index if the
    loss diverges to a non-finite value.
    """
    if not dataset:
        raise TrainError("empty dataset")
    opt = opt or OptimizerConfig()
    rng = np.random.default_rng(opt.seed)
    labels = [label for _, label in dataset]
    class_weights = inverse_frequency_weights(labels) if opt.class_weighting else None

    n_val = int(round(opt.val_fraction * len(dataset)))
    order = rng.permutation(len(dataset))
    val = [dataset[i] for i in order[:n_val]]
    train = [dataset[i] for i in order[n_val:]]
    if not train:
        train, val = val, []

    flat = init_params(cfg, opt.seed)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    step = 0
    history: list[float] = []
    best_val = np.inf
    best_flat = flat.copy()
    best_epoch = 0
    stale = 0

    batch_size = opt.batch_size or len(train)
    for epoch in range(opt.max_epochs):
        perm = rng.permutation(len(train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(train), batch_size):
            batch = [train[i] for i in perm[start : start + batch_size]]
            loss, grad = _batch_loss_and_grad(flat, cfg, batch, class_weights)
            if not np.isfinite(loss):
                raise TrainError(f"non-finite loss at epoch {epoch}")
            step += 1
            m = opt.beta1 * m + (1.0 - opt.beta1) * grad
            v = opt.beta2 * v + (1.0 - opt.beta2) * grad**2
            m_hat = m / (1.0 - opt.beta1**step)
            v_hat = v / (1.0 - opt.beta2**step)
            flat = flat - opt.learning_rate * (
                m_hat / (np.sqrt(v_hat) + opt.eps) + opt.weight_decay * flat
            )
            epoch_loss += loss
            n_batches += 1
        history.append(epoch_loss / max(n_batches, 1))

        monitor = _dataset_loss(flat, cfg, val, class_weights) if val else history[-1]
        if monitor < best_val - 1e-12:
            best_val = monitor
            best_flat = flat.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > opt.patience:
                break

    return TrainedHead(
        config=cfg,
        parameters=best_flat,
        train_meta={
            "seed": opt.seed,
            "epochs": len(history),
            "best_epoch": best_epoch,
            "final_loss": history[-1],
            "best_val_loss": float(best_val),
            "loss_history": history,
        },
    )


def grad_check(
    head: TrainedHead,
    sample: tuple[EmbeddingSequence, int],
    eps: float = 1e-4,
    n_params: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients
    over n_params randomly chosen parameters."""
    if not 1e-6 <= eps <= 1e-3:
        raise TrainError("eps must be in [1e-6, 1e-3]")
    seq, label = sample
    cfg = head.config
    flat = head.parameters.astype(np.float64)
    _, analytic = sample_loss_and_grad(flat, cfg, seq, label)

    rng = np.random.default_rng(seed)
    idx = rng.choice(flat.size, size=min(n_params, flat.size), replace=False)
    worst = 0.0
    for i in idx:
        bumped = flat.copy()
        bumped[i] += eps
        up, _ = sample_loss_and_grad(bumped, cfg, seq, label, with_grad=False)
        bumped[i] -= 2 * eps
        down, _ = sample_loss_and_grad(bumped, cfg, seq, label, with_grad=False)
        numeric = (up - down) / (2.0 * eps)
        a = float(analytic[i])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
