"""Mean-squared-error training loop over regression-head and encoder
parameters.

Defaults follow the reference recipe: Adam, learning rate 1e-4, weight
decay 1e-5, train batches of 8, eval batches of 20. The train split is
reshuffled each epoch on a SplitMix64 stream derived from (seed, epoch),
after every epoch the test split is scored with SRCC/PLCC, and the
checkpoint with the best test SRCC is kept alongside the last one.
"""

from __future__ import annotations

import copy
import json
import os
import time
from dataclasses import asdict, dataclass, field

import torch

from .data import DatasetManifest, save_split_assignments
from .errors import TrainingError, ValidationError
from .metrics import pearson_lcc, spearman_rcc
from .model import ModelSpec, TierModel, save_state
from .pipeline import ImageCache, batch_inputs, batched, predict_scores
from .rng import SplitMix64, mix_seed


@dataclass
class TrainConfig:
    """Optimization settings; defaults match the reference recipe."""

    train_batch_size: int = 8
    eval_batch_size: int = 20
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    optimizer: str = "adam"
    epochs: int = 50
    seed: int = 0
    freeze_encoders: bool = False

    def __post_init__(self):
        if self.train_batch_size < 1 or self.eval_batch_size < 1:
            raise ValidationError("batch sizes must be >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValidationError("learning rate and weight decay must be >= 0")
        if self.optimizer != "adam":
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")

    @staticmethod
    def from_dict(data: dict) -> "TrainConfig":
        unknown = set(data) - set(TrainConfig.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown train config keys {sorted(unknown)}")
        return TrainConfig(**data)


@dataclass
class HistoryRow:
    epoch: int
    train_loss: float
    srcc: float | None = None
    plcc: float | None = None


@dataclass
class TrainState:
    """Mutable loop state: parameters, optimizer, counters, history."""

    model: TierModel
    optimizer: torch.optim.Optimizer
    seed: int
    epoch: int = 0
    step: int = 0
    history: list[HistoryRow] = field(default_factory=list)


def mse_loss(pred, truth) -> torch.Tensor:
    """Mean squared error; returns a 0-dim tensor (differentiable when
    ``pred`` carries gradients)."""
    p = pred if isinstance(pred, torch.Tensor) else torch.as_tensor(pred, dtype=torch.float64)
    t = truth if isinstance(truth, torch.Tensor) else torch.as_tensor(truth, dtype=torch.float64)
    if p.ndim != 1 or t.ndim != 1:
        raise ValidationError("mse_loss expects 1-D score vectors")
    if p.numel() == 0:
        raise ValidationError("mse_loss needs at least one sample")
    if p.numel() != t.numel():
        raise ValidationError(f"length mismatch: pred has {p.numel()}, truth has {t.numel()}")
    return ((p - t.to(p.dtype)) ** 2).mean()


def init_state(spec: ModelSpec, config: TrainConfig) -> TrainState:
    model = TierModel(spec)
    if config.freeze_encoders:
        model.freeze_encoders()
    optimizer = torch.optim.Adam(
        model.trainable_parameters(),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    return TrainState(model=model, optimizer=optimizer, seed=config.seed)


def train_epoch(state: TrainState, batches) -> TrainState:
    """One pass over ``batches`` of (prompts, images, scores); appends the
    mean batch loss to history (metrics columns are filled by the caller)."""
    model = state.model
    model.train()
    losses = []
    for prompts, images, scores in batches:
        preds = model(prompts, images)
        loss = mse_loss(preds, scores)
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss {loss.item()!r} at step {state.step} "
                f"(epoch {state.epoch + 1})"
            )
        state.optimizer.zero_grad()
        loss.backward()
        state.optimizer.step()
        state.step += 1
        losses.append(loss.item())
    if not losses:
        raise ValidationError("train_epoch received no batches")
    state.epoch += 1
    state.history.append(HistoryRow(epoch=state.epoch, train_loss=sum(losses) / len(losses)))
    return state


def _epoch_batches(records, cache, dimension, config, needs_prompts, epoch_seed):
    order = list(range(len(records)))
    SplitMix64(epoch_seed).shuffle(order)
    shuffled = [records[i] for i in order]
    for chunk in batched(shuffled, config.train_batch_size):
        yield batch_inputs(chunk, cache, dimension, needs_prompts)


def write_history_csv(history: list[HistoryRow], path: str) -> str:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("epoch,train_loss,srcc,plcc\n")
        for row in history:
            srcc = "" if row.srcc is None else repr(row.srcc)
            plcc = "" if row.plcc is None else repr(row.plcc)
            f.write(f"{row.epoch},{row.train_loss!r},{srcc},{plcc}\n")
    return path


def train(
    manifest: DatasetManifest,
    spec: ModelSpec,
    config: TrainConfig,
    dimension: str,
    out_dir: str,
    split_info: dict | None = None,
) -> tuple[TrainState, str]:
    """Full run: epochs of optimization with per-epoch test-split scoring.

    Writes ``config``, ``meta``, ``history.csv``, ``splits.csv``,
    ``best.ckpt`` (highest test SRCC), and ``last.ckpt`` under ``out_dir``;
    returns the final state and the best checkpoint path. ``split_info``
    (how the caller produced the split) is recorded in ``meta``.
    """
    if dimension not in manifest.score_dimensions:
        raise ValidationError(
            f"unknown dimension {dimension!r}; manifest declares "
            f"{manifest.score_dimensions}"
        )
    train_records = manifest.records_for_split("train")
    test_records = manifest.records_for_split("test")
    if not train_records or not test_records:
        raise ValidationError(
            f"manifest must be split before training (train={len(train_records)}, "
            f"test={len(test_records)})"
        )
    os.makedirs(out_dir, exist_ok=True)
    state = init_state(spec, config)
    cache = ImageCache(manifest)
    needs_prompts = spec.variant == "tier"

    best_epoch = 0
    best_srcc = float("-inf")
    best_state_dict = copy.deepcopy(state.model.state_dict())
    for epoch in range(config.epochs):
        batches = _epoch_batches(
            train_records, cache, dimension, config, needs_prompts,
            epoch_seed=mix_seed(config.seed, epoch),
        )
        train_epoch(state, batches)
        truths, preds = predict_scores(
            state.model, test_records, cache, dimension, config.eval_batch_size
        )
        row = state.history[-1]
        row.srcc = spearman_rcc(truths, preds)
        row.plcc = pearson_lcc(truths, preds)
        if row.srcc > best_srcc:
            best_srcc = row.srcc
            best_epoch = row.epoch
            best_state_dict = copy.deepcopy(state.model.state_dict())

    best_path = os.path.join(out_dir, "best.ckpt")
    save_state(spec, best_state_dict, best_path)
    save_state(spec, state.model.state_dict(), os.path.join(out_dir, "last.ckpt"))
    write_history_csv(state.history, os.path.join(out_dir, "history.csv"))
    save_split_assignments(manifest, os.path.join(out_dir, "splits.csv"))
    with open(os.path.join(out_dir, "config"), "w", encoding="utf-8") as f:
        json.dump(asdict(config), f, indent=2, sort_keys=True)
        f.write("\n")
    meta = {
        "dimension": dimension,
        "manifest_name": manifest.name,
        "manifest_sha256": manifest.content_hash(),
        "seed": config.seed,
        "split": split_info,
        "model_label": spec.label(),
        "model_spec": spec.to_dict(),
        "best_epoch": best_epoch,
        "best_srcc": None if best_srcc == float("-inf") else best_srcc,
        "created_unix": time.time(),
    }
    with open(os.path.join(out_dir, "meta"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return state, best_path
