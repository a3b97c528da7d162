"""Batch assembly shared by training and evaluation: image decoding,
decode caching, and fixed-size batching. Batches are always consumed in
deterministic record order."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np
import torch
from PIL import Image

from .data import DatasetManifest, SampleRecord
from .errors import ValidationError
from .model import TierModel


def load_image(path: str) -> torch.Tensor:
    """Decode an image file to an HxWx3 float32 tensor in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise ValidationError(f"image not readable: {path} ({exc})") from exc
    return torch.from_numpy(arr)


class ImageCache:
    """Decode each record's image once and keep the pixel tensor in memory."""

    def __init__(self, manifest: DatasetManifest):
        self._manifest = manifest
        self._cache: dict[str, torch.Tensor] = {}

    def get(self, record: SampleRecord) -> torch.Tensor:
        tensor = self._cache.get(record.sample_id)
        if tensor is None:
            tensor = load_image(self._manifest.image_file(record))
            self._cache[record.sample_id] = tensor
        return tensor


def batched(records: Sequence[SampleRecord], size: int) -> Iterator[list[SampleRecord]]:
    if size < 1:
        raise ValidationError(f"batch size must be >= 1, got {size}")
    for start in range(0, len(records), size):
        yield list(records[start : start + size])


def batch_inputs(
    records: Sequence[SampleRecord],
    cache: ImageCache,
    dimension: str,
    needs_prompts: bool,
) -> tuple[list[str] | None, list[torch.Tensor], torch.Tensor]:
    prompts = [r.prompt for r in records] if needs_prompts else None
    images = [cache.get(r) for r in records]
    scores = torch.tensor([r.scores[dimension] for r in records], dtype=torch.float32)
    return prompts, images, scores


def predict_scores(
    model: TierModel,
    records: Sequence[SampleRecord],
    cache: ImageCache,
    dimension: str,
    batch_size: int,
) -> tuple[list[float], list[float]]:
    """Run inference over records in fixed batches; returns (truths, preds)."""
    needs_prompts = model.spec.variant == "tier"
    truths: list[float] = []
    preds: list[float] = []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for chunk in batched(records, batch_size):
            prompts, images, scores = batch_inputs(chunk, cache, dimension, needs_prompts)
            out = model(prompts, images)
            truths.extend(scores.tolist())
            preds.extend(out.tolist())
    if was_training:
        model.train()
    return truths, preds
