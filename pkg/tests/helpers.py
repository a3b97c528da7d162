"""Synthetic dataset builders and small independent oracles shared by tests."""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image

from tier.data import DatasetManifest, SampleRecord, load_manifest, write_manifest
from tier.encoders import build_encoder, spec_for

WORDS = [
    "cat", "dog", "sky", "red", "blue", "tree", "boat", "sun", "moon", "rock",
    "bird", "fish", "star", "leaf", "sand", "wave", "hill", "snow", "rain",
    "wind", "lamp", "door", "ship", "fox", "owl", "bear", "wolf", "frog",
    "rose", "fern", "pine", "dune", "reef", "cave", "peak", "glen",
]


def make_prompts(rng: np.random.Generator, count: int) -> list[str]:
    prompts = []
    seen = set()
    while len(prompts) < count:
        k = int(rng.integers(3, 6))
        words = rng.choice(WORDS, size=k, replace=False)
        prompt = "a photo of " + " ".join(words)
        if prompt not in seen:
            seen.add(prompt)
            prompts.append(prompt)
    return prompts


def save_noise_image(path: str, rng: np.random.Generator, size: int = 16) -> None:
    arr = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


def build_synthetic_dataset(
    root: str,
    n_prompts: int = 20,
    images_per_prompt: int = 4,
    label_mode: str = "text",  # "text" | "fused" | "random"
    dimension: str = "score",
    seed: int = 0,
    text_dim: int = 16,
    image_dim: int = 16,
    image_size: int = 16,
) -> str:
    """Write noise images plus a manifest CSV under ``root``; returns the
    manifest path. Labels are a fixed linear functional of the toy text
    feature (``text``), of the fused toy feature (``fused``), or iid noise
    (``random``)."""
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(root, "img"), exist_ok=True)
    text_enc = build_encoder(spec_for("text", "toy", text_dim))
    image_enc = build_encoder(spec_for("image", "toy", image_dim))
    w_text = torch.tensor(rng.normal(size=text_dim), dtype=torch.float32)
    w_image = torch.tensor(rng.normal(size=image_dim), dtype=torch.float32)
    prompts = make_prompts(rng, n_prompts)
    records = []
    for p_idx, prompt in enumerate(prompts):
        text_part = float(text_enc.encode_one(prompt) @ w_text)
        for k in range(images_per_prompt):
            sid = f"s{p_idx:03d}_{k}"
            rel = os.path.join("img", f"{sid}.png")
            save_noise_image(os.path.join(root, rel), rng, size=image_size)
            if label_mode == "text":
                label = text_part
            elif label_mode == "fused":
                image = torch.from_numpy(
                    np.asarray(
                        Image.open(os.path.join(root, rel)).convert("RGB"),
                        dtype=np.float32,
                    ) / 255.0
                )
                label = text_part + float(image_enc.encode_one(image) @ w_image)
            elif label_mode == "random":
                label = float(rng.normal())
            else:
                raise ValueError(f"unknown label_mode {label_mode!r}")
            records.append(SampleRecord(sid, rel, prompt, {dimension: label}))
    manifest = DatasetManifest(
        name="synthetic", score_dimensions=[dimension], records=records, root=root
    )
    path = os.path.join(root, "manifest.csv")
    write_manifest(manifest, path)
    return path


def load_built(path: str):
    return load_manifest(path)


def naive_average_ranks(values) -> list[float]:
    """Independent rank oracle: sort (index, value) pairs, average rank over
    each equal-value run."""
    n = len(values)
    indexed = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[indexed[j + 1]] == values[indexed[i]]:
            j += 1
        avg = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[indexed[k]] = avg
        i = j + 1
    return ranks


def naive_pearson(x, y) -> float:
    """Independent Pearson oracle using math.fsum accumulation."""
    import math

    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    num = math.fsum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    sx = math.fsum((xi - mx) ** 2 for xi in x)
    sy = math.fsum((yi - my) ** 2 for yi in y)
    return num / math.sqrt(sx * sy)


def closed_form_srcc(truth, pred) -> float:
    """Direct tie-free rank-difference formula, with its own rank bookkeeping."""
    n = len(truth)
    rank_t = {i: r + 1 for r, i in enumerate(sorted(range(n), key=lambda i: truth[i]))}
    rank_p = {i: r + 1 for r, i in enumerate(sorted(range(n), key=lambda i: pred[i]))}
    d2 = sum((rank_t[i] - rank_p[i]) ** 2 for i in range(n))
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def naive_head_eval(head, x, relu: bool | None = None) -> float:
    """Double-loop reference evaluation of a two-layer head on one vector."""
    w1 = head.layer1.weight.detach().tolist()
    b1 = head.layer1.bias.detach().tolist()
    w2 = head.layer2.weight.detach().tolist()[0]
    b2 = float(head.layer2.bias.detach())
    if relu is None:
        relu = head.activation == "relu"
    hidden = []
    for i in range(len(b1)):
        acc = b1[i]
        for j in range(len(x)):
            acc += w1[i][j] * float(x[j])
        hidden.append(max(acc, 0.0) if relu else acc)
    out = b2
    for i, h in enumerate(hidden):
        out += w2[i] * h
    return out
