"""Text and image feature extraction behind one uniform interface.

Two encoder families are registered per modality:

* ``toy`` / ``toy-trainable`` -- weight-free deterministic encoders meant
  for tests and desk-scale runs. The text encoder hashes whitespace tokens
  (FNV-1a 64) into a fixed 1024-row embedding table and averages the hit
  rows; the image encoder average-pools to 16x16, flattens in (H, W, C)
  order, and applies a fixed projection. Both tables are generated from
  fixed SplitMix64 streams, so outputs are bit-identical across processes
  and platforms. ``toy`` is always frozen; ``toy-trainable`` exposes the
  same map with trainable parameters for gradient-flow testing.

* pretrained adapters (``bert-base`` / ``bert-large`` text via
  transformers; ``resnet18`` / ``resnet50`` / ``inception-v4`` image via
  torchvision / timm). These need optional dependencies plus downloaded
  weights and nothing in the core test suite requires them; constructing
  one without its dependency raises a clear error. Text adapters use the
  pooled sentence-level output; CNN adapters use the globally
  average-pooled final feature map, with each backbone's standard
  preprocessing.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ValidationError
from .rng import SplitMix64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

TOY_VOCAB_SIZE = 1024
TOY_POOL_SIZE = 16
_TOY_TEXT_STREAM = 0x7E57_7E57
_TOY_IMAGE_STREAM = 0x1A6E_1A6E

# (modality, name) -> fixed output dim; None means the dim is caller-chosen.
_REGISTRY: dict[tuple[str, str], int | None] = {
    ("text", "toy"): None,
    ("text", "toy-trainable"): None,
    ("text", "bert-base"): 768,
    ("text", "bert-large"): 1024,
    ("image", "toy"): None,
    ("image", "toy-trainable"): None,
    ("image", "resnet18"): 512,
    ("image", "resnet50"): 2048,
    ("image", "inception-v4"): 1536,
}

DEFAULT_TOY_DIM = 32


@dataclass(frozen=True)
class FeatureVector:
    """Dense feature vector tagged with its dimension and source modality."""

    values: torch.Tensor
    dim: int
    modality: str  # "text" | "image" | "fused"

    def __post_init__(self):
        if self.modality not in ("text", "image", "fused"):
            raise ValidationError(f"invalid modality {self.modality!r}")
        if self.values.ndim != 1 or self.values.shape[0] != self.dim:
            raise ValidationError(
                f"feature shape {tuple(self.values.shape)} does not match dim {self.dim}"
            )
        if not torch.isfinite(self.values).all():
            raise ValidationError("feature vector contains non-finite entries")


@dataclass(frozen=True)
class EncoderSpec:
    """Configuration of one encoder: modality, registry name, output dim."""

    modality: str  # "text" | "image"
    kind: str  # "toy" | "pretrained"
    name: str
    output_dim: int
    trainable: bool = False

    def __post_init__(self):
        if self.modality not in ("text", "image"):
            raise ValidationError(f"invalid modality {self.modality!r}")
        if self.kind not in ("toy", "pretrained"):
            raise ValidationError(f"invalid encoder kind {self.kind!r}")
        if self.output_dim <= 0:
            raise ValidationError(f"output_dim must be positive, got {self.output_dim}")
        if self.name == "toy" and self.trainable:
            raise ValidationError(
                "the 'toy' encoder is always frozen; use 'toy-trainable' for "
                "gradient-flow testing"
            )

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "kind": self.kind,
            "name": self.name,
            "output_dim": self.output_dim,
            "trainable": self.trainable,
        }

    @staticmethod
    def from_dict(data: dict) -> "EncoderSpec":
        return EncoderSpec(**data)


def registered_names(modality: str) -> list[str]:
    return sorted(name for (mod, name) in _REGISTRY if mod == modality)


def registered_output_dim(modality: str, name: str) -> int | None:
    """Published output dim for a registered encoder (None for toy encoders)."""
    key = (modality, name)
    if key not in _REGISTRY:
        raise ValidationError(
            f"unknown {modality} encoder {name!r}; registered: "
            f"{registered_names(modality)}"
        )
    return _REGISTRY[key]


def spec_for(
    modality: str, name: str, output_dim: int | None = None, trainable: bool | None = None
) -> EncoderSpec:
    """Build an EncoderSpec from a registry name, filling published dims."""
    fixed_dim = registered_output_dim(modality, name)
    if fixed_dim is not None:
        if output_dim is not None and output_dim != fixed_dim:
            raise ValidationError(
                f"{name} has a fixed output dim of {fixed_dim}, cannot use {output_dim}"
            )
        dim = fixed_dim
    else:
        dim = output_dim if output_dim is not None else DEFAULT_TOY_DIM
    kind = "toy" if name.startswith("toy") else "pretrained"
    if trainable is None:
        trainable = name == "toy-trainable" or kind == "pretrained"
    return EncoderSpec(
        modality=modality, kind=kind, name=name, output_dim=dim, trainable=trainable
    )


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 encoding of ``text``."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _fixed_table(stream_seed: int, rows: int, cols: int, scale: float) -> torch.Tensor:
    """Uniform (-scale, scale) float32 table from a fixed SplitMix64 stream."""
    rng = SplitMix64(stream_seed)
    flat = [scale * (2.0 * rng.uniform() - 1.0) for _ in range(rows * cols)]
    return torch.tensor(flat, dtype=torch.float32).reshape(rows, cols)


class ToyTextEncoder(nn.Module):
    """Hash-embedding bag-of-tokens text encoder."""

    def __init__(self, output_dim: int, trainable: bool = False):
        super().__init__()
        self.output_dim = output_dim
        table = _fixed_table(_TOY_TEXT_STREAM, TOY_VOCAB_SIZE, output_dim, scale=1.0)
        self.table = nn.Parameter(table, requires_grad=trainable)

    def encode_one(self, prompt: str) -> torch.Tensor:
        if not prompt or not prompt.strip():
            raise ValidationError("cannot encode an empty prompt")
        idx = torch.tensor(
            [fnv1a64(tok) % TOY_VOCAB_SIZE for tok in prompt.split()], dtype=torch.long
        )
        return self.table.index_select(0, idx).mean(dim=0)

    def forward(self, prompts: list[str]) -> torch.Tensor:
        return torch.stack([self.encode_one(p) for p in prompts])


class ToyImageEncoder(nn.Module):
    """Average-pool-and-project image encoder over HxWx3 tensors in [0, 1]."""

    def __init__(self, output_dim: int, trainable: bool = False):
        super().__init__()
        self.output_dim = output_dim
        in_dim = TOY_POOL_SIZE * TOY_POOL_SIZE * 3
        proj = _fixed_table(_TOY_IMAGE_STREAM, in_dim, output_dim, scale=in_dim**-0.5)
        self.projection = nn.Parameter(proj, requires_grad=trainable)

    def encode_one(self, image: torch.Tensor) -> torch.Tensor:
        image = validate_image(image)
        chw = image.permute(2, 0, 1).unsqueeze(0).to(self.projection.dtype)
        pooled = nn.functional.adaptive_avg_pool2d(chw, TOY_POOL_SIZE)[0]
        flat = pooled.permute(1, 2, 0).reshape(-1)  # (H, W, C) order
        return flat @ self.projection

    def forward(self, images: list[torch.Tensor]) -> torch.Tensor:
        return torch.stack([self.encode_one(im) for im in images])


def validate_image(image: torch.Tensor) -> torch.Tensor:
    if not isinstance(image, torch.Tensor):
        image = torch.as_tensor(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValidationError(
            f"expected an HxWx3 pixel tensor, got shape {tuple(image.shape)}"
        )
    if image.numel() and (float(image.min()) < 0.0 or float(image.max()) > 1.0):
        raise ValidationError(
            f"pixel values must lie in [0, 1], got range "
            f"[{float(image.min()):.4g}, {float(image.max()):.4g}]"
        )
    return image


class _BertTextAdapter(nn.Module):
    """Pooled-output sentence features from a BERT checkpoint."""

    _CHECKPOINTS = {"bert-base": "bert-base-uncased", "bert-large": "bert-large-uncased"}

    def __init__(self, spec: EncoderSpec):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ValidationError(
                f"encoder {spec.name!r} requires the transformers package"
            ) from exc
        checkpoint = self._CHECKPOINTS[spec.name]
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.bert = AutoModel.from_pretrained(checkpoint)
        if not spec.trainable:
            for p in self.bert.parameters():
                p.requires_grad_(False)
        self.output_dim = spec.output_dim

    def forward(self, prompts: list[str]) -> torch.Tensor:
        for p in prompts:
            if not p or not p.strip():
                raise ValidationError("cannot encode an empty prompt")
        tokens = self.tokenizer(prompts, return_tensors="pt", padding=True, truncation=True)
        return self.bert(**tokens).pooler_output

    def encode_one(self, prompt: str) -> torch.Tensor:
        return self.forward([prompt])[0]


class _CnnImageAdapter(nn.Module):
    """Globally average-pooled backbone features with standard preprocessing."""

    def __init__(self, spec: EncoderSpec):
        super().__init__()
        self.output_dim = spec.output_dim
        if spec.name in ("resnet18", "resnet50"):
            try:
                from torchvision import models, transforms
            except ImportError as exc:
                raise ValidationError(
                    f"encoder {spec.name!r} requires the torchvision package"
                ) from exc
            builder = models.resnet18 if spec.name == "resnet18" else models.resnet50
            backbone = builder(weights="IMAGENET1K_V1")
            backbone.fc = nn.Identity()  # keep the pooled 512/2048-d feature
            self.backbone = backbone
            self.preprocess = transforms.Compose(
                [
                    transforms.Resize(256),
                    transforms.CenterCrop(224),
                    transforms.Normalize(
                        mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]
                    ),
                ]
            )
        else:  # inception-v4
            try:
                import timm
            except ImportError as exc:
                raise ValidationError(
                    f"encoder {spec.name!r} requires the timm package"
                ) from exc
            self.backbone = timm.create_model("inception_v4", pretrained=True, num_classes=0)
            cfg = self.backbone.default_cfg
            from torchvision import transforms

            self.preprocess = transforms.Compose(
                [
                    transforms.Resize(cfg["input_size"][1]),
                    transforms.CenterCrop(cfg["input_size"][1]),
                    transforms.Normalize(mean=cfg["mean"], std=cfg["std"]),
                ]
            )
        if not spec.trainable:
            for p in self.backbone.parameters():
                p.requires_grad_(False)

    def encode_one(self, image: torch.Tensor) -> torch.Tensor:
        return self.forward([image])[0]

    def forward(self, images: list[torch.Tensor]) -> torch.Tensor:
        batch = torch.stack(
            [self.preprocess(validate_image(im).permute(2, 0, 1)) for im in images]
        )
        return self.backbone(batch)


def build_encoder(spec: EncoderSpec) -> nn.Module:
    """Instantiate the module for a spec; unknown names raise ValidationError."""
    registered_output_dim(spec.modality, spec.name)
    if spec.name in ("toy", "toy-trainable"):
        cls = ToyTextEncoder if spec.modality == "text" else ToyImageEncoder
        return cls(spec.output_dim, trainable=spec.trainable)
    if spec.modality == "text":
        return _BertTextAdapter(spec)
    return _CnnImageAdapter(spec)


def encode_text(spec: EncoderSpec, prompt: str, encoder: nn.Module | None = None) -> FeatureVector:
    """Encode one prompt to a fixed-dim text feature."""
    if spec.modality != "text":
        raise ValidationError(f"encode_text needs a text spec, got {spec.modality!r}")
    if encoder is None:
        encoder = build_encoder(spec)
    values = encoder.encode_one(prompt)
    return FeatureVector(values=values, dim=spec.output_dim, modality="text")


def encode_image(
    spec: EncoderSpec, image: torch.Tensor, encoder: nn.Module | None = None
) -> FeatureVector:
    """Encode one HxWx3 pixel tensor (values in [0, 1]) to an image feature."""
    if spec.modality != "image":
        raise ValidationError(f"encode_image needs an image spec, got {spec.modality!r}")
    if encoder is None:
        encoder = build_encoder(spec)
    values = encoder.encode_one(image)
    return FeatureVector(values=values, dim=spec.output_dim, modality="image")
