"""Score predictor: concatenation fusion plus a two-layer regression head.

Two variants share the code path. ``tier`` concatenates text features and
image features (text coordinates first; the order is frozen into the
checkpoint format) before regression; ``baseline`` regresses from image
features alone. The head is two fully connected layers, D -> floor(D/2) -> 1,
with a ReLU between them by default (switchable to ``none`` so affine
golden tests stay hand-computable).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch
from torch import nn

from .encoders import EncoderSpec, FeatureVector, build_encoder
from .errors import ValidationError

CHECKPOINT_FORMAT_VERSION = 1
HEAD_ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class ModelSpec:
    """Encoder pair, fusion variant, and head configuration."""

    image_encoder: EncoderSpec
    text_encoder: EncoderSpec | None = None
    variant: str = "tier"  # "tier" | "baseline"
    head_activation: str = "relu"
    head_seed: int = 0

    def __post_init__(self):
        if self.variant not in ("tier", "baseline"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.variant == "tier" and self.text_encoder is None:
            raise ValidationError("tier variant requires a text encoder")
        if self.variant == "baseline" and self.text_encoder is not None:
            raise ValidationError("baseline variant must not have a text encoder")
        if self.image_encoder.modality != "image":
            raise ValidationError("image_encoder spec must have image modality")
        if self.text_encoder is not None and self.text_encoder.modality != "text":
            raise ValidationError("text_encoder spec must have text modality")
        if self.head_activation not in HEAD_ACTIVATIONS:
            raise ValidationError(f"unknown head activation {self.head_activation!r}")
        if self.fused_dim < 2:
            raise ValidationError(f"fused dim must be >= 2, got {self.fused_dim}")

    @property
    def fused_dim(self) -> int:
        text_dim = self.text_encoder.output_dim if self.text_encoder else 0
        return text_dim + self.image_encoder.output_dim

    @property
    def head_hidden_dim(self) -> int:
        return max(1, self.fused_dim // 2)

    def label(self) -> str:
        if self.variant == "baseline":
            return f"{self.image_encoder.name}(Baseline)"
        return f"{self.text_encoder.name}+{self.image_encoder.name}"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "image_encoder": self.image_encoder.to_dict(),
            "text_encoder": self.text_encoder.to_dict() if self.text_encoder else None,
            "head_activation": self.head_activation,
            "head_seed": self.head_seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "ModelSpec":
        return ModelSpec(
            image_encoder=EncoderSpec.from_dict(data["image_encoder"]),
            text_encoder=(
                EncoderSpec.from_dict(data["text_encoder"]) if data["text_encoder"] else None
            ),
            variant=data["variant"],
            head_activation=data["head_activation"],
            head_seed=data["head_seed"],
        )


class RegressionHead(nn.Module):
    """Two fully connected layers, D -> floor(D/2) -> 1.

    Weights and biases initialize uniformly in +-1/sqrt(fan_in) from a
    seeded generator, so a head is a pure function of (D, activation, seed).
    """

    def __init__(self, input_dim: int, activation: str = "relu", seed: int = 0):
        super().__init__()
        if input_dim < 2:
            raise ValidationError(f"head input dim must be >= 2, got {input_dim}")
        if activation not in HEAD_ACTIVATIONS:
            raise ValidationError(f"unknown head activation {activation!r}")
        self.input_dim = input_dim
        self.hidden_dim = max(1, input_dim // 2)
        self.activation = activation
        self.layer1 = nn.Linear(input_dim, self.hidden_dim)
        self.layer2 = nn.Linear(self.hidden_dim, 1)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for layer in (self.layer1, self.layer2):
                bound = layer.in_features**-0.5
                layer.weight.uniform_(-bound, bound, generator=gen)
                layer.bias.uniform_(-bound, bound, generator=gen)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        hidden = self.layer1(fused)
        if self.activation == "relu":
            hidden = torch.relu(hidden)
        return self.layer2(hidden).squeeze(-1)


def fuse_features(
    text_feat: FeatureVector | None, image_feat: FeatureVector
) -> FeatureVector:
    """Concatenate text-then-image; with no text feature, pass the image through."""
    if image_feat.modality != "image":
        raise ValidationError(f"expected an image feature, got {image_feat.modality!r}")
    if text_feat is None:
        return image_feat
    if text_feat.modality != "text":
        raise ValidationError(f"expected a text feature, got {text_feat.modality!r}")
    values = torch.cat([text_feat.values, image_feat.values])
    return FeatureVector(values=values, dim=text_feat.dim + image_feat.dim, modality="fused")


def regress_score(head: RegressionHead, fused: FeatureVector) -> float:
    """Apply the head to one fused feature vector."""
    if fused.dim != head.input_dim:
        raise ValidationError(
            f"fused dim {fused.dim} does not match head input dim {head.input_dim}"
        )
    with torch.no_grad():
        return float(head(fused.values.to(head.layer1.weight.dtype)))


class TierModel(nn.Module):
    """Full predictor: encoders plus regression head, per a ModelSpec."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.image_encoder = build_encoder(spec.image_encoder)
        self.text_encoder = (
            build_encoder(spec.text_encoder) if spec.text_encoder is not None else None
        )
        self.head = RegressionHead(
            spec.fused_dim, activation=spec.head_activation, seed=spec.head_seed
        )

    def forward(
        self, prompts: list[str] | None, images: list[torch.Tensor]
    ) -> torch.Tensor:
        """Batch of predicted scores, shape (B,); differentiable."""
        image_feats = self.image_encoder(images)
        if self.text_encoder is None:
            fused = image_feats
        else:
            if prompts is None:
                raise ValidationError("tier variant requires prompts")
            if len(prompts) != len(images):
                raise ValidationError(
                    f"{len(prompts)} prompts for {len(images)} images"
                )
            text_feats = self.text_encoder(prompts)
            fused = torch.cat([text_feats, image_feats], dim=1)
        return self.head(fused)

    def encoder_parameters(self):
        params = list(self.image_encoder.parameters())
        if self.text_encoder is not None:
            params += list(self.text_encoder.parameters())
        return params

    def freeze_encoders(self) -> None:
        for p in self.encoder_parameters():
            p.requires_grad_(False)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def build_model(spec: ModelSpec) -> TierModel:
    return TierModel(spec)


def predict(
    model: TierModel, prompt: str | None, image: torch.Tensor
) -> float:
    """Single-sample prediction through encode -> fuse -> regress."""
    from .encoders import encode_image, encode_text

    spec = model.spec
    if spec.variant == "tier" and prompt is None:
        raise ValidationError("tier variant requires a prompt")
    with torch.no_grad():
        image_feat = encode_image(spec.image_encoder, image, model.image_encoder)
        text_feat = None
        if spec.variant == "tier":
            text_feat = encode_text(spec.text_encoder, prompt, model.text_encoder)
        fused = fuse_features(text_feat, image_feat)
    return regress_score(model.head, fused)


def save_state(spec: ModelSpec, state_dict: dict, path: str) -> str:
    """Write a self-describing checkpoint: spec JSON, fused dim, tensors."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_spec": json.dumps(spec.to_dict()),
        "fused_dim": spec.fused_dim,
        "state_dict": state_dict,
    }
    torch.save(payload, path)
    return path


def save_checkpoint(model: TierModel, path: str) -> str:
    return save_state(model.spec, model.state_dict(), path)


def load_checkpoint(path: str) -> TierModel:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported checkpoint format version {version!r}"
        )
    spec = ModelSpec.from_dict(json.loads(payload["model_spec"]))
    if payload["fused_dim"] != spec.fused_dim:
        raise ValidationError(
            f"{path}: fused dim {payload['fused_dim']} does not match spec "
            f"dim {spec.fused_dim}"
        )
    model = TierModel(spec)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
