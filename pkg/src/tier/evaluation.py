"""Experiment matrix runner: trains and scores every (dataset, dimension,
model, repeat) cell, compares each text+image model against its matched
image-only baseline, and aggregates the rows a report is rendered from.

Cells are isolated: a failing cell is recorded as failed and the rest of
the matrix proceeds. All per-cell seeds derive from (base seed, repeat)
only, so adding or removing models never shifts another cell's results.
"""

from __future__ import annotations

import csv
import json
import os
import re
import time
from dataclasses import asdict, dataclass, field, replace

from .data import DatasetManifest, SplitSpec, load_manifest, split_dataset
from .encoders import spec_for
from .errors import TierError, UndefinedCorrelationError, ValidationError
from .metrics import compute_correlations
from .model import ModelSpec, TierModel, load_checkpoint
from .pipeline import ImageCache, predict_scores
from .rng import mix_seed
from .training import TrainConfig, train

_SEED63 = (1 << 63) - 1  # torch generators want non-negative int64 seeds


def evaluate(
    checkpoint,
    manifest: DatasetManifest,
    dimension: str,
    dump_predictions: str | None = None,
    eval_batch_size: int = 20,
) -> tuple[float, float]:
    """Score a checkpoint on the manifest's test split; returns (srcc, plcc).

    ``checkpoint`` is a path or an already-loaded model. Predictions can be
    dumped to CSV (``sample_id,truth,pred``) for offline recomputation.
    """
    if isinstance(checkpoint, TierModel):
        model, ckpt_id = checkpoint, checkpoint.spec.label()
    else:
        model, ckpt_id = load_checkpoint(checkpoint), str(checkpoint)
    if dimension not in manifest.score_dimensions:
        raise ValidationError(
            f"unknown dimension {dimension!r}; manifest declares "
            f"{manifest.score_dimensions}"
        )
    records = manifest.records_for_split("test")
    if not records:
        raise ValidationError(
            f"manifest {manifest.name!r} has no test split; split it first or "
            "apply a split sidecar"
        )
    truths, preds = predict_scores(
        model, records, ImageCache(manifest), dimension, eval_batch_size
    )
    if dump_predictions:
        with open(dump_predictions, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["sample_id", "truth", "pred"])
            for rec, t, p in zip(records, truths, preds):
                writer.writerow([rec.sample_id, repr(t), repr(p)])
    try:
        result = compute_correlations(truths, preds)
    except UndefinedCorrelationError as exc:
        raise UndefinedCorrelationError(f"checkpoint {ckpt_id}: {exc}") from exc
    return result.srcc, result.plcc


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    manifest_path: str
    dimensions: list[str] | None = None  # None -> every declared dimension


@dataclass(frozen=True)
class ModelEntry:
    variant: str
    image_encoder: str
    image_dim: int | None = None
    text_encoder: str | None = None
    text_dim: int | None = None
    head_activation: str = "relu"
    config_overrides: dict = field(default_factory=dict)
    label_override: str | None = None  # disambiguates entries sharing encoders

    def build_spec(self, head_seed: int) -> ModelSpec:
        image = spec_for("image", self.image_encoder, self.image_dim)
        text = None
        if self.variant == "tier":
            if self.text_encoder is None:
                raise ValidationError("tier model entry needs a text_encoder")
            text = spec_for("text", self.text_encoder, self.text_dim)
        return ModelSpec(
            image_encoder=image,
            text_encoder=text,
            variant=self.variant,
            head_activation=self.head_activation,
            head_seed=head_seed,
        )

    def label(self) -> str:
        return self.label_override or self.build_spec(head_seed=0).label()


@dataclass
class ExperimentMatrix:
    """Grid of datasets x dimensions x models, trained over ``repeats`` seeds."""

    datasets: list[DatasetEntry]
    models: list[ModelEntry]
    config: TrainConfig
    split: SplitSpec
    repeats: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValidationError(f"repeats must be >= 1, got {self.repeats}")
        if not self.datasets or not self.models:
            raise ValidationError("matrix needs at least one dataset and one model")
        labels = [m.label() for m in self.models]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ValidationError(
                f"duplicate model labels {dupes}; set a distinct 'label' on "
                "entries sharing encoder names"
            )
        baselines = {
            (m.image_encoder, m.image_dim) for m in self.models if m.variant == "baseline"
        }
        for m in self.models:
            if m.variant == "tier" and (m.image_encoder, m.image_dim) not in baselines:
                raise ValidationError(
                    f"tier model {m.label()!r} has no baseline with the same "
                    "image encoder in the matrix"
                )


def load_matrix_spec(path: str) -> ExperimentMatrix:
    """Parse a matrix spec JSON file; relative manifest paths resolve against
    the spec file's directory."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    base_dir = os.path.dirname(os.path.abspath(path))
    datasets = []
    for entry in raw.get("datasets", []):
        if "manifest" not in entry:
            raise ValidationError(f"{path}: dataset entry missing 'manifest'")
        manifest_path = entry["manifest"]
        if not os.path.isabs(manifest_path):
            manifest_path = os.path.join(base_dir, manifest_path)
        datasets.append(
            DatasetEntry(
                name=entry.get("name") or os.path.splitext(os.path.basename(manifest_path))[0],
                manifest_path=manifest_path,
                dimensions=entry.get("dimensions"),
            )
        )
    models = []
    for entry in raw.get("models", []):
        if "image_encoder" not in entry:
            raise ValidationError(f"{path}: model entry missing 'image_encoder'")
        models.append(
            ModelEntry(
                variant=entry.get("variant", "tier"),
                image_encoder=entry["image_encoder"],
                image_dim=entry.get("image_dim"),
                text_encoder=entry.get("text_encoder"),
                text_dim=entry.get("text_dim"),
                head_activation=entry.get("head_activation", "relu"),
                config_overrides=entry.get("config", {}),
                label_override=entry.get("label"),
            )
        )
    config = TrainConfig.from_dict(raw.get("config", {}))
    split = SplitSpec(**raw.get("split", {}))
    return ExperimentMatrix(
        datasets=datasets,
        models=models,
        config=config,
        split=split,
        repeats=raw.get("repeats", 1),
    )


@dataclass
class ReportRow:
    dataset: str
    dimension: str
    model_label: str
    variant: str
    image_encoder: str
    status: str  # "ok" | "failed"
    repeats: int
    srcc_mean: float | None = None
    srcc_sd: float | None = None
    plcc_mean: float | None = None
    plcc_sd: float | None = None
    srcc_delta: float | None = None
    plcc_delta: float | None = None
    srcc_improved: bool | None = None
    plcc_improved: bool | None = None
    srcc_best: bool = False
    plcc_best: bool = False
    error: str | None = None


@dataclass
class EvalReport:
    rows: list[ReportRow]
    metadata: dict


def _sanitize(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text)


def _mean_sd(values: list[float]) -> tuple[float, float | None]:
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, var**0.5


def run_matrix(matrix: ExperimentMatrix, out_dir: str) -> EvalReport:
    """Train and evaluate every cell; write per-cell artifacts plus
    ``report.json`` under ``out_dir`` and return the aggregated report."""
    os.makedirs(os.path.join(out_dir, "cells"), exist_ok=True)
    started = time.time()
    cells = []
    for ds in matrix.datasets:
        base_manifest = load_manifest(ds.manifest_path, name=ds.name)
        dimensions = ds.dimensions or base_manifest.score_dimensions
        for dim in dimensions:
            if dim not in base_manifest.score_dimensions:
                raise ValidationError(
                    f"dataset {ds.name!r} does not declare dimension {dim!r}"
                )
        for repeat in range(matrix.repeats):
            split_spec = replace(matrix.split, seed=mix_seed(matrix.split.seed, repeat))
            manifest = split_dataset(base_manifest, split_spec)
            for dim in dimensions:
                for entry in matrix.models:
                    cells.append(
                        _run_cell(matrix, ds, manifest, split_spec, dim, entry, repeat, out_dir)
                    )
    rows = aggregate_cells(cells)
    report = EvalReport(
        rows=rows,
        metadata={
            "config": asdict(matrix.config),
            "split": asdict(matrix.split),
            "repeats": matrix.repeats,
            "datasets": [asdict(d) for d in matrix.datasets],
            "started_unix": started,
            "finished_unix": time.time(),
        },
    )
    save_report(report, os.path.join(out_dir, "report.json"))
    return report


def _run_cell(matrix, ds, manifest, split_spec, dimension, entry, repeat, out_dir) -> dict:
    label = entry.label()
    cell_id = f"{_sanitize(ds.name)}__{_sanitize(dimension)}__{_sanitize(label)}__r{repeat}"
    cell_dir = os.path.join(out_dir, "cells", cell_id)
    os.makedirs(cell_dir, exist_ok=True)
    cell = {
        "dataset": ds.name,
        "dimension": dimension,
        "model_label": label,
        "variant": entry.variant,
        "image_encoder": f"{entry.image_encoder}:{entry.image_dim or ''}",
        "repeat": repeat,
        "status": "ok",
        "srcc": None,
        "plcc": None,
        "error": None,
    }
    try:
        seed = mix_seed(matrix.config.seed, repeat) & _SEED63
        config = replace(matrix.config, seed=seed, **entry.config_overrides)
        spec = entry.build_spec(head_seed=seed)
        _, best_ckpt = train(
            manifest, spec, config, dimension, os.path.join(cell_dir, "run"),
            split_info=asdict(split_spec),
        )
        srcc, plcc = evaluate(
            best_ckpt,
            manifest,
            dimension,
            dump_predictions=os.path.join(cell_dir, "predictions.csv"),
            eval_batch_size=config.eval_batch_size,
        )
        cell["srcc"] = srcc
        cell["plcc"] = plcc
    except TierError as exc:
        cell["status"] = "failed"
        cell["error"] = str(exc)
    with open(os.path.join(cell_dir, "cell.json"), "w", encoding="utf-8") as f:
        json.dump(cell, f, indent=2, sort_keys=True)
        f.write("\n")
    return cell


def aggregate_cells(cells: list[dict]) -> list[ReportRow]:
    """Collapse repeats into mean +- sd rows and attach baseline deltas."""
    groups: dict[tuple, list[dict]] = {}
    for cell in cells:
        key = (cell["dataset"], cell["dimension"], cell["model_label"])
        groups.setdefault(key, []).append(cell)
    rows = []
    for (dataset, dimension, label), members in sorted(groups.items()):
        ok = [c for c in members if c["status"] == "ok"]
        row = ReportRow(
            dataset=dataset,
            dimension=dimension,
            model_label=label,
            variant=members[0]["variant"],
            image_encoder=members[0]["image_encoder"],
            status="ok" if ok else "failed",
            repeats=len(members),
        )
        if ok:
            row.srcc_mean, row.srcc_sd = _mean_sd([c["srcc"] for c in ok])
            row.plcc_mean, row.plcc_sd = _mean_sd([c["plcc"] for c in ok])
        else:
            row.error = "; ".join(sorted({c["error"] for c in members if c["error"]}))
        rows.append(row)
    by_key = {(r.dataset, r.dimension, r.image_encoder, r.variant): r for r in rows}
    for row in rows:
        if row.variant != "tier" or row.status != "ok":
            continue
        base = by_key.get((row.dataset, row.dimension, row.image_encoder, "baseline"))
        if base is None or base.status != "ok":
            continue
        row.srcc_delta = row.srcc_mean - base.srcc_mean
        row.plcc_delta = row.plcc_mean - base.plcc_mean
        row.srcc_improved = row.srcc_delta > 0
        row.plcc_improved = row.plcc_delta > 0
    for (dataset, dimension) in {(r.dataset, r.dimension) for r in rows}:
        block = [r for r in rows if r.dataset == dataset and r.dimension == dimension and r.status == "ok"]
        if not block:
            continue
        max(block, key=lambda r: r.srcc_mean).srcc_best = True
        max(block, key=lambda r: r.plcc_mean).plcc_best = True
    return rows


def save_report(report: EvalReport, path: str) -> str:
    payload = {"rows": [asdict(r) for r in report.rows], "metadata": report.metadata}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_report(results_dir: str) -> EvalReport:
    """Load report.json from a results dir, or rebuild it from cell files."""
    report_path = os.path.join(results_dir, "report.json")
    if os.path.isfile(report_path):
        with open(report_path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        rows = [ReportRow(**row) for row in payload["rows"]]
        return EvalReport(rows=rows, metadata=payload.get("metadata", {}))
    cells_dir = os.path.join(results_dir, "cells")
    if not os.path.isdir(cells_dir):
        raise ValidationError(f"{results_dir}: neither report.json nor cells/ found")
    cells = []
    for name in sorted(os.listdir(cells_dir)):
        cell_path = os.path.join(cells_dir, name, "cell.json")
        if os.path.isfile(cell_path):
            with open(cell_path, "r", encoding="utf-8") as f:
                cells.append(json.load(f))
    if not cells:
        raise ValidationError(f"{results_dir}: no cell results found")
    return EvalReport(rows=aggregate_cells(cells), metadata={})
