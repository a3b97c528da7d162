"""One-time converters from the three supported database layouts to the
flat manifest CSV.

Each converter reads a documented source convention (see README for the
exact file expectations) and emits a manifest whose image paths are
relative to the output file's directory:

* ``agiqa1k``     -- SRC/mos.csv with columns name,prompt,mos
                     (optional generator column); declares ["MOS"].
* ``agiqa3k``     -- SRC/data.csv with columns name,prompt,mos_quality and
                     optionally mos_align (extra columns ignored); declares
                     ["MOS_quality"] plus ["MOS_align"] when present.
* ``aigciqa2023`` -- SRC/prompts.txt (one prompt per line), SRC/models.txt
                     (one generator per line), SRC/mos/{quality,authenticity,
                     correspondence}.txt (one score per line, ordered
                     model-major, then prompt, then image index), images at
                     SRC/images/<model>/<prompt_idx>_<img_idx>.png; declares
                     ["quality", "authenticity", "correspondence"].
"""

from __future__ import annotations

import csv
import os

from .data import DatasetManifest, SampleRecord, write_manifest
from .errors import ValidationError

LAYOUTS = ("agiqa1k", "agiqa3k", "aigciqa2023")
AIGCIQA2023_DIMENSIONS = ["quality", "authenticity", "correspondence"]


def _read_table(path: str, required: list[str]) -> tuple[list[dict], list[str]]:
    if not os.path.isfile(path):
        raise ValidationError(f"source file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}")
        return list(reader), list(reader.fieldnames)


def _rel_image(src_dir: str, out_dir: str, name: str) -> str:
    return os.path.relpath(os.path.join(src_dir, name), start=out_dir)


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: cannot parse score {text!r}") from None


def convert_agiqa1k(src_dir: str, out_path: str) -> DatasetManifest:
    rows, _ = _read_table(os.path.join(src_dir, "mos.csv"), ["name", "prompt", "mos"])
    out_dir = os.path.dirname(os.path.abspath(out_path)) or "."
    records = []
    for i, row in enumerate(rows):
        records.append(
            SampleRecord(
                sample_id=os.path.splitext(row["name"])[0],
                image_path=_rel_image(src_dir, out_dir, row["name"]),
                prompt=row["prompt"],
                scores={"MOS": _parse_float(row["mos"], f"mos.csv row {i + 2}")},
                generator=row.get("generator") or None,
            )
        )
    manifest = DatasetManifest(
        name="agiqa1k", score_dimensions=["MOS"], records=records, root=out_dir
    )
    write_manifest(manifest, out_path)
    return manifest


def convert_agiqa3k(src_dir: str, out_path: str) -> DatasetManifest:
    rows, columns = _read_table(
        os.path.join(src_dir, "data.csv"), ["name", "prompt", "mos_quality"]
    )
    dims = ["MOS_quality"] + (["MOS_align"] if "mos_align" in columns else [])
    out_dir = os.path.dirname(os.path.abspath(out_path)) or "."
    records = []
    for i, row in enumerate(rows):
        where = f"data.csv row {i + 2}"
        scores = {"MOS_quality": _parse_float(row["mos_quality"], where)}
        if "MOS_align" in dims:
            scores["MOS_align"] = _parse_float(row["mos_align"], where)
        records.append(
            SampleRecord(
                sample_id=os.path.splitext(row["name"])[0],
                image_path=_rel_image(src_dir, out_dir, row["name"]),
                prompt=row["prompt"],
                scores=scores,
                generator=row.get("generator") or None,
            )
        )
    manifest = DatasetManifest(
        name="agiqa3k", score_dimensions=dims, records=records, root=out_dir
    )
    write_manifest(manifest, out_path)
    return manifest


def _read_lines(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise ValidationError(f"source file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]


def convert_aigciqa2023(src_dir: str, out_path: str) -> DatasetManifest:
    prompts = _read_lines(os.path.join(src_dir, "prompts.txt"))
    models = _read_lines(os.path.join(src_dir, "models.txt"))
    scores = {
        dim: [
            _parse_float(v, f"mos/{dim}.txt line {i + 1}")
            for i, v in enumerate(_read_lines(os.path.join(src_dir, "mos", f"{dim}.txt")))
        ]
        for dim in AIGCIQA2023_DIMENSIONS
    }
    total = len(scores["quality"])
    for dim in AIGCIQA2023_DIMENSIONS:
        if len(scores[dim]) != total:
            raise ValidationError(
                f"mos/{dim}.txt has {len(scores[dim])} scores, expected {total}"
            )
    per_pair = len(prompts) * len(models)
    if per_pair == 0 or total % per_pair != 0:
        raise ValidationError(
            f"{total} scores do not divide evenly over {len(models)} models x "
            f"{len(prompts)} prompts"
        )
    images_per_prompt = total // per_pair
    out_dir = os.path.dirname(os.path.abspath(out_path)) or "."
    records = []
    for m, model in enumerate(models):
        for p in range(len(prompts)):
            for k in range(images_per_prompt):
                idx = m * len(prompts) * images_per_prompt + p * images_per_prompt + k
                name = os.path.join("images", model, f"{p:03d}_{k}.png")
                records.append(
                    SampleRecord(
                        sample_id=f"{model}-{p:03d}-{k}",
                        image_path=_rel_image(src_dir, out_dir, name),
                        prompt=prompts[p],
                        scores={dim: scores[dim][idx] for dim in AIGCIQA2023_DIMENSIONS},
                        generator=model,
                    )
                )
    manifest = DatasetManifest(
        name="aigciqa2023",
        score_dimensions=list(AIGCIQA2023_DIMENSIONS),
        records=records,
        root=out_dir,
    )
    write_manifest(manifest, out_path)
    return manifest


_CONVERTERS = {
    "agiqa1k": convert_agiqa1k,
    "agiqa3k": convert_agiqa3k,
    "aigciqa2023": convert_aigciqa2023,
}


def convert_layout(layout: str, src_dir: str, out_path: str) -> DatasetManifest:
    if layout not in _CONVERTERS:
        raise ValidationError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if not os.path.isdir(src_dir):
        raise ValidationError(f"source directory not found: {src_dir}")
    return _CONVERTERS[layout](src_dir, out_path)
