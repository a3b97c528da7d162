"""Manifest-based dataset ingestion and deterministic train/test splitting.

A dataset is a flat UTF-8 CSV with header
``sample_id,image_path,prompt,generator,<dim1>[,<dim2>...]``; every column
after ``generator`` is a score dimension. Split assignments live in a
sidecar CSV (``sample_id,split``) so the manifest itself stays immutable.
Splitting runs on the in-repo SplitMix64 stream, so identical
(manifest, spec) pairs give byte-identical assignments on any platform.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import ValidationError
from .rng import SplitMix64

RESERVED_COLUMNS = ("sample_id", "image_path", "prompt", "generator")
SPLIT_STATES = ("train", "test", "unassigned")


@dataclass
class SampleRecord:
    """One generated image with its prompt and ground-truth scores."""

    sample_id: str
    image_path: str
    prompt: str
    scores: dict[str, float]
    generator: str | None = None
    split: str = "unassigned"


@dataclass
class DatasetManifest:
    """Ordered collection of records with declared score dimensions.

    ``root`` is the directory image paths are relative to (the manifest
    file's directory when loaded from disk).
    """

    name: str
    score_dimensions: list[str]
    records: list[SampleRecord]
    root: str = "."
    prompt_groups: dict[str, list[str]] = field(init=False, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.score_dimensions:
            raise ValidationError(f"manifest {self.name!r}: no score dimensions declared")
        dims = set(self.score_dimensions)
        if len(dims) != len(self.score_dimensions):
            raise ValidationError(f"manifest {self.name!r}: duplicate score dimensions")
        seen: set[str] = set()
        groups: dict[str, list[str]] = {}
        for rec in self.records:
            if not rec.sample_id:
                raise ValidationError("empty sample_id")
            if rec.sample_id in seen:
                raise ValidationError(f"duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            if not rec.prompt:
                raise ValidationError(f"sample {rec.sample_id!r}: empty prompt")
            if set(rec.scores) != dims:
                raise ValidationError(
                    f"sample {rec.sample_id!r}: score keys {sorted(rec.scores)} "
                    f"do not match declared dimensions {self.score_dimensions}"
                )
            for dim, value in rec.scores.items():
                if not _is_finite(value):
                    raise ValidationError(
                        f"sample {rec.sample_id!r}: non-finite score for {dim!r}"
                    )
            if rec.split not in SPLIT_STATES:
                raise ValidationError(
                    f"sample {rec.sample_id!r}: invalid split {rec.split!r}"
                )
            groups.setdefault(rec.prompt, []).append(rec.sample_id)
        self.prompt_groups = groups

    def records_for_split(self, split: str) -> list[SampleRecord]:
        if split not in SPLIT_STATES:
            raise ValidationError(f"invalid split {split!r}")
        return [r for r in self.records if r.split == split]

    def image_file(self, record: SampleRecord) -> str:
        return os.path.join(self.root, record.image_path)

    def content_hash(self) -> str:
        """SHA-256 of the canonical CSV serialization (split excluded)."""
        buf = io.StringIO()
        _write_rows(buf, self)
        return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    """How to partition a manifest into train and test."""

    mode: str = "by_prompt"  # "random" | "by_prompt"
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("random", "by_prompt"):
            raise ValidationError(f"unknown split mode {self.mode!r}")
        if not (0.0 < self.test_fraction < 1.0):
            raise ValidationError(
                f"test_fraction must be in (0, 1), got {self.test_fraction}"
            )


def _is_finite(value: float) -> bool:
    return value == value and abs(value) != float("inf")


def _parse_score(text: str, dim: str, sample_id: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"sample {sample_id!r}: cannot parse score {text!r} for {dim!r}"
        ) from None
    if not _is_finite(value):
        raise ValidationError(f"sample {sample_id!r}: non-finite score for {dim!r}")
    return value


def load_manifest(
    path: str,
    name: str | None = None,
    expected_dimensions: Iterable[str] | None = None,
    check_images: bool = False,
) -> DatasetManifest:
    """Load and validate a manifest CSV.

    ``expected_dimensions``, when given, must match the file's score columns
    exactly (order included). ``check_images`` additionally verifies that
    every image path resolves to a readable file.
    """
    with open(path, "r", encoding="utf-8-sig", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty manifest") from None
        if len(set(header)) != len(header):
            dupes = sorted({c for c in header if header.count(c) > 1})
            raise ValidationError(f"{path}: duplicate columns {dupes}")
        if tuple(header[: len(RESERVED_COLUMNS)]) != RESERVED_COLUMNS:
            raise ValidationError(
                f"{path}: header must start with {','.join(RESERVED_COLUMNS)}, "
                f"got {','.join(header[: len(RESERVED_COLUMNS)])}"
            )
        dims = header[len(RESERVED_COLUMNS) :]
        if not dims:
            raise ValidationError(f"{path}: no score columns after {RESERVED_COLUMNS[-1]!r}")
        if expected_dimensions is not None and list(expected_dimensions) != dims:
            raise ValidationError(
                f"{path}: score dimensions {dims} do not match expected "
                f"{list(expected_dimensions)}"
            )
        records = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            sample_id, image_path, prompt, generator = row[: len(RESERVED_COLUMNS)]
            scores = {
                dim: _parse_score(text, dim, sample_id)
                for dim, text in zip(dims, row[len(RESERVED_COLUMNS) :])
            }
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    image_path=image_path,
                    prompt=prompt,
                    scores=scores,
                    generator=generator or None,
                )
            )
    manifest = DatasetManifest(
        name=name if name is not None else os.path.splitext(os.path.basename(path))[0],
        score_dimensions=dims,
        records=records,
        root=os.path.dirname(os.path.abspath(path)),
    )
    if check_images:
        for rec in manifest.records:
            target = manifest.image_file(rec)
            if not os.path.isfile(target) or not os.access(target, os.R_OK):
                raise ValidationError(
                    f"sample {rec.sample_id!r}: image not readable at {target}"
                )
    return manifest


def _write_rows(f, manifest: DatasetManifest) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(list(RESERVED_COLUMNS) + manifest.score_dimensions)
    for rec in manifest.records:
        writer.writerow(
            [rec.sample_id, rec.image_path, rec.prompt, rec.generator or ""]
            + [repr(rec.scores[dim]) for dim in manifest.score_dimensions]
        )


def write_manifest(manifest: DatasetManifest, path: str) -> str:
    """Serialize a manifest to CSV; scores use repr so floats round-trip."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        _write_rows(f, manifest)
    return path


def split_dataset(manifest: DatasetManifest, spec: SplitSpec) -> DatasetManifest:
    """Return a copy of the manifest with every record assigned train or test.

    random mode shuffles records and takes round(test_fraction * N) for
    test; by_prompt mode assigns whole prompt groups to one side (no prompt
    string ever appears in both splits), scanning shuffled groups and
    adding each one that moves the test record count closer to the target.
    """
    n = len(manifest.records)
    if n < 2:
        raise ValidationError(f"cannot split {n} record(s)")
    rng = SplitMix64(spec.seed)
    test_ids: set[str] = set()
    if spec.mode == "random":
        n_test = int(round(spec.test_fraction * n))
        order = list(range(n))
        rng.shuffle(order)
        test_ids = {manifest.records[i].sample_id for i in order[:n_test]}
    else:
        prompts = list(manifest.prompt_groups)  # first-occurrence order
        if len(prompts) < 2:
            raise ValidationError(
                "by_prompt split needs at least 2 distinct prompts, got "
                f"{len(prompts)}"
            )
        rng.shuffle(prompts)
        target = spec.test_fraction * n
        count = 0
        for prompt in prompts:
            group = manifest.prompt_groups[prompt]
            if abs(count + len(group) - target) <= abs(count - target):
                test_ids.update(group)
                count += len(group)
    if not test_ids or len(test_ids) == n:
        raise ValidationError(
            f"degenerate split: {len(test_ids)} of {n} records in test "
            f"(test_fraction={spec.test_fraction})"
        )
    records = [
        replace(rec, split="test" if rec.sample_id in test_ids else "train")
        for rec in manifest.records
    ]
    return replace(manifest, records=records)


def save_split_assignments(manifest: DatasetManifest, path: str) -> str:
    """Persist split assignments as a ``sample_id,split`` sidecar CSV."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sample_id", "split"])
        for rec in manifest.records:
            writer.writerow([rec.sample_id, rec.split])
    return path


def load_split_assignments(path: str) -> dict[str, str]:
    with open(path, "r", encoding="utf-8-sig", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["sample_id", "split"]:
            raise ValidationError(f"{path}: expected header sample_id,split")
        mapping: dict[str, str] = {}
        for row in reader:
            if not row:
                continue
            sample_id, split = row
            if split not in SPLIT_STATES:
                raise ValidationError(f"{path}: invalid split {split!r} for {sample_id!r}")
            if sample_id in mapping:
                raise ValidationError(f"{path}: duplicate sample_id {sample_id!r}")
            mapping[sample_id] = split
    return mapping


def apply_split_assignments(
    manifest: DatasetManifest, assignments: dict[str, str]
) -> DatasetManifest:
    """Apply a sidecar's assignments; every manifest record must be covered."""
    known = {rec.sample_id for rec in manifest.records}
    unknown = sorted(set(assignments) - known)
    if unknown:
        raise ValidationError(f"split sidecar references unknown sample_ids {unknown[:5]}")
    missing = sorted(known - set(assignments))
    if missing:
        raise ValidationError(f"split sidecar missing sample_ids {missing[:5]}")
    records = [replace(rec, split=assignments[rec.sample_id]) for rec in manifest.records]
    return replace(manifest, records=records)
