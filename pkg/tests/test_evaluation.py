"""Tests for checkpoint evaluation, the matrix runner, and report rendering."""

import csv
import json
import os
from dataclasses import asdict

import pytest
import torch

import helpers
from tier.data import (
    DatasetManifest,
    SampleRecord,
    SplitSpec,
    load_manifest,
    split_dataset,
    write_manifest,
)
from tier.encoders import spec_for
from tier.errors import UndefinedCorrelationError, ValidationError
from tier.evaluation import (
    DatasetEntry,
    ExperimentMatrix,
    ModelEntry,
    evaluate,
    load_matrix_spec,
    load_report,
    run_matrix,
)
from tier.metrics import pearson_lcc, spearman_rcc
from tier.model import ModelSpec, TierModel, save_checkpoint
from tier.report import render_report
from tier.training import TrainConfig


def linear_head_model(w, activation="none"):
    """Model whose prediction is exactly w . fused_feature."""
    dim = len(w)
    spec = ModelSpec(
        image_encoder=spec_for("image", "toy", dim // 2),
        text_encoder=spec_for("text", "toy", dim - dim // 2),
        head_activation=activation,
        head_seed=0,
    )
    model = TierModel(spec)
    with torch.no_grad():
        for p in model.head.parameters():
            p.zero_()
        model.head.layer1.weight[0].copy_(torch.as_tensor(w, dtype=torch.float32))
        model.head.layer2.weight[0, 0] = 1.0
    return model


def perfect_fixture(tmp_path, negate=False, n_prompts=8, per_prompt=2):
    """Manifest whose labels equal (or negate) a constructed model's output."""
    import numpy as np
    from PIL import Image

    from tier.model import predict

    root = tmp_path / "fixture"
    os.makedirs(root / "img", exist_ok=True)
    rng = np.random.default_rng(17)
    w = rng.normal(size=16)
    model = linear_head_model(w)
    records = []
    for p_idx, prompt in enumerate(helpers.make_prompts(rng, n_prompts)):
        for k in range(per_prompt):
            sid = f"s{p_idx}_{k}"
            rel = f"img/{sid}.png"
            helpers.save_noise_image(str(root / rel), rng)
            pixels = np.asarray(Image.open(root / rel).convert("RGB"), dtype=np.float32)
            score = predict(model, prompt, torch.from_numpy(pixels / 255.0))
            records.append(
                SampleRecord(sid, rel, prompt, {"score": -score if negate else score},
                             split="test")
            )
    manifest = DatasetManifest(
        name="fixture", score_dimensions=["score"], records=records, root=str(root)
    )
    return model, manifest


class TestEvaluate:
    def test_perfect_predictor(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        srcc, plcc = evaluate(model, manifest, "score")
        assert srcc == 1.0
        assert plcc == pytest.approx(1.0, abs=1e-9)

    def test_negated_predictor(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path, negate=True)
        srcc, plcc = evaluate(model, manifest, "score")
        assert srcc == -1.0
        assert plcc == pytest.approx(-1.0, abs=1e-9)

    def test_idempotent(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        a = evaluate(model, manifest, "score")
        b = evaluate(model, manifest, "score")
        assert a == b

    def test_dump_recompute_round_trip(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        dump = str(tmp_path / "preds.csv")
        srcc, plcc = evaluate(model, manifest, "score", dump_predictions=dump)
        with open(dump) as f:
            rows = list(csv.DictReader(f))
        truths = [float(r["truth"]) for r in rows]
        preds = [float(r["pred"]) for r in rows]
        assert len(rows) == len(manifest.records_for_split("test"))
        assert spearman_rcc(truths, preds) == pytest.approx(srcc, abs=1e-12)
        assert pearson_lcc(truths, preds) == pytest.approx(plcc, abs=1e-12)

    def test_eval_ignores_train_split_ordering(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        # mark half the records train, then permute only the train records
        records = list(manifest.records)
        for rec in records[::2]:
            rec.split = "train"
        base = DatasetManifest(
            name="m", score_dimensions=["score"], records=records, root=manifest.root
        )
        trains = [r for r in records if r.split == "train"]
        shuffled = records.copy()
        reordered_trains = trains[::-1]
        it = iter(reordered_trains)
        shuffled = [next(it) if r.split == "train" else r for r in shuffled]
        perm = DatasetManifest(
            name="m", score_dimensions=["score"], records=shuffled, root=manifest.root
        )
        assert evaluate(model, base, "score") == evaluate(model, perm, "score")

    def test_split_missing(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        for rec in manifest.records:
            rec.split = "unassigned"
        unsplit = DatasetManifest(
            name="m", score_dimensions=["score"], records=manifest.records, root=manifest.root
        )
        with pytest.raises(ValidationError, match="no test split"):
            evaluate(model, unsplit, "score")

    def test_constant_predictions_surface_checkpoint_id(self, tmp_path):
        _, manifest = perfect_fixture(tmp_path)
        zero = linear_head_model([0.0] * 16)  # all-zero head -> constant output
        with pytest.raises(UndefinedCorrelationError, match="toy\\+toy"):
            evaluate(zero, manifest, "score")

    def test_unknown_dimension(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        with pytest.raises(ValidationError, match="unknown dimension"):
            evaluate(model, manifest, "nope")

    def test_checkpoint_path_round_trip(self, tmp_path):
        model, manifest = perfect_fixture(tmp_path)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(model, path)
        assert evaluate(path, manifest, "score") == evaluate(model, manifest, "score")


def small_matrix(manifest_path, epochs=2, repeats=1, extra_models=(), seed=0):
    models = [
        ModelEntry(variant="baseline", image_encoder="toy", image_dim=16),
        ModelEntry(
            variant="tier", image_encoder="toy", image_dim=16,
            text_encoder="toy", text_dim=16,
        ),
        *extra_models,
    ]
    return ExperimentMatrix(
        datasets=[DatasetEntry(name="synth", manifest_path=manifest_path)],
        models=models,
        config=TrainConfig(learning_rate=1e-2, epochs=epochs, seed=seed),
        split=SplitSpec(mode="by_prompt", test_fraction=0.25, seed=3),
        repeats=repeats,
    )


class TestRunMatrix:
    def test_smallest_grid(self, text_label_dataset, tmp_path):
        report = run_matrix(small_matrix(text_label_dataset), str(tmp_path / "out"))
        assert len(report.rows) == 2
        by_variant = {r.variant: r for r in report.rows}
        assert by_variant["baseline"].srcc_delta is None
        tier_row = by_variant["tier"]
        assert tier_row.srcc_delta == pytest.approx(
            tier_row.srcc_mean - by_variant["baseline"].srcc_mean, abs=0
        )
        assert tier_row.srcc_improved == (tier_row.srcc_delta > 0)
        assert (tmp_path / "out" / "report.json").exists()

    def test_text_signal_gives_tier_advantage(self, text_label_dataset, tmp_path):
        report = run_matrix(
            small_matrix(text_label_dataset, epochs=12), str(tmp_path / "out")
        )
        rows = {r.variant: r for r in report.rows}
        assert rows["tier"].srcc_mean > rows["baseline"].srcc_mean
        assert rows["tier"].srcc_improved is True

    def test_repeats_produce_nonzero_sd(self, text_label_dataset, tmp_path):
        report = run_matrix(
            small_matrix(text_label_dataset, epochs=2, repeats=3), str(tmp_path / "out")
        )
        tier_row = next(r for r in report.rows if r.variant == "tier")
        assert tier_row.repeats == 3
        assert tier_row.srcc_sd is not None and tier_row.srcc_sd > 0

    def test_duplicate_model_labels_rejected(self, text_label_dataset):
        clone = ModelEntry(
            variant="tier", image_encoder="toy", image_dim=16,
            text_encoder="toy", text_dim=8,
        )
        with pytest.raises(ValidationError, match="duplicate model labels"):
            small_matrix(text_label_dataset, extra_models=(clone,))

    def test_tier_requires_matching_baseline(self, text_label_dataset):
        with pytest.raises(ValidationError, match="no baseline"):
            ExperimentMatrix(
                datasets=[DatasetEntry(name="d", manifest_path=text_label_dataset)],
                models=[
                    ModelEntry(
                        variant="tier", image_encoder="toy", image_dim=16,
                        text_encoder="toy", text_dim=16,
                    )
                ],
                config=TrainConfig(),
                split=SplitSpec(),
            )

    def test_failing_cell_is_isolated(self, text_label_dataset, tmp_path):
        diverging = ModelEntry(
            variant="tier", image_encoder="toy", image_dim=16,
            text_encoder="toy", text_dim=8,
            config_overrides={"learning_rate": 1e12},
            label_override="toy+toy-diverging",
        )
        clean = run_matrix(small_matrix(text_label_dataset), str(tmp_path / "clean"))
        mixed = run_matrix(
            small_matrix(text_label_dataset, extra_models=(diverging,)),
            str(tmp_path / "mixed"),
        )
        assert len(mixed.rows) == 3
        failed = [r for r in mixed.rows if r.status == "failed"]
        assert len(failed) == 1
        assert "non-finite" in failed[0].error
        shared_clean = {r.model_label: asdict(r) for r in clean.rows}
        shared_mixed = {
            r.model_label: asdict(r) for r in mixed.rows if r.status == "ok"
        }
        assert shared_clean == shared_mixed

    def test_load_matrix_spec_and_relative_paths(self, text_label_dataset, tmp_path):
        spec_path = tmp_path / "matrix.json"
        spec_path.write_text(
            json.dumps(
                {
                    "datasets": [
                        {
                            "name": "synth",
                            "manifest": os.path.relpath(text_label_dataset, tmp_path),
                            "dimensions": ["score"],
                        }
                    ],
                    "models": [
                        {"variant": "baseline", "image_encoder": "toy", "image_dim": 16},
                        {
                            "variant": "tier", "image_encoder": "toy", "image_dim": 16,
                            "text_encoder": "toy", "text_dim": 16,
                        },
                    ],
                    "config": {"epochs": 1, "learning_rate": 0.01, "seed": 4},
                    "split": {"mode": "by_prompt", "test_fraction": 0.25, "seed": 2},
                    "repeats": 1,
                }
            )
        )
        matrix = load_matrix_spec(str(spec_path))
        assert matrix.datasets[0].manifest_path == os.path.join(
            str(tmp_path), os.path.relpath(text_label_dataset, tmp_path)
        )
        report = run_matrix(matrix, str(tmp_path / "out"))
        assert len(report.rows) == 2

    def test_load_report_from_json_and_cells(self, text_label_dataset, tmp_path):
        out = str(tmp_path / "out")
        report = run_matrix(small_matrix(text_label_dataset), out)
        from_json = load_report(out)
        assert [asdict(r) for r in from_json.rows] == [asdict(r) for r in report.rows]
        os.remove(os.path.join(out, "report.json"))
        from_cells = load_report(out)
        assert {r.model_label for r in from_cells.rows} == {
            r.model_label for r in report.rows
        }

    def test_unknown_dimension_in_matrix(self, text_label_dataset, tmp_path):
        matrix = small_matrix(text_label_dataset)
        matrix.datasets[0] = DatasetEntry(
            name="synth", manifest_path=text_label_dataset, dimensions=["bogus"]
        )
        with pytest.raises(ValidationError, match="bogus"):
            run_matrix(matrix, str(tmp_path / "out"))


class TestRenderReport:
    def test_outputs(self, text_label_dataset, tmp_path):
        report = run_matrix(small_matrix(text_label_dataset, epochs=6), str(tmp_path / "res"))
        outputs = render_report(report, str(tmp_path / "rep"))
        with open(outputs["csv"]) as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2
        assert {r["model"] for r in rows} == {"toy(Baseline)", "toy+toy"}
        txt = open(outputs["txt"]).read()
        assert "synth / score" in txt
        tier_row = next(r for r in report.rows if r.variant == "tier")
        assert tier_row.srcc_improved is True  # text labels favor the tier variant
        assert "↑" in txt
        assert len(outputs["charts"]) == 1
        assert os.path.getsize(outputs["charts"][0]) > 0

    def test_chart_count_matches_dataset_dimension_pairs(self, tmp_path):
        # two datasets, one with two dimensions -> 3 charts
        roots = []
        for idx, dims in enumerate((["q"], ["q", "a"])):
            root = tmp_path / f"ds{idx}"
            os.makedirs(root / "img", exist_ok=True)
            import numpy as np

            rng = np.random.default_rng(idx)
            records = []
            for p_idx, prompt in enumerate(helpers.make_prompts(rng, 8)):
                for k in range(2):
                    sid = f"s{p_idx}_{k}"
                    helpers.save_noise_image(str(root / "img" / f"{sid}.png"), rng)
                    records.append(
                        SampleRecord(
                            sid, f"img/{sid}.png", prompt,
                            {d: float(rng.normal()) for d in dims},
                        )
                    )
            m = DatasetManifest(
                name=f"ds{idx}", score_dimensions=list(dims), records=records, root=str(root)
            )
            write_manifest(m, str(root / "manifest.csv"))
            roots.append(str(root / "manifest.csv"))
        matrix = ExperimentMatrix(
            datasets=[
                DatasetEntry(name="ds0", manifest_path=roots[0]),
                DatasetEntry(name="ds1", manifest_path=roots[1]),
            ],
            models=[
                ModelEntry(variant="baseline", image_encoder="toy", image_dim=8),
                ModelEntry(
                    variant="tier", image_encoder="toy", image_dim=8,
                    text_encoder="toy", text_dim=8,
                ),
            ],
            config=TrainConfig(learning_rate=1e-2, epochs=1, seed=0),
            split=SplitSpec(mode="by_prompt", test_fraction=0.25, seed=1),
        )
        report = run_matrix(matrix, str(tmp_path / "res"))
        outputs = render_report(report, str(tmp_path / "rep"))
        assert len(outputs["charts"]) == 3

    def test_empty_report_rejected(self, tmp_path):
        from tier.evaluation import EvalReport

        with pytest.raises(ValidationError, match="empty report"):
            render_report(EvalReport(rows=[], metadata={}), str(tmp_path))

    def test_correspondence_footnote(self, tmp_path):
        from tier.evaluation import EvalReport, ReportRow

        rows = [
            ReportRow(
                dataset="d", dimension="correspondence", model_label="toy(Baseline)",
                variant="baseline", image_encoder="toy:8", status="ok", repeats=1,
                srcc_mean=0.5, plcc_mean=0.5,
            ),
            ReportRow(
                dataset="d", dimension="correspondence", model_label="toy+toy",
                variant="tier", image_encoder="toy:8", status="ok", repeats=1,
                srcc_mean=0.4, plcc_mean=0.4, srcc_delta=-0.1, plcc_delta=-0.1,
                srcc_improved=False, plcc_improved=False,
            ),
        ]
        outputs = render_report(EvalReport(rows=rows, metadata={}), str(tmp_path / "rep"))
        txt = open(outputs["txt"]).read()
        assert "correspondence" in txt
        assert "does not necessarily improve" in txt

    def test_failed_rows_rendered(self, tmp_path):
        from tier.evaluation import EvalReport, ReportRow

        rows = [
            ReportRow(
                dataset="d", dimension="q", model_label="toy(Baseline)",
                variant="baseline", image_encoder="toy:8", status="failed", repeats=1,
                error="non-finite loss",
            ),
        ]
        outputs = render_report(EvalReport(rows=rows, metadata={}), str(tmp_path / "rep"))
        txt = open(outputs["txt"]).read()
        assert "FAILED: non-finite loss" in txt
        assert outputs["charts"] == []
