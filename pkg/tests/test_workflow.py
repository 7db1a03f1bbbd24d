"""Catalog parsing, label completion, cross-validation and the full pipeline."""

import json

import numpy as np
import pytest

from liverprog.config import ConfigError, CrossValidationPlan, RunConfig
from liverprog.milsurv import TrainConfig, TumorFeatureBag
from liverprog.nifti import read_nifti_mask, write_nifti_mask, write_nifti_volume
from liverprog.synthetic import (
    CohortSpec,
    Ellipsoid,
    PhantomSpec,
    Sphere,
    generate_cohort,
    generate_phantom,
)
from liverprog.volume import TUMOR, Mask3D
from liverprog.workflow import (
    StageError,
    collect_instances,
    complete_labels,
    crossvalidate,
    load_catalog,
    run_end_to_end,
    simulate_dataset,
)


def _write_tiny_dataset(data_dir):
    """Three cases sharing one phantom: seeded, manual, and unusable."""
    data_dir.mkdir(parents=True, exist_ok=True)
    spec = PhantomSpec(
        dims=(32, 32, 32),
        liver=Ellipsoid((16.0, 16.0, 16.0), (12.0, 12.0, 12.0)),
        tumors=(Sphere((16.0, 16.0, 16.0), 5.0),),
        tumor_intensity=(75.0, 60.0),
        noise_std=2.0,
        seed=3,
    )
    _, post, truth = generate_phantom(spec)
    write_nifti_volume(post, data_dir / "post.nii.gz")
    write_nifti_mask(truth, data_dir / "truth.nii.gz")
    catalog = {
        "cases": [
            {
                "id": "seeded",
                "volumes": {"post": "post.nii.gz"},
                "truth": "truth.nii.gz",
                "seeds": {
                    "post": {
                        "tumor": {
                            "view": "axial",
                            "index": 16,
                            "points": [[16, 16, True]],
                        }
                    }
                },
            },
            {
                "id": "manual",
                "volumes": {"post": "post.nii.gz"},
                "masks": {"post": "truth.nii.gz"},
            },
            {
                "id": "bare",
                "volumes": {"post": "post.nii.gz"},
            },
        ]
    }
    (data_dir / "cases.json").write_text(json.dumps(catalog))
    return data_dir


def _tiny_config(data_dir, out_dir, **overrides):
    base = dict(
        data_dir=str(data_dir),
        output_dir=str(out_dir),
        phases=("post",),
        training=TrainConfig(epochs=8),
        cross_validation=CrossValidationPlan(folds=2, repeats=1),
    )
    base.update(overrides)
    return RunConfig(**base)


class TestCatalog:
    def test_parses_cases(self, tmp_path):
        data = _write_tiny_dataset(tmp_path / "data")
        cases = load_catalog(data)
        assert [c.case_id for c in cases] == ["seeded", "manual", "bare"]
        seed = cases[0].seeds["post"]["tumor"]
        assert seed.view == "axial"
        assert seed.index == 16
        assert seed.points[0].row == 16 and seed.points[0].positive
        assert cases[0].truth == "truth.nii.gz"
        assert cases[1].masks == {"post": "truth.nii.gz"}
        assert cases[2].time is None and cases[2].event is None

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ConfigError, match="data directory"):
            load_catalog(tmp_path / "nope")

    def test_missing_catalog_file(self, tmp_path):
        (tmp_path / "data").mkdir()
        with pytest.raises(ConfigError, match="catalog"):
            load_catalog(tmp_path / "data")

    def test_duplicate_ids(self, tmp_path):
        data = _write_tiny_dataset(tmp_path / "data")
        payload = json.loads((data / "cases.json").read_text())
        payload["cases"].append(dict(payload["cases"][0]))
        (data / "cases.json").write_text(json.dumps(payload))
        with pytest.raises(ConfigError, match="duplicate"):
            load_catalog(data)

    def test_missing_referenced_files(self, tmp_path):
        data = _write_tiny_dataset(tmp_path / "data")
        payload = json.loads((data / "cases.json").read_text())
        payload["cases"][0]["volumes"]["post"] = "absent.nii.gz"
        (data / "cases.json").write_text(json.dumps(payload))
        with pytest.raises(ConfigError, match="missing input"):
            load_catalog(data)

        payload["cases"][0]["volumes"]["post"] = "post.nii.gz"
        payload["cases"][0]["truth"] = "absent.nii.gz"
        (data / "cases.json").write_text(json.dumps(payload))
        with pytest.raises(ConfigError, match="missing truth"):
            load_catalog(data)

    def test_empty_catalog(self, tmp_path):
        (tmp_path / "data").mkdir()
        (tmp_path / "data" / "cases.json").write_text('{"cases": []}')
        with pytest.raises(ConfigError, match="no cases"):
            load_catalog(tmp_path / "data")


class TestCompleteLabels:
    def test_provenance_per_case(self, tmp_path):
        data = _write_tiny_dataset(tmp_path / "data")
        out = tmp_path / "out"
        config = _tiny_config(data, out)
        manual_bytes = (data / "truth.nii.gz").read_bytes()

        plan = complete_labels(load_catalog(data), config, out)

        pseudo = plan.for_case("seeded", "post")
        assert pseudo.provenance == "pseudo"
        assert pseudo.structures == ("tumor",)
        predicted = read_nifti_mask(pseudo.path)
        assert (predicted.labels == TUMOR).sum() > 0

        manual = plan.for_case("manual", "post")
        assert manual.provenance == "manual"
        assert manual.path == str(data / "truth.nii.gz")
        assert (data / "truth.nii.gz").read_bytes() == manual_bytes  # untouched

        failed = plan.for_case("bare", "post")
        assert failed.provenance == "failed"
        assert failed.path is None
        assert "no manual mask" in failed.error

    def test_plan_report(self, tmp_path):
        data = _write_tiny_dataset(tmp_path / "data")
        out = tmp_path / "out"
        plan = complete_labels(load_catalog(data), _tiny_config(data, out), out)
        report = out / "plan.json"
        plan.to_json(report)
        payload = json.loads(report.read_text())
        assert len(payload) == 3
        assert {r["provenance"] for r in payload} == {"pseudo", "manual", "failed"}
        assert plan.for_case("seeded", "pre") is None


class TestCollectInstances:
    def test_two_blobs(self):
        labels = np.zeros((12, 12, 12), dtype=np.uint8)
        labels[1:3, 1:3, 1:3] = TUMOR
        labels[8:10, 8:10, 8:10] = TUMOR
        mask = Mask3D(labels=labels, spacing=(2.0, 2.0, 2.0), origin=(0.0, 0.0, 0.0))
        found = collect_instances("p1", "post", mask)
        assert len(found) == 2
        assert all(t.patient_id == "p1" and t.phase == "post" for t in found)
        assert all(t.volume_mm3 == pytest.approx(8 * 8.0) for t in found)
        assert all(t.diameter_mm > 0 for t in found)
        assert not np.any(found[0].mask & found[1].mask)
        assert found[0].instance_id != found[1].instance_id

    def test_empty_mask(self):
        mask = Mask3D(
            labels=np.zeros((4, 4, 4), dtype=np.uint8),
            spacing=(1.0, 1.0, 1.0),
            origin=(0.0, 0.0, 0.0),
        )
        assert collect_instances("p1", "post", mask) == []


def _cohort_bags(n=21, seed=5, transform=None):
    bags, labels, _ = generate_cohort(
        CohortSpec(
            n_patients=n,
            feature_dim=4,
            risk_scale=1.5,
            censoring_fraction=0.2,
            seed=seed,
        )
    )
    if transform is not None:
        bags = [
            TumorFeatureBag(
                patient_id=b.patient_id,
                features=transform(b.features),
                volumes=b.volumes,
                phase=b.phase,
            )
            for b in bags
        ]
    # a couple of patients lack a usable bag in this phase
    slots = [None if i in (3, 11) else b for i, b in enumerate(bags)]
    return {"post": slots}, labels


class TestCrossvalidate:
    def test_fold_accounting_and_determinism(self):
        bags_by_phase, labels = _cohort_bags()
        training = TrainConfig(epochs=10)
        a = crossvalidate(bags_by_phase, labels, training, folds=3, repeats=2, seed=1)
        assert len(a.outcomes) == 6
        assert all(o.n_train + o.n_test == 21 for o in a.outcomes)
        assert {(o.repeat, o.fold) for o in a.outcomes} == {
            (r, f) for r in range(2) for f in range(3)
        }
        assert 0.0 < a.mean_c_index < 1.0
        b = crossvalidate(bags_by_phase, labels, training, folds=3, repeats=2, seed=1)
        assert [o.c_index for o in a.outcomes] == [o.c_index for o in b.outcomes]

    def test_per_fold_normalization_absorbs_affine_features(self):
        training = TrainConfig(epochs=10)
        raw_bags, labels = _cohort_bags()
        scaled_bags, _ = _cohort_bags(transform=lambda f: 7.0 * f - 3.0)
        a = crossvalidate(raw_bags, labels, training, folds=3, repeats=1, seed=2)
        b = crossvalidate(scaled_bags, labels, training, folds=3, repeats=1, seed=2)
        for oa, ob in zip(a.outcomes, b.outcomes):
            assert ob.c_index == pytest.approx(oa.c_index, abs=1e-9)

    def test_misaligned_bags(self):
        bags_by_phase, labels = _cohort_bags()
        bags_by_phase["post"] = bags_by_phase["post"][:-1]
        with pytest.raises(ValueError, match="misaligned"):
            crossvalidate(bags_by_phase, labels, TrainConfig(epochs=1))

    def test_untrainable_folds_are_recorded(self):
        bags_by_phase, labels = _cohort_bags(n=9)
        censored = [type(lab)(time=lab.time, event=False) for lab in labels]
        result = crossvalidate(
            bags_by_phase, censored, TrainConfig(epochs=1), folds=3, repeats=1
        )
        assert all(o.c_index is None for o in result.outcomes)
        assert all(o.note == "no trainable phase" for o in result.outcomes)
        with pytest.raises(ValueError, match="no fold"):
            result.mean_c_index

    def test_report_json(self, tmp_path):
        bags_by_phase, labels = _cohort_bags()
        result = crossvalidate(
            bags_by_phase, labels, TrainConfig(epochs=5), folds=2, repeats=1, seed=0
        )
        path = tmp_path / "cv.json"
        result.to_json(path)
        payload = json.loads(path.read_text())
        assert payload["pooling"] == "lse"
        assert len(payload["folds"]) == 2
        assert payload["mean_c_index"] == pytest.approx(result.mean_c_index)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return simulate_dataset(
        tmp_path_factory.mktemp("sim") / "data", n_cases=6, dims=(48, 48, 48), seed=1
    )


class TestEndToEnd:
    def test_simulated_dataset_is_loadable(self, dataset):
        cases = load_catalog(dataset)
        assert len(cases) == 6
        for case in cases:
            assert set(case.volumes) == {"pre", "post"}
            assert case.truth is not None
            assert "post" in case.seeds and "tumor" in case.seeds["post"]
            assert case.time > 0 and case.event in (True, False)

    def test_full_run_and_reproducibility(self, dataset, tmp_path):
        config = _tiny_config(dataset, tmp_path / "run1")
        manifest = run_end_to_end(config)

        assert [s["name"] for s in manifest["stages"]] == [
            "labels",
            "postprocess",
            "evaluate",
            "features",
            "dataset",
            "crossvalidate",
            "model",
            "stats",
        ]
        assert all(s["status"] == "done" for s in manifest["stages"])
        results = manifest["results"]
        assert results["detection_cases"] == 6
        assert results["instances_total"] >= 6
        assert results["patients"] >= 2
        assert 0.0 <= results["cv_mean_c_index"] <= 1.0
        stats = results["stats"]
        assert 0.0 <= stats["c_index"] <= 1.0
        assert "logrank_p" in stats

        out = tmp_path / "run1"
        for name in (
            "manifest.json",
            "label_plan.json",
            "detection.csv",
            "detection.json",
            "features.csv",
            "cv_results.json",
            "model_post.json",
            "history_post.csv",
            "hazards.json",
            "km_curves.json",
        ):
            assert (out / name).exists(), name
        stored = json.loads((out / "manifest.json").read_text())
        assert stored["results"] == manifest["results"]

        # identical inputs must reproduce every output digest
        again = run_end_to_end(_tiny_config(dataset, tmp_path / "run2"))
        digests = lambda m: [
            [o["sha256"] for o in s["outputs"]] for s in m["stages"]
        ]
        assert digests(again) == digests(manifest)
        assert again["results"] == manifest["results"]

    def test_last_stage_cutoff(self, dataset, tmp_path):
        config = _tiny_config(dataset, tmp_path / "cut")
        manifest = run_end_to_end(config, last_stage="labels")
        assert [s["name"] for s in manifest["stages"]] == ["labels"]
        assert not (tmp_path / "cut" / "detection.csv").exists()
        assert (tmp_path / "cut" / "label_plan.json").exists()

    def test_unknown_stage(self, dataset, tmp_path):
        with pytest.raises(ConfigError, match="unknown stage"):
            run_end_to_end(
                _tiny_config(dataset, tmp_path / "x"), last_stage="polish"
            )

    def test_config_error_before_any_work(self, tmp_path):
        config = _tiny_config(tmp_path / "missing", tmp_path / "never")
        with pytest.raises(ConfigError):
            run_end_to_end(config)
        assert not (tmp_path / "never").exists()

    def test_stage_failure_writes_partial_manifest(self, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        spec = PhantomSpec(dims=(24, 24, 24), liver=Ellipsoid((12.0, 12.0, 12.0), (9.0, 9.0, 9.0)))
        _, post, _ = generate_phantom(spec)
        write_nifti_volume(post, data / "post.nii.gz")
        (data / "cases.json").write_text(
            json.dumps({"cases": [{"id": "c0", "volumes": {"post": "post.nii.gz"}}]})
        )
        out = tmp_path / "out"
        with pytest.raises(StageError) as err:
            run_end_to_end(_tiny_config(data, out))
        assert err.value.stage == "dataset"
        stored = json.loads((out / "manifest.json").read_text())
        by_name = {s["name"]: s["status"] for s in stored["stages"]}
        assert by_name["dataset"] == "failed"
        assert by_name["labels"] == "done"
