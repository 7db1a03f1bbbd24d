"""Pipeline orchestration.

A dataset directory is described by a `cases.json` catalog. The workflow
completes missing label maps by prompt propagation (manual labels are never
overwritten), cleans predicted lesions, extracts per-lesion features, runs
repeated k-fold training with per-fold normalization, fits the survival
statistics, and records everything in a digest-carrying manifest so a run
can be reproduced and audited.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, _as_dict
from .evaluate import MatchResult, match_instances, postprocess, write_match_csv, write_match_json
from .instances import connected_components, instance_stats
from .milsurv import (
    SurvivalLabel,
    TrainConfig,
    TumorFeatureBag,
    late_fuse,
    predict_hazard,
    save_checkpoint,
    train,
    write_history,
)
from .nifti import load_volume, read_nifti_mask, write_nifti_mask
from .promptprop import NoObjectFoundError, segment_volume
from .promptseg import PromptPoint, get_segmenter
from .radiomics import (
    TumorInstance,
    exclude_small,
    extract_features,
    fit_normalization,
    two_step_normalize,
    write_feature_table,
)
from .survstats import (
    CohortTable,
    ConvergenceError,
    SingularModelError,
    bootstrap_hr,
    concordance_index,
    coxph_fit,
    dichotomize_by_median,
    kaplan_meier,
    logrank_test,
    repeated_kfold,
)
from .volume import LIVER, Mask3D, SliceAddress, SPLEEN, TUMOR, Volume3D

# paint order: later structures overwrite earlier ones where they overlap
STRUCTURE_LABELS = (("spleen", SPLEEN), ("liver", LIVER), ("tumor", TUMOR))
BOOTSTRAP_MIN_PATIENTS = 30


class StageError(RuntimeError):
    """A pipeline stage failed; the manifest records everything before it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class SeedPrompt:
    view: str
    index: int
    points: tuple[PromptPoint, ...]


@dataclass(frozen=True)
class CaseSpec:
    """One patient in the catalog; paths are relative to the data dir."""

    case_id: str
    volumes: dict[str, str]
    masks: dict[str, str] = field(default_factory=dict)
    truth: str | None = None
    seeds: dict[str, dict[str, SeedPrompt]] = field(default_factory=dict)
    time: float | None = None
    event: bool | None = None


def load_catalog(data_dir) -> list[CaseSpec]:
    """Parse cases.json and check every referenced file exists."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise ConfigError(f"data directory not found: {data_dir}")
    catalog_path = data_dir / "cases.json"
    if not catalog_path.exists():
        raise ConfigError(f"catalog not found: {catalog_path}")
    payload = json.loads(catalog_path.read_text())
    cases = []
    seen = set()
    for entry in payload.get("cases", []):
        case_id = entry["id"]
        if case_id in seen:
            raise ConfigError(f"duplicate case id {case_id!r}")
        seen.add(case_id)
        seeds = {
            phase: {
                structure: SeedPrompt(
                    view=s["view"],
                    index=int(s["index"]),
                    points=tuple(
                        PromptPoint(row=int(r), col=int(c), positive=bool(p))
                        for r, c, p in s["points"]
                    ),
                )
                for structure, s in by_structure.items()
            }
            for phase, by_structure in entry.get("seeds", {}).items()
        }
        case = CaseSpec(
            case_id=case_id,
            volumes=dict(entry["volumes"]),
            masks=dict(entry.get("masks", {})),
            truth=entry.get("truth"),
            seeds=seeds,
            time=entry.get("time"),
            event=entry.get("event"),
        )
        for rel in [*case.volumes.values(), *case.masks.values()]:
            if not (data_dir / rel).exists():
                raise ConfigError(f"case {case_id!r}: missing input file {rel}")
        if case.truth and not (data_dir / case.truth).exists():
            raise ConfigError(f"case {case_id!r}: missing truth file {case.truth}")
        cases.append(case)
    if not cases:
        raise ConfigError("catalog lists no cases")
    return cases


@dataclass(frozen=True)
class LabelRecord:
    case_id: str
    phase: str
    provenance: str  # "manual" | "pseudo" | "failed"
    path: str | None
    structures: tuple[str, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class LabelCompletionPlan:
    records: tuple[LabelRecord, ...]

    def for_case(self, case_id: str, phase: str) -> "LabelRecord | None":
        for r in self.records:
            if r.case_id == case_id and r.phase == phase:
                return r
        return None

    def to_json(self, path, bases: tuple = ()) -> None:
        """Write the plan; paths under any of `bases` are made relative.

        Keeps the report a pure function of config and data, independent of
        where the run directories happen to live.
        """
        def portable(p):
            if p is None:
                return None
            for base in bases:
                try:
                    return str(Path(p).relative_to(base))
                except ValueError:
                    continue
            return p

        rows = []
        for r in self.records:
            row = dataclasses.asdict(r)
            row["path"] = portable(r.path)
            rows.append(row)
        Path(path).write_text(json.dumps(rows, indent=2) + "\n")


def complete_labels(
    cases: list[CaseSpec], config: RunConfig, out_dir
) -> LabelCompletionPlan:
    """Fill in missing label maps by prompt propagation.

    A case with a manual mask for a phase keeps it untouched. Otherwise each
    seeded structure is propagated and the structures are composed with
    tumor taking precedence over liver over spleen. A failing case is
    recorded and skipped; the run continues.
    """
    data_dir = Path(config.data_dir)
    labels_dir = Path(out_dir) / "labels"
    labels_dir.mkdir(parents=True, exist_ok=True)
    segmenter = get_segmenter(config.segmenter)
    records = []
    for case in cases:
        for phase in config.phases:
            if phase not in case.volumes:
                continue
            if phase in case.masks:
                records.append(
                    LabelRecord(case.case_id, phase, "manual", str(data_dir / case.masks[phase]))
                )
                continue
            seeds = case.seeds.get(phase)
            if not seeds:
                records.append(
                    LabelRecord(
                        case.case_id, phase, "failed", None,
                        error="no manual mask and no seeds",
                    )
                )
                continue
            try:
                volume = load_volume(data_dir / case.volumes[phase])
                labels = np.zeros(volume.dims, dtype=np.uint8)
                done = []
                for structure, value in STRUCTURE_LABELS:
                    if structure not in seeds:
                        continue
                    seed = seeds[structure]
                    mask = segment_volume(
                        volume,
                        SliceAddress(view=seed.view, index=seed.index),
                        list(seed.points),
                        segmenter,
                        config.propagation,
                    )
                    labels[mask.labels > 0] = value
                    done.append(structure)
                if not done:
                    raise NoObjectFoundError("no recognized structure seeds")
                out_path = labels_dir / f"{case.case_id}_{phase}_labels.nii.gz"
                write_nifti_mask(
                    Mask3D(labels=labels, spacing=volume.spacing, origin=volume.origin),
                    out_path,
                )
                records.append(
                    LabelRecord(case.case_id, phase, "pseudo", str(out_path), tuple(done))
                )
            except Exception as exc:  # noqa: BLE001 - isolate per-case failures
                records.append(
                    LabelRecord(case.case_id, phase, "failed", None, error=str(exc))
                )
    return LabelCompletionPlan(records=tuple(records))


def collect_instances(case_id: str, phase: str, mask: Mask3D) -> list[TumorInstance]:
    """Connected tumor components of a label map as measurable instances."""
    binary = mask.binary(TUMOR)
    if not binary.any():
        return []
    labels, _ = connected_components(binary)
    return [
        TumorInstance(
            patient_id=case_id,
            phase=phase,
            instance_id=s.id,
            mask=labels == s.id,
            diameter_mm=s.diameter_mm,
            volume_mm3=s.volume_mm3,
        )
        for s in instance_stats(binary, mask.spacing, mask.origin)
    ]


def _normalized_bag(bag: TumorFeatureBag, params) -> TumorFeatureBag:
    return TumorFeatureBag(
        patient_id=bag.patient_id,
        features=two_step_normalize(bag.features, params),
        volumes=bag.volumes,
        phase=bag.phase,
    )


@dataclass(frozen=True)
class FoldOutcome:
    repeat: int
    fold: int
    n_train: int
    n_test: int
    c_index: float | None
    note: str | None = None


@dataclass(frozen=True)
class CVResult:
    pooling: str
    outcomes: tuple[FoldOutcome, ...]

    @property
    def mean_c_index(self) -> float:
        scores = [o.c_index for o in self.outcomes if o.c_index is not None]
        if not scores:
            raise ValueError("no fold produced a score")
        return float(np.mean(scores))

    def to_json(self, path) -> None:
        payload = {
            "pooling": self.pooling,
            "mean_c_index": self.mean_c_index,
            "folds": [dataclasses.asdict(o) for o in self.outcomes],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _fold_seed(base: int, repeat: int, fold: int, folds: int) -> int:
    return base + 1 + repeat * folds + fold


def crossvalidate(
    bags_by_phase: dict[str, list[TumorFeatureBag | None]],
    labels: list[SurvivalLabel],
    training: TrainConfig,
    folds: int = 3,
    repeats: int = 15,
    seed: int = 0,
) -> CVResult:
    """Repeated k-fold with per-fold normalization and per-phase models.

    Each phase list is aligned with `labels`; a None entry means the patient
    has no usable bag in that phase (the other phase covers it at fusion).
    Feature normalization is fitted on the training fold only. Fold scores
    are the test-set concordance of the late-fused hazards.
    """
    n = len(labels)
    for phase, bags in bags_by_phase.items():
        if len(bags) != n:
            raise ValueError(f"phase {phase!r} bag list is misaligned")
    plans = repeated_kfold(n, folds, repeats, seed)
    outcomes = []
    for r, plan in enumerate(plans):
        for f, test_idx in enumerate(plan):
            test = set(int(i) for i in test_idx)
            train_idx = [i for i in range(n) if i not in test]
            fold_config = dataclasses.replace(
                training, seed=_fold_seed(training.seed, r, f, folds)
            )
            models = {}
            norms = {}
            for phase, bags in bags_by_phase.items():
                pairs = [
                    (bags[i], labels[i]) for i in train_idx if bags[i] is not None
                ]
                if len(pairs) < 2 or not any(lbl.event for _, lbl in pairs):
                    continue
                params_norm = fit_normalization(
                    np.vstack([b.features for b, _ in pairs])
                )
                normalized = [(_normalized_bag(b, params_norm), lbl) for b, lbl in pairs]
                models[phase] = train(normalized, fold_config)
                norms[phase] = params_norm
            if not models:
                outcomes.append(
                    FoldOutcome(r, f, len(train_idx), len(test), None, "no trainable phase")
                )
                continue
            risks = []
            times = []
            events = []
            for i in sorted(test):
                hazards = {}
                for phase, result in models.items():
                    bag = bags_by_phase[phase][i]
                    if bag is None:
                        continue
                    hazards[phase] = predict_hazard(
                        result.params,
                        _normalized_bag(bag, norms[phase]),
                        fold_config.pooling,
                    )
                if not hazards:
                    continue
                risks.append(late_fuse(hazards.get("pre"), hazards.get("post")))
                times.append(labels[i].time)
                events.append(labels[i].event)
            try:
                c = concordance_index(times, events, risks)
                outcomes.append(FoldOutcome(r, f, len(train_idx), len(test), float(c)))
            except ValueError as exc:
                outcomes.append(
                    FoldOutcome(r, f, len(train_idx), len(test), None, str(exc))
                )
    return CVResult(pooling=training.pooling, outcomes=tuple(outcomes))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _register(record: dict, out_dir: Path, path: Path) -> None:
    record["outputs"].append(
        {"path": str(path.relative_to(out_dir)), "sha256": _sha256(path)}
    )


def _write_manifest(out_dir: Path, manifest: dict) -> None:
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def run_end_to_end(config: RunConfig, last_stage: str | None = None) -> dict:
    """Run the pipeline (optionally stopping after `last_stage`).

    Returns the output manifest. Input problems raise ConfigError before any
    stage runs. A stage failure raises StageError after writing the partial
    manifest, so completed work stays auditable.
    """
    cases = load_catalog(config.data_dir)  # ConfigError before any work
    data_dir = Path(config.data_dir)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"config": _as_dict(config), "stages": [], "results": {}}

    state: dict = {"cases": cases}

    def stage(name, fn):
        record = {"name": name, "status": "running", "outputs": []}
        manifest["stages"].append(record)
        try:
            fn(record)
        except Exception as exc:
            record["status"] = "failed"
            record["error"] = str(exc)
            _write_manifest(out_dir, manifest)
            raise StageError(name, exc) from exc
        record["status"] = "done"

    def labels_stage(record):
        plan = complete_labels(cases, config, out_dir)
        plan_path = out_dir / "label_plan.json"
        plan.to_json(plan_path, bases=(out_dir, data_dir))
        _register(record, out_dir, plan_path)
        for r in plan.records:
            if r.provenance == "pseudo":
                _register(record, out_dir, Path(r.path))
        state["plan"] = plan

    def postprocess_stage(record):
        masks: dict[tuple[str, str], Mask3D] = {}
        cleaned_dir = out_dir / "cleaned"
        cleaned_dir.mkdir(exist_ok=True)
        for r in state["plan"].records:
            if r.provenance == "manual":
                masks[(r.case_id, r.phase)] = read_nifti_mask(r.path)
            elif r.provenance == "pseudo":
                mask = read_nifti_mask(r.path)
                liver = mask.binary(LIVER)
                if not liver.any():
                    # no liver channel available: keep the volume criterion only
                    liver = np.ones(mask.dims, dtype=bool)
                cleaned = postprocess(mask, liver, TUMOR)
                path = cleaned_dir / f"{r.case_id}_{r.phase}_labels.nii.gz"
                write_nifti_mask(cleaned, path)
                _register(record, out_dir, path)
                masks[(r.case_id, r.phase)] = cleaned
        state["masks"] = masks

    def evaluate_stage(record):
        results: dict[str, MatchResult] = {}
        for case in cases:
            if case.truth is None:
                continue
            truth = read_nifti_mask(data_dir / case.truth)
            truth_labels, _ = connected_components(truth.binary(TUMOR))
            for phase in config.phases:
                mask = state["masks"].get((case.case_id, phase))
                if mask is None:
                    continue
                pred_labels, _ = connected_components(mask.binary(TUMOR))
                results[f"{case.case_id}_{phase}"] = match_instances(
                    pred_labels, truth_labels
                )
        csv_path = out_dir / "detection.csv"
        json_path = out_dir / "detection.json"
        write_match_csv(csv_path, results)
        write_match_json(json_path, results)
        _register(record, out_dir, csv_path)
        _register(record, out_dir, json_path)
        manifest["results"]["detection_cases"] = len(results)

    def features_stage(record):
        table: list[tuple[TumorInstance, np.ndarray]] = []
        instances: dict[tuple[str, str], list[TumorInstance]] = {}
        feature_rows: dict[tuple[str, str, int], np.ndarray] = {}
        for case in cases:
            for phase in config.phases:
                mask = state["masks"].get((case.case_id, phase))
                if mask is None or phase not in case.volumes:
                    continue
                volume = load_volume(data_dir / case.volumes[phase])
                found = collect_instances(case.case_id, phase, mask)
                instances[(case.case_id, phase)] = found
                for inst in found:
                    feats = extract_features(volume, inst.mask)
                    table.append((inst, feats))
                    feature_rows[(inst.patient_id, inst.phase, inst.instance_id)] = feats
        path = out_dir / "features.csv"
        write_feature_table(path, table)
        _register(record, out_dir, path)
        state["instances"] = instances
        state["features"] = feature_rows

    def dataset_stage(record):
        all_instances = [t for group in state["instances"].values() for t in group]
        diameters = [t.diameter_mm for t in all_instances]
        if not diameters:
            raise ValueError("no tumor instances found in any case")
        kept = set(
            (t.patient_id, t.phase, t.instance_id)
            for t in exclude_small(all_instances, diameters)
        )
        manifest["results"]["instances_total"] = len(all_instances)
        manifest["results"]["instances_kept"] = len(kept)

        labeled_cases = [
            c for c in cases if c.time is not None and c.event is not None
        ]
        bags_by_phase: dict[str, list[TumorFeatureBag | None]] = {
            phase: [] for phase in config.phases
        }
        labels: list[SurvivalLabel] = []
        ids: list[str] = []
        for case in labeled_cases:
            per_phase: dict[str, TumorFeatureBag] = {}
            for phase in config.phases:
                group = [
                    t
                    for t in state["instances"].get((case.case_id, phase), [])
                    if (t.patient_id, t.phase, t.instance_id) in kept
                ]
                if not group:
                    continue
                per_phase[phase] = TumorFeatureBag(
                    patient_id=case.case_id,
                    features=np.vstack(
                        [
                            state["features"][(t.patient_id, t.phase, t.instance_id)]
                            for t in group
                        ]
                    ),
                    volumes=np.asarray([t.volume_mm3 for t in group]),
                    phase=phase,
                )
            if not per_phase:
                continue
            for phase in config.phases:
                bags_by_phase[phase].append(per_phase.get(phase))
            labels.append(SurvivalLabel(time=float(case.time), event=bool(case.event)))
            ids.append(case.case_id)
        if len(labels) < 2:
            raise ValueError("fewer than two patients have outcomes and tumors")
        state["bags_by_phase"] = bags_by_phase
        state["labels"] = labels
        state["ids"] = ids
        manifest["results"]["patients"] = len(labels)

    def crossvalidate_stage(record):
        result = crossvalidate(
            state["bags_by_phase"],
            state["labels"],
            config.training,
            folds=config.cross_validation.folds,
            repeats=config.cross_validation.repeats,
            seed=config.seed,
        )
        path = out_dir / "cv_results.json"
        result.to_json(path)
        _register(record, out_dir, path)
        manifest["results"]["cv_mean_c_index"] = result.mean_c_index

    def model_stage(record):
        labels = state["labels"]
        hazards_by_phase: dict[str, list[float | None]] = {}
        for phase, bags in state["bags_by_phase"].items():
            pairs = [(b, lbl) for b, lbl in zip(bags, labels) if b is not None]
            if len(pairs) < 2 or not any(lbl.event for _, lbl in pairs):
                continue
            params_norm = fit_normalization(np.vstack([b.features for b, _ in pairs]))
            normalized = [(_normalized_bag(b, params_norm), lbl) for b, lbl in pairs]
            result = train(normalized, config.training)
            ckpt = out_dir / f"model_{phase}.json"
            hist = out_dir / f"history_{phase}.csv"
            save_checkpoint(ckpt, result.params, config.training)
            write_history(hist, result.history)
            _register(record, out_dir, ckpt)
            _register(record, out_dir, hist)
            hazards_by_phase[phase] = [
                None
                if bag is None
                else predict_hazard(
                    result.params,
                    _normalized_bag(bag, params_norm),
                    config.training.pooling,
                )
                for bag in bags
            ]
        if not hazards_by_phase:
            raise ValueError("no phase had enough data to train")
        fused = [
            late_fuse(
                hazards_by_phase.get("pre", [None] * len(labels))[i],
                hazards_by_phase.get("post", [None] * len(labels))[i],
            )
            for i in range(len(labels))
        ]
        state["hazards"] = np.asarray(fused)
        path = out_dir / "hazards.json"
        path.write_text(
            json.dumps(
                {pid: h for pid, h in zip(state["ids"], fused)}, indent=2, sort_keys=True
            )
            + "\n"
        )
        _register(record, out_dir, path)

    def stats_stage(record):
        labels = state["labels"]
        times = np.asarray([lbl.time for lbl in labels])
        events = np.asarray([lbl.event for lbl in labels])
        table = CohortTable(
            ids=tuple(state["ids"]),
            times=times,
            events=events,
            covariates={"hazard": state["hazards"]},
        )
        stats: dict = {}
        stats["c_index"] = concordance_index(times, events, state["hazards"])
        try:
            report = coxph_fit(table, ["hazard"])
        except (ConvergenceError, SingularModelError) as exc:
            # small or separable cohorts can defeat the fit; report, don't hide
            stats["cox_error"] = str(exc)
            report = None
        if report is not None:
            fit_path = out_dir / "cox_fit.json"
            report.to_json(fit_path)
            _register(record, out_dir, fit_path)

        if report is not None and table.n >= BOOTSTRAP_MIN_PATIENTS:
            boot = bootstrap_hr(table, ["hazard"], seed=config.seed)
            stats["hazard_hr_ci"] = list(boot.intervals["hazard"])
            stats["bootstrap_dropped"] = boot.n_dropped
        else:
            stats["hazard_hr_ci"] = None
            stats["bootstrap_dropped"] = None

        high = dichotomize_by_median(state["hazards"])
        chi2, p = logrank_test(times, events, high)
        stats["logrank_chi2"] = chi2
        stats["logrank_p"] = p
        km_path = out_dir / "km_curves.json"
        km_payload = {}
        for name, group in (("low", ~high), ("high", high)):
            if group.any():
                curve = kaplan_meier(times[group], events[group])
                km_payload[name] = {
                    "times": curve.times.tolist(),
                    "survival": curve.survival.tolist(),
                    "at_risk": curve.at_risk.tolist(),
                }
        km_path.write_text(json.dumps(km_payload, indent=2) + "\n")
        _register(record, out_dir, km_path)
        manifest["results"]["stats"] = stats

    pipeline = [
        ("labels", labels_stage),
        ("postprocess", postprocess_stage),
        ("evaluate", evaluate_stage),
        ("features", features_stage),
        ("dataset", dataset_stage),
        ("crossvalidate", crossvalidate_stage),
        ("model", model_stage),
        ("stats", stats_stage),
    ]
    names = [name for name, _ in pipeline]
    if last_stage is not None and last_stage not in names:
        raise ConfigError(f"unknown stage {last_stage!r}, expected one of {names}")
    for name, fn in pipeline:
        stage(name, fn)
        if name == last_stage:
            break

    _write_manifest(out_dir, manifest)
    return manifest


def simulate_dataset(out_dir, n_cases: int = 8, dims=(64, 64, 64), seed: int = 0) -> Path:
    """Write a phantom dataset directory the pipeline can consume.

    Each case gets two contrast phases, an analytic truth mask, a seed
    prompt on the largest tumor, and survival outcomes whose hazard grows
    with tumor size. Returns the dataset directory.
    """
    from .nifti import write_nifti_volume
    from .synthetic import (
        Ellipsoid,
        PhantomSpec,
        Sphere,
        _calibrate_uniform_bound,
        generate_phantom,
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    spacing = (1.0, 1.0, 1.0)
    center = tuple(d / 2.0 for d in dims)
    axes = tuple(d * 0.40 for d in dims)
    liver = Ellipsoid(center_mm=center, semi_axes_mm=axes)

    entries = []
    max_radii = []
    for i in range(n_cases):
        count = int(rng.integers(1, 4))
        spheres: list[Sphere] = []
        attempts = 0
        while len(spheres) < count and attempts < 200:
            attempts += 1
            radius = float(rng.uniform(5.0, 9.0))
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            reach = 1.0 - (radius + 1.0) / min(axes)
            magnitude = float(rng.uniform(0.0, max(reach, 0.0)))
            candidate = tuple(
                c + a * d * magnitude for c, a, d in zip(center, axes, direction)
            )
            if all(
                np.linalg.norm(np.subtract(candidate, s.center_mm))
                > radius + s.radius_mm + 2.0
                for s in spheres
            ):
                spheres.append(Sphere(center_mm=candidate, radius_mm=radius))
        spec = PhantomSpec(
            dims=tuple(dims),
            spacing=spacing,
            liver=liver,
            tumors=tuple(spheres),
            liver_intensity=(100.0, 140.0),
            tumor_intensity=(75.0, 60.0),
            noise_std=4.0,
            seed=int(rng.integers(0, 2**31)),
        )
        pre, post, truth = generate_phantom(spec)
        case_id = f"case{i:03d}"
        write_nifti_volume(pre, out_dir / f"{case_id}_pre.nii.gz")
        write_nifti_volume(post, out_dir / f"{case_id}_post.nii.gz")
        write_nifti_mask(truth, out_dir / f"{case_id}_truth.nii.gz")

        largest = max(spheres, key=lambda s: s.radius_mm)
        voxel = tuple(int(c / s) for c, s in zip(largest.center_mm, spacing))
        entries.append(
            {
                "id": case_id,
                "volumes": {
                    "pre": f"{case_id}_pre.nii.gz",
                    "post": f"{case_id}_post.nii.gz",
                },
                "truth": f"{case_id}_truth.nii.gz",
                "seeds": {
                    "post": {
                        "tumor": {
                            "view": "axial",
                            "index": voxel[2],
                            "points": [[voxel[1], voxel[0], True]],
                        }
                    }
                },
            }
        )
        max_radii.append(largest.radius_mm)

    risks = 0.25 * (np.asarray(max_radii) - np.mean(max_radii))
    rates = 0.05 * np.exp(risks)
    event_times = rng.exponential(1.0 / rates)
    bound = _calibrate_uniform_bound(event_times, 0.2)
    censor_times = rng.uniform(0.0, bound, size=n_cases)
    for entry, t, c in zip(entries, event_times, censor_times):
        entry["time"] = float(max(min(t, c), 1e-12))
        entry["event"] = bool(t <= c)

    (out_dir / "cases.json").write_text(
        json.dumps({"cases": entries}, indent=2) + "\n"
    )
    return out_dir
