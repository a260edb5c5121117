"""End-to-end orchestration: config, training, recognition, evaluation.

Every run resolves a single PipelineConfig (JSON, versioned) that carries
the geometry, preprocessing, network, camera, and training parameters; the
resolved config is written next to the outputs so results are reproducible
from the artifacts alone.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier
from .classifier import MlpModel, TrainConfig
from .cloud import (
    CameraIntrinsics,
    PointCloud,
    backproject,
    detect_occlusion,
    mirror_augment,
    remove_outliers,
    reorient_if_occluded,
    rotate_for_slicing,
    scale_cloud,
    view_normalize,
    voxel_downsample,
)
from .descriptor import DescriptorConfig, descriptor_pair
from .errors import DataError, EmptyCloudError
from .network import ColorNetwork, NetworkParams, build_grid_network
from .ply import read_ply, write_ply
from .synth import CameraGrid, ShapeSpec, occlude, read_manifest, render_view, write_manifest

CONFIG_VERSION = 1


@dataclass(frozen=True)
class PreprocessConfig:
    voxel_size: float | None = 0.01
    outlier_removal: bool = True
    outlier_k: int = 20
    outlier_std_ratio: float = 2.0


@dataclass(frozen=True)
class GridNetworkConfig:
    grid_step: int = 5
    params: NetworkParams = field(default_factory=NetworkParams)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scale_factor: float = 2.5
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    network: GridNetworkConfig = field(default_factory=GridNetworkConfig)
    camera: CameraGrid = field(default_factory=CameraGrid)
    render_spacing: float = 0.004
    mirror_include_double: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    intrinsics: CameraIntrinsics = CameraIntrinsics(fx=300.0, fy=300.0,
                                                    cx=160.0, cy=120.0)

    def to_json(self) -> dict:
        out = {"version": CONFIG_VERSION}
        for name, value in dataclasses.asdict(self).items():
            out[name] = _jsonify(value)
        return out

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        if obj.get("version") != CONFIG_VERSION:
            raise DataError(f"unsupported config version {obj.get('version')!r}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in obj:
                continue
            value = obj[f.name]
            if f.name == "preprocess":
                kwargs[f.name] = PreprocessConfig(**value)
            elif f.name == "descriptor":
                value = dict(value)
                value["pi_grid"] = tuple(value["pi_grid"])
                kwargs[f.name] = DescriptorConfig(**value)
            elif f.name == "network":
                params = value.get("params", {})
                params = dict(params)
                for key in ("n_intervals", "gains"):
                    if key in params:
                        params[key] = tuple(params[key])
                kwargs[f.name] = GridNetworkConfig(
                    grid_step=value["grid_step"], params=NetworkParams(**params))
            elif f.name == "camera":
                kwargs[f.name] = CameraGrid(**value)
            elif f.name == "train":
                kwargs[f.name] = TrainConfig(**value)
            elif f.name == "intrinsics":
                kwargs[f.name] = CameraIntrinsics(**value)
            else:
                kwargs[f.name] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                return cls.from_json(json.load(fh))
        except FileNotFoundError:
            raise DataError(f"config not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid config JSON ({exc})") from exc


def _jsonify(value):
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def desk_config(**overrides) -> PipelineConfig:
    """Desk-scale defaults: small color grid, coarse camera sphere, short
    training schedule. Keyword overrides replace top-level fields."""
    base = dict(
        seed=0,
        preprocess=PreprocessConfig(voxel_size=0.01, outlier_removal=True),
        descriptor=DescriptorConfig(n_s_max=20, max_slices=12),
        network=GridNetworkConfig(grid_step=16,
                                  params=NetworkParams(eps=12.0, min_pts=5)),
        camera=CameraGrid(azimuth_step=np.pi / 6, polar_step=np.pi / 6),
        train=TrainConfig(epochs=25, batch_size=128),
    )
    base.update(overrides)
    return PipelineConfig(**base)


# -- shared cloud path --------------------------------------------------------


def preprocess_cloud(cloud: PointCloud, cfg: PipelineConfig) -> PointCloud:
    """Scale, then optional voxel downsampling and outlier removal."""
    out = scale_cloud(cloud, cfg.scale_factor)
    if cfg.preprocess.voxel_size:
        out = voxel_downsample(out, cfg.preprocess.voxel_size)
    if cfg.preprocess.outlier_removal:
        out = remove_outliers(out, cfg.preprocess.outlier_k,
                              cfg.preprocess.outlier_std_ratio)
    return out


def prepare_for_descriptors(cloud: PointCloud, cfg: PipelineConfig,
                            occluded: bool = False) -> PointCloud:
    """Full test-time path: preprocess, normalize, reorient when occluded."""
    prepped = preprocess_cloud(cloud, cfg)
    normalized, _ = view_normalize(prepped)
    return reorient_if_occluded(normalized, occluded)


# -- network ------------------------------------------------------------------


def cmd_build_network(cfg: PipelineConfig, out_path) -> ColorNetwork:
    net = build_grid_network(cfg.network.grid_step, cfg.network.params)
    net.save(out_path)
    return net


def load_network(path) -> ColorNetwork:
    try:
        return ColorNetwork.load(path)
    except FileNotFoundError:
        raise DataError(
            f"color network file not found: {path} "
            f"(run 'network build' first)") from None
    except ValueError as exc:
        raise DataError(str(exc)) from exc


# -- training -----------------------------------------------------------------


def load_shape_specs(path) -> list[ShapeSpec]:
    try:
        with open(path) as fh:
            entries = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"shape spec file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid shape JSON ({exc})") from exc
    if not isinstance(entries, list) or not entries:
        raise DataError(f"{path}: expected a non-empty list of shape specs")
    return [ShapeSpec.from_json(e) for e in entries]


def training_clouds(cfg: PipelineConfig, shapes: list[ShapeSpec]):
    """Normalized, mirror-augmented training clouds with labels."""
    out = []
    for shape in shapes:
        for azimuth, polar in cfg.camera.directions():
            view = render_view(shape, CameraGrid.unit_vector(azimuth, polar),
                               cfg.render_spacing)
            prepped = preprocess_cloud(view, cfg)
            normalized, _ = view_normalize(prepped)
            for mirrored in mirror_augment(normalized,
                                           cfg.mirror_include_double):
                out.append((mirrored, shape.label))
    return out


def compute_training_matrix(clouds_labels, network: ColorNetwork,
                            cfg: PipelineConfig, sample_names=None):
    """Descriptor matrices (tops, tops2) plus labels for training."""
    xs1, xs2, labels = [], [], []
    for idx, (cloud, label) in enumerate(clouds_labels):
        try:
            d1, d2 = descriptor_pair(cloud, network, cfg.descriptor)
        except DataError as exc:
            name = sample_names[idx] if sample_names else f"sample {idx}"
            raise DataError(f"{name} ({label}): {exc}") from exc
        xs1.append(d1.vector)
        xs2.append(d2.vector)
        labels.append(label)
    return np.asarray(xs1), np.asarray(xs2), labels


def cmd_train(cfg: PipelineConfig, shapes: list[ShapeSpec],
              network: ColorNetwork, out_dir) -> dict:
    """Render the synthetic training set and train both classifiers."""
    data = training_clouds(cfg, shapes)
    return train_with_clouds(cfg, data, network, out_dir)


def train_with_clouds(cfg: PipelineConfig, clouds_labels,
                      network: ColorNetwork, out_dir,
                      sample_names=None) -> dict:
    """Train the shape model and the shape+color model; write artifacts.

    Returns a summary dict with histories, train accuracies, and paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = clouds_labels
    x1, x2, labels = compute_training_matrix(data, network, cfg, sample_names)
    class_labels = sorted(set(labels))
    if len(class_labels) < 2:
        raise DataError("training data covers a single class")

    models = {}
    histories = {}
    accuracies = {}
    for name, x in (("m1", x1), ("m2", x2)):
        model = classifier.mlp_init(x.shape[1], len(class_labels),
                                    seed=cfg.train.seed, class_labels=class_labels)
        histories[name] = classifier.train(model, x, labels, cfg.train)
        preds = np.argmax(classifier.forward(model, x), axis=1)
        truth = np.array([class_labels.index(lab) for lab in labels])
        accuracies[name] = float(np.mean(preds == truth))
        classifier.save_model(model, out_dir / f"{name}.bin")
        models[name] = model

    cfg.save(out_dir / "config.json")
    from .report import write_training_report
    write_training_report(out_dir, histories, accuracies, len(data))
    return {"models": models, "histories": histories,
            "train_accuracy": accuracies, "n_samples": len(data),
            "class_labels": class_labels, "out_dir": out_dir}


def load_models(models_dir) -> tuple[MlpModel, MlpModel]:
    models_dir = Path(models_dir)
    m1_path = models_dir / "m1.bin"
    m2_path = models_dir / "m2.bin"
    for p in (m1_path, m2_path):
        if not p.exists():
            raise DataError(f"model file not found: {p} (run 'train' first)")
    m1 = classifier.load_model(m1_path)
    m2 = classifier.load_model(m2_path)
    if m1.class_labels != m2.class_labels:
        raise DataError("model pair disagrees on class tables")
    return m1, m2


# -- recognition --------------------------------------------------------------


@dataclass(frozen=True)
class RecognitionResult:
    instance_id: int
    label: str
    confidence: float
    occluded: bool
    model: str  # which classifier won the fusion
    n_points: int


def classify_prepared(cloud: PointCloud, m1: MlpModel, m2: MlpModel,
                      network: ColorNetwork, cfg: PipelineConfig):
    d1, d2 = descriptor_pair(cloud, network, cfg.descriptor)
    p1 = classifier.forward(m1, d1.vector)
    p2 = classifier.forward(m2, d2.vector)
    return classifier.fuse_predictions(p1, p2, m1.class_labels)


def cmd_recognize(cfg: PipelineConfig, rgb: np.ndarray, depth: np.ndarray,
                  segmentation: np.ndarray, m1: MlpModel, m2: MlpModel,
                  network: ColorNetwork, jobs: int = 1
                  ) -> tuple[list[RecognitionResult], list[str]]:
    """Recognize every instance in an aligned RGB-D + segmentation scene.

    Instances are processed independently (thread pool when jobs > 1) and
    merged in instance-id order, so the report does not depend on the
    degree of parallelism.
    """
    ids = sorted(int(i) for i in np.unique(segmentation) if i != 0)
    warnings: list[str] = []

    def process(instance_id: int):
        mask = segmentation == instance_id
        if not (mask & (depth > 0)).any():
            return None, f"instance {instance_id}: empty mask or no valid depth"
        cloud = backproject(depth, rgb, mask, cfg.intrinsics)
        occluded = detect_occlusion(segmentation, depth, instance_id)
        try:
            prepared = prepare_for_descriptors(cloud, cfg, occluded)
        except EmptyCloudError as exc:
            return None, f"instance {instance_id}: {exc}"
        label, confidence, source = classify_prepared(prepared, m1, m2,
                                                      network, cfg)
        return RecognitionResult(instance_id=instance_id, label=label,
                                 confidence=confidence, occluded=occluded,
                                 model=source, n_points=len(prepared)), None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(process, ids))
    else:
        outcomes = [process(i) for i in ids]

    results = []
    for outcome, warning in outcomes:
        if warning:
            warnings.append(warning)
        else:
            results.append(outcome)
    results.sort(key=lambda r: r.instance_id)
    return results, warnings


# -- synthetic dataset generation ---------------------------------------------


def cmd_synth_generate(cfg: PipelineConfig, shapes: list[ShapeSpec], out_dir,
                       occlusion_fractions: tuple[float, ...] = (0.0,),
                       azimuth_offset: float = 0.0,
                       polar_offset: float = 0.0) -> list[dict]:
    """Render view clouds to PLY files plus a manifest.

    Angle offsets shift the camera grid (held-out views); polar positions
    pushed past the pole are dropped. Occluded variants cut the far end of
    the slicing axis of the prepared cloud, then undo the scale so every
    stored cloud enters the evaluation path uniformly raw.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    counter = 0
    for shape in shapes:
        for azimuth, polar in cfg.camera.directions():
            az = azimuth + azimuth_offset
            polar = polar + polar_offset
            if polar > np.pi:
                continue
            view = render_view(shape, CameraGrid.unit_vector(az, polar),
                               cfg.render_spacing)
            for fraction in occlusion_fractions:
                if fraction == 0.0:
                    stored = view
                else:
                    prepped = preprocess_cloud(view, cfg)
                    normalized, _ = view_normalize(prepped)
                    tilted = rotate_for_slicing(normalized, cfg.descriptor.alpha)
                    try:
                        cut = occlude(tilted, fraction, "top")
                    except EmptyCloudError:
                        continue
                    stored = scale_cloud(cut, 1.0 / cfg.scale_factor)
                name = f"{counter:05d}_{shape.label}.ply"
                write_ply(out_dir / name, stored)
                entries.append({"file": name, "label": shape.label,
                                "azimuth": az, "polar": polar,
                                "occluded": fraction > 0.0,
                                "occlusion_fraction": fraction})
                counter += 1
    write_manifest(out_dir / "manifest.json", entries, shapes)
    cfg.save(out_dir / "config.json")
    return entries


# -- evaluation ---------------------------------------------------------------


def evaluate_entries(cfg: PipelineConfig, data_dir, entries, m1, m2, network):
    """Per-entry predictions for a manifest of labeled clouds."""
    data_dir = Path(data_dir)
    rows = []
    for entry in entries:
        cloud = read_ply(data_dir / entry["file"])
        prepared = prepare_for_descriptors(cloud, cfg,
                                           occluded=bool(entry.get("occluded")))
        label, confidence, source = classify_prepared(prepared, m1, m2,
                                                      network, cfg)
        rows.append({"file": entry["file"], "truth": entry["label"],
                     "predicted": label, "confidence": confidence,
                     "model": source,
                     "occlusion_fraction": entry.get("occlusion_fraction", 0.0),
                     "correct": label == entry["label"]})
    return rows


def accuracy_summary(rows) -> dict:
    overall = float(np.mean([r["correct"] for r in rows])) if rows else 0.0
    per_class: dict[str, list] = {}
    for r in rows:
        per_class.setdefault(r["truth"], []).append(r["correct"])
    return {"overall": overall,
            "per_class": {k: float(np.mean(v)) for k, v in sorted(per_class.items())},
            "n": len(rows)}


def cmd_evaluate(cfg: PipelineConfig, data_dir, m1, m2, network,
                 out_dir=None) -> dict:
    """Evaluate stored models on a labeled cloud directory."""
    entries = read_manifest(Path(data_dir) / "manifest.json")
    if not entries:
        raise DataError(f"{data_dir}: empty dataset")
    _check_labels(entries, m1)
    rows = evaluate_entries(cfg, data_dir, entries, m1, m2, network)
    summary = accuracy_summary(rows)
    report = {"rows": rows, "summary": summary}
    if out_dir is not None:
        from .report import write_evaluation_report
        write_evaluation_report(Path(out_dir), report)
        cfg.save(Path(out_dir) / "config.json")
    return report


def cmd_evaluate_folds(cfg: PipelineConfig, data_dir, network, n_folds: int,
                       out_dir=None) -> dict:
    """Stratified k-fold: retrain both models per fold, report mean +- std."""
    entries = read_manifest(Path(data_dir) / "manifest.json")
    if not entries:
        raise DataError(f"{data_dir}: empty dataset")
    data_dir = Path(data_dir)
    folds = _stratified_folds(entries, n_folds, cfg.seed)
    class_labels = sorted({e["label"] for e in entries})
    if len(class_labels) < 2:
        raise DataError("dataset covers a single class")
    fold_rows = []
    accuracies = []
    for k in range(n_folds):
        test_entries = folds[k]
        train_entries = [e for j, fold in enumerate(folds) if j != k
                         for e in fold]
        clouds = []
        for entry in train_entries:
            cloud = read_ply(data_dir / entry["file"])
            prepared = prepare_for_descriptors(
                cloud, cfg, occluded=bool(entry.get("occluded")))
            clouds.append((prepared, entry["label"]))
        x1, x2, labels = compute_training_matrix(clouds, network, cfg)
        m1 = classifier.mlp_init(x1.shape[1], len(class_labels),
                                 seed=cfg.train.seed, class_labels=class_labels)
        classifier.train(m1, x1, labels, cfg.train)
        m2 = classifier.mlp_init(x2.shape[1], len(class_labels),
                                 seed=cfg.train.seed, class_labels=class_labels)
        classifier.train(m2, x2, labels, cfg.train)
        rows = evaluate_entries(cfg, data_dir, test_entries, m1, m2, network)
        fold_rows.append(rows)
        accuracies.append(accuracy_summary(rows)["overall"])
    report = {
        "fold_accuracies": accuracies,
        "mean": float(np.mean(accuracies)),
        "std": float(np.std(accuracies)),
        "rows": [r for rows in fold_rows for r in rows],
    }
    if out_dir is not None:
        from .report import write_fold_report
        write_fold_report(Path(out_dir), report)
        cfg.save(Path(out_dir) / "config.json")
    return report


def _check_labels(entries, model: MlpModel) -> None:
    known = set(model.class_labels)
    unknown = sorted({e["label"] for e in entries} - known)
    if unknown:
        raise DataError(f"dataset labels {unknown} missing from the model's "
                        f"class table {sorted(known)}")


def _stratified_folds(entries, n_folds: int, seed: int):
    if n_folds < 2:
        raise DataError("need at least two folds")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list] = {}
    for entry in entries:
        by_class.setdefault(entry["label"], []).append(entry)
    folds = [[] for _ in range(n_folds)]
    for label in sorted(by_class):
        group = by_class[label]
        order = rng.permutation(len(group))
        for slot, idx in enumerate(order):
            folds[slot % n_folds].append(group[idx])
    return folds
