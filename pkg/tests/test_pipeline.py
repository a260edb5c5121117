import dataclasses
import json

import numpy as np
import pytest

from toporec import cli, pipeline
from toporec.classifier import TrainConfig
from toporec.errors import DataError
from toporec.images import write_depth_png, write_rgb_png, write_segmentation_png
from toporec.network import NetworkParams
from toporec.pipeline import GridNetworkConfig, PipelineConfig, PreprocessConfig
from toporec.descriptor import DescriptorConfig
from toporec.synth import CameraGrid, ShapeSpec, rasterize_scene, render_view, uniform

TINY_SHAPES = [
    ShapeSpec("cylinder", (0.15, 0.035), uniform((200, 40, 40)), "can_red"),
    ShapeSpec("cylinder", (0.15, 0.035), uniform((40, 170, 40)), "can_green"),
]


def tiny_config(**overrides):
    base = dict(
        preprocess=PreprocessConfig(voxel_size=0.01),
        descriptor=DescriptorConfig(n_s_max=20, max_slices=12),
        network=GridNetworkConfig(grid_step=16,
                                  params=NetworkParams(eps=12.0, min_pts=5)),
        camera=CameraGrid(azimuth_step=np.pi / 2, polar_step=np.pi / 2),
        train=TrainConfig(epochs=20, batch_size=32),
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Small two-object training run shared across this module."""
    tmp = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config()
    net = pipeline.cmd_build_network(cfg, tmp / "net.txt")
    result = pipeline.cmd_train(cfg, TINY_SHAPES, net, tmp / "models")
    return {"cfg": cfg, "net": net, "net_path": tmp / "net.txt",
            "models_dir": tmp / "models", "result": result, "tmp": tmp}


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = tiny_config()
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert PipelineConfig.load(path) == cfg

    def test_versioned(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"version": 99}))
        with pytest.raises(DataError):
            PipelineConfig.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            PipelineConfig.load(tmp_path / "nope.json")

    def test_defaults_follow_reference_parameters(self):
        cfg = PipelineConfig()
        assert cfg.scale_factor == 2.5
        assert cfg.descriptor.sigma1 == 0.1
        assert cfg.descriptor.sigma2 == 2.5e-2
        assert cfg.descriptor.alpha == pytest.approx(np.pi / 4)
        assert cfg.network.grid_step == 5
        assert cfg.network.params.xi == pytest.approx(np.pi / 8)
        assert cfg.network.params.n_intervals == (3, 8)
        assert cfg.network.params.gains == (0.10, 0.25)
        assert cfg.network.params.eps == 7.0
        assert cfg.network.params.min_pts == 6
        assert cfg.network.params.merge_overlap == 0.95
        assert cfg.camera.azimuth_step == pytest.approx(np.pi / 36)
        assert cfg.camera.polar_step == pytest.approx(np.pi / 36)
        assert cfg.intrinsics.depth_scale == 0.001
        assert cfg.train.epochs == 100
        assert cfg.train.lr_initial == 1e-2
        assert cfg.train.lr_late == 1e-3
        assert cfg.train.lr_switch_epoch == 50


class TestBuildNetwork:
    def test_writes_and_round_trips(self, tmp_path):
        cfg = tiny_config()
        path = tmp_path / "net.txt"
        net = pipeline.cmd_build_network(cfg, path)
        loaded = pipeline.load_network(path)
        assert loaded.n_regions == net.n_regions
        assert loaded.dumps() == net.dumps()

    def test_rerun_identical_bytes(self, tmp_path):
        cfg = tiny_config()
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        pipeline.cmd_build_network(cfg, a)
        pipeline.cmd_build_network(cfg, b)
        assert a.read_bytes() == b.read_bytes()

    def test_single_cell_network(self, tmp_path):
        cfg = tiny_config(network=GridNetworkConfig(
            grid_step=64, params=NetworkParams(n_intervals=(1, 1), eps=500.0,
                                               min_pts=1)))
        net = pipeline.cmd_build_network(cfg, tmp_path / "net.txt")
        assert net.n_regions == 1
        np.testing.assert_allclose(net.delta, [[1.0]])

    def test_missing_network_actionable_error(self, tmp_path):
        with pytest.raises(DataError, match="network build"):
            pipeline.load_network(tmp_path / "missing.txt")


class TestTrain:
    def test_artifacts_written(self, trained):
        models_dir = trained["models_dir"]
        for name in ("m1.bin", "m2.bin", "config.json", "training.csv",
                     "training_summary.txt", "training_loss.png"):
            assert (models_dir / name).exists(), name

    def test_shape_pair_separated_by_color_model(self, trained):
        acc = trained["result"]["train_accuracy"]
        assert acc["m1"] <= 0.75  # same-shape pair is shape-ambiguous
        assert acc["m2"] >= 0.95

    def test_deterministic_under_seed(self, trained, tmp_path):
        cfg = trained["cfg"]
        result = pipeline.cmd_train(cfg, TINY_SHAPES, trained["net"], tmp_path / "m")
        assert result["histories"] == trained["result"]["histories"]
        assert ((tmp_path / "m" / "m1.bin").read_bytes()
                == (trained["models_dir"] / "m1.bin").read_bytes())

    def test_mirror_augmentation_triples_samples(self, trained):
        n_views = len(trained["cfg"].camera.directions())
        assert trained["result"]["n_samples"] == 2 * n_views * 3


class TestSynthGenerate:
    def test_manifest_and_files(self, trained, tmp_path):
        entries = pipeline.cmd_synth_generate(trained["cfg"], TINY_SHAPES,
                                              tmp_path / "data", (0.0, 0.3))
        assert len(entries) == 2 * len(trained["cfg"].camera.directions()) * 2
        for entry in entries[:4]:
            assert (tmp_path / "data" / entry["file"]).exists()
        occluded = [e for e in entries if e["occluded"]]
        assert occluded and all(e["occlusion_fraction"] == 0.3 for e in occluded)

    def test_polar_offset_drops_out_of_range(self, trained, tmp_path):
        cfg = trained["cfg"]
        entries = pipeline.cmd_synth_generate(cfg, TINY_SHAPES[:1],
                                              tmp_path / "d", (0.0,),
                                              polar_offset=np.pi / 8)
        polars = {round(e["polar"], 6) for e in entries}
        assert all(p <= np.pi for p in polars)

    def test_manifest_records_shape_specs(self, trained, tmp_path):
        pipeline.cmd_synth_generate(trained["cfg"], TINY_SHAPES,
                                    tmp_path / "data", (0.0,))
        doc = json.loads((tmp_path / "data" / "manifest.json").read_text())
        specs = [ShapeSpec.from_json(s) for s in doc["shapes"]]
        assert specs == TINY_SHAPES


class TestOverflowReporting:
    def test_offending_sample_named(self, trained):
        cfg = dataclasses.replace(
            trained["cfg"],
            descriptor=dataclasses.replace(trained["cfg"].descriptor,
                                           max_slices=2))
        cloud = render_view(TINY_SHAPES[0], (0.3, 0.7, 0.6))
        prepared = pipeline.preprocess_cloud(cloud, cfg)
        from toporec.cloud import view_normalize
        normalized, _ = view_normalize(prepared)
        with pytest.raises(DataError, match="big_sample.*can_red"):
            pipeline.compute_training_matrix(
                [(normalized, "can_red")], trained["net"], cfg,
                sample_names=["big_sample"])


class TestEvaluate:
    def test_training_views_evaluate_high(self, trained, tmp_path):
        cfg = trained["cfg"]
        entries = pipeline.cmd_synth_generate(cfg, TINY_SHAPES, tmp_path / "data",
                                              (0.0,))
        m1, m2 = pipeline.load_models(trained["models_dir"])
        report = pipeline.cmd_evaluate(cfg, tmp_path / "data", m1, m2,
                                       trained["net"], out_dir=tmp_path / "out")
        assert report["summary"]["overall"] >= 0.95
        for name in ("evaluation.csv", "evaluation_summary.txt",
                     "confusion_matrix.png", "per_class_accuracy.png"):
            assert (tmp_path / "out" / name).exists(), name

    def test_empty_dataset_rejected(self, trained, tmp_path):
        from toporec.synth import write_manifest
        data = tmp_path / "empty"
        data.mkdir()
        write_manifest(data / "manifest.json", [])
        m1, m2 = pipeline.load_models(trained["models_dir"])
        with pytest.raises(DataError):
            pipeline.cmd_evaluate(trained["cfg"], data, m1, m2, trained["net"])

    def test_label_mismatch_rejected(self, trained, tmp_path):
        from toporec.ply import write_ply
        from toporec.synth import write_manifest
        data = tmp_path / "mismatch"
        data.mkdir()
        cloud = render_view(TINY_SHAPES[0], (0.3, 0.7, 0.6))
        write_ply(data / "x.ply", cloud)
        write_manifest(data / "manifest.json",
                       [{"file": "x.ply", "label": "unknown_thing"}])
        m1, m2 = pipeline.load_models(trained["models_dir"])
        with pytest.raises(DataError, match="unknown_thing"):
            pipeline.cmd_evaluate(trained["cfg"], data, m1, m2, trained["net"])

    def test_five_fold_report_shape(self, trained, tmp_path):
        cfg = dataclasses.replace(
            trained["cfg"],
            camera=CameraGrid(azimuth_step=np.pi / 2, polar_step=np.pi / 2),
            train=TrainConfig(epochs=4, batch_size=32))
        entries = pipeline.cmd_synth_generate(cfg, TINY_SHAPES, tmp_path / "data",
                                              (0.0,))
        report = pipeline.cmd_evaluate_folds(cfg, tmp_path / "data",
                                             trained["net"], 5,
                                             out_dir=tmp_path / "folds")
        assert len(report["fold_accuracies"]) == 5
        assert 0.0 <= report["mean"] <= 1.0
        assert report["std"] >= 0.0
        assert (tmp_path / "folds" / "folds.csv").exists()
        assert (tmp_path / "folds" / "fold_accuracy.png").exists()


def scene_fixture(cfg, occluded_pair=False):
    """Two placed objects; optionally the second partly behind the first."""
    views = []
    for i, shape in enumerate(TINY_SHAPES):
        v = render_view(shape, (0.2, 0.7, -0.68), spacing=0.003)
        if occluded_pair:
            offset = np.array([0.07 * (1 if i else -1), 0.0, 0.5 + 0.3 * i])
        else:
            offset = np.array([(i - 0.5) * 0.22, 0.0, 0.65])
        views.append((v.with_points(v.points + offset), i + 1))
    return rasterize_scene(views, cfg.intrinsics, (240, 320))


class TestRecognize:
    def test_unoccluded_scene(self, trained):
        cfg = trained["cfg"]
        rgb, depth, seg = scene_fixture(cfg)
        m1, m2 = pipeline.load_models(trained["models_dir"])
        results, warnings = pipeline.cmd_recognize(cfg, rgb, depth, seg, m1, m2,
                                                   trained["net"])
        assert [r.label for r in results] == ["can_red", "can_green"]
        assert not warnings
        assert all(not r.occluded for r in results)

    def test_occluded_scene_flags_and_recognizes(self, trained):
        cfg = trained["cfg"]
        rgb, depth, seg = scene_fixture(cfg, occluded_pair=True)
        m1, m2 = pipeline.load_models(trained["models_dir"])
        results, _ = pipeline.cmd_recognize(cfg, rgb, depth, seg, m1, m2,
                                            trained["net"])
        by_id = {r.instance_id: r for r in results}
        assert by_id[2].occluded is True
        assert by_id[1].occluded is False
        assert by_id[2].label == "can_green"

    def test_background_only_segmentation(self, trained):
        cfg = trained["cfg"]
        rgb, depth, seg = scene_fixture(cfg)
        m1, m2 = pipeline.load_models(trained["models_dir"])
        results, warnings = pipeline.cmd_recognize(cfg, rgb, depth,
                                                   np.zeros_like(seg), m1, m2,
                                                   trained["net"])
        assert results == []
        assert warnings == []

    def test_empty_mask_warns(self, trained):
        cfg = trained["cfg"]
        rgb, depth, seg = scene_fixture(cfg)
        seg = seg.copy()
        seg[seg == 2] = 0
        seg[0, 0] = 2  # a pixel with zero depth
        m1, m2 = pipeline.load_models(trained["models_dir"])
        results, warnings = pipeline.cmd_recognize(cfg, rgb, depth, seg, m1, m2,
                                                   trained["net"])
        assert len(results) == 1
        assert any("instance 2" in w for w in warnings)

    def test_jobs_do_not_change_results(self, trained):
        cfg = trained["cfg"]
        rgb, depth, seg = scene_fixture(cfg)
        m1, m2 = pipeline.load_models(trained["models_dir"])
        sequential, _ = pipeline.cmd_recognize(cfg, rgb, depth, seg, m1, m2,
                                               trained["net"], jobs=1)
        parallel, _ = pipeline.cmd_recognize(cfg, rgb, depth, seg, m1, m2,
                                             trained["net"], jobs=8)
        assert sequential == parallel


class TestCli:
    def test_usage_error_exit_code(self, capsys):
        assert cli.main(["unknown-command"]) == cli.EXIT_USAGE

    def test_missing_required_flag(self):
        assert cli.main(["train", "--out", "/tmp/x"]) == cli.EXIT_USAGE

    def test_internal_error_exit_code(self, tmp_path, monkeypatch, capsys):
        from toporec.errors import InvariantError

        def boom(cfg, out):
            raise InvariantError("synthetic failure")

        monkeypatch.setattr(pipeline, "cmd_build_network", boom)
        code = cli.main(["network", "build", "--out", str(tmp_path / "x.txt")])
        assert code == cli.EXIT_INTERNAL

    def test_seed_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        tiny_config().save(cfg_path)
        from toporec.cli import _load_config
        import argparse
        args = argparse.Namespace(config=str(cfg_path), seed=99)
        cfg = _load_config(args)
        assert cfg.seed == 99
        assert cfg.train.seed == 99

    def test_network_build_and_data_error(self, trained, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        trained["cfg"].save(cfg_path)
        out = tmp_path / "net.txt"
        code = cli.main(["network", "build", "--config", str(cfg_path),
                         "--out", str(out)])
        assert code == cli.EXIT_OK
        assert out.exists()
        assert "regions" in capsys.readouterr().out

    def test_train_missing_network_is_data_error(self, trained, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        trained["cfg"].save(cfg_path)
        shapes_path = tmp_path / "shapes.json"
        shapes_path.write_text(json.dumps([s.to_json() for s in TINY_SHAPES]))
        code = cli.main(["train", "--config", str(cfg_path),
                         "--shapes", str(shapes_path),
                         "--network", str(tmp_path / "missing.txt"),
                         "--out", str(tmp_path / "m")])
        assert code == cli.EXIT_DATA

    def test_synth_descriptor_evaluate_flow(self, trained, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        trained["cfg"].save(cfg_path)
        shapes_path = tmp_path / "shapes.json"
        shapes_path.write_text(json.dumps([s.to_json() for s in TINY_SHAPES]))

        data_dir = tmp_path / "data"
        code = cli.main(["synth", "generate", "--config", str(cfg_path),
                         "--shapes", str(shapes_path), "--out", str(data_dir),
                         "--occlude", "0.0"])
        assert code == cli.EXIT_OK

        desc_dir = tmp_path / "desc"
        ply_files = sorted(data_dir.glob("*.ply"))
        code = cli.main(["descriptor", "compute", "--config", str(cfg_path),
                         "--network", str(trained["net_path"]),
                         "--input", str(ply_files[0]), "--out", str(desc_dir),
                         "--text"])
        assert code == cli.EXIT_OK
        assert list(desc_dir.glob("*.tops.desc"))
        assert list(desc_dir.glob("*.tops2.desc"))
        assert list(desc_dir.glob("*.txt"))

        out_dir = tmp_path / "eval"
        code = cli.main(["evaluate", "--config", str(cfg_path),
                         "--data", str(data_dir),
                         "--models", str(trained["models_dir"]),
                         "--network", str(trained["net_path"]),
                         "--out", str(out_dir)])
        assert code == cli.EXIT_OK
        assert (out_dir / "evaluation.csv").exists()
        assert "overall accuracy" in capsys.readouterr().out

    def test_recognize_cli_jobs_identical_reports(self, trained, tmp_path):
        cfg = trained["cfg"]
        cfg_path = tmp_path / "cfg.json"
        cfg.save(cfg_path)
        rgb, depth, seg = scene_fixture(cfg)
        write_rgb_png(tmp_path / "rgb.png", rgb)
        write_depth_png(tmp_path / "depth.png", depth)
        write_segmentation_png(tmp_path / "seg.png", seg)
        reports = {}
        for jobs in (1, 8):
            out_dir = tmp_path / f"rec{jobs}"
            code = cli.main(["recognize", "--config", str(cfg_path),
                             "--rgb", str(tmp_path / "rgb.png"),
                             "--depth", str(tmp_path / "depth.png"),
                             "--seg", str(tmp_path / "seg.png"),
                             "--models", str(trained["models_dir"]),
                             "--network", str(trained["net_path"]),
                             "--out", str(out_dir), "--jobs", str(jobs)])
            assert code == cli.EXIT_OK
            reports[jobs] = ((out_dir / "recognition.csv").read_bytes(),
                             (out_dir / "recognition_summary.txt").read_bytes())
        assert reports[1] == reports[8]

    def test_train_from_ply_directory(self, trained, tmp_path):
        cfg = dataclasses.replace(trained["cfg"],
                                  train=TrainConfig(epochs=5, batch_size=32))
        cfg_path = tmp_path / "cfg.json"
        cfg.save(cfg_path)
        shapes_path = tmp_path / "shapes.json"
        shapes_path.write_text(json.dumps([s.to_json() for s in TINY_SHAPES]))
        data_dir = tmp_path / "data"
        assert cli.main(["synth", "generate", "--config", str(cfg_path),
                         "--shapes", str(shapes_path),
                         "--out", str(data_dir)]) == cli.EXIT_OK
        out_dir = tmp_path / "models"
        code = cli.main(["train", "--config", str(cfg_path),
                         "--data", str(data_dir),
                         "--network", str(trained["net_path"]),
                         "--out", str(out_dir)])
        assert code == cli.EXIT_OK
        assert (out_dir / "m1.bin").exists()
        assert (out_dir / "m2.bin").exists()
