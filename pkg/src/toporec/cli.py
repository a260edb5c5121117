"""Command-line interface.

Subcommands: network build, synth generate, descriptor compute, train,
recognize, evaluate. Exit codes: 0 success, 1 usage error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import DataError, InvariantError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toporec",
                     description="Topological shape/color object recognition")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p):
        p.add_argument("--config", help="pipeline config JSON (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output file or directory")

    network = sub.add_parser("network", help="color network operations")
    network_sub = network.add_subparsers(dest="network_command", required=True,
                                         parser_class=_Parser)
    net_build = network_sub.add_parser("build", help="build and save the color network")
    add_common(net_build)

    synth = sub.add_parser("synth", help="synthetic data operations")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True,
                                     parser_class=_Parser)
    gen = synth_sub.add_parser("generate", help="render labeled view clouds")
    add_common(gen)
    gen.add_argument("--shapes", required=True, help="shape spec JSON list")
    gen.add_argument("--occlude", default="0.0",
                     help="comma-separated occlusion fractions (default 0.0)")
    gen.add_argument("--azimuth-offset", type=float, default=0.0,
                     help="rotate all camera azimuths (held-out views)")
    gen.add_argument("--polar-offset", type=float, default=0.0,
                     help="shift all camera polar angles (held-out views)")

    desc = sub.add_parser("descriptor", help="descriptor operations")
    desc_sub = desc.add_subparsers(dest="descriptor_command", required=True,
                                   parser_class=_Parser)
    comp = desc_sub.add_parser("compute", help="compute descriptors of PLY clouds")
    add_common(comp)
    comp.add_argument("--input", required=True, help="PLY file or directory")
    comp.add_argument("--network", required=True, help="color network file")
    comp.add_argument("--kind", choices=["tops", "tops2", "both"], default="both")
    comp.add_argument("--text", action="store_true", help="also dump text form")

    train = sub.add_parser("train", help="train the classifier pair")
    add_common(train)
    train.add_argument("--network", required=True, help="color network file")
    source = train.add_mutually_exclusive_group(required=True)
    source.add_argument("--shapes", help="shape spec JSON (synthetic training)")
    source.add_argument("--data", help="directory with PLY clouds + manifest")

    rec = sub.add_parser("recognize", help="recognize objects in an RGB-D scene")
    add_common(rec)
    rec.add_argument("--rgb", required=True)
    rec.add_argument("--depth", required=True)
    rec.add_argument("--seg", required=True, help="instance segmentation PNG")
    rec.add_argument("--models", required=True, help="directory with m1.bin/m2.bin")
    rec.add_argument("--network", required=True)
    rec.add_argument("--jobs", type=int, default=1)

    ev = sub.add_parser("evaluate", help="evaluate on a labeled dataset")
    add_common(ev)
    ev.add_argument("--data", required=True, help="dataset directory with manifest")
    ev.add_argument("--network", required=True)
    ev.add_argument("--models", help="directory with m1.bin/m2.bin")
    ev.add_argument("--folds", type=int,
                    help="k-fold cross-validation (retrains per fold)")
    return parser


def _load_config(args):
    from .pipeline import PipelineConfig

    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        import dataclasses

        train = dataclasses.replace(cfg.train, seed=args.seed)
        cfg = dataclasses.replace(cfg, seed=args.seed, train=train)
    return cfg


def _run(args) -> int:
    from . import pipeline

    cfg = _load_config(args)
    if args.command == "network":
        net = pipeline.cmd_build_network(cfg, args.out)
        print(f"color network: {net.n_regions} regions, {len(net.edges)} edges "
              f"-> {args.out}")
        return EXIT_OK

    if args.command == "synth":
        shapes = pipeline.load_shape_specs(args.shapes)
        fractions = tuple(float(x) for x in args.occlude.split(","))
        entries = pipeline.cmd_synth_generate(cfg, shapes, args.out, fractions,
                                              args.azimuth_offset,
                                              args.polar_offset)
        print(f"wrote {len(entries)} clouds to {args.out}")
        return EXIT_OK

    if args.command == "descriptor":
        return _run_descriptor(args, cfg)

    if args.command == "train":
        network = pipeline.load_network(args.network)
        if args.shapes:
            shapes = pipeline.load_shape_specs(args.shapes)
            result = pipeline.cmd_train(cfg, shapes, network, args.out)
        else:
            result = _train_from_directory(args, cfg, network)
        acc = result["train_accuracy"]
        print(f"trained on {result['n_samples']} samples; train accuracy "
              f"m1={acc['m1']:.3f} m2={acc['m2']:.3f} -> {args.out}")
        return EXIT_OK

    if args.command == "recognize":
        from .images import read_depth_png, read_rgb_png, read_segmentation_png
        from .report import write_recognition_report

        rgb = read_rgb_png(args.rgb)
        depth = read_depth_png(args.depth)
        seg = read_segmentation_png(args.seg)
        m1, m2 = pipeline.load_models(args.models)
        network = pipeline.load_network(args.network)
        results, warnings = pipeline.cmd_recognize(cfg, rgb, depth, seg, m1, m2,
                                                   network, jobs=args.jobs)
        out = Path(args.out)
        write_recognition_report(out, results, warnings)
        cfg.save(out / "config.json")
        for r in results:
            flag = " occluded" if r.occluded else ""
            print(f"instance {r.instance_id}: {r.label} p={r.confidence:.3f} "
                  f"via {r.model}{flag}")
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_OK

    if args.command == "evaluate":
        network = pipeline.load_network(args.network)
        if args.folds:
            report = pipeline.cmd_evaluate_folds(cfg, args.data, network,
                                                 args.folds, out_dir=args.out)
            print(f"{args.folds}-fold accuracy: {report['mean']:.4f} "
                  f"+- {report['std']:.4f}")
        else:
            if not args.models:
                raise DataError("evaluate needs --models unless --folds is given")
            m1, m2 = pipeline.load_models(args.models)
            report = pipeline.cmd_evaluate(cfg, args.data, m1, m2, network,
                                           out_dir=args.out)
            print(f"overall accuracy: {report['summary']['overall']:.4f} "
                  f"on {report['summary']['n']} samples")
        return EXIT_OK

    raise InvariantError(f"unhandled command {args.command!r}")


def _run_descriptor(args, cfg) -> int:
    from . import pipeline
    from .descriptor import tops2_descriptor, tops_descriptor
    from .ply import read_ply

    network = pipeline.load_network(args.network)
    src = Path(args.input)
    paths = sorted(src.glob("*.ply")) if src.is_dir() else [src]
    if not paths:
        raise DataError(f"no PLY files under {src}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        cloud = read_ply(path)
        prepared = pipeline.prepare_for_descriptors(cloud, cfg)
        wanted = ("tops", "tops2") if args.kind == "both" else (args.kind,)
        for kind in wanted:
            if kind == "tops":
                d = tops_descriptor(prepared, cfg.descriptor)
            else:
                d = tops2_descriptor(prepared, network, cfg.descriptor)
            target = out / f"{path.stem}.{kind}.desc"
            d.save(target)
            if args.text:
                d.dump_text(out / f"{path.stem}.{kind}.txt")
    print(f"wrote descriptors for {len(paths)} clouds to {out}")
    return EXIT_OK


def _train_from_directory(args, cfg, network):
    from . import pipeline
    from .cloud import mirror_augment, view_normalize
    from .ply import read_ply
    from .synth import read_manifest

    data_dir = Path(args.data)
    entries = read_manifest(data_dir / "manifest.json")
    if not entries:
        raise DataError(f"{data_dir}: empty dataset")
    clouds = []
    names = []
    for entry in entries:
        cloud = read_ply(data_dir / entry["file"])
        prepped = pipeline.preprocess_cloud(cloud, cfg)
        normalized, _ = view_normalize(prepped)
        for mirrored in mirror_augment(normalized, cfg.mirror_include_double):
            clouds.append((mirrored, entry["label"]))
            names.append(entry["file"])
    return pipeline.train_with_clouds(cfg, clouds, network, args.out,
                                      sample_names=names)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
