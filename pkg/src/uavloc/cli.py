"""Command-line entry point: ``uavloc <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from uavloc.errors import ConfigError, DataError, UavlocError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

log = logging.getLogger("uavloc")


def _config(args):
    from uavloc.config import load_config

    cfg = load_config(args.config, args.seed)
    if args.deterministic:
        cfg = cfg.model_copy(update={"deterministic": True})
    return cfg


def cmd_generate(args) -> int:
    from uavloc.synthgen import dataset_digest, generate_dataset

    cfg = _config(args)
    out = Path(args.out or cfg.paths.dataset)
    n_pos = cfg.sampler.count_positive if args.count_positive is None else args.count_positive
    n_null = cfg.sampler.count_null if args.count_null is None else args.count_null
    if n_pos < 0 or n_null < 0:
        raise ConfigError("sample counts must be non-negative")
    sampler = cfg.pose_sampler()
    meta = out / "dataset.json"
    if meta.is_file():
        old = json.loads(meta.read_text())
        want = {
            "count_positive": n_pos,
            "count_null": n_null,
            "seed": cfg.seed,
        }
        same = all(old.get("config", {}).get(k) == v for k, v in want.items())
        if same and _same_geometry(old["config"], cfg) and old.get("digest") == dataset_digest(out):
            print(f"dataset unchanged: {n_pos + n_null} images ({n_pos} positive, {n_null} null) in {out}")
            return EXIT_OK
    manifest = generate_dataset(
        n_pos, n_null, sampler, cfg.camera_intrinsics(), cfg.marker_spec(), out, cfg.seed, cfg.sampler.workers
    )
    n_train, n_val = len(manifest.split("train")), len(manifest.split("val"))
    print(f"{n_pos + n_null} images ({n_pos} positive, {n_null} null) -> {out} [train {n_train}, val {n_val}]")
    return EXIT_OK


def _same_geometry(old: dict, cfg) -> bool:
    s = cfg.sampler
    return (
        old.get("camera") == json.loads(json.dumps(asdict(cfg.camera_intrinsics())))
        and old.get("marker") == json.loads(json.dumps(asdict(cfg.marker_spec())))
        and old.get("sampler")
        == {
            "z_range_m": list(s.z_range_m),
            "yaw_range_deg": list(s.yaw_range_deg),
            "roll_pitch_range_deg": list(s.roll_pitch_range_deg),
        }
    )


def cmd_augment_preview(args) -> int:
    import cv2

    from uavloc.augment import preview_grid
    from uavloc.synthgen import DatasetManifest

    cfg = _config(args)
    manifest = DatasetManifest.load(args.dataset or cfg.paths.dataset)
    recs = [r for r in manifest.records if r.m == 1][: args.count]
    if not recs:
        raise DataError("dataset has no marker images to preview")
    augmenter = cfg.augmentation.build(args.augment)
    grid = preview_grid(list(manifest.load_pixels(recs)), augmenter, cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(out), grid)
    print(f"wrote {out} ({augmenter.display_name}, {len(recs)} images)")
    return EXIT_OK


def cmd_train(args) -> int:
    from uavloc.detector.losses import LossConfig
    from uavloc.detector.train import train

    cfg = _config(args)
    dataset = Path(args.dataset or cfg.paths.dataset)
    if not (dataset / "manifest.csv").is_file():
        raise ConfigError(f"dataset path {dataset} has no manifest.csv; run 'uavloc generate' first")
    variant = args.loss or cfg.loss.variant
    augment = args.augment or cfg.augmentation.method
    tcfg = cfg.train_config()
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    if args.lr is not None:
        tcfg = replace(tcfg, learn_rate=args.lr)
    if args.max_train is not None:
        tcfg = replace(tcfg, max_train=args.max_train)
    out = Path(args.out or cfg.paths.runs / f"{variant}-{augment}" / f"seed{cfg.seed}")
    loss_cfg = LossConfig(cfg.loss.gamma, cfg.loss.mu, variant)
    print(", ".join(["epoch", "train_loss", "val_loss", "val_class_acc", "val_pixel_mae"]))
    ckpt = train(
        dataset, cfg.augmentation.build(augment), variant, tcfg, out, loss_cfg,
        on_epoch=lambda s: print(s.line(), flush=True),
    )
    best = ckpt.best
    print(f"{ckpt.tag}: best epoch {ckpt.best_epoch} (val_loss {best.val_loss:.4f}) -> {ckpt.path}")
    return EXIT_OK


def cmd_track(args) -> int:
    from uavloc.detector.inference import Detector
    from uavloc.geometry import CameraIntrinsics
    from uavloc.pipeline import Tracker, iter_frames, run_tracker, smooth_z, write_track

    cfg = _config(args)
    frames = iter_frames(args.frames)
    first = next(frames, None)
    if first is None:
        raise DataError(f"no frames found in {args.frames}")
    h, w = first.shape[:2]
    hfov = args.hfov if args.hfov is not None else cfg.camera.hfov_deg
    cam = CameraIntrinsics.from_degrees(w, h, hfov, frame_rate_hz=args.fps or cfg.camera.frame_rate_hz)
    detector = Detector.load(args.checkpoint)
    tau = args.tau if args.tau is not None else cfg.thresholds.tau_for(detector.tag)
    tracker = Tracker(detector, cam, cfg.marker_spec(), cfg.tracker_config(tau))

    def chain():
        yield first
        yield from frames

    rows = run_tracker(tracker, chain(), cfg.tracker.background_frames, cam.frame_rate_hz)
    if cfg.tracker.smooth_z and rows and not args.no_smooth:
        positions = smooth_z([r.position() for r in rows], cam.frame_rate_hz, cfg.tracker.filter_cutoff_hz)
        rows = [replace(r, z_m=p.z_m) for r, p in zip(rows, positions)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_track(out, rows)
    print(f"{len(rows)} tracked frames (tau {tau}) -> {out}")
    return EXIT_OK


def _load_track(path):
    from uavloc.evaluation import Track
    from uavloc.pipeline import read_track

    rows = read_track(path)
    return Track(np.array([r.t_s for r in rows]), np.array([(r.x_m, r.y_m, r.z_m) for r in rows]).reshape(-1, 3))


def cmd_eval(args) -> int:
    from uavloc.evaluation import match_and_rmse, plot_flight, read_gt, write_report

    cfg = _config(args)
    track = _load_track(args.track)
    gt = read_gt(args.gt)
    offset = args.time_offset if args.time_offset is not None else cfg.eval.time_offset_s
    report = match_and_rmse(track, gt, cfg.eval.dt_s, cfg.eval.interpolate, offset)
    print(f"2D {report.rmse_2d_m:.4f} m  z {report.rmse_z_m:.4f} m  3D {report.rmse_3d_m:.4f} m  (n={report.sample_count})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(out / "report.json", report)
        if not args.no_plot:
            plot_flight(out / "flight", gt, {Path(args.track).stem: track})
    return EXIT_OK


def cmd_compare(args) -> int:
    from uavloc.evaluation import compare_methods, match_and_rmse, read_gt, write_report

    cfg = _config(args)
    gt_dir = Path(args.gt_dir)
    gts = {p.stem: read_gt(p) for p in sorted(gt_dir.glob("*.csv"))}
    if not gts:
        raise DataError(f"no ground-truth csv files in {gt_dir}")
    runs = []
    for spec in args.method:
        if "=" not in spec:
            raise ConfigError(f"--method expects NAME=DIR, got {spec!r}")
        name, directory = spec.split("=", 1)
        per_flight = {}
        for p in sorted(Path(directory).glob("*.csv")):
            if p.stem in gts:
                per_flight[p.stem] = match_and_rmse(_load_track(p), gts[p.stem], cfg.eval.dt_s, cfg.eval.interpolate)
        runs.append((name, per_flight))
    pairs = [tuple(p.split(":", 1)) for p in args.improvement]
    table = compare_methods(runs, pairs)
    md = table.to_markdown()
    print(md, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.md").write_text(md)
        write_report(out / "table.json", table)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from uavloc.evaluation import write_gt
    from uavloc.geometry import CameraIntrinsics
    from uavloc.pipeline import write_frames
    from uavloc.simulate import FlightSpec, ground_truth, render_flight

    cfg = _config(args)
    cam = CameraIntrinsics.from_degrees(args.width, args.width, args.hfov)
    spec = FlightSpec("flight", cam, args.height, args.side, seed=cfg.seed)
    spec.check_in_view(cfg.marker_spec())
    out = Path(args.out)
    n = write_frames(out / "frames", render_flight(spec, cfg.marker_spec()))
    write_gt(out / "gt.csv", ground_truth(spec))
    print(f"{n} frames ({spec.background_frames} background) and ground truth -> {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    from uavloc import experiments as ex
    from uavloc.detector.train import method_tag
    from uavloc.simulate import square_flights
    from uavloc.synthgen import DatasetManifest

    cfg = _config(args)
    out = Path(args.out)
    if args.kind == "overfit":
        res = ex.overfit(DatasetManifest.load(args.dataset or cfg.paths.dataset), seed=cfg.seed)
        data = {"epochs": len(res.history), "final_train_loss": res.history[-1].train_loss}
    elif args.kind == "sweep":
        paths = ex.train_sweep(
            args.dataset or cfg.paths.dataset, out / "runs", args.seeds, args.epochs,
            base_cfg=cfg.train_config(), on_epoch=lambda s: print(s.line(), flush=True),
        )
        data = {tag: [str(p) for p in ps] for tag, ps in paths.items()}
    else:
        runs = out / "runs"
        ckpts = {}
        for variant, aug in ex.METHODS:
            ckpts[method_tag(variant, aug)] = [runs / ex.run_slug(variant, aug, s) / "checkpoint.pt" for s in args.seeds]
        missing = [p for ps in ckpts.values() for p in ps if not p.is_file()]
        if missing:
            raise ConfigError(f"missing checkpoints, run the sweep first: {missing[0]}")
        data = ex.flight_study(ckpts, square_flights(cfg.seed), tau_by_method=cfg.thresholds.tau_by_method)
    ex.write_json(out / f"{args.kind}.json", data)
    print(json.dumps(data, indent=2, default=str)[:4000])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps a
    # subcommand's unset flag from overwriting one given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML experiment config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument(
        "--deterministic", action="store_true", default=argparse.SUPPRESS, help="single-threaded, fixed-seed execution"
    )
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="uavloc", description="Marker-based UAV localisation from a ground camera.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="render the synthetic binary-image dataset")
    g.add_argument("--out", help="dataset directory")
    g.add_argument("--count-positive", type=int)
    g.add_argument("--count-null", type=int)
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("augment-preview", parents=[common], help="write a before/after augmentation grid")
    a.add_argument("--dataset")
    a.add_argument("--augment", choices=["noisycutout", "spcutout", "none"])
    a.add_argument("--count", type=int, default=6)
    a.add_argument("--out", default="augment_preview.png")
    a.set_defaults(func=cmd_augment_preview)

    t = sub.add_parser("train", parents=[common], help="train a detector")
    t.add_argument("--dataset")
    t.add_argument("--loss", choices=["base", "up"])
    t.add_argument("--augment", choices=["noisycutout", "spcutout", "none"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--max-train", type=int)
    t.add_argument("--out", help="run directory for checkpoint.pt and training_log.csv")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", parents=[common], help="track a marker through a frame directory or video")
    k.add_argument("frames")
    k.add_argument("--checkpoint", required=True)
    k.add_argument("--out", default="track.csv")
    k.add_argument("--tau", type=int, help="binarisation threshold (overrides the per-method default)")
    k.add_argument("--hfov", type=float, help="camera horizontal field of view in degrees")
    k.add_argument("--fps", type=float)
    k.add_argument("--no-smooth", action="store_true", help="skip the z low-pass filter")
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", parents=[common], help="RMSE of a track against ground truth")
    e.add_argument("--track", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--time-offset", type=float)
    e.add_argument("--out", help="directory for report.json and plots")
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", parents=[common], help="per-flight and overall RMSE table of several methods")
    c.add_argument("--gt-dir", required=True, help="directory of <flight>.csv ground-truth files")
    c.add_argument("--method", action="append", required=True, help="NAME=DIR with <flight>.csv tracks")
    c.add_argument("--improvement", action="append", default=[], help="BASE:NEW pair to report a reduction for")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate", parents=[common], help="render a synthetic square-profile flight")
    s.add_argument("--out", required=True)
    s.add_argument("--width", type=int, default=768)
    s.add_argument("--hfov", type=float, default=41.0)
    s.add_argument("--height", type=float, default=12.0)
    s.add_argument("--side", type=float, default=4.0)
    s.set_defaults(func=cmd_simulate)

    x = sub.add_parser("experiment", parents=[common], help="overfit check, training sweep or flight study")
    x.add_argument("kind", choices=["overfit", "sweep", "flights"])
    x.add_argument("--dataset")
    x.add_argument("--out", default="artifacts")
    x.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    x.add_argument("--epochs", type=int, default=30)
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("deterministic", False), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UavlocError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
