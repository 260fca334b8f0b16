"""Command-line front end: render | fields | stereo | eval | sweep.

Every command is deterministic given its config and seed (timing columns in
sweep tables excepted) and echoes the fully resolved configuration next to
its outputs, so runs can be reproduced from the output directory alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluate, fields, formats, solver, synth
from .camera import StereoRig, load_rig, rig_to_dict, save_rig


class CommandError(Exception):
    """User-facing failure: message is printed and the exit code is nonzero."""


def _load_rig_arg(spec: str) -> StereoRig:
    if spec == "default":
        return synth.default_rig()
    if spec == "pinhole":
        return synth.pinhole_rig()
    path = Path(spec)
    if not path.exists():
        raise CommandError(f"rig file not found: {path}")
    return load_rig(path)


def _load_scene_arg(spec: str) -> synth.Scene:
    if spec == "default":
        return synth.default_scene()
    if spec == "plane":
        return synth.plane_scene()
    path = Path(spec)
    if not path.exists():
        raise CommandError(f"scene file not found: {path}")
    return synth.scene_from_dict(json.loads(path.read_text()))


def _out_dir(spec: str) -> Path:
    path = Path(spec)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {path}: {exc}")
    return path


def _resolve_params(args) -> solver.SolverParams:
    params = solver.SolverParams()
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise CommandError(f"config file not found: {cfg_path}")
        params = solver.SolverParams.from_dict(
            {**params.to_dict(), **json.loads(cfg_path.read_text())})
    overrides = {}
    for name in ("lam", "alpha0", "alpha1", "beta", "eta", "warp_iters",
                 "pd_iters", "du_max", "pyramid_levels", "pyramid_scale",
                 "min_width", "epsilon_scale"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(params, **overrides) if overrides else params


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of solver parameters")
    p.add_argument("--lam", type=float, help="data term weight")
    p.add_argument("--alpha0", type=float, help="second-order TGV weight")
    p.add_argument("--alpha1", type=float, help="first-order TGV weight")
    p.add_argument("--beta", type=float, help="edge tensor magnitude")
    p.add_argument("--eta", type=float, help="edge tensor sharpness")
    p.add_argument("--warp-iters", dest="warp_iters", type=int,
                   help="warping iterations per pyramid level")
    p.add_argument("--pd-iters", dest="pd_iters", type=int,
                   help="primal-dual cycles per warp iteration")
    p.add_argument("--du-max", dest="du_max", type=float,
                   help="clip for each disparity increment, px")
    p.add_argument("--pyramid-levels", dest="pyramid_levels", type=int)
    p.add_argument("--pyramid-scale", dest="pyramid_scale", type=float)
    p.add_argument("--min-width", dest="min_width", type=int)
    p.add_argument("--epsilon-scale", dest="epsilon_scale", type=float,
                   help="target peak flow when generating trajectory fields, px")


def cmd_render(args) -> int:
    rig = _load_rig_arg(args.rig)
    scene = synth.reseed_scene(_load_scene_arg(args.scene), args.seed)
    out = _out_dir(args.out)

    img0, _, _ = synth.render(scene, rig.cam0, noise_sigma=args.noise,
                              noise_seed=args.seed, supersample=args.supersample)
    img1, _, _ = synth.render(scene, rig.cam1, pose=rig.pose,
                              noise_sigma=args.noise, noise_seed=args.seed + 1,
                              supersample=args.supersample)
    gt = synth.make_ground_truth(scene, rig)

    formats.write_pgm(out / "image0.pgm", img0)
    formats.write_pgm(out / "image1.pgm", img1)
    formats.write_pfm(out / "depth0.pfm", gt.depth0)
    formats.write_vector_pfm(out / "correspondence.pfm", gt.correspondence,
                             third=gt.covisibility)
    formats.write_pfm(out / "covisibility.pfm", gt.covisibility.astype(np.float32))
    save_rig(out / "rig.json", rig)
    manifest = {
        "image0": "image0.pgm",
        "image1": "image1.pgm",
        "depth0": "depth0.pfm",
        "correspondence": "correspondence.pfm",
        "covisibility": "covisibility.pfm",
        "rig": "rig.json",
        "seed": args.seed,
        "noise_sigma": args.noise,
        "supersample": args.supersample,
        "scene": synth.scene_to_dict(scene),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote dataset to {out}")
    return 0


def cmd_fields(args) -> int:
    rig = _load_rig_arg(args.rig)
    out = _out_dir(args.out)
    epsilon = args.epsilon_scale if args.epsilon_scale is not None else 0.1

    cal, cal_ok = fields.generate_calibration_field(rig)
    formats.write_vector_pfm(out / "calibration.pfm", cal, third=cal_ok)
    traj, traj_ok = fields.generate_trajectory_field(
        fields.translation_only_rig(rig), epsilon_scale=epsilon)
    formats.write_vector_pfm(out / "trajectory.pfm", traj, third=traj_ok)
    print(f"wrote calibration + trajectory fields to {out}")
    return 0


def _solve_pair(args, rig: StereoRig, params: solver.SolverParams):
    for name, path in (("left image", args.left), ("right image", args.right)):
        if not Path(path).exists():
            raise CommandError(f"{name} not found: {path}")
    i0 = formats.load_image(args.left)
    i1 = formats.load_image(args.right)
    return solver.solve_pyramid(i0, i1, rig, params)


def cmd_stereo(args) -> int:
    rig = _load_rig_arg(args.rig)
    params = _resolve_params(args)
    out = _out_dir(args.out)
    result = _solve_pair(args, rig, params)

    cal, cal_ok = fields.generate_calibration_field(rig)
    corr, corr_ok = fields.compose_with_calibration(result.w, cal, cal_ok)
    corr_ok = corr_ok & result.mask
    depth, depth_ok = evaluate.depth_from_correspondence(rig, corr, corr_ok)

    formats.write_pfm(out / "disparity.pfm", result.u)
    formats.write_vector_pfm(out / "warp.pfm", corr, third=corr_ok)
    formats.write_pfm(out / "depth.pfm", depth)
    formats.write_png(out / "disparity.png",
                      evaluate.colorize(result.u, result.mask))
    formats.write_png(out / "depth.png",
                      evaluate.colorize(np.log1p(depth), depth_ok))
    config_echo = {
        "left": str(args.left), "right": str(args.right),
        "rig": rig_to_dict(rig),
        "params": params.to_dict(),
    }
    (out / "config_resolved.json").write_text(json.dumps(config_echo, indent=2) + "\n")
    print(f"wrote disparity/warp/depth to {out}")
    return 0


def _load_gt_dir(path: Path):
    for name in ("correspondence.pfm", "covisibility.pfm", "depth0.pfm", "rig.json"):
        if not (path / name).exists():
            raise CommandError(f"ground truth file not found: {path / name}")
    corr, covis = formats.read_vector_pfm(path / "correspondence.pfm")
    depth = formats.read_pfm(path / "depth0.pfm").astype(np.float64)
    rig = load_rig(path / "rig.json")
    return corr, covis > 0.5, depth, rig


def cmd_eval(args) -> int:
    est_path = Path(args.estimate)
    if not est_path.exists():
        raise CommandError(f"estimate file not found: {est_path}")
    w_est, est_ok = formats.read_vector_pfm(est_path)
    corr_gt, covis, depth_gt, rig = _load_gt_dir(Path(args.gt))
    out = _out_dir(args.out)
    taus = [float(t) for t in args.taus.split(",")]

    valid = covis & (est_ok > 0.5)
    depth_est, _ = evaluate.depth_from_correspondence(rig, w_est, valid)
    report = evaluate.make_report(w_est, corr_gt, valid, taus=taus,
                                  depth_est=depth_est, depth_gt=depth_gt)
    (out / "report.json").write_text(report.to_json() + "\n")
    if args.error_png:
        err = evaluate.correspondence_error(w_est, corr_gt, valid)
        formats.write_png(out / "correspondence_error.png",
                          evaluate.colorize(err, valid, vmin=0.0, vmax=5.0))
        derr = evaluate.depth_error_map(depth_est, depth_gt, valid)
        formats.write_png(out / "depth_error.png",
                          evaluate.colorize_depth_error(derr, valid))
    print(report.to_json())
    return 0


def cmd_sweep(args) -> int:
    data_dir = Path(args.dataset)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise CommandError(f"dataset manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    i0 = formats.load_image(data_dir / manifest["image0"])
    i1 = formats.load_image(data_dir / manifest["image1"])
    corr_gt, covis, _, rig = _load_gt_dir(data_dir)
    base = _resolve_params(args)
    out = _out_dir(args.out)

    warp_grid = [int(v) for v in args.warp_iters_grid.split(",")]
    du_grid = [float(v) for v in args.du_max_grid.split(",")]
    cal, cal_ok = fields.generate_calibration_field(rig)

    rows = []
    for n in warp_grid:
        for du in du_grid:
            params = replace(base, warp_iters=n, du_max=du)
            t0 = time.perf_counter()
            result = solver.solve_pyramid(i0, i1, rig, params)
            elapsed = time.perf_counter() - t0
            corr, corr_ok = fields.compose_with_calibration(result.w, cal, cal_ok)
            valid = covis & corr_ok & result.mask
            report = evaluate.make_report(corr, corr_gt, valid)
            rows.append({
                "warp_iters": n,
                "du_max": du,
                "pct_bad_1": report.pct_bad[1.0],
                "pct_bad_3": report.pct_bad[3.0],
                "pct_bad_5": report.pct_bad[5.0],
                "mean_error_px": report.mean_error_px,
                "wall_time_s": elapsed,
            })
            print(f"N={n:4d} du_max={du:5.2f} tau>1: {report.pct_bad[1.0]:6.2f}% "
                  f"({elapsed:.1f}s)")

    table = out / "sweep.csv"
    with open(table, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {table}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fisheyestereo",
        description="Dense variational stereo for non-rectified fisheye pairs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="ray-cast a synthetic dataset with ground truth")
    p.add_argument("--rig", default="default", help="rig JSON path, 'default', or 'pinhole'")
    p.add_argument("--scene", default="default", help="scene JSON path, 'default', or 'plane'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="additive Gaussian sigma")
    p.add_argument("--supersample", type=int, default=2,
                   help="rays per pixel axis for antialiased intensities")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fields", help="write calibration and trajectory fields")
    p.add_argument("--rig", default="default")
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon-scale", dest="epsilon_scale", type=float, default=None)
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("stereo", help="solve a stereo pair for disparity and depth")
    p.add_argument("--left", required=True, help="reference image (PGM/PNG)")
    p.add_argument("--right", required=True, help="second image (PGM/PNG)")
    p.add_argument("--rig", default="default")
    p.add_argument("--out", required=True)
    _add_param_flags(p)
    p.set_defaults(func=cmd_stereo)

    p = sub.add_parser("eval", help="compare a warp estimate against ground truth")
    p.add_argument("--estimate", required=True, help="warp PFM (3-channel)")
    p.add_argument("--gt", required=True, help="dataset directory with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--taus", default="1,3,5")
    p.add_argument("--error-png", dest="error_png", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over warp iterations and du_max")
    p.add_argument("--dataset", required=True, help="directory written by render")
    p.add_argument("--out", required=True)
    p.add_argument("--warp-iters-grid", dest="warp_iters_grid", default="2,5,10,50")
    p.add_argument("--du-max-grid", dest="du_max_grid", default="0.2")
    _add_param_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
