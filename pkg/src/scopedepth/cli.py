"""Command-line front end: synth / train / fuse / eval / calib.

Every command resolves its configuration from an optional JSON config file
plus flag overrides (flags win), then writes a ``manifest.json`` holding the
fully resolved configuration next to its outputs.  Re-running a command
with ``--config <manifest>`` reproduces the artifacts bit for bit.  All
randomness descends from the single ``seed`` entry through named
substreams.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .ensemble import fuse, load_ensemble, save_ensemble, selfsup_fuse
from .geometry import CameraIntrinsics, Pose, relative_pose
from .imagery import DepthMap, UncMap, read_pfm, read_ppm
from .losses import LossConfig
from .metrics import (
    MetricsConfig,
    auce,
    calibration_curve,
    default_p_grid,
    depth_metrics,
    scale_correction,
)
from .photometry import PhotometricConfig
from .predictor import DepthField, TrainConfig, forward
from .rng import Xoshiro256
from .synthcolon import (
    LightModel,
    SceneParams,
    simulate_sfm_labels,
    write_dataset,
)
from .trainer import (
    LabeledFrame,
    NumericFailure,
    Regime,
    StudentFrame,
    TrainData,
    Triplet,
    train_ensemble,
)


class UsageError(ValueError):
    pass


SYNTH_DEFAULTS = {
    "seed": 0,
    "frames": 12,
    "width": 64,
    "height": 64,
    "step_mm": 1.0,
    "fx": 48.0,
    "fy": 48.0,
    "cx": 31.5,
    "cy": 31.5,
    "radius_mm": 12.0,
    "curve_amp_mm": 10.0,
    "curve_freq": 0.05,
    "ridge_amp_mm": 2.0,
    "ridge_period_mm": 14.0,
    "texture_octaves": 3,
    "texture_contrast": 0.55,
    "far_cap_mm": 80.0,
    "light_intensity": 1000.0,
    "specular": False,
    "heading_noise_rad": 0.008,
    "sway_mm": 0.0,
}

TRAIN_DEFAULTS = {
    "seed": 0,
    "regime": "supervised-gt",
    "members": 5,
    "steps": 800,
    "learning_rate": 1.0,
    "grid": 16,
    "depth_init_mm": 30.0,
    "jitter": 0.05,
    "sigma_min": 1e-3,
    "lambda_u": 0.01,
    "weight_decay": 1e-7,
    "alpha": 0.85,
    "ssim_window": 3,
    "target_frame": -1,  # -1: middle frame
    "source_offsets": [-1, 1],
    "sfm_holes": 0.3,
    "sfm_noise": 0.05,
    "sfm_scale": 0.7,
    "teacher": None,
    "jobs": 1,
}

EVAL_DEFAULTS = {
    "target_frame": -1,
    "median_scale": False,
    "gt_denominator": False,
}

CALIB_DEFAULTS = {
    "target_frame": -1,
    "median_scale": False,
    "levels": 99,
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        cfg = json.load(f)
    # manifests wrap the resolved config under "config"
    if "config" in cfg and isinstance(cfg["config"], dict):
        cfg = cfg["config"]
    return cfg


def _resolve(defaults: dict, config: dict, overrides: dict) -> dict:
    out = dict(defaults)
    for k, v in config.items():
        if k not in out and k not in ("data", "out", "pred", "run"):
            raise UsageError(f"unknown config key {k!r}")
        out[k] = v
    for k, v in overrides.items():
        if v is not None:
            out[k] = v
    return out


def _write_manifest(out_dir: Path, command: str, config: dict, **extra) -> None:
    """Reproducibility record: ``config`` replays through --config; any
    ``extra`` entries are derived facts, stored alongside."""
    with open(out_dir / "manifest.json", "w") as f:
        json.dump({"command": command, "config": config, **extra}, f,
                  indent=1, sort_keys=True)
        f.write("\n")


def _dataset_frames(data_dir: Path) -> dict:
    with open(data_dir / "manifest.json") as f:
        manifest = json.load(f)
    with open(data_dir / "intrinsics.json") as f:
        K = CameraIntrinsics.from_json(json.load(f))
    return {"manifest": manifest, "K": K}


def _target_index(n_frames: int, requested: int) -> int:
    if requested == -1:
        return n_frames // 2
    if not 0 <= requested < n_frames:
        raise UsageError(f"target frame {requested} outside 0..{n_frames - 1}")
    return requested


def cmd_synth(args) -> int:
    cfg = _resolve(SYNTH_DEFAULTS, _load_config(args.config), {
        "seed": args.seed, "frames": args.frames, "width": args.width,
        "height": args.height, "step_mm": args.step_mm,
        "texture_contrast": args.texture_contrast,
        "light_intensity": args.light_intensity,
        "specular": args.specular,
        "sway_mm": args.sway_mm,
    })
    if cfg["frames"] < 3:
        raise UsageError("self-supervision needs triplets: --frames must be >= 3")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = SceneParams(
        radius_mm=cfg["radius_mm"], curve_amp_mm=cfg["curve_amp_mm"],
        curve_freq=cfg["curve_freq"], ridge_amp_mm=cfg["ridge_amp_mm"],
        ridge_period_mm=cfg["ridge_period_mm"],
        texture_octaves=cfg["texture_octaves"],
        texture_contrast=cfg["texture_contrast"],
        far_cap_mm=cfg["far_cap_mm"], seed=cfg["seed"],
    )
    K = CameraIntrinsics(cfg["fx"], cfg["fy"], cfg["cx"], cfg["cy"])
    light = LightModel(intensity=cfg["light_intensity"], specular=cfg["specular"])
    ds_manifest = write_dataset(
        out_dir, params, K, cfg["frames"], cfg["step_mm"], cfg["width"],
        cfg["height"], light, cfg["heading_noise_rad"], sway_mm=cfg["sway_mm"],
    )
    # one manifest carries both the dataset description and the resolved
    # command configuration for bit-identical re-runs
    with open(out_dir / "manifest.json", "w") as f:
        json.dump({**ds_manifest, "command": "synth", "config": cfg}, f,
                  indent=1, sort_keys=True)
        f.write("\n")
    print(f"wrote {cfg['frames']} frames to {out_dir}")
    return 0


def _build_train_data(cfg: dict, data_dir: Path) -> tuple[TrainData, Regime, int]:
    ds = _dataset_frames(data_dir)
    n = ds["manifest"]["n_frames"]
    t_i = _target_index(n, int(cfg["target_frame"]))
    regime = Regime(cfg["regime"])
    depth = read_pfm(data_dir / f"depth_{t_i:04d}.pfm")
    image = read_ppm(data_dir / f"frame_{t_i:04d}.ppm")
    if regime == Regime.SUPERVISED_GT:
        data = TrainData(frames=(LabeledFrame(depth=depth, image=image),))
    elif regime == Regime.SUPERVISED_SFM:
        sfm_seed = Xoshiro256(int(cfg["seed"])).substream("sfm-noise").seed
        d_sfm, mask = simulate_sfm_labels(
            depth, sfm_seed, cfg["sfm_holes"], cfg["sfm_noise"], cfg["sfm_scale"],
        )
        data = TrainData(frames=(LabeledFrame(depth=d_sfm, mask=mask, image=image),))
    elif regime == Regime.SELF_SUPERVISED:
        offsets = [int(o) for o in cfg["source_offsets"]]
        if any(not 0 <= t_i + o < n for o in offsets):
            raise UsageError("source offsets leave the trajectory")
        poses = [Pose.load(data_dir / f"pose_{i:04d}.json") for i in range(n)]
        sources = tuple(
            read_ppm(data_dir / f"frame_{t_i + o:04d}.ppm") for o in offsets
        )
        rels = tuple(relative_pose(poses[t_i], poses[t_i + o]) for o in offsets)
        data = TrainData(
            triplets=(Triplet(target=image, sources=sources, rel_poses=rels),),
            K=ds["K"],
            photometric=PhotometricConfig(
                alpha=cfg["alpha"], ssim_window=cfg["ssim_window"]
            ),
        )
    else:
        if not cfg.get("teacher"):
            raise UsageError(f"{regime.value} needs --teacher pointing at fused maps")
        ens = load_ensemble(Path(cfg["teacher"]))
        sigma = ens.sigma_t() if regime == Regime.UNCERTAIN_STUDENT else None
        data = TrainData(
            student_frames=(
                StudentFrame(d_teacher=ens.d_hat, sigma_teacher=sigma, image=image),
            )
        )
    return data, regime, t_i


def cmd_train(args) -> int:
    cfg = _resolve(TRAIN_DEFAULTS, _load_config(args.config), {
        "seed": args.seed, "regime": args.regime, "members": args.members,
        "steps": args.steps, "learning_rate": args.learning_rate,
        "grid": args.grid, "teacher": args.teacher, "jobs": args.jobs,
        "target_frame": args.target_frame,
    })
    try:
        Regime(cfg["regime"])
    except ValueError:
        raise UsageError(
            f"invalid regime {cfg['regime']!r}; valid: "
            + ", ".join(r.value for r in Regime)
        ) from None
    data_dir = Path(args.data if args.data else cfg.get("data", ""))
    if not (data_dir / "manifest.json").exists():
        raise UsageError(f"no dataset at {data_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data, regime, t_i = _build_train_data(cfg, data_dir)
    w, h = data.resolution()
    tcfg = TrainConfig(
        steps=int(cfg["steps"]), learning_rate=float(cfg["learning_rate"]),
        grid_w=int(cfg["grid"]), grid_h=int(cfg["grid"]),
        depth_init_mm=float(cfg["depth_init_mm"]), jitter=float(cfg["jitter"]),
        loss=LossConfig(
            sigma_min=float(cfg["sigma_min"]), lambda_u=float(cfg["lambda_u"]),
            weight_decay=float(cfg["weight_decay"]),
        ),
        seed=int(cfg["seed"]),
    )
    results = train_ensemble(
        regime, data, tcfg, int(cfg["members"]), int(cfg["seed"]),
        jobs=int(cfg["jobs"]),
    )
    for field, report in results:
        field.save(out_dir / f"member_{field.seed}.json")
        report.write_csv(out_dir / f"loss_{field.seed}.csv")
    cfg["data"] = str(data_dir)
    _write_manifest(out_dir, "train", cfg, resolution=[w, h], target_index=t_i)
    print(f"trained {len(results)} member(s) [{regime.value}] into {out_dir}")
    return 0


def cmd_fuse(args) -> int:
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise UsageError(f"no train manifest in {run_dir}")
    with open(manifest_path) as f:
        train_manifest = json.load(f)
    train_cfg = train_manifest["config"]
    w, h = train_manifest["resolution"]
    member_files = sorted(
        run_dir.glob("member_*.json"), key=lambda p: int(p.stem.split("_")[1])
    )
    if not member_files:
        raise UsageError(f"no member fields in {run_dir}")
    fields = [DepthField.load(p) for p in member_files]
    selfsup = train_cfg["regime"] == Regime.SELF_SUPERVISED.value
    if args.selfsup is not None:
        selfsup = args.selfsup
    preds = [forward(f, w, h) for f in fields]
    seeds = [f.seed for f in fields]
    if selfsup:
        out = selfsup_fuse([d for d, _ in preds], seeds)
    else:
        out = fuse(preds, seeds)
    out_dir = Path(args.out)
    save_ensemble(out, out_dir)
    _write_manifest(out_dir, "fuse", {"run": str(run_dir), "selfsup": selfsup,
                                      "seeds": seeds})
    print(f"fused {len(fields)} member(s) into {out_dir}")
    return 0


def _load_eval_inputs(pred_dir: Path, data_dir: Path, target_frame: int):
    ens = load_ensemble(pred_dir)
    ds = _dataset_frames(data_dir)
    t_i = _target_index(ds["manifest"]["n_frames"], target_frame)
    gt = read_pfm(data_dir / f"depth_{t_i:04d}.pfm")
    if (gt.height, gt.width) != (ens.d_hat.height, ens.d_hat.width):
        raise UsageError("prediction and ground-truth dimensions disagree")
    return ens, gt, t_i


def cmd_eval(args) -> int:
    cfg = _resolve(EVAL_DEFAULTS, _load_config(args.config), {
        "target_frame": args.target_frame, "median_scale": args.median_scale,
        "gt_denominator": args.gt_denominator,
    })
    ens, gt, t_i = _load_eval_inputs(
        Path(args.pred), Path(args.data), int(cfg["target_frame"])
    )
    d_pred = ens.d_hat.data.astype(np.float64)
    sigma = np.sqrt(ens.var_t.data.astype(np.float64))
    if cfg["median_scale"]:
        s = scale_correction(gt, ens.d_hat)
        d_pred = d_pred * s
        sigma = sigma * s
    dm = depth_metrics(
        gt, DepthMap(d_pred), cfg=MetricsConfig(gt_denominator=cfg["gt_denominator"])
    )
    sigma_pos = np.maximum(sigma, 1e-12)
    curve = calibration_curve(gt, DepthMap(d_pred), UncMap(sigma_pos, "std"))
    signed, absolute = auce(curve)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        f.write(",".join(list(dm.FIELDS) + ["auce_signed", "auce_abs"]) + "\r\n")
        row = dm.as_row() + [signed, absolute]
        f.write(",".join(repr(v) for v in row) + "\r\n")
    _write_manifest(out.parent, "eval", {**cfg, "pred": str(args.pred),
                                         "data": str(args.data)},
                    target_index=t_i)
    print(f"abs_rel={dm.abs_rel:.4f} rmse={dm.rmse:.3f} auce_signed={signed:+.4f}")
    return 0


def cmd_calib(args) -> int:
    cfg = _resolve(CALIB_DEFAULTS, _load_config(args.config), {
        "target_frame": args.target_frame, "median_scale": args.median_scale,
        "levels": args.levels,
    })
    ens, gt, t_i = _load_eval_inputs(
        Path(args.pred), Path(args.data), int(cfg["target_frame"])
    )
    d_pred = ens.d_hat.data.astype(np.float64)
    sigma = np.sqrt(ens.var_t.data.astype(np.float64))
    if cfg["median_scale"]:
        s = scale_correction(gt, ens.d_hat)
        d_pred = d_pred * s
        sigma = sigma * s
    sigma = np.maximum(sigma, 1e-12)
    curve = calibration_curve(
        gt, DepthMap(d_pred), UncMap(sigma, "std"),
        p_grid=default_p_grid(int(cfg["levels"])),
    )
    signed, absolute = auce(curve)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        f.write("p,coverage\r\n")
        for p, c in zip(curve.p_grid, curve.coverage):
            f.write(f"{float(p)!r},{float(c)!r}\r\n")
    _write_manifest(out.parent, "calib", {**cfg, "pred": str(args.pred),
                                          "data": str(args.data)},
                    target_index=t_i)
    print(f"auce_signed={signed:+.4f} auce_abs={absolute:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scopedepth", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--frames", type=int)
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--step-mm", dest="step_mm", type=float)
    sp.add_argument("--texture-contrast", dest="texture_contrast", type=float)
    sp.add_argument("--light-intensity", dest="light_intensity", type=float)
    sp.add_argument("--specular", action="store_const", const=True, default=None)
    sp.add_argument("--sway-mm", dest="sway_mm", type=float)
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train an ensemble of depth fields")
    tp.add_argument("--data")
    tp.add_argument("--out", required=True)
    tp.add_argument("--config")
    tp.add_argument("--regime")
    tp.add_argument("--members", type=int)
    tp.add_argument("--seed", type=int)
    tp.add_argument("--steps", type=int)
    tp.add_argument("--learning-rate", dest="learning_rate", type=float)
    tp.add_argument("--grid", type=int)
    tp.add_argument("--teacher")
    tp.add_argument("--target-frame", dest="target_frame", type=int)
    tp.add_argument("--jobs", type=int)
    tp.set_defaults(func=cmd_train)

    fp = sub.add_parser("fuse", help="fuse trained members into mean/variance maps")
    fp.add_argument("--run", required=True)
    fp.add_argument("--out", required=True)
    fp.add_argument("--selfsup", action="store_const", const=True, default=None)
    fp.set_defaults(func=cmd_fuse)

    ep = sub.add_parser("eval", help="depth metrics + AUCE as one CSV row")
    ep.add_argument("--pred", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--out", required=True)
    ep.add_argument("--config")
    ep.add_argument("--target-frame", dest="target_frame", type=int)
    ep.add_argument("--median-scale", dest="median_scale", action="store_const",
                    const=True, default=None)
    ep.add_argument("--gt-denominator", dest="gt_denominator", action="store_const",
                    const=True, default=None)
    ep.set_defaults(func=cmd_eval)

    cp = sub.add_parser("calib", help="calibration curve CSV + AUCE")
    cp.add_argument("--pred", required=True)
    cp.add_argument("--data", required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--config")
    cp.add_argument("--target-frame", dest="target_frame", type=int)
    cp.add_argument("--median-scale", dest="median_scale", action="store_const",
                    const=True, default=None)
    cp.add_argument("--levels", type=int)
    cp.set_defaults(func=cmd_calib)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
