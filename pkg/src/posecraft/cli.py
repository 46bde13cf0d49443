"""Command-line surface: file formats in, single-line JSON or artifacts out.

Exit codes: 0 on success, 2 for missing or malformed inputs, 3 for domain
errors raised by the library on well-formed data, 4 for anything
unexpected. The POSECRAFT_SEED environment variable overrides the seed from
any config file or flag.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .affine import EditConfig, fit_affine, edit_latent_for_pose
from .diffusion import (
    ToyDenoiser,
    TrainConfig,
    ddim_invert,
    ddim_sample,
    decode,
    encode,
    make_condition,
    train_one_shot,
)
from .errors import PoseCraftError
from .io import (
    RunManifest,
    load_denoiser,
    psnr,
    read_tensor,
    render_frame,
    save_denoiser,
    sha256_file,
    write_tensor,
)
from .pipeline import PipelineConfig, run_inference
from .pose import GROUPS, parse_pose_file
from .reference import mse_p, select_reference_frame, video_sim

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_INTERNAL = 4


class _InputError(Exception):
    """Wraps any failure while reading or validating input files."""


def _load(kind, loader, path):
    try:
        return loader(path)
    except FileNotFoundError:
        raise _InputError(f"{kind} file not found: {path}")
    except (PoseCraftError, OSError, json.JSONDecodeError, ValueError) as exc:
        raise _InputError(f"bad {kind} file {path}: {exc}")


def _emit(doc):
    print(json.dumps(doc, sort_keys=True))


def _json_value(value: float):
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


_MODEL_KEYS = ("hidden", "prompt_dim", "attn_scale")
_TRAIN_KEYS = ("learning_rate", "batch_size", "max_steps", "prompt")


def _load_settings(args) -> dict:
    """Merge config file, CLI flags, and the seed environment override."""
    settings: dict = {}
    if getattr(args, "config", None):
        doc = _load("config", lambda p: json.loads(Path(p).read_text()), args.config)
        if not isinstance(doc, dict):
            raise _InputError(f"config {args.config} must be a JSON object")
        settings.update(doc)
    for flag, key in (
        ("seed", "seed"),
        ("ddim_steps", "ddim_steps"),
        ("guidance_scale", "guidance_scale"),
        ("key_index", "key_index"),
        ("edit_step", "edit_step"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    return _apply_env_seed(settings)


def _apply_env_seed(settings: dict) -> dict:
    env_seed = os.environ.get("POSECRAFT_SEED")
    if env_seed is not None:
        try:
            settings["seed"] = int(env_seed)
        except ValueError:
            raise _InputError(f"POSECRAFT_SEED must be an integer, got {env_seed!r}")
    return settings


def _pipeline_config(settings: dict) -> PipelineConfig:
    fields = {f.name for f in dataclasses.fields(PipelineConfig)}
    try:
        return PipelineConfig(**{k: v for k, v in settings.items() if k in fields})
    except (TypeError, ValueError) as exc:
        raise _InputError(f"invalid config: {exc}")


def _train_config(settings: dict, config: PipelineConfig) -> TrainConfig:
    kwargs = {k: settings[k] for k in _TRAIN_KEYS if k in settings}
    kwargs.setdefault("prompt", config.source_prompt)
    kwargs.setdefault("encode_factor", config.encode_factor)
    kwargs.setdefault("validity_threshold", config.validity_threshold)
    try:
        return TrainConfig(**kwargs)
    except TypeError as exc:
        raise _InputError(f"invalid training config: {exc}")


def _build_denoiser(settings: dict, config: PipelineConfig, latent_channels: int) -> ToyDenoiser:
    return ToyDenoiser.create(
        latent_channels,
        hidden=int(settings.get("hidden", 16)),
        prompt_dim=int(settings.get("prompt_dim", 8)),
        seed=config.seed,
        attn_scale=float(settings.get("attn_scale", 0.5)),
    )


def _denoiser_for(args, settings, config, latent_channels) -> ToyDenoiser:
    if getattr(args, "params", None):
        model = _load("parameter", load_denoiser, args.params)
        if model.latent_channels != latent_channels:
            raise _InputError(
                f"parameters expect {model.latent_channels} latent channels, inputs give {latent_channels}"
            )
        return model
    return _build_denoiser(settings, config, latent_channels)


def _conds_for(poses, prompt, h, w, denoiser, config):
    return [
        make_condition(p, prompt, h, w, denoiser.prompt_dim, config.validity_threshold)
        for p in poses
    ]


def cmd_select_ref(args) -> int:
    train = _load("pose", parse_pose_file, args.train)
    infer = _load("pose", parse_pose_file, args.infer)
    choice = select_reference_frame(train, infer, args.threshold)
    _emit({"r": choice.index, "total_distance": choice.total_distance})
    return EXIT_OK


def cmd_fit_affine(args) -> int:
    ref = _load("pose", parse_pose_file, args.ref)
    target = _load("pose", parse_pose_file, args.target)
    ref_g = ref[args.frame - 1].group(args.group)
    tgt_g = target[args.target_frame - 1].group(args.group)
    shared = (ref_g[:, 2] >= args.threshold) & (tgt_g[:, 2] >= args.threshold)
    transform = fit_affine(ref_g[shared, :2], tgt_g[shared, :2])
    _emit(dict(zip("abcdef", transform.coefficients)))
    return EXIT_OK


def cmd_edit_latent(args) -> int:
    latent = _load("tensor", read_tensor, args.latent).astype(np.float64)
    ref = _load("pose", parse_pose_file, args.ref)
    target = _load("pose", parse_pose_file, args.target)
    cfg = EditConfig(
        edit_face=args.face,
        edit_left_hand=args.left_hand,
        edit_right_hand=args.right_hand,
        padding_cells=args.padding,
        validity_threshold=args.threshold,
    )
    edited, outcomes = edit_latent_for_pose(
        latent, ref[args.frame - 1], target[args.target_frame - 1], cfg
    )
    write_tensor(args.out, edited)
    _emit({"out": str(args.out), "edits": [o.to_dict() for o in outcomes]})
    return EXIT_OK


def cmd_invert(args) -> int:
    settings = _load_settings(args)
    config = _pipeline_config(settings)
    frames = _load("tensor", read_tensor, args.frames).astype(np.float64)
    poses = _load("pose", parse_pose_file, args.poses)
    if frames.shape[0] != len(poses):
        raise _InputError("frame count and pose count differ")
    latents = encode(frames, config.encode_factor)
    denoiser = _denoiser_for(args, settings, config, latents.shape[1])
    denoiser = denoiser.with_key_index(1)
    conds = _conds_for(poses, config.source_prompt, latents.shape[2], latents.shape[3], denoiser, config)
    z_top = ddim_invert(latents, denoiser, conds, config.schedule(), guidance_scale=1.0)
    write_tensor(args.out, z_top)
    _emit({"out": str(args.out), "frames": int(z_top.shape[0]), "steps": config.ddim_steps})
    return EXIT_OK


def cmd_sample(args) -> int:
    settings = _load_settings(args)
    config = _pipeline_config(settings)
    z_top = _load("tensor", read_tensor, args.latents).astype(np.float64)
    poses = _load("pose", parse_pose_file, args.poses)
    if z_top.shape[0] != len(poses):
        raise _InputError("latent frame count and pose count differ")
    denoiser = _denoiser_for(args, settings, config, z_top.shape[1])
    conds = _conds_for(poses, config.source_prompt, z_top.shape[2], z_top.shape[3], denoiser, config)
    video = ddim_sample(z_top, denoiser, conds, config.schedule(), config.guidance_scale)
    write_tensor(args.out, video)
    _emit({"out": str(args.out), "frames": int(video.shape[0]), "steps": config.ddim_steps})
    return EXIT_OK


def cmd_train(args) -> int:
    settings = _load_settings(args)
    config = _pipeline_config(settings)
    frames = _load("tensor", read_tensor, args.frames).astype(np.float64)
    poses = _load("pose", parse_pose_file, args.poses)
    if frames.shape[0] != len(poses):
        raise _InputError("frame count and pose count differ")
    train_cfg = _train_config(settings, config)
    latent_channels = frames.shape[1] * config.encode_factor**2
    denoiser = _build_denoiser(settings, config, latent_channels)
    rng = np.random.Generator(np.random.Philox(config.seed))
    trained, trace = train_one_shot(denoiser, frames, poses, train_cfg, config.schedule(), rng)
    out = Path(args.out)
    save_denoiser(trained, out)
    (out / "loss_trace.json").write_text(json.dumps([float(v) for v in trace]))
    _emit({
        "out": str(out),
        "iterations": int(trace.size),
        "first_loss": float(trace[0]) if trace.size else None,
        "last_loss": float(trace[-1]) if trace.size else None,
    })
    return EXIT_OK


def cmd_run(args) -> int:
    if args.manifest:
        manifest = _load(
            "manifest", lambda p: RunManifest.from_json(Path(p).read_text(), str(p)), args.manifest
        )
        settings = dict(manifest.config)
        settings["seed"] = manifest.seed
        _apply_env_seed(settings)
        train_path = manifest.inputs["train_frames"]["path"]
        train_poses_path = manifest.inputs["train_poses"]["path"]
        infer_poses_path = manifest.inputs["infer_poses"]["path"]
    else:
        if not (args.train_frames and args.train_poses and args.infer_poses):
            raise _InputError("run needs train_frames, train_poses, and infer_poses (or --manifest)")
        settings = _load_settings(args)
        train_path = args.train_frames
        train_poses_path = args.train_poses
        infer_poses_path = args.infer_poses
    config = _pipeline_config(settings)

    frames = _load("tensor", read_tensor, train_path).astype(np.float64)
    train_poses = _load("pose", parse_pose_file, train_poses_path)
    infer_poses = _load("pose", parse_pose_file, infer_poses_path)
    if frames.shape[0] != len(train_poses):
        raise _InputError("training frame count and pose count differ")

    latent_channels = frames.shape[1] * config.encode_factor**2
    denoiser = _denoiser_for(args, settings, config, latent_channels)
    if not getattr(args, "params", None):
        train_cfg = _train_config(settings, config)
        rng = np.random.Generator(np.random.Philox(config.seed))
        denoiser, _ = train_one_shot(
            denoiser, frames, train_poses, train_cfg, config.schedule(), rng
        )

    latents, report = run_inference(frames, train_poses, infer_poses, denoiser, config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    latents_path = out_dir / "latents.pct"
    write_tensor(latents_path, latents)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(exist_ok=True)
    decoded = decode(latents, config.encode_factor)
    for i, frame in enumerate(decoded):
        if frame.shape[0] in (1, 3):
            suffix = "pgm" if frame.shape[0] == 1 else "ppm"
            render_frame(frame, frames_dir / f"frame_{i + 1:04d}.{suffix}")
        else:
            for ch in range(frame.shape[0]):
                render_frame(frame[ch : ch + 1], frames_dir / f"frame_{i + 1:04d}_ch{ch}.pgm")
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2))

    manifest = RunManifest(version=__version__, seed=config.seed, config=settings)
    manifest.add_input("train_frames", train_path)
    manifest.add_input("train_poses", train_poses_path)
    manifest.add_input("infer_poses", infer_poses_path)
    manifest.add_output("latents.pct", latents_path)
    (out_dir / "manifest.json").write_text(manifest.to_json())
    _emit({
        "out": str(out_dir),
        "frames": int(latents.shape[0]),
        "reference_index": report.reference_index,
        "latents_sha256": manifest.outputs["latents.pct"],
    })
    return EXIT_OK


def cmd_metrics(args) -> int:
    if args.metric == "psnr":
        a = _load("tensor", read_tensor, args.a).astype(np.float64)
        b = _load("tensor", read_tensor, args.b).astype(np.float64)
        value = psnr(a, b)
    else:
        a = _load("pose", parse_pose_file, args.a)
        b = _load("pose", parse_pose_file, args.b)
        if args.metric == "mse-p":
            value = mse_p(a, b, args.threshold)
        else:
            value = video_sim(a, b, args.threshold)
    _emit({"metric": args.metric, "value": _json_value(value)})
    return EXIT_OK


def cmd_render(args) -> int:
    grid = _load("tensor", read_tensor, args.tensor).astype(np.float64)
    if grid.ndim == 4:
        grid = grid[args.frame - 1]
    if args.channel is not None:
        grid = grid[args.channel : args.channel + 1]
    render_frame(grid, args.out)
    _emit({"out": str(args.out), "sha256": sha256_file(args.out)})
    return EXIT_OK


def _add_config_flags(p):
    p.add_argument("--config", help="JSON config file mirroring the pipeline fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ddim-steps", dest="ddim_steps", type=int, default=None)
    p.add_argument("--guidance-scale", dest="guidance_scale", type=float, default=None)
    p.add_argument("--key-index", dest="key_index", type=int, default=None)
    p.add_argument("--edit-step", dest="edit_step", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posecraft",
        description="Pose-guided video generation inference engine (toy denoiser scale)",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select-ref", help="pick the best reference frame index")
    p.add_argument("train")
    p.add_argument("infer")
    p.add_argument("--threshold", type=float, default=0.3)
    p.set_defaults(func=cmd_select_ref)

    p = sub.add_parser("fit-affine", help="least-squares affine between pose groups")
    p.add_argument("ref")
    p.add_argument("target")
    p.add_argument("--group", choices=GROUPS, required=True)
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--target-frame", dest="target_frame", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.3)
    p.set_defaults(func=cmd_fit_affine)

    p = sub.add_parser("edit-latent", help="warp and composite a latent toward a target pose")
    p.add_argument("latent")
    p.add_argument("ref")
    p.add_argument("target")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--target-frame", dest="target_frame", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--padding", type=int, default=0)
    p.add_argument("--no-face", dest="face", action="store_false")
    p.add_argument("--no-left-hand", dest="left_hand", action="store_false")
    p.add_argument("--no-right-hand", dest="right_hand", action="store_false")
    p.set_defaults(func=cmd_edit_latent, face=True, left_hand=True, right_hand=True)

    p = sub.add_parser("invert", help="DDIM-invert encoded frames to the top latent")
    p.add_argument("frames")
    p.add_argument("poses")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--params", help="directory with saved denoiser parameters")
    _add_config_flags(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("sample", help="DDIM-sample a latent video from a top latent")
    p.add_argument("latents")
    p.add_argument("poses")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--params")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="one-shot fine-tune a toy denoiser on a video")
    p.add_argument("frames")
    p.add_argument("poses")
    p.add_argument("--out", "-o", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="full inference: select, invert, edit, sample, drop")
    p.add_argument("train_frames", nargs="?")
    p.add_argument("train_poses", nargs="?")
    p.add_argument("infer_poses", nargs="?")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--params")
    p.add_argument("--manifest", help="re-run from a previously written manifest")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="psnr, mse-p, or video-sim between two files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--metric", choices=("psnr", "mse-p", "video-sim"), required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("render", help="render a latent grid to PGM/PPM")
    p.add_argument("tensor")
    p.add_argument("out")
    p.add_argument("--frame", type=int, default=1)
    p.add_argument("--channel", type=int, default=None,
                   help="render one 0-based channel as grayscale")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PoseCraftError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
