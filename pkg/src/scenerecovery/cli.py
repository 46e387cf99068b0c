"""Batch command-line front end.

One entry point with subcommands for synthesis, training, restoration,
evaluation, the stretch-parameter sweep, and ablations. Progress goes to
stderr; artifacts go only to the paths named by flags. Exit codes: 0 ok,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .degrade import DegradationSpec, load_atmo_set, synth_pair
from .errors import ModelMissing
from .harness import (
    DatasetManifest,
    ManifestEntry,
    load_manifest,
    load_train_config,
    ols_sweep,
    run_ablation,
    save_manifest,
    train,
)
from .imaging import load_depth, load_image, save_image
from .metrics import evaluate_split, load_niqe_model
from .net import load_checkpoint, network_from_checkpoint, restore_image

SCENES = ("haze", "sand", "lowlight")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _pngs(directory: str) -> list[str]:
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(".png"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenerec",
        description="scene recovery for hazy, sand-dust and low-light images",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize degraded/clean training pairs")
    p.add_argument("--clean", required=True, help="directory of clean PNGs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scene", required=True, choices=SCENES)
    p.add_argument("--depth", help="directory of same-named depth PNGs")
    p.add_argument("--atmo-set", help="airlight table file (R G B per line)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a network from a config and manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoint and log")

    p = sub.add_parser("restore", help="run a checkpoint over a directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score restored images against ground truth")
    p.add_argument("--restored", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", required=True, help="CSV output path")
    p.add_argument("--dataset", default="eval")
    p.add_argument("--niqe-model", help="override the packaged naturalness model")
    p.add_argument(
        "--no-niqe", action="store_true", help="skip the no-reference column"
    )

    p = sub.add_parser("sweep", help="grid-sweep the stretch adjustment fractions")
    p.add_argument("--grid", required=True, help="file of 'p_a_min p_a_max' lines")
    p.add_argument(
        "--eval",
        dest="eval_dir",
        required=True,
        help="directory with <scene>/degraded and <scene>/clean subdirs",
    )
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("ablate", help="train and score the ablation variants")
    p.add_argument("--kind", required=True, choices=("modules", "losses"))
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--eval-split", default="test", choices=("train", "test"))

    for sp in sub.choices.values():
        sp.add_argument("--version", action="version", version=__version__)
    return parser


def _cmd_synth(args, parser) -> int:
    if args.scene in ("haze", "sand") and args.depth is None:
        parser.error(f"--depth is required for scene {args.scene}")
    atmo = load_atmo_set(args.atmo_set) if args.atmo_set else None
    clean_out = os.path.join(args.out, "clean")
    degraded_out = os.path.join(args.out, "degraded")
    os.makedirs(clean_out, exist_ok=True)
    os.makedirs(degraded_out, exist_ok=True)
    names = _pngs(args.clean)
    if not names:
        raise FileNotFoundError(f"no PNG images in {args.clean}")
    entries = []
    for idx, name in enumerate(names):
        clean = load_image(os.path.join(args.clean, name))
        depth = None
        if args.scene in ("haze", "sand"):
            depth = load_depth(os.path.join(args.depth, name))
        spec = DegradationSpec(kind=args.scene)
        degraded, clean = synth_pair(
            clean, depth, spec, seed=[args.seed, idx], atmo_set=atmo
        )
        save_image(clean, os.path.join(clean_out, name))
        save_image(degraded, os.path.join(degraded_out, name))
        entries.append(
            ManifestEntry(
                clean=os.path.join(clean_out, name),
                degraded=os.path.join(degraded_out, name),
                kind=args.scene,
                split="train",
            )
        )
        _log(f"synth {args.scene}: {name}")
    save_manifest(DatasetManifest(entries=entries), os.path.join(args.out, "manifest.json"))
    return 0


def _cmd_train(args) -> int:
    config = load_train_config(args.config)
    manifest = load_manifest(args.manifest)
    def progress(epoch, lr, total):
        _log(f"epoch {epoch}: lr={lr:g} total={total:.5f}")
    train(config, manifest, out_dir=args.out, progress=progress)
    _log(f"checkpoint and log written under {args.out}")
    return 0


def _cmd_restore(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    net = network_from_checkpoint(ckpt)
    os.makedirs(args.out, exist_ok=True)
    names = _pngs(args.in_dir)
    if not names:
        raise FileNotFoundError(f"no PNG images in {args.in_dir}")
    for name in names:
        img = load_image(os.path.join(args.in_dir, name))
        save_image(restore_image(net, img), os.path.join(args.out, name))
        _log(f"restored {name}")
    return 0


def _cmd_eval(args) -> int:
    model = None
    if not args.no_niqe:
        try:
            model = load_niqe_model(args.niqe_model)
        except ModelMissing:
            if args.niqe_model is not None:
                raise
            _log("packaged naturalness model missing; skipping that column")
    report = evaluate_split(args.restored, args.truth, args.dataset, model)
    with open(args.report, "w") as fh:
        fh.write(report.to_csv())
    text_path = os.path.splitext(args.report)[0] + ".txt"
    with open(text_path, "w") as fh:
        fh.write(report.to_text())
    _log(report.to_text().rstrip())
    return 0


def _read_grid(path: str) -> list[tuple[float, float]]:
    grid = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split()
            grid.append((float(a), float(b)))
    return grid


def _cmd_sweep(args) -> int:
    grid = _read_grid(args.grid)
    eval_pairs = {}
    for scene in sorted(os.listdir(args.eval_dir)):
        scene_dir = os.path.join(args.eval_dir, scene)
        deg_dir = os.path.join(scene_dir, "degraded")
        cln_dir = os.path.join(scene_dir, "clean")
        if not (os.path.isdir(deg_dir) and os.path.isdir(cln_dir)):
            continue
        pairs = []
        for name in _pngs(deg_dir):
            pairs.append(
                (
                    load_image(os.path.join(deg_dir, name)),
                    load_image(os.path.join(cln_dir, name)),
                )
            )
        if pairs:
            eval_pairs[scene] = pairs
    if not eval_pairs:
        raise FileNotFoundError(
            f"{args.eval_dir}: no <scene>/degraded + <scene>/clean pairs found"
        )
    report = ols_sweep(grid, eval_pairs)
    with open(args.out, "w") as fh:
        fh.write(report.to_csv())
    for scene, (a_min, a_max) in report.best().items():
        _log(f"best for {scene}: p_a_min={a_min:g} p_a_max={a_max:g}")
    return 0


def _cmd_ablate(args) -> int:
    config = load_train_config(args.config)
    manifest = load_manifest(args.manifest)
    def progress(toggles, p_mean):
        _log(f"variant {toggles}: psnr={p_mean:.3f}")
    report = run_ablation(
        args.kind, config, manifest, eval_split=args.eval_split, progress=progress
    )
    with open(args.out, "w") as fh:
        fh.write(report.to_csv())
    _log(f"ablation table written to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args, parser)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "restore":
            return _cmd_restore(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "ablate":
            return _cmd_ablate(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure -> exit 1, message on stderr
        _log(f"error: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
