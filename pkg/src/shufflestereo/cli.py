"""Command-line interface.

Subcommands:
  train      train a model on a manifest (or the synthetic overfit set)
  eval       evaluate a checkpoint on a manifest, writing report files
  infer      write per-sample disparity PFM, colorized PNG, and error-map PNG
  gradcheck  run the op-level finite-difference suite
  synth      materialize a synthetic random-dot dataset + manifest

Config files are line-based ``key = value`` text ('#' comments); any flag
given on the command line overrides the file. Recognized keys match the flag
names: variant, kind, dmax, manifest, checkpoint, out, seed, epochs, steps,
batch_size, crop, lr.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np
from PIL import Image

from . import gradsuite, viz
from .config import ModelConfig, desk_preset
from .data_io import (DataError, StereoSample, generate_random_dot_pair,
                      load_manifest, write_pfm)
from .metrics import EmptyMaskError
from .model import StereoNet
from .tensor import NumericsError, Tensor
from .trainer import (TrainConfig, evaluate_model, load_checkpoint,
                      make_overfit_set, train, valid_eval_mask)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


def _atomic_write(path, write_fn):
    """Write via a temp file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _save_png(path, array: np.ndarray):
    _atomic_write(path, lambda tmp: Image.fromarray(array).save(tmp, format="PNG"))


def read_config_file(path) -> dict:
    opts = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            opts[key] = value
    return opts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shufflestereo")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--variant", choices=("S", "M", "L", "S-desk"))
        p.add_argument("--kind", choices=("gwc", "nc"))
        p.add_argument("--dmax", type=int)
        p.add_argument("--manifest")
        p.add_argument("--checkpoint")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--crop", help="HxW, e.g. 64x128")
    p.add_argument("--lr", type=float)
    p.add_argument("--synthetic", action="store_true",
                   help="train on the built-in synthetic overfit set")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)

    p = sub.add_parser("infer", help="write disparity outputs for a manifest")
    common(p)
    p.add_argument("--dump-volume", action="store_true",
                   help="also dump the raw cost volume per sample")

    p = sub.add_parser("gradcheck", help="run the gradient suite")
    common(p)
    p.add_argument("--seeds", type=int, default=gradsuite.SEEDS_PER_OP)

    p = sub.add_parser("synth", help="generate a synthetic dataset + manifest")
    common(p)
    p.add_argument("--pairs", type=int, default=8)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--block", type=int, default=16)
    return parser


_CONFIG_TYPES = {"dmax": int, "seed": int, "epochs": int, "steps": int,
                 "batch_size": int, "lr": float, "pairs": int, "height": int,
                 "width": int, "block": int}


def merge_options(args: argparse.Namespace) -> dict:
    opts = {}
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            opts[key] = _CONFIG_TYPES.get(key, str)(value)
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            opts[key] = value
    return opts


def model_config_from(opts: dict) -> ModelConfig:
    variant = opts.get("variant", "S-desk")
    kind = opts.get("kind", "gwc")
    seed = opts.get("seed", 0)
    if variant == "S-desk":
        cfg = desk_preset(kind=kind, seed=seed)
    else:
        cfg = ModelConfig(variant=variant, kind=kind, seed=seed)
    if "dmax" in opts:
        cfg.d_max = opts["dmax"]
    return cfg.validate()


def _require(opts, key, command):
    if key not in opts:
        raise UsageError(f"{command}: --{key} is required")
    return opts[key]


def _load_samples(opts, command) -> list[StereoSample]:
    manifest = _require(opts, "manifest", command)
    samples = load_manifest(manifest)
    if not samples:
        raise DataError(f"{manifest}: no samples")
    return samples


def cmd_train(opts) -> int:
    out = _require(opts, "out", "train")
    seed = opts.get("seed", 0)
    if opts.get("synthetic"):
        samples = make_overfit_set(seed=seed)
    else:
        samples = _load_samples(opts, "train")
    model = StereoNet(model_config_from(opts))
    crop = opts.get("crop", "64x128")
    if isinstance(crop, str):
        crop = tuple(int(v) for v in crop.lower().split("x"))
    tcfg = TrainConfig(
        steps=opts.get("steps", 200),
        batch_size=opts.get("batch_size", 2),
        crop=crop,
        lr=opts.get("lr", 1e-3),
        clip_norm=5.0 if opts.get("synthetic") else 0.0,
        seed=seed,
    )
    result = train(model, samples, tcfg, checkpoint_dir=out, log=print)
    if result.aborted_nan:
        print("aborted: NaN loss; last-good checkpoint kept", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"trained {result.steps_run} steps; train EPE "
          f"{result.initial_report.epe:.3f} -> {result.final_report.epe:.3f}")
    return EXIT_OK


def cmd_eval(opts) -> int:
    ckpt = _require(opts, "checkpoint", "eval")
    out = _require(opts, "out", "eval")
    samples = _load_samples(opts, "eval")
    model, _ = load_checkpoint(ckpt)
    report = evaluate_model(model, samples)
    os.makedirs(out, exist_ok=True)
    _atomic_write(os.path.join(out, "report.txt"),
                  lambda tmp: open(tmp, "w").write(report.to_text()))
    _atomic_write(os.path.join(out, "report.json"),
                  lambda tmp: open(tmp, "w").write(report.to_json()))
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_infer(opts) -> int:
    ckpt = _require(opts, "checkpoint", "infer")
    out = _require(opts, "out", "infer")
    samples = _load_samples(opts, "infer")
    model, _ = load_checkpoint(ckpt)
    model.eval()
    os.makedirs(out, exist_ok=True)
    d_max = model.config.d_max
    for s in samples:
        maps = model(Tensor(s.left[None]), Tensor(s.right[None]))
        disp = maps[-1].data.data[0]
        if not np.isfinite(disp).all():
            print(f"{s.id}: non-finite disparity output", file=sys.stderr)
            return EXIT_NUMERIC
        _atomic_write(os.path.join(out, f"{s.id}_disp.pfm"),
                      lambda tmp, d=disp: write_pfm(tmp, d))
        _save_png(os.path.join(out, f"{s.id}_disp.png"),
                  viz.colorize_disparity(disp, d_max))
        mask = valid_eval_mask(s.gt, s.valid, d_max)
        _save_png(os.path.join(out, f"{s.id}_err.png"),
                  viz.error_map(disp, s.gt, mask))
        if opts.get("dump_volume"):
            from .costvol import build_cost_volume
            pyr_l, pyr_r = model.backbone(Tensor(s.left[None]), Tensor(s.right[None]))
            sc = model.config.scale
            vol = build_cost_volume(model.config.kind, pyr_l.feats[sc],
                                    pyr_r.feats[sc], d_max // sc,
                                    model.config.n_groups, sc)
            from .tensor import save_tensor
            _atomic_write(os.path.join(out, f"{s.id}_volume.esmt"),
                          lambda tmp, v=vol.data.data: save_tensor(tmp, v))
        print(f"{s.id}: wrote disparity + visualizations")
    return EXIT_OK


def cmd_gradcheck(opts) -> int:
    worst = gradsuite.run_suite(seeds=opts.get("seeds", gradsuite.SEEDS_PER_OP),
                                log=print)
    if all(r.passed for r in worst.values()):
        print(f"gradient suite: {len(worst)} ops pass")
        return EXIT_OK
    failed = [n for n, r in worst.items() if not r.passed]
    print(f"gradient suite FAILED for: {', '.join(failed)}", file=sys.stderr)
    return EXIT_NUMERIC


def cmd_synth(opts) -> int:
    out = _require(opts, "out", "synth")
    seed = opts.get("seed", 0)
    d_max = opts.get("dmax", 24)
    os.makedirs(out, exist_ok=True)
    lines = []
    for i in range(opts.get("pairs", 8)):
        s = generate_random_dot_pair(opts.get("height", 64), opts.get("width", 128),
                                     d_max, opts.get("block", 16), seed=seed + i,
                                     disparity_step=4)
        names = (f"{i:04d}_left.png", f"{i:04d}_right.png", f"{i:04d}_gt.pfm")
        for name, img in zip(names[:2], (s.left, s.right)):
            arr = (img.transpose(1, 2, 0) * 255).round().astype(np.uint8)
            _save_png(os.path.join(out, name), arr)
        gt = np.where(s.valid, np.maximum(s.gt, 1e-3), 0.0)  # 0 encodes invalid
        _atomic_write(os.path.join(out, names[2]),
                      lambda tmp, g=gt: write_pfm(tmp, g))
        lines.append(" ".join(names))
    manifest = os.path.join(out, "manifest.txt")
    body = "# left right gt\n" + "\n".join(lines) + "\n"
    _atomic_write(manifest, lambda tmp: open(tmp, "w").write(body))
    print(f"wrote {len(lines)} pairs and {manifest}")
    return EXIT_OK


_COMMANDS = {"train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
             "gradcheck": cmd_gradcheck, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        opts = merge_options(args)
        return _COMMANDS[args.command](opts)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EmptyMaskError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
