"""Command-line interface: run / generate / inspect / render."""

import argparse
import os
import struct
import sys

import numpy as np

from .dataio import (CONFIG_DEFAULTS, SceneSpec, coerce_value,
                     generate_synthetic, load_config, load_labels, save_cube,
                     save_labels)
from .errors import (FormatError, InsufficientClass, InvalidConfig,
                     MdcpeError)
from .experiment import run_experiment
from .metrics import default_palette, render_map

OUTPUT_DIR_ENV = "MDCPE_OUTPUT_DIR"


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mdcpe",
        description="Semi-supervised co-training for hyperspectral "
                    "image classification")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="path to a key = value config file")
    for key in CONFIG_DEFAULTS:
        run.add_argument(f"--{key}", dest=key, default=None,
                         help=f"override config key {key}")

    gen = sub.add_parser("generate", help="write a synthetic cube + labels")
    gen.add_argument("out_prefix", help="output prefix (.cube/.labels appended)")
    gen.add_argument("--height", type=int, default=32)
    gen.add_argument("--width", type=int, default=32)
    gen.add_argument("--bands", type=int, default=16)
    gen.add_argument("--classes", type=int, default=4)
    gen.add_argument("--geometry", choices=("blocks", "stripes"),
                     default="blocks")
    gen.add_argument("--spectra-scale", type=float, default=1.0)
    gen.add_argument("--noise-sigma", type=float, default=0.05)
    gen.add_argument("--ratios", default=None,
                     help="comma-separated per-class weights (stripes)")
    gen.add_argument("--seed", type=int, default=12345)

    ins = sub.add_parser("inspect", help="print the header of a data file")
    ins.add_argument("file")

    ren = sub.add_parser("render", help="render a label file to a PPM image")
    ren.add_argument("labels")
    ren.add_argument("out", help="output .ppm path")
    return parser


def _cmd_run(args):
    cfg = load_config(args.config)
    for key in CONFIG_DEFAULTS:
        raw = getattr(args, key, None)
        if raw is not None:
            from .dataio import _KEY_TO_FIELD
            setattr(cfg, _KEY_TO_FIELD[key], coerce_value(key, raw))
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir and cfg.output_dir == CONFIG_DEFAULTS["output_dir"][0]:
        cfg.output_dir = env_dir
    return run_experiment(cfg)


def _cmd_generate(args):
    ratios = None
    if args.ratios:
        ratios = tuple(float(x) for x in args.ratios.split(","))
    spec = SceneSpec(height=args.height, width=args.width, bands=args.bands,
                     classes=args.classes, geometry=args.geometry,
                     spectra_scale=args.spectra_scale,
                     noise_sigma=args.noise_sigma, ratios=ratios)
    cube, labels = generate_synthetic(spec, args.seed)
    save_cube(cube, args.out_prefix + ".cube")
    save_labels(labels, args.out_prefix + ".labels")
    print(f"wrote {args.out_prefix}.cube and {args.out_prefix}.labels")
    return 0


def _cmd_inspect(args):
    with open(args.file, "rb") as f:
        head = f.read(18)
    if head[:4] == b"HSIC":
        magic, version, h, w, b = struct.unpack("<4sHIII", head[:18])
        print(f"cube file version {version}: {h}x{w} pixels, {b} bands")
    elif head[:4] == b"HSIL":
        magic, version, h, w = struct.unpack("<4sHII", head[:14])
        labels = load_labels(args.file)
        print(f"label file version {version}: {h}x{w} pixels, "
              f"{int(labels.max())} classes, "
              f"{int((labels > 0).sum())} ground-truth pixels")
    elif head[:4] == b"MDCK":
        from .dataio import load_checkpoint
        _, _, state = load_checkpoint(args.file)
        print(f"checkpoint: state {state}")
    else:
        raise FormatError(f"unrecognized magic {head[:4]!r} at offset 0")
    return 0


def _cmd_render(args):
    labels = load_labels(args.labels)
    palette = default_palette(int(labels.max()))
    with open(args.out, "wb") as f:
        f.write(render_map(labels, palette))
    print(f"wrote {args.out}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "generate": _cmd_generate,
                "inspect": _cmd_inspect, "render": _cmd_render}
    try:
        return handlers[args.command](args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except InsufficientClass as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except (MdcpeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
