"""Command-line interface: segment, transfer, ssl, dump-attn, sweep.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import attention as attn
from .errors import DataError, NumericError, ScsaError, stage
from .metrics import semantic_style_loss
from .pipeline import (
    ScsaConfig,
    ToyCodec,
    Quadruple,
    decode,
    default_projections,
    prepare,
    to_uint8,
    transform_features,
)
from .semantics import label_preview, load_label_map, quantize_semantic_maps, save_label_map
from .tensors import load_feature_map, save_feature_map, write_feature_array

log = logging.getLogger("scsa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SWEEP_KEYS = ("alpha1", "alpha2", "b", "t1", "t2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---- argument plumbing ----

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file whose keys mirror the long flags; flags win")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _quad_args() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--content")
    p.add_argument("--content-sem")
    p.add_argument("--style")
    p.add_argument("--style-sem")
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--patch-size", type=int, default=2)
    p.add_argument("--identity-proj", action="store_true",
                   help="use identity projections instead of seeded orthogonal ones")
    p.add_argument("--value-gain", type=float, default=None,
                   help="scale of the value/output projections (default 1/sqrt(channels))")
    return p


def _style_args(preset_default: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--preset", choices=["cnn", "transformer", "diffusion", "custom"], default=preset_default)
    for name in SWEEP_KEYS:
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--passes", type=int, default=1)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scsa", description="Semantic continuous-sparse attention style transfer")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    common, quad = _common(), _quad_args()

    seg = sub.add_parser("segment", parents=[common], help="cluster a pair of semantic maps into labels")
    seg.add_argument("--content-sem")
    seg.add_argument("--style-sem")
    seg.add_argument("--clusters", type=int)
    seg.add_argument("--seed", type=int, default=0)
    seg.add_argument("--out-dir")

    tr = sub.add_parser("transfer", parents=[common, quad, _style_args("cnn")], help="stylize one quadruple")
    tr.add_argument("--out")
    tr.add_argument("--features-out", help="also write the stylized features (SCSAF1)")
    tr.add_argument("--dump-dir", help="write content/style features and feature-resolution labels here")

    ssl = sub.add_parser("ssl", parents=[common], help="semantic style loss report as JSON")
    ssl.add_argument("--stylized-features")
    ssl.add_argument("--style-features")
    ssl.add_argument("--labels-out")
    ssl.add_argument("--labels-style")

    da = sub.add_parser("dump-attn", parents=[common, quad], help="write a post-softmax attention matrix")
    da.add_argument("--which", choices=["ua", "sca", "ssa"])
    da.add_argument("--out")

    sw = sub.add_parser("sweep", parents=[common, quad, _style_args("custom")], help="parameter grid of stylizations")
    sw.add_argument("--grid", nargs="+", metavar="KEY=V1,V2,...")
    sw.add_argument("--out-dir")
    return parser


def _config_defaults(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"cannot read config {path}: {err}") from err
    if not isinstance(raw, dict):
        raise DataError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in raw.items()}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        defaults = _config_defaults(args.config)
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


# ---- helpers ----

def load_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as err:
        raise DataError(f"cannot read image {path}: {err}") from err


def save_png(path, img: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def _quadruple(args) -> Quadruple:
    _require(args, "content", "content_sem", "style", "style_sem")
    with stage("load"):
        return Quadruple(load_rgb(args.content), load_rgb(args.content_sem),
                         load_rgb(args.style), load_rgb(args.style_sem))


def _config(args, **overrides) -> ScsaConfig:
    kw = dict(preset=getattr(args, "preset", "custom"), clusters=args.clusters, eps=args.eps,
              seed=args.seed, passes=getattr(args, "passes", 1))
    for name in SWEEP_KEYS:
        kw[name] = getattr(args, name, None)
    kw.update(overrides)
    with stage("config"):
        return ScsaConfig(**kw)


def _codec_and_proj(args) -> tuple[ToyCodec, attn.ProjectionSet]:
    with stage("config"):
        codec = ToyCodec.orthonormal(args.patch_size, seed=args.seed)
        if args.identity_proj:
            p = attn.ProjectionSet.identity(codec.channels)
        elif args.value_gain is not None:
            p = attn.ProjectionSet.random(codec.channels, seed=args.seed + 1, value_gain=args.value_gain)
        else:
            p = default_projections(codec, args.seed)
    return codec, p


def _threads() -> int:
    raw = os.environ.get("SCSA_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise UsageError(f"SCSA_THREADS must be an integer, got {raw!r}")
    return os.cpu_count() or 1


# ---- subcommands ----

def cmd_segment(args) -> int:
    _require(args, "content_sem", "style_sem", "clusters", "out_dir")
    with stage("load"):
        csem, ssem = load_rgb(args.content_sem), load_rgb(args.style_sem)
    with stage("segment"):
        lc, ls, palette = quantize_semantic_maps(csem, ssem, args.clusters, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, l in (("content", lc), ("style", ls)):
        label_preview(l, palette).save(out / f"{name}_labels.png", format="PNG")
        save_label_map(out / f"{name}_labels.scsal", l)
    (out / "palette.json").write_text(json.dumps(palette.to_json(), indent=2) + "\n")
    log.info("wrote %d labels to %s", lc.num_labels, out)
    return EXIT_OK


def _run_transfer(quad: Quadruple, cfg: ScsaConfig, codec: ToyCodec, p: attn.ProjectionSet):
    prep = prepare(quad, cfg, codec)
    result = transform_features(prep, cfg, p)
    with stage("decode"):
        img = decode(result.output, codec)
    return prep, result, img


def cmd_transfer(args) -> int:
    _require(args, "out")
    quad = _quadruple(args)
    cfg = _config(args)
    codec, p = _codec_and_proj(args)
    prep, result, img = _run_transfer(quad, cfg, codec, p)
    save_png(args.out, img)
    if args.features_out:
        save_feature_map(args.features_out, result.output)
    if args.dump_dir:
        d = Path(args.dump_dir)
        d.mkdir(parents=True, exist_ok=True)
        save_feature_map(d / "content.scsaf", prep.fc)
        save_feature_map(d / "style.scsaf", prep.fs)
        save_feature_map(d / "stylized.scsaf", result.output)
        save_label_map(d / "content_labels.scsal", prep.lc)
        save_label_map(d / "style_labels.scsal", prep.ls)
    log.info("preset=%s alpha1=%s alpha2=%s -> %s", cfg.preset, cfg.alpha1, cfg.alpha2, args.out)
    return EXIT_OK


def cmd_ssl(args) -> int:
    _require(args, "stylized_features", "style_features", "labels_out", "labels_style")
    with stage("load"):
        f_out = load_feature_map(args.stylized_features)
        f_s = load_feature_map(args.style_features)
        l_out = load_label_map(args.labels_out)
        l_s = load_label_map(args.labels_style)
    with stage("ssl"):
        report = semantic_style_loss(f_out, f_s, l_out, l_s)
    for label in report.skipped:
        log.warning("label %d is present on one side only and was skipped", label)
    print(report.to_json())
    return EXIT_OK


def cmd_dump_attn(args) -> int:
    _require(args, "which", "out")
    quad = _quadruple(args)
    cfg = _config(args, preset="custom")
    codec, p = _codec_and_proj(args)
    prep = prepare(quad, cfg, codec)
    with stage(args.which):
        if args.which == "ua":
            w = attn.ua_weights(prep.fc, prep.fs, p)
        elif args.which == "sca":
            w = attn.sca_weights(prep.fcsem, prep.fssem, prep.lc, prep.ls, p)
        else:
            from .normalize import s_adain
            fc_ad = s_adain(prep.fc, prep.fs, prep.lc, prep.ls, cfg.eps)
            w = attn.ssa_weights(fc_ad, prep.fs, prep.lc, prep.ls, p)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_feature_array(args.out, w[None])
    return EXIT_OK


def parse_grid(items) -> dict[str, list[float]]:
    grid: dict[str, list[float]] = {}
    for item in items or []:
        key, sep, values = item.partition("=")
        key = key.strip()
        if not sep or key not in SWEEP_KEYS:
            raise UsageError(f"bad grid entry {item!r}; expected KEY=V1,V2 with KEY in {SWEEP_KEYS}")
        try:
            vals = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"grid values for {key} must be numbers")
        if not vals:
            raise UsageError(f"grid entry {key} has an empty value list")
        if key in grid:
            raise UsageError(f"grid key {key} given twice")
        grid[key] = vals
    if not grid:
        raise UsageError("sweep needs at least one --grid entry")
    return grid


def _cell_name(index: int, point: dict[str, float]) -> str:
    tag = "_".join(f"{k}={v:g}" for k, v in point.items())
    return f"cell_{index:03d}_{tag}.png"


def contact_sheet(images: list[np.ndarray], rows: int, cols: int, gap: int = 2) -> np.ndarray:
    h, w, _ = images[0].shape
    sheet = np.full((rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, 3), 255, dtype=np.uint8)
    for idx, img in enumerate(images):
        r, c = divmod(idx, cols)
        sheet[r * (h + gap): r * (h + gap) + h, c * (w + gap): c * (w + gap) + w] = img
    return sheet


def cmd_sweep(args) -> int:
    _require(args, "out_dir")
    grid = parse_grid(args.grid)
    quad = _quadruple(args)
    codec, p = _codec_and_proj(args)
    keys = list(grid)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    configs = [_config(args, **pt) for pt in points]
    prep = prepare(quad, configs[0], codec)

    def run(cfg):
        out = transform_features(prep, cfg, p).output
        return to_uint8(decode(out, codec))

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        images = list(pool.map(run, configs))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (pt, img) in enumerate(zip(points, images)):
        Image.fromarray(img).save(out / _cell_name(i, pt), format="PNG")
    rows = len(grid[keys[0]])
    Image.fromarray(contact_sheet(images, rows, len(images) // rows)).save(out / "sheet.png", format="PNG")
    log.info("wrote %d cells and a contact sheet to %s", len(images), out)
    return EXIT_OK


COMMANDS = {
    "segment": cmd_segment,
    "transfer": cmd_transfer,
    "ssl": cmd_ssl,
    "dump-attn": cmd_dump_attn,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as err:
        print(f"scsa: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as err:
        print(f"scsa: error: {err}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"scsa: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as err:
        print(f"scsa: numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ScsaError) as err:
        print(f"scsa: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"scsa: data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
