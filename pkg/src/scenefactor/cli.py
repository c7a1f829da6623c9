"""Command line entry point: ``scenefactor <subcommand> ...``.

Exit status is 0 on success, 2 for configuration or input errors and 3 when
a solver produces non-finite values.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from . import containers
from . import datasets as ds
from . import harness
from .encoder import PIXEL, SPARSE, build_codebooks, encode_pixel, encode_sparse, make_context
from .encoder import make_object_template
from .errors import ConfigError, NumericFailure
from .hdcore import Codebook
from .multi import factorize_multi
from .resonator import CONFIDENCE, FIXED_POINT, MAX_ITERS_ONLY, StoppingCriterion, run, write_trace
from .sparse import SparseConfig, check_dictionary, infer_maps, learn_dictionary

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
_RASTERS = (".pgm", ".png")


def read_image(path) -> np.ndarray:
    """Grayscale raster scaled to [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=float) / 255.0


def write_image(path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def _load_dictionary(args) -> np.ndarray:
    if args.dict in (None, "bars"):
        if args.dict is None and args.mode == SPARSE:
            raise ConfigError("sparse mode needs --dict (a .cscd file or 'bars')")
        return ds.bars_dictionary()
    try:
        return check_dictionary(containers.dictionary_from_bytes(containers.read_bytes(args.dict)))
    except FileNotFoundError:
        raise ConfigError(f"dictionary {args.dict} not found") from None


def _frame(img: np.ndarray, side: int | None) -> np.ndarray:
    img = ds.pad_square(img)
    side = side or img.shape[0]
    if img.shape[0] > side:
        raise ConfigError(f"image of side {img.shape[0]} does not fit a {side} scene")
    return ds.canonical_frame(img, side)


# -- subcommands ----------------------------------------------------------------


def cmd_gen_bars(args) -> int:
    rng = np.random.default_rng(args.seed)
    shapes = ds.gen_bars_shapes(args.count, rng, args.bars_per_shape)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    containers.write_bytes(out / "bars.cscd", containers.dictionary_to_bytes(ds.bars_dictionary()))
    meta = {}
    for i, s in enumerate(shapes):
        write_image(out / f"shape{i:03d}.pgm", s.grid)
        containers.write_bytes(out / f"shape{i:03d}.csca", containers.maps_to_bytes(s.ground_truth_maps))
        meta[f"shape{i:03d}"] = ";".join(f"{o}:{r}:{c}" for o, r, c in s.bars)
    containers.write_sidecar(out / "shapes.txt", meta)
    if args.scenes:
        if args.objects > len(shapes):
            raise ConfigError(f"--objects {args.objects} exceeds --count {len(shapes)}")
        side = args.side
        if side < ds.BAR_FRAME:
            raise ConfigError(f"--side must be at least {ds.BAR_FRAME}")
        rows = ["scene_id,k,x,y"]
        for n in range(args.scenes):
            ks = rng.choice(len(shapes), size=args.objects, replace=False)
            pos = rng.integers(0, side, size=(args.objects, 2))
            scene = ds.place_scene(
                [(shapes[k].grid, x, y) for k, (x, y) in zip(ks, pos)], side, ids=[int(k) for k in ks]
            )
            maps = np.zeros((2, side, side))
            for k, x, y in scene.placements:
                gt = np.zeros((2, side, side))
                gt[:, : ds.BAR_FRAME, : ds.BAR_FRAME] = shapes[k].ground_truth_maps
                maps += np.roll(gt, (y, x), axis=(1, 2))
            write_image(out / f"scene{n:04d}.pgm", scene.image)
            containers.write_bytes(out / f"scene{n:04d}.csca", containers.maps_to_bytes(maps))
            rows += [f"{n},{k},{x},{y}" for k, x, y in scene.placements]
        (out / "truth.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {len(shapes)} shapes and {args.scenes} scenes to {out}")
    return EXIT_OK


def cmd_train_dict(args) -> int:
    images = ds.load_idx(args.images)
    rng = np.random.default_rng(args.seed)
    count = min(args.count, len(images))
    idx = np.sort(rng.choice(len(images), count, replace=False))
    cfg = SparseConfig(lam=args.lam, max_iters=args.iters)
    filters, hist = learn_dictionary(
        [images[i] for i in idx], args.filters, args.patch, cfg, rounds=args.rounds, rng=rng,
        init="patches", return_history=True, filter_steps=args.filter_steps,
    )
    containers.write_bytes(args.out, containers.dictionary_to_bytes(filters))
    print(f"objective {hist[0]:.4g} -> {hist[-1]:.4g}; wrote {args.out}")
    return EXIT_OK


def cmd_encode(args) -> int:
    filters = _load_dictionary(args)
    frame = _frame(read_image(args.image), args.side)
    ctx = make_context(args.dim, frame.shape[0], filters.shape[0], np.random.default_rng(args.seed))
    if args.mode == SPARSE:
        maps = infer_maps(frame, filters, SparseConfig(lam=args.lam))
        vec = encode_sparse(maps, ctx)
        if args.maps:
            containers.write_bytes(args.maps, containers.maps_to_bytes(maps))
    else:
        vec = encode_pixel(frame, ctx)
    cb = Codebook(vec[None, :], [Path(args.image).stem])
    containers.write_bytes(args.out, containers.codebook_to_bytes(cb))
    print(f"encoded {args.image} ({args.mode}, D={args.dim}, L={ctx.side}) -> {args.out}")
    return EXIT_OK


def _templates(spec: str, side: int) -> tuple[list[str], list[np.ndarray]]:
    if spec == "mnist":
        images = ds.load_idx(harness.DATA_DIR / harness.MNIST_IMAGES)
        idx = ds.first_of_each_class(ds.load_idx_labels(harness.DATA_DIR / harness.MNIST_LABELS))
        return [str(i) for i in range(10)], [_frame(images[i], side) for i in idx]
    if spec == "letters":
        spec = str(harness.DATA_DIR / harness.LETTERS_DIR)
    paths = sorted(p for p in Path(spec).iterdir() if p.suffix.lower() in _RASTERS) \
        if Path(spec).is_dir() else []
    if not paths:
        raise ConfigError(f"no .pgm/.png templates in {spec}")
    return [p.stem for p in paths], [_frame(read_image(p), side) for p in paths]


def cmd_factorize(args) -> int:
    filters = _load_dictionary(args)
    scene = read_image(args.scene)
    if scene.shape[0] != scene.shape[1]:
        raise ConfigError(f"scene must be square, got {scene.shape}")
    side = scene.shape[0]
    labels, frames = _templates(args.templates, side)
    rng = np.random.default_rng(args.seed)
    ctx = make_context(args.dim, side, filters.shape[0], rng)
    cfg = SparseConfig(lam=args.lam)
    templates = [make_object_template(f, filters, ctx, cfg, args.mode, id=lab)
                 for lab, f in zip(labels, frames)]
    books = build_codebooks(ctx, templates)
    if args.mode == SPARSE:
        z = encode_sparse(infer_maps(scene, filters, cfg), ctx)
    else:
        z = encode_pixel(scene, ctx)
    thr = args.conf_threshold
    if thr is None:
        thr = 0.6 if args.mode == SPARSE else 0.3
    crit = StoppingCriterion(args.stopping, args.epsilon, thr, args.max_iters)
    results = factorize_multi(z, books, args.objects, crit, rng)
    for r in results:
        conf = " ".join(f"{c:.3f}" for c in r.final_confidences)
        print(f"object={labels[r.k_index]} x={r.x_index} y={r.y_index} iterations={r.iterations} "
              f"converged={int(r.converged)} confidences={conf}")
    if args.trace:
        traced = run(z, books, crit, np.random.default_rng(args.seed + 1), record_trace=True)
        write_trace(args.trace, traced)
    return EXIT_OK


def cmd_experiment(args) -> int:
    text = Path(args.config).read_text() if args.config else ""
    overrides = {}
    for f in fields(harness.ExperimentConfig):
        val = getattr(args, f"cfg_{f.name}", None)
        if val is not None:
            overrides[f.name] = val
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = val
    cfg = harness.parse_config(text, overrides, os.environ).resolved()
    progress = None
    if args.verbose:
        def progress(p, t, recs):
            print(f"{p.label} trial {t}: " + " ".join(f"{r.encoding}={r.correct:g}" for r in recs),
                  file=sys.stderr)
    _, rows = harness.run_experiment(cfg, progress=progress)
    print(harness.format_summary(rows))
    print(f"wrote {cfg.output}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scenefactor", description="phasor scene encoding and factorization")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bars", help="write random bars shapes and scenes")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--bars-per-shape", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=0, help="also write this many scenes")
    p.add_argument("--objects", type=int, default=1, help="objects per scene")
    p.add_argument("--side", type=int, default=100, help="scene side")
    p.add_argument("--out", default="bars")
    p.set_defaults(func=cmd_gen_bars)

    p = sub.add_parser("train-dict", help="learn a convolutional dictionary from IDX digits")
    p.add_argument("--images", default=str(harness.DATA_DIR / harness.MNIST_IMAGES))
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--filters", type=int, default=16)
    p.add_argument("--patch", type=int, default=12)
    p.add_argument("--lam", type=float, default=0.2)
    p.add_argument("--rounds", type=int, default=30)
    p.add_argument("--iters", type=int, default=15, help="inference iterations per round")
    p.add_argument("--filter-steps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=str(harness.DATA_DIR / harness.MNIST_DICT))
    p.set_defaults(func=cmd_train_dict)

    def common(p, lam):
        p.add_argument("--mode", choices=(SPARSE, PIXEL), default=SPARSE)
        p.add_argument("--dict", help="dictionary .cscd file, or 'bars'")
        p.add_argument("--dim", type=int, default=5000)
        p.add_argument("--lam", type=float, default=lam)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("encode", help="encode one image into a phasor vector (.vsac)")
    p.add_argument("image")
    common(p, 0.2)
    p.add_argument("--side", type=int, help="scene side (default: the image side)")
    p.add_argument("--maps", help="also write the feature maps (.csca)")
    p.add_argument("--out", default="vector.vsac")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("factorize", help="recover objects and positions from a scene image")
    p.add_argument("scene")
    p.add_argument("--templates", required=True,
                   help="directory of .pgm/.png templates, 'mnist' or 'letters'")
    common(p, 0.2)
    p.add_argument("--objects", type=int, default=1)
    p.add_argument("--stopping", choices=(FIXED_POINT, CONFIDENCE, MAX_ITERS_ONLY), default=FIXED_POINT)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--conf-threshold", type=float)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--trace", help="CSV of per-iteration confidences for a single run")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("experiment", help="run a seeded experiment sweep")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    for f in fields(harness.ExperimentConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
