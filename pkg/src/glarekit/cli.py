"""Command-line entry point.

Subcommands: represent, train, predict, eval, ablate, synth,
validate-data.  Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pngio
from .ablation import TABLE_COMBOS, run_ablation
from .config import RunConfig, load_run_config
from .data import load_all, save_dataset, scan_dataset, synthesize_glare
from .errors import ConfigurationError, GlareKitError
from .evaluation import RepresentationCache, evaluate, predict_mask, train_fold
from .metrics import METRIC_ROWS, MetricSummary, PixelConfusion, image_metrics
from .otsu import otsu_threshold
from .representations import ContrastParams, build_plane_set, compute_planes, parse_combo
from .unet import forward, load_model


def _require_file(path, what="file"):
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"{what} not found: {p}")
    return p


def _contrast_from_args(args) -> ContrastParams:
    return ContrastParams(
        window_n=args.window, window_m=args.window, stride_k=args.stride
    )


def _samples_from_config(cfg: RunConfig):
    ds = cfg.dataset
    if ds.is_synthetic:
        return synthesize_glare(ds.synthetic_seed, ds.synthetic_count, ds.resolution)
    if ds.root:
        manifest = scan_dataset(ds.root, ds.resolution)
        return load_all(manifest)
    raise ConfigurationError("dataset section needs either 'root' or 'synthetic'")


# ---------------------------------------------------------------------------
# represent

_PLANE_FILES = {
    "RGB": [("rgb", "color", None)],
    "HSV": [("hue", "gray", 0), ("sat", "gray", 1), ("val", "gray", 2)],
    "C": [("contrast", "gray", 0)],
    "G": [("photometric", "color", None)],
}


def _write_plane_pngs(out_dir: Path, stem: str, name: str, plane: np.ndarray):
    for suffix, kind, channel in _PLANE_FILES[name]:
        path = out_dir / f"{stem}_{suffix}.png"
        if kind == "color":
            pngio.save_rgb(path, plane.transpose(1, 2, 0))
        else:
            pngio.save_gray(path, plane[channel])


def cmd_represent(args) -> int:
    in_path = _require_file(args.input, "input image")
    names = parse_combo(args.combo)
    params = _contrast_from_args(args)
    rgb = pngio.load_rgb(in_path)

    wanted = set(names)
    if args.keep_intermediates and "G" in wanted:
        wanted |= {"HSV", "C"}
    planes = compute_planes(rgb, wanted, params)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = in_path.stem
    for name in ("RGB", "HSV", "G", "C"):
        if name not in planes:
            continue
        plane32 = planes[name].astype(np.float32)
        np.save(out_dir / f"{stem}_{name.lower()}.npy", plane32)
        _write_plane_pngs(out_dir, stem, name, np.clip(plane32, 0.0, 1.0))
    print(f"wrote {len(planes)} representation(s) for {in_path.name} to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# synth / validate-data


def cmd_synth(args) -> int:
    res = (args.resolution[0], args.resolution[-1])
    samples = synthesize_glare(args.seed, args.count, res)
    save_dataset(samples, args.out)
    frac = float(np.mean([s.mask.mean() for s in samples]))
    print(
        f"wrote {len(samples)} samples at {res[0]}x{res[1]} to {args.out}"
        f" (mean glare share {frac:.1%})"
    )
    return 0


def cmd_validate_data(args) -> int:
    manifest = scan_dataset(args.data, (args.resolution[0], args.resolution[-1]))
    for entry in manifest.entries:
        _require_file(entry.image_path, "image")
        _require_file(entry.mask_path, "mask")
    print(f"ok: {len(manifest)} image/mask pairs under {manifest.root}")
    return 0


# ---------------------------------------------------------------------------
# train / predict / eval / ablate


def _checkpoint_config(cfg: RunConfig) -> dict:
    return {
        "combo": cfg.train.combo_id,
        "contrast": {
            "window_n": cfg.train.contrast.window_n,
            "window_m": cfg.train.contrast.window_m,
            "stride_k": cfg.train.contrast.stride_k,
        },
        "resolution": list(cfg.dataset.resolution),
        "seed": cfg.train.seed,
    }


def cmd_train(args) -> int:
    cfg = load_run_config(_require_file(args.config, "config"))
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    samples = _samples_from_config(cfg)
    model, losses = train_fold(cfg.train, samples, fold_seed=cfg.train.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "model.ckpt"
    model.save(ckpt_path, extra_config=_checkpoint_config(cfg))
    loss_csv = out_dir / "loss.csv"
    with open(loss_csv, "w") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{loss:.8e}\n")
    print(f"trained on {len(samples)} samples; wrote {ckpt_path} and {loss_csv}")
    return 0


def _params_from_checkpoint(config: dict) -> ContrastParams:
    c = config.get("contrast", {})
    return ContrastParams(
        window_n=int(c.get("window_n", 17)),
        window_m=int(c.get("window_m", 17)),
        stride_k=int(c.get("stride_k", 4)),
    )


def cmd_predict(args) -> int:
    ckpt_path = _require_file(args.checkpoint, "checkpoint")
    in_path = _require_file(args.input, "input image")
    model, config = load_model(ckpt_path)
    params = _params_from_checkpoint(config)
    h, w = config.get("resolution", [256, 256])

    rgb = pngio.load_rgb(in_path)
    if rgb.shape[:2] != (h, w):
        rgb = pngio.resize_rgb(rgb, h, w)
    planes = build_plane_set(rgb, config["combo"], params)
    prob = forward(model, planes)
    threshold = otsu_threshold(prob)
    mask = (prob >= threshold).astype(np.float64)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = in_path.stem
    pngio.save_gray(out_dir / f"{stem}_prob.png", prob)
    pngio.save_gray(out_dir / f"{stem}_mask.png", mask)
    print(
        f"predicted {in_path.name}: threshold {threshold:.4f},"
        f" glare share {mask.mean():.2%}; wrote {out_dir}/{stem}_prob.png and _mask.png"
    )
    return 0


def _print_summary(summary: MetricSummary) -> None:
    print(f"{'metric':<10} {'mean':>8} {'std':>8}")
    for label, metric, stat in METRIC_ROWS:
        if stat != "mean":
            continue
        print(
            f"{label:<10} {summary.value(metric, 'mean'):>8.4f}"
            f" {summary.value(metric, 'std'):>8.4f}"
        )


def _eval_oracle(pred_dir: Path, truth_dir: Path) -> MetricSummary:
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    truths = {p.stem: p for p in sorted(truth_dir.glob("*.png"))}
    common = sorted(set(preds) & set(truths))
    if not common:
        raise ConfigurationError(
            f"no overlapping mask stems between {pred_dir} and {truth_dir}"
        )
    images = []
    for stem in common:
        pred = pngio.load_gray(preds[stem]) >= 128
        truth = pngio.load_gray(truths[stem]) >= 128
        if pred.shape != truth.shape:
            raise GlareKitError(f"mask shapes differ for {stem}")
        images.append(image_metrics(PixelConfusion.from_masks(pred, truth)))
    return MetricSummary.from_images(images)


def cmd_eval(args) -> int:
    if args.pred_dir or args.truth_dir:
        if not (args.pred_dir and args.truth_dir):
            raise ConfigurationError("oracle mode needs both --pred-dir and --truth-dir")
        summary = _eval_oracle(Path(args.pred_dir), Path(args.truth_dir))
    else:
        if not (args.checkpoint and args.data):
            raise ConfigurationError(
                "eval needs either --checkpoint/--data or --pred-dir/--truth-dir"
            )
        model, config = load_model(_require_file(args.checkpoint, "checkpoint"))
        params = _params_from_checkpoint(config)
        h, w = config.get("resolution", [256, 256])
        manifest = scan_dataset(args.data, (h, w))
        samples = load_all(manifest)
        summary = evaluate(model, samples, cache=RepresentationCache(params))
    _print_summary(summary)
    if args.out:
        import json

        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(summary.as_dict(), indent=2) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_run_config(_require_file(args.config, "config"))
    samples = _samples_from_config(cfg)
    if args.combos:
        combos = tuple(c.strip() for c in args.combos.split(",") if c.strip())
    else:
        combos = cfg.ablation_combos or TABLE_COMBOS

    def progress(combo, summary):
        print(f"[{combo:>12}] f1 {summary.f1_mean:.4f} +- {summary.f1_std:.4f}", flush=True)

    report = run_ablation(cfg.train, samples, combos=combos, jobs=args.jobs, progress=progress)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "ablation.csv"
    json_path = out_dir / "ablation.json"
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    best = report.best_combo("f1")
    print(f"best F1 combo: {best} ({report.combos[best].f1_mean:.4f})")
    print(f"wrote {csv_path} and {json_path}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glarekit",
        description="Glare segmentation: representations, training, and ablation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("represent", help="compute representation planes for one image")
    p.add_argument("--input", required=True)
    p.add_argument("--combo", default="RGB+HSV+G+C")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--window", type=int, default=17)
    p.add_argument(
        "--keep-intermediates",
        action="store_true",
        help="also write the HSV/C prerequisites of G when not requested",
    )
    p.set_defaults(func=cmd_represent)

    p = sub.add_parser("synth", help="write a synthetic glare dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--resolution", type=int, nargs="+", default=[128, 128])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate-data", help="check a dataset directory layout")
    p.add_argument("--data", required=True)
    p.add_argument("--resolution", type=int, nargs="+", default=[256, 256])
    p.set_defaults(func=cmd_validate_data)

    p = sub.add_parser("train", help="train one model on the configured dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="runs/train")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="segment one image with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="runs/predict")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="evaluate a checkpoint, or compare mask directories")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--pred-dir")
    p.add_argument("--truth-dir")
    p.add_argument("--out", help="also write the summary as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the representation ablation")
    p.add_argument("--config", required=True)
    p.add_argument("--combos", help="comma-separated subset, e.g. 'RGB+G,C'")
    p.add_argument("--out-dir", default="runs/ablation")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GlareKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
