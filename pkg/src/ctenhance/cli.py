"""Command-line entry point.

Subcommands: simulate, train, evaluate, rank, enhance, diff-map,
analyze-embeddings. Every run writes its effective configuration next to
its outputs, succeeds with exit code 0, and reports failures as a JSON
object on stderr with a nonzero exit code. ``CTENHANCE_DATA_ROOT`` supplies
the default dataset location.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

DATA_ROOT_ENV = "CTENHANCE_DATA_ROOT"


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit with plain text
        raise CliError(message, code=2)


def _data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def _record_config(target: Path, command: str, args: argparse.Namespace) -> None:
    effective = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k != "handler"
    }
    payload = {"command": command, "config": effective}
    if target.is_dir():
        config_path = target / "run_config.json"
    else:
        config_path = target.with_name(target.name + ".config.json")
    config_path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise CliError(f"config file {path} does not exist")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _child_seed(*entropy) -> int:
    parts = [
        int.from_bytes(hashlib.sha256(item.encode()).digest()[:4], "little")
        if isinstance(item, str)
        else int(item)
        for item in entropy
    ]
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _npy_slices(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise CliError(f"{directory} is not a directory")
    files = sorted(p for p in directory.glob("*.npy"))
    if not files:
        raise CliError(f"no .npy slices found in {directory}")
    return files


def _save_png(path: Path, values01: np.ndarray) -> None:
    from PIL import Image

    arr = np.clip(np.asarray(values01, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path)


# ---------------------------------------------------------------- simulate


def _cmd_simulate(args: argparse.Namespace) -> None:
    from .data import (
        NoiseModelConfig,
        save_manifest,
        save_slice,
        scan_dataset,
        simulate_low_dose,
        synthetic_body_slice,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in range(args.patients):
        patient = f"patient{p:02d}"
        for s in range(args.slices_per_patient):
            hd = synthetic_body_slice(
                size=args.size,
                seed=_child_seed(args.seed, "phantom", p, s),
                patient_id=patient,
                slice_index=s,
            )
            noise = NoiseModelConfig(
                incident_photons=args.photons,
                electronic_sigma=args.electronic_sigma,
                seed=_child_seed(args.seed, "noise", p, s),
            )
            pair = simulate_low_dose(hd, noise, n_angles=args.n_angles)
            save_slice(pair.hdct, out / patient / f"{s:04d}_high.npy")
            save_slice(pair.ldct, out / patient / f"{s:04d}_low.npy")
    manifest = scan_dataset(out)
    save_manifest(manifest, out / "manifest.json")
    _record_config(out, "simulate", args)
    _emit({
        "manifest": str(out / "manifest.json"),
        "patients": args.patients,
        "pairs": len(manifest.entries),
    })


# ------------------------------------------------------------------- train


def _load_pairs(entries):
    from .data import PairedSample, load_slice

    pairs = []
    for e in entries:
        low = load_slice(e.ldct_path, patient_id=e.patient_id, slice_index=e.slice_index)
        high = load_slice(e.hdct_path, patient_id=e.patient_id, slice_index=e.slice_index)
        pairs.append(PairedSample(ldct=low, hdct=high))
    return pairs


def _resolve_manifest(arg: str | None) -> Path:
    if arg is not None:
        return Path(arg)
    default = _data_root() / "manifest.json"
    if not default.exists():
        raise CliError(
            f"no --data given and {default} does not exist (set {DATA_ROOT_ENV} or pass --data)"
        )
    return default


def _cmd_train(args: argparse.Namespace) -> None:
    from .data import load_manifest, split_dataset
    from .models import ModelConfig
    from .training import TrainConfig, train

    manifest = load_manifest(_resolve_manifest(args.data))
    raw = _load_config_file(Path(args.config)) if args.config else {}
    model_cfg = ModelConfig.from_dict(raw.get("model", {}))
    train_cfg = TrainConfig.from_dict(raw.get("train", {}))

    overrides = {
        "total_iterations": args.iterations,
        "seed": args.seed,
        "loss_arm": args.loss_arm,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "validate_every": args.validate_every,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        train_cfg = dataclasses.replace(train_cfg, **overrides)

    split = split_dataset(manifest, seed=train_cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(
        model_cfg,
        train_cfg,
        _load_pairs(split.train),
        val_pairs=_load_pairs(split.val),
        out_dir=out,
    )
    _record_config(out, "train", args)
    _emit({
        "checkpoint": str(out / "checkpoint.pt"),
        "iterations": train_cfg.total_iterations,
        "final_loss": result.losses[-1],
        "validations": [
            {"iteration": it, "psnr": report.metrics["psnr"].value}
            for it, report in result.validations
        ],
    })


# ---------------------------------------------------------------- evaluate

KNOWN_METRICS = ("psnr", "ssim", "vif_p", "lpips", "dists", "piqe")


def _cmd_evaluate(args: argparse.Namespace) -> None:
    from .data import load_slice, normalize_hu
    from .metrics import (
        aggregate_report,
        dists,
        load_calibration,
        perceptual_distance,
        piqe,
        psnr,
        save_report,
        ssim,
        vif_p,
    )

    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in wanted if m not in KNOWN_METRICS]
    if unknown:
        raise CliError(f"unknown metrics {unknown}; choose from {list(KNOWN_METRICS)}")
    if not wanted:
        raise CliError("no metrics requested")

    pred_files = _npy_slices(Path(args.pred))
    ref_by_name = {p.name: p for p in _npy_slices(Path(args.ref))}
    missing = [p.name for p in pred_files if p.name not in ref_by_name]
    if missing:
        raise CliError(f"reference slices missing for: {missing[:4]}")

    backbone = None
    calibration = None
    notes: dict[str, str] = {}
    if "lpips" in wanted or "dists" in wanted:
        from .perception import FeatureBackbone

        weights = Path(args.backbone_weights) if args.backbone_weights else None
        backbone = FeatureBackbone(weights)
        if args.calibration:
            calibration = load_calibration(args.calibration)
        else:
            for name in ("lpips", "dists"):
                if name in wanted:
                    notes[name] = "uncalibrated"
        if not backbone.pretrained:
            for name in ("lpips", "dists"):
                if name in wanted:
                    notes[name] = notes.get(name, "") + " random-backbone"
                    notes[name] = notes[name].strip()

    per_image = []
    for pred_path in pred_files:
        pred = normalize_hu(load_slice(pred_path).pixels)
        ref = normalize_hu(load_slice(ref_by_name[pred_path.name]).pixels)
        values: dict[str, float] = {}
        for metric in wanted:
            if metric == "psnr":
                values[metric] = psnr(ref, pred)
            elif metric == "ssim":
                values[metric] = ssim(ref, pred)
            elif metric == "vif_p":
                values[metric] = vif_p(ref, pred)
            elif metric == "lpips":
                values[metric] = perceptual_distance(ref, pred, backbone, calibration)
            elif metric == "dists":
                values[metric] = dists(ref, pred, backbone)
            elif metric == "piqe":
                values[metric] = piqe(pred)
        per_image.append(values)

    report = aggregate_report(args.method, per_image, notes=notes)
    out = Path(args.out)
    save_report(report, out)
    _record_config(out, "evaluate", args)
    _emit({
        "report": str(out),
        "method": args.method,
        "images": len(per_image),
        "metrics": {name: mv.value for name, mv in report.metrics.items()},
    })


# --------------------------------------------------------------------- rank


def _cmd_rank(args: argparse.Namespace) -> None:
    from .metrics import api_rank, load_report

    reports = [load_report(p) for p in args.reports]
    table = api_rank(reports)
    out = Path(args.out)
    out.write_text(table.to_json())
    _record_config(out, "rank", args)
    _emit({
        "table": str(out),
        "ranking": [
            {"rank": e.rank, "method": e.method, "api": e.api} for e in table.entries
        ],
    })


# ------------------------------------------------------------------ enhance


def _cmd_enhance(args: argparse.Namespace) -> None:
    from .data import hu_window, load_slice, save_slice
    from .inference import DISPLAY_WINDOW, enhance_slice, load_model

    model, _ = load_model(args.checkpoint)
    files = _npy_slices(Path(args.input))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in files:
        enhanced = enhance_slice(model, load_slice(path))
        target = out / path.name
        save_slice(enhanced, target)
        written.append(str(target))
        if args.display:
            display = hu_window(enhanced.pixels, *DISPLAY_WINDOW)
            _save_png(out / (path.stem + "_display.png"), display)
    _record_config(out, "enhance", args)
    _emit({"outputs": written, "display_window": list(DISPLAY_WINDOW) if args.display else None})


# ----------------------------------------------------------------- diff-map


def _cmd_diff_map(args: argparse.Namespace) -> None:
    from .data import load_slice
    from .inference import diff_map

    pred = load_slice(args.pred)
    ref = load_slice(args.ref)
    scaled = diff_map(pred.pixels, ref.pixels, max_hu=args.max_hu)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(out.with_suffix(".npy"), scaled.astype(np.float32))
    _save_png(out.with_suffix(".png"), scaled)
    _record_config(out.with_suffix(".png"), "diff-map", args)
    _emit({
        "data": str(out.with_suffix(".npy")),
        "image": str(out.with_suffix(".png")),
        "max_hu": args.max_hu,
    })


# ------------------------------------------------------- analyze-embeddings


def _cmd_analyze_embeddings(args: argparse.Namespace) -> None:
    from .data import load_manifest
    from .models import SemanticEncoder, SemanticEncoderConfig, embed_analysis

    manifest = load_manifest(_resolve_manifest(args.data))
    entries = manifest.entries[: args.limit] if args.limit else manifest.entries
    pairs = _load_pairs(entries)
    encoder = SemanticEncoder(
        SemanticEncoderConfig(weights_path=args.encoder_weights)
    )
    points = embed_analysis(pairs, encoder)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for point in points:
            fh.write(json.dumps(point) + "\n")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 6))
        for dose, color in (("low", "tab:red"), ("high", "tab:blue")):
            xs = [p["x"] for p in points if p["dose"] == dose]
            ys = [p["y"] for p in points if p["dose"] == dose]
            ax.scatter(xs, ys, s=12, c=color, label=f"{dose} dose")
        ax.legend()
        ax.set_title("Pooled slice embeddings (2D projection)")
        fig.savefig(args.plot, dpi=120)
        plt.close(fig)
    _record_config(out, "analyze-embeddings", args)
    _emit({
        "points": str(out),
        "count": len(points),
        "pretrained_encoder": encoder.pretrained,
        "plot": args.plot,
    })


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctenhance", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic paired low/high-dose dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, default=4)
    p.add_argument("--slices-per-patient", type=int, default=4)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--n-angles", type=int, default=180)
    p.add_argument("--photons", type=float, default=2.0e3)
    p.add_argument("--electronic-sigma", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("train", help="train the enhancement model on a manifest")
    p.add_argument("--data", help="manifest path (default: $%s/manifest.json)" % DATA_ROOT_ENV)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="TOML or JSON file with [model] and [train] tables")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss-arm", choices=["mse", "charbonnier", "perceptual"])
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--validate-every", type=int)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("evaluate", help="compute image quality metrics for a method")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metrics", default="psnr,ssim,vif_p,lpips,dists,piqe")
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="method")
    p.add_argument("--backbone-weights")
    p.add_argument("--calibration")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("rank", help="rank methods by pairwise wins across metrics")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_rank)

    p = sub.add_parser("enhance", help="run a checkpoint over a directory of slices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--display", action="store_true", help="also write windowed PNGs")
    p.set_defaults(handler=_cmd_enhance)

    p = sub.add_parser("diff-map", help="scaled absolute-difference image of two slices")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True, help="output basename (.npy and .png are written)")
    p.add_argument("--max-hu", type=float, default=200.0)
    p.set_defaults(handler=_cmd_diff_map)

    p = sub.add_parser("analyze-embeddings", help="2D projection of paired slice embeddings")
    p.add_argument("--data", help="manifest path (default: $%s/manifest.json)" % DATA_ROOT_ENV)
    p.add_argument("--out", required=True, help="JSON lines output path")
    p.add_argument("--plot", help="optional scatter plot PNG path")
    p.add_argument("--limit", type=int, default=0, help="use only the first N pairs")
    p.add_argument("--encoder-weights")
    p.set_defaults(handler=_cmd_analyze_embeddings)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.handler(args)
        return 0
    except CliError as exc:
        print(
            json.dumps({"error": {"type": "usage", "message": str(exc)}}),
            file=sys.stderr,
        )
        return exc.code
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports all failures
        print(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
