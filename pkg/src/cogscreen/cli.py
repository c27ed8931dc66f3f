"""Command-line entry points for the dialogue screening pipeline.

Subcommands: gen-synthetic, select-features, train, evaluate, predict,
ensemble. Every run creates its output directory first and records the full
resolved configuration in a `run.json` there, so any result can be replayed
bit-identically. All randomness flows from one --seed through named
substreams; no output line carries a timestamp.

Exit codes: 0 success, 2 usage or bad configuration, 3 data error,
4 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .datamodel import (
    DataError,
    Dialogue,
    DatasetManifest,
    feature_matrix_from_dialogues,
    load_dataset,
    load_manifest,
    normalize,
)
from .evaluation import (
    classification_metrics,
    ensemble,
    metrics_csv,
    regression_metrics,
    severity_report,
)
from .feature_select import select_features
from .network import ModelConfig, load_model, predict, save_model
from .synthetic import SyntheticSpec, generate_dataset
from .training import TrainConfig, TrainingDiverged, _mask_hc, cross_validate

__all__ = ["main"]

_MODALITY_CHOICES = {
    "acoustic": ("acoustic",),
    "textual": ("textual",),
    "both": ("acoustic", "textual"),
}


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _start_run(args, command: str, resolved: dict) -> Path:
    """Create the output directory and record the resolved run config before
    any other write happens."""
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "run.json", {"command": command, "config": resolved})
    return out_dir


def _load_json_file(path) -> dict:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return obj


def _write_predictions(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# gen-synthetic
# ---------------------------------------------------------------------------


def _cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        n_dialogues=args.n,
        acoustic_dim=args.acoustic_dim,
        textual_dim=args.textual_dim,
        pos_dim=args.pos_dim,
        hc_dim=args.hc_dim,
        separation=args.separation,
        mmse_noise=args.mmse_noise,
        folds=args.folds,
        seed=args.seed,
    )
    out_dir = _start_run(args, "gen-synthetic", spec.to_json())
    manifest_path = generate_dataset(spec, out_dir)
    print(f"wrote {spec.n_dialogues} dialogues and {manifest_path.name}")
    return 0


# ---------------------------------------------------------------------------
# select-features
# ---------------------------------------------------------------------------


def _cmd_select_features(args) -> int:
    out_dir = _start_run(args, "select-features", {
        "manifest": str(args.manifest), "stream": args.stream,
        "alpha": args.alpha,
    })
    manifest = load_manifest(args.manifest)
    dialogues = load_dataset(manifest)
    matrix = feature_matrix_from_dialogues(dialogues, stream=args.stream)
    result = select_features(matrix, matrix.labels, args.alpha)
    result.save(out_dir / "selection.json")
    print(f"kept {len(result.kept_indices)} of {len(matrix.names)} "
          f"{args.stream} features at alpha {args.alpha}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _resolve_model_config(args, manifest: DatasetManifest) -> ModelConfig:
    """Architecture knobs come from --config; data dims always come from the
    manifest and the modality flags, overriding any dims in the file."""
    overrides = _load_json_file(args.config) if args.config else {}
    textual_dim = manifest.textual_dim
    if args.use_pos:
        if manifest.pos_dim < 1:
            raise DataError("manifest has no POS features but --use-pos was given")
        textual_dim += manifest.pos_dim
    modalities = _MODALITY_CHOICES[args.modality]
    if "d_model" not in overrides:
        # the shared projection is as wide as the widest input stream
        dims = [manifest.acoustic_dim] if "acoustic" in modalities else []
        if "textual" in modalities:
            dims.append(textual_dim)
        overrides["d_model"] = max(dims)
    overrides.update(
        acoustic_dim=manifest.acoustic_dim,
        textual_dim=textual_dim,
        hc_dim=manifest.hc_dim,
        modalities=modalities,
        use_hc=args.use_hc,
        use_pos=args.use_pos,
    )
    return ModelConfig.from_json({**ModelConfig().to_json(), **overrides})


def _resolve_train_config(args) -> TrainConfig:
    base = TrainConfig().to_json()
    if args.train_config:
        base.update(_load_json_file(args.train_config))
    for key, value in (
        ("lr", args.lr), ("epochs", args.epochs),
        ("batch_size", args.batch_size), ("seed", args.seed),
        ("folds", args.folds), ("select_alpha", args.alpha),
    ):
        if value is not None:
            base[key] = value
    return TrainConfig.from_json(base)


def _fold_metrics(outcome) -> dict:
    preds = []
    for d in outcome.prepared.val:
        p_ad, mmse = predict(d, outcome.result.store, outcome.prepared.config)
        preds.append((d.id, p_ad, p_ad >= 0.5, mmse, d.label_ad, d.label_mmse))
    acc = float(np.mean([p[2] == p[4] for p in preds]))
    rmse = float(np.sqrt(np.mean([(p[3] - p[5]) ** 2 for p in preds])))
    return {
        "fold": outcome.fold,
        "best_epoch": outcome.result.best_epoch,
        "diverged": outcome.result.diverged,
        "val_accuracy": acc,
        "val_rmse": rmse,
        "kept_hc": outcome.prepared.hc_mask,
        "predictions": preds,
    }


def _cmd_train(args) -> int:
    # record intent first so even a failed load leaves a run.json behind
    out_dir = _start_run(args, "train", {"manifest": str(args.manifest)})
    manifest = load_manifest(args.manifest)
    model_config = _resolve_model_config(args, manifest)
    train_config = _resolve_train_config(args)
    _write_json(out_dir / "run.json", {"command": "train", "config": {
        "manifest": str(args.manifest),
        "model": model_config.to_json(),
        "train": train_config.to_json(),
        "select_once": args.select_once,
    }})
    dialogues = load_dataset(manifest, use_pos=args.use_pos)

    assignments = None
    if manifest.folds and len(set(manifest.folds.values())) == train_config.folds:
        assignments = manifest.folds

    hc_mask = None
    if args.select_once and args.use_hc:
        # one screening pass over everything; the default refits per fold so
        # validation rows never influence their own feature set
        matrix = feature_matrix_from_dialogues(dialogues, stream="hc")
        result = select_features(matrix, matrix.labels, train_config.select_alpha)
        hc_mask = result.kept_indices or [int(np.argmin(result.p_values))]
        result.save(out_dir / "selection.json")

    outcomes = cross_validate(
        dialogues, model_config, train_config,
        fold_assignments=assignments, hc_mask=hc_mask, log_fn=print,
    )

    summaries = []
    pooled = []
    for outcome in outcomes:
        fold_dir = out_dir / f"fold{outcome.fold}"
        fold_dir.mkdir(exist_ok=True)
        save_model(fold_dir / "model.ckpt", outcome.result.store,
                   outcome.prepared.config, outcome.prepared.norm_stats,
                   outcome.prepared.hc_mask)
        with open(fold_dir / "epochs.log", "w", encoding="utf-8") as fh:
            for entry in outcome.result.log:
                fh.write(entry.line() + "\n")
        _write_json(fold_dir / "epochs.json",
                    [entry.to_json() for entry in outcome.result.log])
        summary = _fold_metrics(outcome)
        pooled.extend(summary.pop("predictions"))
        summaries.append(summary)

    pooled_cls = classification_metrics([p[2] for p in pooled], [p[4] for p in pooled])
    pooled_reg = regression_metrics(
        np.array([p[3] for p in pooled]), np.array([float(p[5]) for p in pooled])
    )
    report = {
        "folds": summaries,
        "mean_val_accuracy": float(np.mean([s["val_accuracy"] for s in summaries])),
        "mean_val_rmse": float(np.mean([s["val_rmse"] for s in summaries])),
        "pooled_classification": pooled_cls.to_json(),
        "pooled_regression": pooled_reg.to_json(),
    }
    _write_json(out_dir / "cv_metrics.json", report)
    (out_dir / "metrics.csv").write_text(metrics_csv(pooled_cls, pooled_reg),
                                         encoding="utf-8")
    _write_predictions(out_dir / "predictions.csv", [
        {"id": p[0], "p_ad": f"{p[1]:.6f}", "label_ad": int(p[2]),
         "mmse": f"{p[3]:.4f}"} for p in pooled
    ])
    print(f"mean val accuracy {report['mean_val_accuracy']:.4f} "
          f"rmse {report['mean_val_rmse']:.4f}")
    if any(s["diverged"] for s in summaries):
        print("training diverged; parameters reverted to last finite state",
              file=sys.stderr)
        return 4
    return 0


# ---------------------------------------------------------------------------
# evaluate / predict
# ---------------------------------------------------------------------------


def _member_predictions(model_paths, manifest: DatasetManifest) -> tuple[list[Dialogue], list[dict]]:
    """Run every checkpoint over the manifest's dialogues, applying that
    checkpoint's own feature mask and normalization."""
    members = []
    cache: dict[bool, list[Dialogue]] = {}
    dialogues: list[Dialogue] = []
    for path in model_paths:
        store, config, stats, mask = load_model(path)
        if config.use_pos not in cache:
            cache[config.use_pos] = load_dataset(manifest, use_pos=config.use_pos)
        dialogues = cache[config.use_pos]
        shaped = _mask_hc(dialogues, mask) if (config.use_hc and mask is not None) else list(dialogues)
        if stats is not None:
            shaped = normalize(shaped, stats)
        members.append({
            d.id: predict(d, store, config) for d in shaped
        })
    return dialogues, members


def _combined_rows(dialogues, members) -> list[dict]:
    rows = []
    for d in dialogues:
        p_ads = [m[d.id][0] for m in members]
        mmses = [m[d.id][1] for m in members]
        label, mmse = ensemble([(p >= 0.5, s) for p, s in zip(p_ads, mmses)])
        rows.append({
            "id": d.id,
            "p_ad": f"{float(np.mean(p_ads)):.6f}",
            "label_ad": int(label),
            "mmse": f"{mmse:.4f}",
        })
    return rows


def _cmd_predict(args) -> int:
    out_dir = _start_run(args, "predict", {
        "models": [str(p) for p in args.models], "manifest": str(args.manifest),
    })
    manifest = load_manifest(args.manifest)
    dialogues, members = _member_predictions(args.models, manifest)
    rows = _combined_rows(dialogues, members)
    _write_predictions(out_dir / "predictions.csv", rows)
    print(f"wrote predictions for {len(rows)} dialogues "
          f"({len(members)} model{'s' if len(members) != 1 else ''})")
    return 0


def _cmd_evaluate(args) -> int:
    out_dir = _start_run(args, "evaluate", {
        "models": [str(p) for p in args.models], "manifest": str(args.manifest),
    })
    manifest = load_manifest(args.manifest)
    dialogues, members = _member_predictions(args.models, manifest)
    for d in dialogues:
        if d.label_ad is None or d.label_mmse is None:
            raise DataError(f"dialogue {d.id!r} lacks labels; use predict instead")
    rows = _combined_rows(dialogues, members)
    _write_predictions(out_dir / "predictions.csv", rows)

    truths_ad = [d.label_ad for d in dialogues]
    truths_mmse = np.array([float(d.label_mmse) for d in dialogues])
    preds_ad = [bool(int(r["label_ad"])) for r in rows]
    preds_mmse = np.array([float(r["mmse"]) for r in rows])
    cls = classification_metrics(preds_ad, truths_ad)
    reg = regression_metrics(preds_mmse, truths_mmse)
    severity = severity_report(preds_mmse, truths_mmse)
    (out_dir / "metrics.csv").write_text(metrics_csv(cls, reg), encoding="utf-8")
    (out_dir / "severity.svg").write_text(severity.svg, encoding="utf-8")
    _write_json(out_dir / "metrics.json", {
        "classification": cls.to_json(),
        "regression": reg.to_json(),
        "severity_agreement": severity.agreement,
    })
    print(f"accuracy {cls.accuracy:.4f} rmse {reg.rmse:.4f} "
          f"severity agreement {severity.agreement * 100:.2f}%")
    return 0


# ---------------------------------------------------------------------------
# ensemble (combine prediction tables)
# ---------------------------------------------------------------------------


def _read_predictions(path) -> dict[str, tuple[float, bool, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return {
            row["id"]: (float(row["p_ad"]), bool(int(row["label_ad"])),
                        float(row["mmse"]))
            for row in reader
        }


def _cmd_ensemble(args) -> int:
    out_dir = _start_run(args, "ensemble", {
        "inputs": [str(p) for p in args.inputs],
    })
    tables = [_read_predictions(p) for p in args.inputs]
    ids = list(tables[0])
    for path, table in zip(args.inputs, tables[1:], strict=False):
        if set(table) != set(ids):
            raise DataError(f"{path}: dialogue ids do not match the first table")
    rows = []
    for did in ids:
        members = [(t[did][1], t[did][2]) for t in tables]
        label, mmse = ensemble(members)
        rows.append({
            "id": did,
            "p_ad": f"{float(np.mean([t[did][0] for t in tables])):.6f}",
            "label_ad": int(label),
            "mmse": f"{mmse:.4f}",
        })
    _write_predictions(out_dir / "predictions.csv", rows)
    print(f"combined {len(tables)} tables over {len(rows)} dialogues")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogscreen",
        description="Dementia screening from dialogue feature files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic labeled corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=108)
    p.add_argument("--acoustic-dim", type=int, default=128)
    p.add_argument("--textual-dim", type=int, default=1024)
    p.add_argument("--pos-dim", type=int, default=12)
    p.add_argument("--hc-dim", type=int, default=23)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--mmse-noise", type=float, default=1.0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("select-features", help="screen features by group separation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stream", choices=("hc", "acoustic", "textual"), default="hc")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_select_features)

    p = sub.add_parser("train", help="cross-validated training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON file of architecture overrides")
    p.add_argument("--train-config", help="JSON file of optimizer overrides")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--modality", choices=sorted(_MODALITY_CHOICES), default="both")
    p.add_argument("--use-pos", action="store_true")
    p.add_argument("--use-hc", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--select-once", action="store_true",
                   help="screen features once on all data instead of per fold")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="metrics and severity plot for labeled data")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="per-dialogue class and score table")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("ensemble", help="combine prediction tables by vote and median")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_ensemble)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
