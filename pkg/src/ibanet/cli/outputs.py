"""Artifact files written into the output directory."""

import logging
from collections import abc
from pathlib import Path

import polars as pl

from ibanet.config import RunConfig, effective_config
from ibanet.experiments import AblationRow, CrossValidationResult
from ibanet.metrics import AngleReport

FOLD_FIELDS = {"fold_id", "test_subject", "best_epoch", "best_val_accuracy", "metrics", "warnings"}


def prepare(config: RunConfig) -> Path:
    out = config.output.dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.txt").write_text(effective_config(config))
    return out


def _with_fold(tbl: pl.DataFrame, fold: int) -> pl.DataFrame:
    return tbl.select(pl.lit(fold).alias("fold"), pl.all())


def angle_frame(reports: abc.Sequence[AngleReport], **labels: str | float) -> pl.DataFrame:
    frames = [_with_fold(r.to_frame(), i) for i, r in enumerate(reports)]
    tbl = pl.concat(frames)
    return tbl.select(*(pl.lit(v).alias(k) for k, v in labels.items()), pl.all())


def write_cross_validation(out: Path, result: CrossValidationResult) -> None:
    (out / "metrics.json").write_text(
        result.model_dump_json(indent=2, include={"aggregate": True, "folds": {"__all__": FOLD_FIELDS}}) + "\n"
    )

    confusion = result.folds[0].confusion
    for fold in result.folds[1:]:
        confusion = confusion + fold.confusion
    confusion.write_csv(out / "confusion.csv")

    pl.DataFrame(
        [{"fold": f.fold_id, **h.model_dump()} for f in result.folds for h in f.history]
    ).write_csv(out / "history.csv")

    pl.concat([_with_fold(f.angles.to_frame(), f.fold_id) for f in result.folds]).write_csv(out / "angles.csv")

    routed = [_with_fold(f.router_rates.to_frame(), f.fold_id) for f in result.folds if f.router_rates is not None]
    router = pl.concat(routed) if routed else pl.DataFrame(schema={"fold": pl.Int32, "class": pl.Utf8})
    router.write_csv(out / "router_rates.csv")
    logging.info(f"wrote cross-validation artifacts to {out}")


def write_ablation(out: Path, rows: abc.Sequence[AblationRow]) -> None:
    (out / "metrics.json").write_text(
        "[\n" + ",\n".join(row.model_dump_json(indent=2, exclude={"angles"}) for row in rows) + "\n]\n"
    )
    pl.DataFrame(
        {
            "name": [r.name for r in rows],
            "variant": [r.variant for r in rows],
            "loss": [r.loss for r in rows],
            "tau": [r.tau for r in rows],
            "k": [r.k for r in rows],
            "mean_val_accuracy": [r.mean_val_accuracy for r in rows],
            "accuracy": [r.metrics.accuracy for r in rows],
            "macro_precision": [r.metrics.macro_precision for r in rows],
            "macro_recall": [r.metrics.macro_recall for r in rows],
            "macro_f1": [r.metrics.macro_f1 for r in rows],
            "angle_spread": [r.angle_spread for r in rows],
            "imbalance_ratio": [r.imbalance_ratio for r in rows],
        },
        schema_overrides={"imbalance_ratio": pl.Float64},
    ).write_csv(out / "ablation.csv")
    pl.concat([angle_frame(r.angles, row=r.name) for r in rows]).write_csv(out / "angles.csv")
    logging.info(f"wrote ablation artifacts to {out}")
