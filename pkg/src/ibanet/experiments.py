"""Cross-validation, grid search and the ablation studies built on top of it."""

import concurrent.futures
import itertools
import logging
from collections import abc

import numpy as np
import pydantic

from ibanet import fields, nc3
from ibanet.data.records import WindowDataset
from ibanet.data.splits import Fold, SplitPlan, class_stats, rebalance_minority, split
from ibanet.errors import ParameterError
from ibanet.metrics import AngleReport, MetricsReport, evaluate_predictions, mean_report, pairwise_angles, router_summary
from ibanet.training import FoldResult, TrainConfig, train

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_KS = (0.1, 0.2, 0.3, 0.4, 0.5, 1.0)
DEFAULT_KEEP_FRACTIONS = (1.0, 0.5, 0.2)


class CrossValidationResult(pydantic.BaseModel):
    folds: list[FoldResult]
    aggregate: MetricsReport

    @property
    def mean_val_accuracy(self) -> float:
        return float(np.mean([f.best_val_accuracy for f in self.folds]))

    @property
    def angle_spread(self) -> float:
        return float(np.mean([f.angles.spread for f in self.folds]))

    @property
    def warnings(self) -> list[str]:
        return [w for f in self.folds for w in f.warnings]


def run_fold(config: TrainConfig, dataset: WindowDataset, fold: Fold) -> FoldResult:
    logging.info(f"fold {fold.fold_id}: {len(fold.train)} train, {len(fold.val)} val, {len(fold.test)} test")
    test_set = dataset.subset(fold.test)
    trained = train(config, dataset.subset(fold.train), dataset.subset(fold.val))
    logits, rates = trained.model.infer(test_set.values)
    metrics, confusion = evaluate_predictions(test_set.labels, nc3.predict(logits), dataset.class_names)
    return FoldResult(
        fold_id=fold.fold_id,
        test_subject=fold.test_subject,
        history=trained.history,
        best_epoch=trained.best_epoch,
        best_val_accuracy=trained.best_val_accuracy,
        metrics=metrics,
        confusion=confusion,
        angles=pairwise_angles(trained.model.classifier_weights, dataset.class_names),
        router_rates=(
            router_summary(rates, test_set.labels, dataset.class_names, trained.model.spec.rate_labels)
            if rates is not None
            else None
        ),
        warnings=[*fold.warnings, *trained.warnings],
    )


def run_cross_validation(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    jobs: int = 1,
) -> CrossValidationResult:
    """One train and evaluate per fold; the aggregate is the unweighted mean of fold metrics."""
    folds = split(dataset, plan)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_fold, itertools.repeat(config), itertools.repeat(dataset), folds))
    else:
        results = [run_fold(config, dataset, fold) for fold in folds]
    results.sort(key=lambda r: r.fold_id)
    return CrossValidationResult(folds=results, aggregate=mean_report([r.metrics for r in results]))


class GridPoint(pydantic.BaseModel):
    tau: float
    k: float
    mean_val_accuracy: float
    metrics: MetricsReport


class GridResult(pydantic.BaseModel):
    points: list[GridPoint]
    best: GridPoint


def select_best(points: abc.Sequence[GridPoint]) -> GridPoint:
    """Highest mean validation accuracy; ties go to the smallest (tau, k)."""
    if not points:
        msg = "empty grid"
        raise ParameterError(msg)
    return min(points, key=lambda p: (-p.mean_val_accuracy, p.tau, p.k))


def grid_search(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    taus: abc.Sequence[float] = DEFAULT_GRID,
    ks: abc.Sequence[float] = DEFAULT_GRID,
    epochs: int | None = None,
    jobs: int = 1,
) -> GridResult:
    if not taus or not ks:
        msg = f"grid search needs nonempty grids, got taus={list(taus)} ks={list(ks)}"
        raise ParameterError(msg)

    points: list[GridPoint] = []
    for tau, k in itertools.product(taus, ks):
        cell = TrainConfig.model_validate(
            config.model_dump() | {"tau": tau, "k": k, "epochs": epochs or config.epochs}
        )
        cv = run_cross_validation(cell, dataset, plan, jobs=jobs)
        points.append(GridPoint(tau=tau, k=k, mean_val_accuracy=cv.mean_val_accuracy, metrics=cv.aggregate))
        logging.info(f"grid tau={tau:g} k={k:g}: val {points[-1].mean_val_accuracy:.2f}%")
    return GridResult(points=points, best=select_best(points))


class AblationRow(pydantic.BaseModel):
    name: str
    variant: str
    loss: fields.LossKind
    tau: float
    k: float
    mean_val_accuracy: float
    metrics: MetricsReport
    angle_spread: float
    imbalance_ratio: float | None = None
    angles: list[AngleReport] = pydantic.Field(default_factory=list)


def with_overrides(config: TrainConfig, **overrides: object) -> TrainConfig:
    return TrainConfig.model_validate(config.model_dump() | overrides)


def baseline_config(config: TrainConfig, rate_hz: float) -> TrainConfig:
    """Single-rate network trained with plain cross-entropy and no ETF branch."""
    return with_overrides(config, variant=f"single_rate:{rate_hz:.12g}", loss="cross_entropy", k=0.0)


def _row(
    name: str,
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    jobs: int,
    imbalance_ratio: float | None = None,
) -> AblationRow:
    logging.info(f"ablation row {name!r}: variant {config.variant}, loss {config.loss}, k {config.k:g}")
    cv = run_cross_validation(config, dataset, plan, jobs=jobs)
    return AblationRow(
        name=name,
        variant=config.variant,
        loss=config.loss,
        tau=config.tau,
        k=config.k,
        mean_val_accuracy=cv.mean_val_accuracy,
        metrics=cv.aggregate,
        angle_spread=cv.angle_spread,
        imbalance_ratio=imbalance_ratio,
        angles=[f.angles for f in cv.folds],
    )


def fusion_ablation(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    modes: abc.Sequence[fields.FusionMode] = fields.FUSION_MODES,
    jobs: int = 1,
) -> list[AblationRow]:
    return [_row(mode, with_overrides(config, variant=f"fusion:{mode}"), dataset, plan, jobs) for mode in modes]


def module_ablation(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    baseline_rate_hz: float,
    jobs: int = 1,
) -> list[AblationRow]:
    """Baseline, NC3 only, MFC only and the full model."""
    single = f"single_rate:{baseline_rate_hz:.12g}"
    multi = "iba_net"
    return [
        _row("baseline", baseline_config(config, baseline_rate_hz), dataset, plan, jobs),
        _row("nc3", with_overrides(config, variant=single, loss="cb_focal"), dataset, plan, jobs),
        _row("mfc", with_overrides(config, variant=multi, k=0.0), dataset, plan, jobs),
        _row("mfc+nc3", with_overrides(config, variant=multi), dataset, plan, jobs),
    ]


def rate_ablation(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    jobs: int = 1,
) -> list[AblationRow]:
    """Each configured rate on its own against the multi-rate model, the rest of the recipe held fixed."""
    rows = []
    for factor in config.factors:
        rate = dataset.sampling_rate_hz / factor
        rows.append(_row(f"{rate:g}Hz", with_overrides(config, variant=f"single_rate:{rate:.12g}"), dataset, plan, jobs))
    rows.append(_row("multi-rate", with_overrides(config, variant="iba_net"), dataset, plan, jobs))
    return rows


def k_sweep(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    ks: abc.Sequence[float] = DEFAULT_KS,
    jobs: int = 1,
) -> list[AblationRow]:
    return [_row(f"k={k:g}", with_overrides(config, k=k), dataset, plan, jobs) for k in ks]


def imbalance_robustness(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    baseline_rate_hz: float,
    keep_fractions: abc.Sequence[float] = DEFAULT_KEEP_FRACTIONS,
    minority_threshold: float = 0.05,
    seed: int = 0,
    jobs: int = 1,
) -> list[AblationRow]:
    """Thin the minority classes further and compare the baseline with the full model at each level."""
    rows = []
    for fraction in keep_fractions:
        thinned = rebalance_minority(dataset, fraction, minority_threshold=minority_threshold, seed=seed)
        ratio = class_stats(thinned.labels, thinned.n_classes).imbalance_ratio
        logging.info(f"keep fraction {fraction:g}: {len(thinned)} windows, imbalance ratio {ratio:.1f}")
        rows.append(
            _row(f"baseline@{fraction:g}", baseline_config(config, baseline_rate_hz), thinned, plan, jobs, ratio)
        )
        rows.append(_row(f"iba_net@{fraction:g}", with_overrides(config, variant="iba_net"), thinned, plan, jobs, ratio))
    return rows


def angle_dispersion(
    config: TrainConfig,
    dataset: WindowDataset,
    plan: SplitPlan,
    jobs: int = 1,
) -> list[AblationRow]:
    """FC-branch classifier geometry with and without the ETF branch."""
    rows = [_row("without-nc3", with_overrides(config, k=0.0), dataset, plan, jobs)]
    if config.k > 0:
        rows.append(_row("with-nc3", config, dataset, plan, jobs))
    return rows
