import logging
import math
import typing

import numpy as np
import pydantic
from sklearn.model_selection import StratifiedKFold

from ibanet import fields
from ibanet.data.records import WindowDataset
from ibanet.errors import ParameterError


class SplitPlan(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    scheme: fields.SplitScheme = "leave_one_subject_out"
    k: pydantic.PositiveInt = 5
    train_folds: pydantic.PositiveInt = 3
    val_folds: pydantic.PositiveInt = 1
    test_folds: pydantic.PositiveInt = 1
    seed: int = 0

    @pydantic.model_validator(mode="after")
    def check_fold_counts(self) -> typing.Self:
        if self.scheme == "stratified_kfold" and self.train_folds + self.val_folds + self.test_folds != self.k:
            msg = f"train/val/test fold counts must add up to k={self.k}"
            raise ParameterError(msg)
        return self


class Fold(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    fold_id: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    test_subject: str | None = None
    warnings: list[str] = pydantic.Field(default_factory=list)


class ClassStats(pydantic.BaseModel):
    counts: list[int]
    imbalance_ratio: float


def subject_order(dataset: WindowDataset) -> list[str]:
    _, first = np.unique(dataset.subjects, return_index=True)
    return [str(dataset.subjects[i]) for i in sorted(first)]


def _missing_classes(dataset: WindowDataset, indices: np.ndarray) -> list[int]:
    present = set(dataset.labels[indices].tolist())
    return [c for c in range(dataset.n_classes) if c not in present]


def _loso(dataset: WindowDataset) -> list[Fold]:
    subjects = subject_order(dataset)
    if len(subjects) < 3:
        msg = f"leave-one-subject-out needs at least 3 subjects, got {len(subjects)}"
        raise ParameterError(msg)

    folds: list[Fold] = []
    for i, subject in enumerate(subjects):
        val_subject = subjects[(i + 1) % len(subjects)]
        test = np.flatnonzero(dataset.subjects == subject)
        val = np.flatnonzero(dataset.subjects == val_subject)
        train = np.flatnonzero((dataset.subjects != subject) & (dataset.subjects != val_subject))
        fold = Fold(fold_id=i, train=train, val=val, test=test, test_subject=subject)
        if missing := _missing_classes(dataset, train):
            msg = f"fold {i} (test subject {subject}): classes {missing} absent from the training split"
            logging.warning(msg)
            fold.warnings.append(msg)
        folds.append(fold)
    return folds


def _stratified(dataset: WindowDataset, plan: SplitPlan) -> list[Fold]:
    counts = dataset.counts()
    if counts.min() < plan.k:
        msg = f"stratified {plan.k}-fold needs at least {plan.k} samples per class, got counts {counts.tolist()}"
        raise ParameterError(msg)

    splitter = StratifiedKFold(n_splits=plan.k, shuffle=True, random_state=plan.seed)
    parts = [test for _, test in splitter.split(np.zeros(len(dataset)), dataset.labels)]
    folds: list[Fold] = []
    for i in range(plan.k):
        rotation = [parts[(i + j) % plan.k] for j in range(plan.k)]
        test = np.sort(np.concatenate(rotation[: plan.test_folds]))
        val = np.sort(np.concatenate(rotation[plan.test_folds : plan.test_folds + plan.val_folds]))
        train = np.sort(np.concatenate(rotation[plan.test_folds + plan.val_folds :]))
        folds.append(Fold(fold_id=i, train=train, val=val, test=test))
    return folds


def split(dataset: WindowDataset, plan: SplitPlan) -> list[Fold]:
    if plan.scheme == "leave_one_subject_out":
        return _loso(dataset)
    return _stratified(dataset, plan)


def class_stats(labels: np.ndarray, n_classes: int) -> ClassStats:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    if counts.size == 0 or counts.min() < 1:
        msg = f"every class needs at least one sample, got counts {counts.tolist()}"
        raise ParameterError(msg)
    return ClassStats(counts=counts.tolist(), imbalance_ratio=float(counts.max() / counts.min()))


def rebalance_minority(
    dataset: WindowDataset,
    keep_fraction: float,
    minority_threshold: float = 0.05,
    seed: int = 0,
) -> WindowDataset:
    """Randomly thin classes smaller than `minority_threshold` of the largest class.

    Thinned classes keep count * keep_fraction samples rounded half up, and never
    fewer than one, so every class survives into the imbalance statistics.
    """
    if not 0 < keep_fraction <= 1:
        msg = f"keep_fraction must lie in (0, 1], got {keep_fraction}"
        raise ParameterError(msg)
    if keep_fraction == 1:
        return dataset

    rng = np.random.default_rng(seed)
    counts = dataset.counts()
    keep = np.ones(len(dataset), dtype=bool)
    for label, count in enumerate(counts):
        if count == 0 or count >= minority_threshold * counts.max():
            continue
        members = np.flatnonzero(dataset.labels == label)
        retained = max(1, math.floor(count * keep_fraction + 0.5))
        dropped = rng.choice(members, size=count - retained, replace=False)
        keep[dropped] = False
        logging.info(f"class {dataset.class_names[label]}: keeping {retained} of {count}")
    return dataset.subset(np.flatnonzero(keep))
