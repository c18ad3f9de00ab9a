import typing
from collections import abc
from pathlib import Path

import numpy as np
import polars as pl
import pydantic
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from ibanet.errors import DimensionError, ParameterError


class ClassMetrics(pydantic.BaseModel):
    name: str
    precision: float
    recall: float
    f1: float
    support: int


class MetricsReport(pydantic.BaseModel):
    """Percentages; macro values are unweighted means over classes."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[ClassMetrics]


class ConfusionMatrix(pydantic.BaseModel):
    """Rows are true classes, columns predicted classes."""

    class_names: list[str]
    counts: list[list[int]]

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))

    def accuracy(self) -> float:
        counts = np.asarray(self.counts)
        return 100.0 * float(np.trace(counts)) / max(int(counts.sum()), 1)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        counts = np.asarray(self.counts) + np.asarray(other.counts)
        return ConfusionMatrix(class_names=self.class_names, counts=counts.tolist())

    def to_frame(self) -> pl.DataFrame:
        columns: dict[str, list] = {"true": self.class_names}
        for j, name in enumerate(self.class_names):
            columns[name] = [row[j] for row in self.counts]
        return pl.DataFrame(columns)

    def write_csv(self, dst: Path) -> None:
        self.to_frame().write_csv(dst)


class AngleReport(pydantic.BaseModel):
    class_names: list[str]
    degrees: list[list[float]]

    def off_diagonal(self) -> np.ndarray:
        degrees = np.asarray(self.degrees)
        return degrees[~np.eye(len(degrees), dtype=bool)]

    @property
    def min(self) -> float:
        return float(self.off_diagonal().min())

    @property
    def max(self) -> float:
        return float(self.off_diagonal().max())

    @property
    def spread(self) -> float:
        return self.max - self.min

    def to_frame(self) -> pl.DataFrame:
        columns: dict[str, list] = {"class": self.class_names}
        for j, name in enumerate(self.class_names):
            columns[name] = [row[j] for row in self.degrees]
        return pl.DataFrame(columns)


class RouterSummary(pydantic.BaseModel):
    """Mean routing weight per rate for each true class."""

    class_names: list[str]
    rate_labels: list[str]
    means: list[list[float]]

    def to_frame(self) -> pl.DataFrame:
        columns: dict[str, list] = {"class": self.class_names}
        for j, label in enumerate(self.rate_labels):
            columns[f"r_{label}"] = [row[j] for row in self.means]
        return pl.DataFrame(columns)


def evaluate_predictions(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    class_names: abc.Sequence[str],
) -> tuple[MetricsReport, ConfusionMatrix]:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        msg = f"{y_true.shape[0]} labels but {y_pred.shape[0]} predictions"
        raise DimensionError(msg)
    if y_true.size == 0:
        msg = "cannot evaluate an empty test set"
        raise ParameterError(msg)

    labels = list(range(len(class_names)))
    counts = confusion_matrix(y_true, y_pred, labels=labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=labels, average=None, zero_division=0
    )
    confusion = ConfusionMatrix(class_names=list(class_names), counts=counts.tolist())
    report = MetricsReport(
        accuracy=confusion.accuracy(),
        macro_precision=100.0 * float(np.mean(precision)),
        macro_recall=100.0 * float(np.mean(recall)),
        macro_f1=100.0 * float(np.mean(f1)),
        per_class=[
            ClassMetrics(
                name=name,
                precision=100.0 * float(precision[i]),
                recall=100.0 * float(recall[i]),
                f1=100.0 * float(f1[i]),
                support=int(support[i]),
            )
            for i, name in enumerate(class_names)
        ],
    )
    return report, confusion


def mean_report(reports: abc.Sequence[MetricsReport]) -> MetricsReport:
    """Unweighted mean over folds, metric by metric."""
    if not reports:
        msg = "no fold reports to aggregate"
        raise ParameterError(msg)

    def avg(get: typing.Callable[[MetricsReport], float]) -> float:
        return float(np.mean([get(r) for r in reports]))

    first = reports[0]
    return MetricsReport(
        accuracy=avg(lambda r: r.accuracy),
        macro_precision=avg(lambda r: r.macro_precision),
        macro_recall=avg(lambda r: r.macro_recall),
        macro_f1=avg(lambda r: r.macro_f1),
        per_class=[
            ClassMetrics(
                name=c.name,
                precision=avg(lambda r, i=i: r.per_class[i].precision),
                recall=avg(lambda r, i=i: r.per_class[i].recall),
                f1=avg(lambda r, i=i: r.per_class[i].f1),
                support=sum(r.per_class[i].support for r in reports),
            )
            for i, c in enumerate(first.per_class)
        ],
    )


def pairwise_angles(weights: np.ndarray, class_names: abc.Sequence[str] | None = None) -> AngleReport:
    """Angles in degrees between the columns of `weights`."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] < 2:
        msg = f"need a matrix with at least two columns, got shape {weights.shape}"
        raise DimensionError(msg)
    norms = np.linalg.norm(weights, axis=0)
    if np.any(norms == 0):
        msg = f"columns {np.flatnonzero(norms == 0).tolist()} are zero vectors"
        raise ParameterError(msg)
    cosines = np.clip((weights.T @ weights) / np.outer(norms, norms), -1.0, 1.0)
    degrees = np.degrees(np.arccos(cosines))
    np.fill_diagonal(degrees, 0.0)
    degrees = (degrees + degrees.T) / 2
    names = list(class_names) if class_names is not None else [str(i) for i in range(weights.shape[1])]
    return AngleReport(class_names=names, degrees=degrees.tolist())


def router_summary(
    rates: np.ndarray,
    labels: np.ndarray,
    class_names: abc.Sequence[str],
    rate_labels: abc.Sequence[str],
) -> RouterSummary:
    rates = np.asarray(rates, dtype=np.float64)
    means = []
    for c in range(len(class_names)):
        members = rates[labels == c]
        means.append(members.mean(axis=0).tolist() if len(members) else [float("nan")] * len(rate_labels))
    return RouterSummary(class_names=list(class_names), rate_labels=list(rate_labels), means=means)
