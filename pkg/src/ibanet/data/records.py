import dataclasses
import logging
import typing
from collections import abc
from pathlib import Path

import numpy as np
import polars as pl
import pydantic

from ibanet.errors import DataError, ParameterError, ParseError

RESERVED_COLUMNS = ("subject", "label", "t")


@dataclasses.dataclass(frozen=True)
class Recording:
    subject_id: str
    label: int
    sampling_rate_hz: float
    values: np.ndarray  # channels x samples

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            msg = f"Recording of {self.subject_id} needs channels x samples >= 1, got {self.values.shape}"
            raise DataError(msg)
        if not np.all(np.isfinite(self.values)):
            msg = f"Recording of {self.subject_id} contains non-finite values"
            raise DataError(msg)


@dataclasses.dataclass(frozen=True)
class SensorWindow:
    subject_id: str
    label: int
    sampling_rate_hz: float
    values: np.ndarray  # channels x samples

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclasses.dataclass(frozen=True)
class MultiRateSample:
    label: int
    subject_id: str
    windows: tuple[SensorWindow, ...]

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(w.sampling_rate_hz for w in self.windows)


class LabelTable(pydantic.BaseModel):
    names: list[str] = pydantic.Field(default_factory=list)

    def index(self, name: str) -> int:
        if name not in self.names:
            self.names.append(name)
        return self.names.index(name)

    def __len__(self) -> int:
        return len(self.names)

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({"label": self.names, "index": list(range(len(self.names)))})

    def write_csv(self, dst: Path) -> None:
        self.to_frame().write_csv(dst)

    @classmethod
    def read_csv(cls, src: Path) -> typing.Self:
        if not src.exists():
            msg = f"label table {src} does not exist"
            raise DataError(msg)
        try:
            tbl = pl.read_csv(src, schema={"label": pl.Utf8, "index": pl.Int64}).sort("index")
        except pl.exceptions.PolarsError as e:
            msg = f"unable to read label table {src}: {e}"
            raise ParseError(msg, line=None) from e
        return cls(names=tbl.get_column("label").to_list())


class CsvFormat(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    sampling_rate_hz: pydantic.PositiveFloat
    label_table: LabelTable | None = None


def _fail_on_nulls(tbl: pl.DataFrame, raw: pl.DataFrame, column: str, what: str) -> None:
    bad = tbl.get_column(column).is_null() & raw.get_column(column).is_not_null()
    missing = raw.get_column(column).is_null()
    checks = [(missing, "missing value"), (bad, what)]
    if tbl.schema[column].is_numeric():
        checks.append((tbl.get_column(column).is_finite().not_().fill_null(False), "non-finite cell"))
    for mask, reason in checks:
        if mask.any():
            row = int(mask.arg_true()[0])
            value = raw.get_column(column)[row]
            msg = f"{reason} in column {column!r}: {value!r}"
            raise ParseError(msg, line=row + 2)


def load_recordings(src: Path, fmt: CsvFormat) -> tuple[list[Recording], LabelTable]:
    """Read `subject,label,t,<channels...>` rows into contiguous recordings.

    A recording is a maximal run of rows sharing subject and label. Labels are
    indexed in first-appearance order unless a label table is supplied.
    """
    if not src.exists():
        msg = f"{src} does not exist"
        raise DataError(msg)
    try:
        raw = pl.read_csv(src, infer_schema=False)
    except pl.exceptions.PolarsError as e:
        msg = f"unable to read {src}: {e}"
        raise ParseError(msg, line=None) from e

    for column in RESERVED_COLUMNS:
        if column not in raw.columns:
            msg = f"{src} is missing column {column!r}"
            raise ParseError(msg, line=1)
    channels = [c for c in raw.columns if c not in RESERVED_COLUMNS]
    if not channels:
        msg = f"{src} has no channel columns"
        raise ParseError(msg, line=1)

    numeric = ["t", *channels]
    tbl = raw.with_columns(pl.col(c).str.strip_chars().cast(pl.Float64, strict=False) for c in numeric)
    for column in ["subject", "label", *numeric]:
        _fail_on_nulls(tbl, raw, column, "non-numeric cell")

    tbl = tbl.with_row_index("row").with_columns(pl.struct("subject", "label").rle_id().alias("segment"))
    backwards = tbl.filter((pl.col("t").diff().over("segment") <= 0).fill_null(False))
    if backwards.height:
        row = int(backwards.get_column("row")[0])
        msg = f"timestamps are not increasing within segment of subject {backwards.get_column('subject')[0]!r}"
        raise ParseError(msg, line=row + 2)

    labels = fmt.label_table.model_copy(deep=True) if fmt.label_table else LabelTable()
    recordings: list[Recording] = []
    for segment in tbl.partition_by("segment", maintain_order=True):
        recordings.append(
            Recording(
                subject_id=segment.get_column("subject")[0],
                label=labels.index(segment.get_column("label")[0]),
                sampling_rate_hz=fmt.sampling_rate_hz,
                values=segment.select(channels).to_numpy().T.copy(),
            )
        )
    logging.info(f"Loaded {len(recordings)} recordings with {len(labels)} labels from {src}")
    return recordings, labels


def make_windows(
    recordings: abc.Iterable[Recording],
    window_seconds: float,
    stride_seconds: float | None = None,
    seed: int | None = None,
) -> list[SensorWindow]:
    """Cut fixed-length windows, discarding partial tails.

    With a seed, each recording starts at a seeded random offset in
    [0, stride) samples, giving reproducible sliding windows.
    """
    stride_seconds = window_seconds if stride_seconds is None else stride_seconds
    if window_seconds <= 0 or stride_seconds <= 0:
        msg = f"window and stride must be positive, got {window_seconds=} {stride_seconds=}"
        raise ParameterError(msg)

    rng = np.random.default_rng(seed) if seed is not None else None
    windows: list[SensorWindow] = []
    for rec in recordings:
        length = round(window_seconds * rec.sampling_rate_hz)
        stride = max(1, round(stride_seconds * rec.sampling_rate_hz))
        offset = int(rng.integers(0, stride)) if rng is not None else 0
        n = rec.values.shape[1]
        for start in range(offset, n - length + 1, stride):
            windows.append(
                SensorWindow(
                    subject_id=rec.subject_id,
                    label=rec.label,
                    sampling_rate_hz=rec.sampling_rate_hz,
                    values=rec.values[:, start : start + length].copy(),
                )
            )
    return windows


def decimate(values: np.ndarray, factor: int) -> np.ndarray:
    """Strided subsampling along the last axis; no anti-alias filter."""
    if factor <= 0:
        msg = f"decimation factor must be positive, got {factor}"
        raise ParameterError(msg)
    return np.ascontiguousarray(values[..., ::factor])


def validate_factors(factors: abc.Sequence[int]) -> tuple[int, ...]:
    factors = tuple(int(f) for f in factors)
    if not factors or any(f <= 0 for f in factors):
        msg = f"decimation factors must be positive integers, got {factors}"
        raise ParameterError(msg)
    if any(b <= a for a, b in zip(factors, factors[1:], strict=False)):
        msg = f"decimation factors must be strictly increasing, got {factors}"
        raise ParameterError(msg)
    return factors


def build_multirate(window: SensorWindow, factors: abc.Sequence[int]) -> MultiRateSample:
    factors = validate_factors(factors)
    return MultiRateSample(
        label=window.label,
        subject_id=window.subject_id,
        windows=tuple(
            SensorWindow(
                subject_id=window.subject_id,
                label=window.label,
                sampling_rate_hz=window.sampling_rate_hz / f,
                values=decimate(window.values, f),
            )
            for f in factors
        ),
    )


@dataclasses.dataclass(frozen=True)
class WindowDataset:
    """Windows stacked for batching: values is (n, channels, samples) at the source rate."""

    values: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    sampling_rate_hz: float
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @classmethod
    def from_windows(cls, windows: abc.Sequence[SensorWindow], class_names: abc.Sequence[str]) -> typing.Self:
        if not windows:
            msg = "no windows to stack"
            raise DataError(msg)
        shapes = {w.values.shape for w in windows}
        rates = {w.sampling_rate_hz for w in windows}
        if len(shapes) != 1 or len(rates) != 1:
            msg = f"windows must share shape and rate, got shapes {shapes} and rates {rates}"
            raise DataError(msg)
        return cls(
            values=np.stack([w.values for w in windows]),
            labels=np.array([w.label for w in windows], dtype=np.int64),
            subjects=np.array([w.subject_id for w in windows]),
            sampling_rate_hz=rates.pop(),
            class_names=tuple(class_names),
        )

    def subset(self, indices: np.ndarray) -> "WindowDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return dataclasses.replace(
            self,
            values=self.values[indices],
            labels=self.labels[indices],
            subjects=self.subjects[indices],
        )

    def window(self, i: int) -> SensorWindow:
        return SensorWindow(
            subject_id=str(self.subjects[i]),
            label=int(self.labels[i]),
            sampling_rate_hz=self.sampling_rate_hz,
            values=self.values[i],
        )

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)
