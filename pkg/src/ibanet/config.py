"""Run configuration: nested pydantic sections, named profiles and a flat `section.key=value` format.

Resolution order is model defaults, then profiles, then the config file, then
`--set` overrides, then dedicated command-line flags.
"""

import logging
import typing
from collections import abc
from pathlib import Path

import numpy as np
import pydantic

from ibanet import fields
from ibanet.data.records import CsvFormat, LabelTable, WindowDataset, load_recordings, make_windows
from ibanet.data.splits import SplitPlan, rebalance_minority
from ibanet.data.synthetic import generate_synthetic, get_profile
from ibanet.errors import ConfigError
from ibanet.experiments import DEFAULT_GRID, DEFAULT_KEEP_FRACTIONS, DEFAULT_KS
from ibanet.training import TrainConfig

SYNTHETIC_PREFIX = "synthetic:"


class DataSection(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    source: str = "synthetic:goat-like"
    sampling_rate_hz: pydantic.PositiveFloat | None = None
    label_table: Path | None = None
    window_seconds: pydantic.PositiveFloat = 2.0
    stride_seconds: pydantic.PositiveFloat | None = None
    random_offset: bool = False
    total: pydantic.PositiveInt | None = None
    keep_fraction: float = pydantic.Field(default=1.0, gt=0.0, le=1.0)
    minority_threshold: float = pydantic.Field(default=0.05, gt=0.0, le=1.0)
    seed: int = 0


class GridSection(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    taus: fields.FloatTuple = DEFAULT_GRID
    ks: fields.FloatTuple = DEFAULT_GRID
    epochs: pydantic.PositiveInt | None = None


class AblationSection(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    kind: fields.AblationKind = "modules"
    baseline_rate_hz: pydantic.PositiveFloat = 12.5
    ks: fields.FloatTuple = DEFAULT_KS
    keep_fractions: fields.FloatTuple = DEFAULT_KEEP_FRACTIONS
    modes: fields.FusionModes = fields.FUSION_MODES


class EtfSection(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    classes: int = pydantic.Field(default=5, ge=2)
    dim: pydantic.PositiveInt | None = None
    seed: int = 0


class OutputSection(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    dir: Path = Path("out")
    jobs: pydantic.PositiveInt = 1


class RunConfig(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    data: DataSection = DataSection()
    train: TrainConfig = TrainConfig()
    split: SplitPlan = SplitPlan()
    grid: GridSection = GridSection()
    ablation: AblationSection = AblationSection()
    etf: EtfSection = EtfSection()
    output: OutputSection = OutputSection()


type Flat = dict[str, str]

# Per-dataset hyperparameters; the rate triples are 50/25/12.5, 25/12.5/5 and 50/25/12.5 Hz.
PROFILES: dict[str, Flat] = {
    "goat": {
        "data.source": "synthetic:goat-like",
        "train.weight_decay": "1e-4",
        "train.lr": "1e-4",
        "train.tau": "0.4",
        "train.k": "0.3",
        "train.factors": "2,4,8",
        "split.scheme": "leave_one_subject_out",
        "ablation.baseline_rate_hz": "12.5",
        "etf.classes": "5",
    },
    "cattle": {
        "data.source": "synthetic:cattle-like",
        "train.weight_decay": "6e-2",
        "train.lr": "5e-4",
        "train.tau": "0.8",
        "train.k": "0.1",
        "train.factors": "1,2,5",
        "split.scheme": "stratified_kfold",
        "ablation.baseline_rate_hz": "25",
        "etf.classes": "5",
    },
    "horse": {
        "data.source": "synthetic:horse-like",
        "train.weight_decay": "0.1",
        "train.lr": "1e-4",
        "train.tau": "0.5",
        "train.k": "0.2",
        "train.factors": "2,4,8",
        "split.scheme": "leave_one_subject_out",
        "ablation.baseline_rate_hz": "25",
        "etf.classes": "6",
    },
    # short CPU-sized runs on top of a dataset profile
    "desk": {
        "train.lr": "2e-3",
        "train.epochs": "30",
        "train.batch_size": "64",
        "grid.epochs": "5",
    },
}
PROFILES |= {f"{name}-like": {"data.source": f"synthetic:{name}-like"} for name in ("goat", "cattle", "horse")}


def parse_assignment(text: str, line: int | None = None) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep or not key:
        where = f"line {line}: " if line is not None else ""
        msg = f"{where}expected key=value, got {text!r}"
        raise ConfigError(msg, key=key or None)
    return key, value.strip()


def parse_flat(text: str) -> Flat:
    """`section.key=value` lines; `#` starts a comment, blank lines are skipped."""
    flat: Flat = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line, line=i)
        flat[key] = value
    return flat


def read_flat(src: Path) -> Flat:
    if not src.exists():
        msg = f"config file {src} does not exist"
        raise ConfigError(msg)
    return parse_flat(src.read_text())


def unflatten(flat: Flat) -> dict:
    nested: dict = {}
    for key, value in flat.items():
        *sections, leaf = key.split(".")
        node = nested
        for section in sections:
            child = node.setdefault(section, {})
            if not isinstance(child, dict):
                msg = f"{key} conflicts with the scalar key {section}"
                raise ConfigError(msg, key=key)
            node = child
        node[leaf] = None if value == "" else value
    return nested


def flatten(nested: abc.Mapping[str, typing.Any], prefix: str = "") -> Flat:
    flat: Flat = {}
    for key, value in nested.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, abc.Mapping):
            flat |= flatten(value, prefix=f"{dotted}.")
        elif value is None:
            continue
        elif isinstance(value, list | tuple):
            flat[dotted] = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            flat[dotted] = str(value).lower()
        else:
            flat[dotted] = str(value)
    return flat


def profile(name: str) -> Flat:
    if name not in PROFILES:
        msg = f"unknown profile {name!r}; choose from {sorted(PROFILES)}"
        raise ConfigError(msg, key="profile")
    return PROFILES[name]


def resolve(
    profiles: abc.Sequence[str] = (),
    config_file: Path | None = None,
    overrides: abc.Sequence[str] = (),
    flags: Flat | None = None,
) -> RunConfig:
    explicit: Flat = read_flat(config_file) if config_file is not None else {}
    explicit |= dict(parse_assignment(o) for o in overrides)
    flat: Flat = {}
    for name in profiles:
        flat |= profile(name)
    flat |= explicit | (flags or {})

    # single-rate baselines train with cross-entropy and no ETF branch unless told otherwise
    if flat.get("train.variant", "").startswith("single_rate:"):
        for key, value in (("train.loss", "cross_entropy"), ("train.k", "0")):
            if key not in explicit:
                flat[key] = value
    return validate(flat)


def validate(flat: Flat) -> RunConfig:
    try:
        return RunConfig.model_validate(unflatten(flat))
    except pydantic.ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"])
        msg = f"invalid configuration key {key}: {error['msg']}"
        raise ConfigError(msg, key=key) from e
    except ValueError as e:
        msg = f"invalid configuration: {e}"
        raise ConfigError(msg) from e


def effective_config(config: RunConfig) -> str:
    flat = flatten(config.model_dump(mode="json"))
    return "".join(f"{key}={flat[key]}\n" for key in sorted(flat))


def load_dataset(data: DataSection) -> WindowDataset:
    """Windows for the configured source: a named synthetic benchmark or a CSV recording."""
    if data.source.startswith(SYNTHETIC_PREFIX):
        spec = get_profile(data.source.removeprefix(SYNTHETIC_PREFIX))
        if data.total is not None:
            spec = spec.model_copy(update={"total": data.total})
        dataset = WindowDataset.from_windows(generate_synthetic(spec, seed=data.seed), spec.class_names)
    else:
        if data.sampling_rate_hz is None:
            msg = f"data.sampling_rate_hz is required to read {data.source}"
            raise ConfigError(msg, key="data.sampling_rate_hz")
        fmt = CsvFormat(
            sampling_rate_hz=data.sampling_rate_hz,
            label_table=LabelTable.read_csv(data.label_table) if data.label_table else None,
        )
        recordings, labels = load_recordings(Path(data.source), fmt)
        windows = make_windows(
            recordings,
            data.window_seconds,
            data.stride_seconds,
            seed=data.seed if data.random_offset else None,
        )
        dataset = WindowDataset.from_windows(windows, labels.names)

    if data.keep_fraction < 1:
        dataset = rebalance_minority(dataset, data.keep_fraction, data.minority_threshold, seed=data.seed)
    counts = np.bincount(dataset.labels, minlength=dataset.n_classes)
    logging.info(f"dataset {data.source}: {len(dataset)} windows at {dataset.sampling_rate_hz:g} Hz, counts {counts}")
    return dataset
