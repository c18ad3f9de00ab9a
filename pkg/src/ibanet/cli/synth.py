import logging

import numpy as np
import polars as pl

from ibanet.cli import outputs
from ibanet.config import SYNTHETIC_PREFIX, RunConfig
from ibanet.data.records import LabelTable
from ibanet.data.synthetic import generate_synthetic, get_profile
from ibanet.errors import ConfigError


def main(config: RunConfig) -> str:
    """Write a synthetic benchmark as `dataset.csv` in the recording format plus `labels.csv`."""
    data = config.data
    if not data.source.startswith(SYNTHETIC_PREFIX):
        msg = f"synth needs a synthetic source, got data.source={data.source}"
        raise ConfigError(msg, key="data.source")
    spec = get_profile(data.source.removeprefix(SYNTHETIC_PREFIX))
    if data.total is not None:
        spec = spec.model_copy(update={"total": data.total})
    windows = generate_synthetic(spec, seed=data.seed)

    out = outputs.prepare(config)
    n = windows[0].n_samples
    # one global clock keeps timestamps increasing if neighbouring windows share subject and label
    columns: dict[str, np.ndarray | list] = {
        "subject": [w.subject_id for w in windows for _ in range(n)],
        "label": [spec.class_names[w.label] for w in windows for _ in range(n)],
        "t": np.arange(len(windows) * n) / spec.base_rate_hz,
    }
    values = np.concatenate([w.values for w in windows], axis=1)
    for c in range(spec.channels):
        columns[f"ch{c}"] = values[c]
    pl.DataFrame(columns).write_csv(out / "dataset.csv")
    LabelTable(names=list(spec.class_names)).write_csv(out / "labels.csv")

    logging.info(f"wrote {len(windows)} windows of {n} samples to {out / 'dataset.csv'}")
    return f"synth: {len(windows)} windows, {spec.n_classes} classes, {spec.base_rate_hz:g} Hz -> {out}"
