from ibanet.data.records import (
    CsvFormat,
    LabelTable,
    MultiRateSample,
    Recording,
    SensorWindow,
    WindowDataset,
    build_multirate,
    decimate,
    load_recordings,
    make_windows,
)
from ibanet.data.splits import ClassStats, Fold, SplitPlan, class_stats, rebalance_minority, split
from ibanet.data.synthetic import SYNTHETIC_PROFILES, Component, SyntheticSpec, generate_synthetic

__all__ = [
    "SYNTHETIC_PROFILES",
    "ClassStats",
    "Component",
    "CsvFormat",
    "Fold",
    "LabelTable",
    "MultiRateSample",
    "Recording",
    "SensorWindow",
    "SplitPlan",
    "SyntheticSpec",
    "WindowDataset",
    "build_multirate",
    "class_stats",
    "decimate",
    "generate_synthetic",
    "load_recordings",
    "make_windows",
    "rebalance_minority",
    "split",
]
