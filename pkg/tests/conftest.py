import numpy as np
import pytest

from ibanet.data.records import WindowDataset
from ibanet.data.synthetic import Component, SyntheticSpec, generate_synthetic
from ibanet.mfc import Architecture
from ibanet.training import TrainConfig

TINY_ARCH = Architecture(channels=(4, 6, 8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(
        class_names=("slow", "medium", "fast"),
        proportions=(0.5, 0.3, 0.2),
        signatures=(
            (Component(frequency_hz=1.0),),
            (Component(frequency_hz=4.0),),
            (Component(frequency_hz=12.0),),
        ),
        noise_std=0.1,
        base_rate_hz=64.0,
        window_seconds=1.0,
        total=60,
        subjects=3,
        channels=2,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec: SyntheticSpec) -> WindowDataset:
    return WindowDataset.from_windows(generate_synthetic(tiny_spec, seed=0), tiny_spec.class_names)


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(epochs=2, batch_size=16, lr=2e-3, weight_decay=1e-4, tau=0.5, k=0.3, arch=TINY_ARCH)
