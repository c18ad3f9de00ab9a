"""Seeded sinusoid-plus-noise stand-ins for the goat, cattle and horse datasets."""

import math
import typing

import numpy as np
import pydantic

from ibanet.data.records import SensorWindow
from ibanet.errors import ParameterError


class Component(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    frequency_hz: pydantic.PositiveFloat
    amplitude: float = 1.0
    end_frequency_hz: pydantic.PositiveFloat | None = None
    """Linear sweep target reached at the end of the window; None holds the frequency."""

    @property
    def end_hz(self) -> float:
        return self.frequency_hz if self.end_frequency_hz is None else self.end_frequency_hz


class SyntheticSpec(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    class_names: tuple[str, ...]
    proportions: tuple[float, ...]
    signatures: tuple[tuple[Component, ...], ...]
    noise_std: pydantic.NonNegativeFloat = 0.3
    base_rate_hz: pydantic.PositiveFloat = 100.0
    window_seconds: pydantic.PositiveFloat = 2.0
    total: pydantic.PositiveInt = 3000
    subjects: pydantic.PositiveInt = 5
    channels: pydantic.PositiveInt = 3

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @pydantic.model_validator(mode="after")
    def check_consistency(self) -> typing.Self:
        m = len(self.class_names)
        if m < 2:
            msg = f"need at least 2 classes, got {m}"
            raise ParameterError(msg)
        if len(self.proportions) != m or len(self.signatures) != m:
            msg = f"{m} classes but {len(self.proportions)} proportions and {len(self.signatures)} signatures"
            raise ParameterError(msg)
        if abs(sum(self.proportions) - 1.0) > 1e-9 or any(p < 0 for p in self.proportions):
            msg = f"proportions must be nonnegative and sum to 1, got sum {sum(self.proportions)!r}"
            raise ParameterError(msg)
        nyquist = self.base_rate_hz / 2
        for name, signature in zip(self.class_names, self.signatures, strict=True):
            for component in signature:
                top = max(component.frequency_hz, component.end_hz)
                if top >= nyquist:
                    msg = f"class {name}: {top} Hz is not below Nyquist {nyquist} Hz"
                    raise ParameterError(msg)
        return self


def largest_remainder(proportions: typing.Sequence[float], total: int) -> list[int]:
    """Integer counts proportional to `proportions` that sum exactly to `total`.

    Leftover units go to the largest fractional parts, lower index first on ties.
    """
    raw = [p * total for p in proportions]
    counts = [math.floor(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def generate_synthetic(spec: SyntheticSpec, seed: int) -> list[SensorWindow]:
    rng = np.random.default_rng(seed)
    n = round(spec.window_seconds * spec.base_rate_hz)
    t = np.arange(n) / spec.base_rate_hz
    duration = n / spec.base_rate_hz
    windows: list[SensorWindow] = []
    for label, count in enumerate(largest_remainder(spec.proportions, spec.total)):
        signature = spec.signatures[label]
        freqs = np.array([c.frequency_hz for c in signature])
        slopes = np.array([c.end_hz - c.frequency_hz for c in signature]) / duration
        # cycles elapsed at each sample, (components, samples)
        cycles = freqs[:, None] * t[None, :] + 0.5 * slopes[:, None] * t[None, :] ** 2
        amps = np.array([c.amplitude for c in signature])
        for _ in range(count):
            phases = rng.uniform(0.0, 2 * np.pi, size=(spec.channels, len(signature)))
            # (channels, components, samples) summed over components
            waves = amps[None, :, None] * np.sin(2 * np.pi * cycles[None, :, :] + phases[..., None])
            values = waves.sum(axis=1) + spec.noise_std * rng.standard_normal((spec.channels, n))
            windows.append(
                SensorWindow(
                    subject_id=f"S{len(windows) % spec.subjects}",
                    label=label,
                    sampling_rate_hz=spec.base_rate_hz,
                    values=values,
                )
            )
    return windows


def _signatures(*rows: typing.Sequence[tuple[float, ...]]) -> tuple[tuple[Component, ...], ...]:
    """Rows of (hz, amplitude) or (hz, amplitude, end_hz) triples."""
    return tuple(
        tuple(Component(frequency_hz=c[0], amplitude=c[1], end_frequency_hz=c[2] if len(c) > 2 else None) for c in row)
        for row in rows
    )


# goat-like: every single rate confuses one class pair. Running (20 Hz) folds onto
# trotting (5 Hz) at 25 Hz and at 12.5 Hz. Standing and grazing sweep the same band in
# opposite directions, so their short local patches match and only a receptive field
# spanning most of the window tells them apart, which at 50 Hz it does not.
SYNTHETIC_PROFILES: dict[str, SyntheticSpec] = {
    "goat-like": SyntheticSpec(
        class_names=("standing", "running", "grazing", "trotting", "walking"),
        proportions=(0.4315, 0.0087, 0.3535, 0.0044, 0.2019),
        signatures=_signatures(
            [(1.0, 1.0, 2.0)],
            [(20.0, 1.0), (1.5, 0.4)],
            [(2.0, 1.0, 1.0)],
            [(5.0, 1.0), (1.5, 0.4)],
            [(3.0, 1.0), (1.0, 0.3)],
        ),
        base_rate_hz=100.0,
        total=3000,
        subjects=5,
    ),
    "cattle-like": SyntheticSpec(
        class_names=("grazing", "moving", "resting", "ruminating", "salt-licking"),
        proportions=(0.06, 0.16, 0.54, 0.20, 0.04),
        signatures=_signatures(
            [(1.0, 1.0)],
            [(10.0, 1.0)],
            [(0.5, 0.5)],
            [(1.5, 1.0)],
            [(2.5, 1.0), (10.0, 0.3)],
        ),
        base_rate_hz=25.0,
        total=3000,
        subjects=6,
    ),
    "horse-like": SyntheticSpec(
        class_names=("eating", "standing", "trotting", "galloping", "walking-rider", "walking-natural"),
        proportions=(0.1832, 0.0584, 0.2862, 0.0450, 0.3894, 0.0378),
        signatures=_signatures(
            [(1.0, 1.0)],
            [(0.5, 0.3)],
            [(3.0, 1.0)],
            [(20.0, 1.0), (2.0, 0.5)],
            [(1.5, 1.0)],
            [(5.0, 1.0), (1.5, 0.3)],
        ),
        base_rate_hz=100.0,
        total=3000,
        subjects=6,
    ),
}


def get_profile(name: str) -> SyntheticSpec:
    if name not in SYNTHETIC_PROFILES:
        msg = f"unknown synthetic profile {name!r}; choose from {sorted(SYNTHETIC_PROFILES)}"
        raise ParameterError(msg)
    return SYNTHETIC_PROFILES[name]
