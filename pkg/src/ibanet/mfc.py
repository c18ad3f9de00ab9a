"""Multi-rate feature customization: per-rate encoders, pooling, soft router and expert fusion."""

import dataclasses
from collections import abc

import pydantic

from ibanet import fields
from ibanet import tensor as T
from ibanet.errors import DimensionError, ParameterError


class Architecture(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    channels: fields.IntTuple = (8, 16, 32)
    kernel_size: pydantic.PositiveInt = 5
    stride: pydantic.PositiveInt = 2
    padding: pydantic.NonNegativeInt = 2
    etf_dim: pydantic.PositiveInt | None = None

    @pydantic.field_validator("channels")
    @classmethod
    def check_channels(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value or min(value) < 2:
            msg = f"encoder channels must be a nonempty list of widths >= 2, got {value}"
            raise ValueError(msg)
        return value

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]

    def output_width(self, width: int) -> int:
        for _ in self.channels:
            width = (width + 2 * self.padding - self.kernel_size) // self.stride + 1
        return width


@dataclasses.dataclass(frozen=True)
class EncoderParams:
    kernels: tuple[T.Tensor, ...]  # each (C_out, C_in, kernel_size)
    biases: tuple[T.Tensor, ...]


@dataclasses.dataclass(frozen=True)
class ProjectionExpert:
    w1: T.Tensor  # C x C/2
    b1: T.Tensor
    w2: T.Tensor  # C/2 x C
    b2: T.Tensor


@dataclasses.dataclass(frozen=True)
class RouterParams:
    w1: T.Tensor  # C x C/2
    b1: T.Tensor
    w2: T.Tensor  # C/2 x N
    b2: T.Tensor
    tau: float

    def __post_init__(self) -> None:
        if not self.tau > 0:
            msg = f"router temperature must be positive, got {self.tau}"
            raise ParameterError(msg)


def encode(x: T.Tensor, params: EncoderParams, arch: Architecture) -> T.Tensor:
    """(B, 1, H, W) window batch to a (B, C, H, W') feature map; H is preserved."""
    if x.data.ndim != 4:
        msg = f"encoder expects (batch, 1, H, W) input, got {x.shape}"
        raise DimensionError(msg)
    if x.shape[3] < arch.kernel_size:
        msg = f"window of {x.shape[3]} samples is shorter than the {arch.kernel_size}-sample kernel"
        raise DimensionError(msg)
    h = x
    for kernel, bias in zip(params.kernels, params.biases, strict=True):
        h = T.relu(T.conv2d_time(h, kernel, bias, stride=arch.stride, padding=arch.padding))
    return h


def pool(feature_map: T.Tensor) -> T.Tensor:
    return T.global_avg_pool(feature_map)


def project(e: T.Tensor, expert: ProjectionExpert) -> T.Tensor:
    hidden = T.gelu(T.linear(e, expert.w1, expert.b1))
    return T.gelu(T.linear(hidden, expert.w2, expert.b2))


def router_logits(features: abc.Sequence[T.Tensor], router: RouterParams) -> T.Tensor:
    mixed = features[0]
    for e in features[1:]:
        mixed = T.add(mixed, e)
    mixed = T.scale(mixed, 1.0 / len(features))
    hidden = T.gelu(T.linear(mixed, router.w1, router.b1))
    return T.linear(hidden, router.w2, router.b2)


def route(features: abc.Sequence[T.Tensor], router: RouterParams) -> T.Tensor:
    """Contribution rates (B, N), a temperature softmax over the router MLP output."""
    if len({e.shape for e in features}) != 1:
        msg = f"router inputs must share one shape, got {[e.shape for e in features]}"
        raise DimensionError(msg)
    return T.softmax(router_logits(features, router), tau=router.tau)


def combine(
    projected: abc.Sequence[T.Tensor],
    mode: fields.FusionMode,
    rates: T.Tensor | None = None,
) -> T.Tensor:
    if mode == "concatenation":
        return T.concat(projected, axis=1)
    if mode == "soft_weighted":
        if rates is None:
            msg = "soft_weighted fusion needs routing rates"
            raise ParameterError(msg)
        weighted = [T.mul(T.index(rates, (slice(None), slice(i, i + 1))), p) for i, p in enumerate(projected)]
        fused = weighted[0]
        for w in weighted[1:]:
            fused = T.add(fused, w)
        return fused

    fused = projected[0]
    for p in projected[1:]:
        fused = T.mul(fused, p) if mode == "multiplication" else T.add(fused, p)
    if mode == "averaging":
        fused = T.scale(fused, 1.0 / len(projected))
    return fused


def fuse(
    features: abc.Sequence[T.Tensor],
    rates: T.Tensor | None,
    experts: abc.Sequence[ProjectionExpert],
    mode: fields.FusionMode = "soft_weighted",
) -> T.Tensor:
    if len(experts) != len(features):
        msg = f"{len(features)} feature vectors but {len(experts)} experts"
        raise DimensionError(msg)
    projected = [project(e, expert) for e, expert in zip(features, experts, strict=True)]
    return combine(projected, mode, rates)
