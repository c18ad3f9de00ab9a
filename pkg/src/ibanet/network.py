"""Model assembly: variants, the parameter store and the end-to-end forward pass."""

import dataclasses
import math
import typing
from collections import abc

import numpy as np
import pydantic

from ibanet import fields, mfc, nc3
from ibanet import tensor as T
from ibanet.data.records import decimate, validate_factors
from ibanet.errors import DimensionError, ParameterError

VariantKind = typing.Literal["iba_net", "single_rate", "fusion"]


@dataclasses.dataclass(frozen=True)
class Variant:
    kind: VariantKind = "iba_net"
    rate_hz: float | None = None
    mode: fields.FusionMode = "soft_weighted"

    def __str__(self) -> str:
        if self.kind == "single_rate":
            return f"single_rate:{self.rate_hz:.12g}"
        if self.kind == "fusion":
            return f"fusion:{self.mode}"
        return "iba_net"


def parse_variant(text: str) -> Variant:
    """`iba_net`, `single_rate:<hz>` or `fusion:<mode>`."""
    kind, _, arg = text.strip().partition(":")
    if kind == "iba_net" and not arg:
        return Variant()
    if kind == "single_rate":
        try:
            rate = float(arg)
        except ValueError:
            rate = math.nan
        if not rate > 0:
            msg = f"single_rate needs a positive rate in Hz, got {text!r}"
            raise ParameterError(msg)
        return Variant(kind="single_rate", rate_hz=rate)
    if kind == "fusion" and arg in fields.FUSION_MODES:
        return Variant(kind="fusion", mode=typing.cast(fields.FusionMode, arg))
    msg = f"unknown model variant {text!r}; use iba_net, single_rate:<hz> or fusion:<{'|'.join(fields.FUSION_MODES)}>"
    raise ParameterError(msg)


class NetworkSpec(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    n_classes: int = pydantic.Field(ge=2)
    sensor_axes: pydantic.PositiveInt
    source_rate_hz: pydantic.PositiveFloat
    factors: fields.IntTuple = (2, 4, 8)
    arch: mfc.Architecture = mfc.Architecture()
    tau: pydantic.PositiveFloat = 0.4
    k: float = pydantic.Field(default=0.3, ge=0.0, le=1.0)
    variant: str = "iba_net"

    @pydantic.field_validator("variant")
    @classmethod
    def check_variant(cls, value: str) -> str:
        return str(parse_variant(value))

    @property
    def parsed_variant(self) -> Variant:
        return parse_variant(self.variant)

    @property
    def fusion_mode(self) -> fields.FusionMode:
        return self.parsed_variant.mode

    @property
    def rate_factors(self) -> tuple[int, ...]:
        variant = self.parsed_variant
        if variant.kind != "single_rate":
            return validate_factors(self.factors)
        ratio = self.source_rate_hz / typing.cast(float, variant.rate_hz)
        factor = round(ratio)
        if factor < 1 or abs(ratio - factor) > 1e-9:
            msg = f"{variant.rate_hz:g} Hz is not an integer decimation of the {self.source_rate_hz:g} Hz source"
            raise ParameterError(msg)
        return (factor,)

    @property
    def rate_labels(self) -> tuple[str, ...]:
        return tuple(f"{self.source_rate_hz / f:g}Hz" for f in self.rate_factors)

    @property
    def uses_experts(self) -> bool:
        return self.parsed_variant.kind != "single_rate"

    @property
    def uses_router(self) -> bool:
        return self.uses_experts and self.fusion_mode == "soft_weighted"

    @property
    def etf_dim(self) -> int:
        return self.arch.etf_dim or self.n_classes

    @property
    def head_dim(self) -> int:
        c = self.arch.feature_dim
        return c * len(self.rate_factors) if self.uses_experts and self.fusion_mode == "concatenation" else c


@dataclasses.dataclass(frozen=True)
class Slot:
    name: str
    shape: tuple[int, ...]
    fan_in: int = 0  # 0 for zero-initialized biases


def parameter_slots(spec: NetworkSpec) -> list[Slot]:
    """Every learnable array in initialization order."""
    arch = spec.arch
    c = arch.feature_dim
    n = len(spec.rate_factors)
    slots: list[Slot] = []
    for i in range(n):
        c_in = 1
        for j, c_out in enumerate(arch.channels):
            slots.append(Slot(f"enc{i}.conv{j}.weight", (c_out, c_in, arch.kernel_size), c_in * arch.kernel_size))
            slots.append(Slot(f"enc{i}.conv{j}.bias", (c_out,)))
            c_in = c_out
    if spec.uses_router:
        slots += [
            Slot("router.w1", (c, c // 2), c),
            Slot("router.b1", (c // 2,)),
            Slot("router.w2", (c // 2, n), c // 2),
            Slot("router.b2", (n,)),
        ]
    if spec.uses_experts:
        for i in range(n):
            slots += [
                Slot(f"expert{i}.w1", (c, c // 2), c),
                Slot(f"expert{i}.b1", (c // 2,)),
                Slot(f"expert{i}.w2", (c // 2, c), c // 2),
                Slot(f"expert{i}.b2", (c,)),
            ]
    slots += [
        Slot("nc3.g.weight", (spec.head_dim, spec.etf_dim), spec.head_dim),
        Slot("nc3.g.bias", (spec.etf_dim,)),
        Slot("nc3.fc.weight", (spec.head_dim, spec.n_classes), spec.head_dim),
        Slot("nc3.fc.bias", (spec.n_classes,)),
    ]
    return slots


def init_parameters(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """Kaiming-style uniform weights in +-sqrt(6 / fan_in), zero biases, mu = 1."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for slot in parameter_slots(spec):
        if slot.fan_in:
            bound = math.sqrt(6.0 / slot.fan_in)
            params[slot.name] = rng.uniform(-bound, bound, size=slot.shape)
        else:
            params[slot.name] = np.zeros(slot.shape)
    params["nc3.mu"] = np.ones(1)
    return params


@dataclasses.dataclass(frozen=True)
class ForwardPass:
    logits: T.Tensor  # (B, M)
    rates: T.Tensor | None  # (B, N) when the soft router is active
    fused: T.Tensor  # (B, head_dim)


def forward(
    spec: NetworkSpec,
    prototypes: nc3.EtfPrototypes,
    params: abc.Mapping[str, T.Tensor],
    x: np.ndarray,
    counter: nc3.DegenerateCounter | None = None,
) -> ForwardPass:
    """Source-rate windows (B, H, W) to logits; each branch sees its own decimated copy."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != spec.sensor_axes:
        msg = f"expected windows of shape (batch, {spec.sensor_axes}, samples), got {x.shape}"
        raise DimensionError(msg)

    arch = spec.arch
    layers = range(len(arch.channels))
    features: list[T.Tensor] = []
    for i, factor in enumerate(spec.rate_factors):
        encoder = mfc.EncoderParams(
            kernels=tuple(params[f"enc{i}.conv{j}.weight"] for j in layers),
            biases=tuple(params[f"enc{i}.conv{j}.bias"] for j in layers),
        )
        branch = T.Tensor(decimate(x, factor)[:, None, :, :])
        features.append(mfc.pool(mfc.encode(branch, encoder, arch)))

    rates = None
    if not spec.uses_experts:
        fused = features[0]
    else:
        if spec.uses_router:
            router = mfc.RouterParams(
                w1=params["router.w1"],
                b1=params["router.b1"],
                w2=params["router.w2"],
                b2=params["router.b2"],
                tau=spec.tau,
            )
            rates = mfc.route(features, router)
        experts = [
            mfc.ProjectionExpert(
                w1=params[f"expert{i}.w1"],
                b1=params[f"expert{i}.b1"],
                w2=params[f"expert{i}.w2"],
                b2=params[f"expert{i}.b2"],
            )
            for i in range(len(features))
        ]
        fused = mfc.fuse(features, rates, experts, spec.fusion_mode)

    head = nc3.Nc3Params(
        g_weight=params["nc3.g.weight"],
        g_bias=params["nc3.g.bias"],
        fc_weight=params["nc3.fc.weight"],
        fc_bias=params["nc3.fc.bias"],
        mu=params["nc3.mu"],
        k=spec.k,
    )
    return ForwardPass(logits=nc3.classify(fused, prototypes, head, counter), rates=rates, fused=fused)


@dataclasses.dataclass(frozen=True)
class IbaNet:
    spec: NetworkSpec
    prototypes: nc3.EtfPrototypes
    params: dict[str, np.ndarray]

    @classmethod
    def build(cls, spec: NetworkSpec, seed: int) -> typing.Self:
        prototypes = nc3.generate_etf(spec.n_classes, spec.etf_dim, seed=seed)
        return cls(spec=spec, prototypes=prototypes, params=init_parameters(spec, seed))

    def with_params(self, params: dict[str, np.ndarray]) -> "IbaNet":
        return dataclasses.replace(self, params=params)

    def leaves(self, requires_grad: bool = False) -> dict[str, T.Tensor]:
        return {name: T.Tensor(value, requires_grad=requires_grad) for name, value in self.params.items()}

    def forward(
        self,
        leaves: abc.Mapping[str, T.Tensor],
        x: np.ndarray,
        counter: nc3.DegenerateCounter | None = None,
    ) -> ForwardPass:
        return forward(self.spec, self.prototypes, leaves, x, counter)

    def infer(self, x: np.ndarray, batch_size: int = 512) -> tuple[np.ndarray, np.ndarray | None]:
        """Logits and routing rates without recording a tape."""
        leaves = self.leaves()
        logits: list[np.ndarray] = []
        rates: list[np.ndarray] = []
        for start in range(0, len(x), batch_size):
            out = self.forward(leaves, x[start : start + batch_size])
            logits.append(out.logits.data)
            if out.rates is not None:
                rates.append(out.rates.data)
        if not logits:
            return np.zeros((0, self.spec.n_classes)), None
        return np.concatenate(logits), np.concatenate(rates) if rates else None

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.infer(x)
        return nc3.predict(logits) if len(logits) else np.zeros(0, dtype=np.int64)

    @property
    def classifier_weights(self) -> np.ndarray:
        """FC-branch weight vectors w_m as columns."""
        return self.params["nc3.fc.weight"]
