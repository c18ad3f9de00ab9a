"""Dense float64 tensors with a reverse-mode tape.

Every forward computation of the network goes through `forward_primitive`.
When a `Tape` is active (``with Tape() as tape:``) and any input requires a
gradient, the application is recorded; `backward` then walks the tape in
reverse exactly once per node.
"""

import contextvars
import dataclasses
import itertools
import logging
import math
import typing
from collections import abc

import numpy as np

from ibanet.errors import ContractError, DimensionError, NumericalError, ParameterError

_ids = itertools.count()
_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("active_tape", default=None)
_debug = {"check_finite": False}

GELU_C = math.sqrt(2.0 / math.pi)
NORM_GUARD = 1e-12


def set_debug(check_finite: bool) -> None:
    """Raise NumericalError whenever a primitive produces NaN or Inf."""
    _debug["check_finite"] = check_finite


class Tensor:
    __slots__ = ("data", "node_id", "requires_grad", "tape")

    def __init__(self, data: typing.Any, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id = next(_ids)
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, node_id={self.node_id})"


@dataclasses.dataclass(frozen=True, slots=True)
class Context:
    inputs: tuple[np.ndarray, ...]
    output: np.ndarray
    saved: dict[str, typing.Any]
    attrs: dict[str, typing.Any]
    needs: tuple[bool, ...]


@dataclasses.dataclass(slots=True)
class Entry:
    kind: str
    inputs: tuple[int, ...]
    output: int
    ctx: Context


class Tape:
    def __init__(self) -> None:
        self.entries: list[Entry] = []
        self.leaves: dict[int, Tensor] = {}
        self.produced: set[int] = set()
        self._token: contextvars.Token | None = None

    def __enter__(self) -> typing.Self:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def record(self, kind: str, inputs: abc.Sequence[Tensor], output: Tensor, ctx: Context) -> None:
        for t in inputs:
            if t.requires_grad and t.node_id not in self.produced:
                self.leaves.setdefault(t.node_id, t)
        self.entries.append(Entry(kind=kind, inputs=tuple(t.node_id for t in inputs), output=output.node_id, ctx=ctx))
        self.produced.add(output.node_id)
        output.tape = self

    def min_kink_distance(self) -> float:
        """Smallest distance of any ReLU/clip input to its non-differentiable point."""
        distance = math.inf
        for entry in self.entries:
            x = entry.ctx.inputs[0]
            if x.size == 0:
                continue
            if entry.kind == "relu":
                distance = min(distance, float(np.min(np.abs(x))))
            elif entry.kind == "clip":
                lo, hi = entry.ctx.attrs["lo"], entry.ctx.attrs["hi"]
                distance = min(distance, float(np.min(np.abs(x - lo))), float(np.min(np.abs(x - hi))))
        return distance


type Forward = abc.Callable[[tuple[np.ndarray, ...], dict[str, typing.Any]], tuple[np.ndarray, dict[str, typing.Any]]]
type Backward = abc.Callable[[np.ndarray, Context], tuple[np.ndarray | None, ...]]


@dataclasses.dataclass(frozen=True)
class Primitive:
    kind: str
    forward: Forward
    backward: Backward
    arity: int | None = None


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_pair(kind: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        out = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        out = None
    if out is None or out not in (a.shape, b.shape):
        msg = f"{kind}: incompatible extents {a.shape} and {b.shape}"
        raise DimensionError(msg)


# --- elementwise binary ---------------------------------------------------------------------------------------------


def _add_fwd(x, attrs):
    _broadcast_pair("add", *x)
    return x[0] + x[1], {}


def _add_bwd(g, ctx):
    return _sum_to(g, ctx.inputs[0].shape), _sum_to(g, ctx.inputs[1].shape)


def _sub_fwd(x, attrs):
    _broadcast_pair("sub", *x)
    return x[0] - x[1], {}


def _sub_bwd(g, ctx):
    return _sum_to(g, ctx.inputs[0].shape), _sum_to(-g, ctx.inputs[1].shape)


def _mul_fwd(x, attrs):
    _broadcast_pair("mul_elementwise", *x)
    return x[0] * x[1], {}


def _mul_bwd(g, ctx):
    a, b = ctx.inputs
    return (
        _sum_to(g * b, a.shape) if ctx.needs[0] else None,
        _sum_to(g * a, b.shape) if ctx.needs[1] else None,
    )


def _matmul_fwd(x, attrs):
    a, b = x
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        msg = f"matmul: cannot multiply extents {a.shape} and {b.shape}"
        raise DimensionError(msg)
    return a @ b, {}


def _matmul_bwd(g, ctx):
    a, b = ctx.inputs
    return (g @ b.T if ctx.needs[0] else None, a.T @ g if ctx.needs[1] else None)


# --- elementwise unary ----------------------------------------------------------------------------------------------


def _scale_fwd(x, attrs):
    return x[0] * attrs["factor"], {}


def _scale_bwd(g, ctx):
    return (g * ctx.attrs["factor"],)


def _gelu_fwd(x, attrs):
    v = x[0]
    t = np.tanh(GELU_C * (v + 0.044715 * v**3))
    return 0.5 * v * (1.0 + t), {"t": t}


def _gelu_bwd(g, ctx):
    v = ctx.inputs[0]
    t = ctx.saved["t"]
    dt = (1.0 - t**2) * GELU_C * (1.0 + 3 * 0.044715 * v**2)
    return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)


def _relu_fwd(x, attrs):
    return np.maximum(x[0], 0.0), {}


def _relu_bwd(g, ctx):
    return (g * (ctx.inputs[0] > 0),)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _sigmoid_fwd(x, attrs):
    return _sigmoid(x[0]), {}


def _sigmoid_bwd(g, ctx):
    y = ctx.output
    return (g * y * (1.0 - y),)


def _log_fwd(x, attrs):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(x[0]), {}


def _log_bwd(g, ctx):
    return (g / ctx.inputs[0],)


def _pow_fwd(x, attrs):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.power(x[0], attrs["exponent"]), {}


def _pow_bwd(g, ctx):
    v = ctx.inputs[0]
    p = ctx.attrs["exponent"]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = p * np.power(v, p - 1.0)
    # slope at an exact zero base is taken as 0 for fractional exponents
    d = np.where(v == 0.0, 0.0 if p < 1 else d, d)
    return (g * d,)


def _clip_fwd(x, attrs):
    return np.clip(x[0], attrs["lo"], attrs["hi"]), {}


def _clip_bwd(g, ctx):
    v = ctx.inputs[0]
    return (g * ((v >= ctx.attrs["lo"]) & (v <= ctx.attrs["hi"])),)


# --- reductions and structure ---------------------------------------------------------------------------------------


def _softmax_fwd(x, attrs):
    tau = attrs["tau"]
    if not tau > 0:
        msg = f"softmax_with_temperature: temperature must be positive, got {tau}"
        raise ParameterError(msg)
    s = x[0] / tau
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True), {}


def _softmax_bwd(g, ctx):
    y = ctx.output
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)) / ctx.attrs["tau"],)


def _log_softmax_fwd(x, attrs):
    s = x[0] - x[0].max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True)), {}


def _log_softmax_bwd(g, ctx):
    return (g - np.exp(ctx.output) * g.sum(axis=-1, keepdims=True),)


def _gap_fwd(x, attrs):
    v = x[0]
    if v.ndim != 4 or v.shape[2] * v.shape[3] == 0:
        msg = f"global_avg_pool: expected a nonempty (batch, channels, H, W) map, got {v.shape}"
        raise DimensionError(msg)
    # shifted mean: exact for constant maps
    ref = v[:, :, :1, :1]
    return ref[:, :, 0, 0] + (v - ref).mean(axis=(2, 3)), {}


def _gap_bwd(g, ctx):
    shape = ctx.inputs[0].shape
    n = shape[2] * shape[3]
    return (np.broadcast_to(g[:, :, None, None] / n, shape).copy(),)


def _l2n_fwd(x, attrs):
    v = x[0]
    norm = np.sqrt((v * v).sum(axis=-1, keepdims=True))
    degenerate = norm < NORM_GUARD
    denom = np.where(degenerate, norm + NORM_GUARD, norm)
    return v / denom, {"norm": norm, "denom": denom, "degenerate": degenerate}


def _l2n_bwd(g, ctx):
    y = ctx.output
    denom = ctx.saved["denom"]
    regular = (g - y * (g * y).sum(axis=-1, keepdims=True)) / denom
    return (np.where(ctx.saved["degenerate"], g / denom, regular),)


def _sum_fwd(x, attrs):
    return np.asarray(x[0].sum(axis=attrs.get("axis"))), {}


def _expand(g: np.ndarray, shape: tuple[int, ...], axis: int | None) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), shape).copy()


def _sum_bwd(g, ctx):
    return (_expand(g, ctx.inputs[0].shape, ctx.attrs.get("axis")),)


def _mean_fwd(x, attrs):
    v = x[0]
    if v.size == 0:
        msg = "mean: empty input"
        raise DimensionError(msg)
    return np.asarray(v.mean(axis=attrs.get("axis"))), {}


def _mean_bwd(g, ctx):
    shape = ctx.inputs[0].shape
    axis = ctx.attrs.get("axis")
    n = math.prod(shape) if axis is None else shape[axis]
    return (_expand(g, shape, axis) / n,)


def _concat_fwd(x, attrs):
    axis = attrs.get("axis", -1)
    try:
        out = np.concatenate(x, axis=axis)
    except ValueError as e:
        msg = f"concat: incompatible extents {[a.shape for a in x]} along axis {axis}"
        raise DimensionError(msg) from e
    return out, {}


def _concat_bwd(g, ctx):
    axis = ctx.attrs.get("axis", -1)
    bounds = np.cumsum([a.shape[axis] for a in ctx.inputs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _index_fwd(x, attrs):
    return np.array(x[0][attrs["key"]]), {}


def _index_bwd(g, ctx):
    out = np.zeros_like(ctx.inputs[0])
    out[ctx.attrs["key"]] = g
    return (out,)


def _conv_fwd(x, attrs):
    v, w, b = x
    stride, padding = attrs.get("stride", 1), attrs.get("padding", 0)
    if v.ndim != 4 or w.ndim != 3 or b.shape != (w.shape[0],) or v.shape[1] != w.shape[1]:
        msg = f"conv2d_time: input {v.shape}, kernel {w.shape} and bias {b.shape} do not conform"
        raise DimensionError(msg)
    k = w.shape[2]
    width = v.shape[3]
    out_width = (width + 2 * padding - k) // stride + 1
    if out_width < 1:
        msg = f"conv2d_time: width {width} too short for kernel {k} with padding {padding}"
        raise DimensionError(msg)
    padded = np.pad(v, ((0, 0), (0, 0), (0, 0), (padding, padding)))
    idx = np.arange(out_width)[:, None] * stride + np.arange(k)[None, :]
    cols = padded[..., idx]  # (B, Cin, H, W', k)
    out = np.tensordot(cols, w, axes=([1, 4], [1, 2]))  # (B, H, W', Cout)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out), {"cols": cols, "idx": idx, "padded_shape": padded.shape}


def _conv_bwd(g, ctx):
    v, w, _ = ctx.inputs
    cols, idx = ctx.saved["cols"], ctx.saved["idx"]
    padding = ctx.attrs.get("padding", 0)
    gt = g.transpose(0, 2, 3, 1)  # (B, H, W', Cout)
    gw = np.tensordot(gt, cols, axes=([0, 1, 2], [0, 2, 3])) if ctx.needs[1] else None
    gb = g.sum(axis=(0, 2, 3)) if ctx.needs[2] else None
    gv = None
    if ctx.needs[0]:
        gcols = np.tensordot(gt, w, axes=([3], [0]))  # (B, H, W', Cin, k)
        gpad = np.zeros(ctx.saved["padded_shape"])
        for j in range(idx.shape[1]):
            gpad[:, :, :, idx[:, j]] += gcols[..., j].transpose(0, 3, 1, 2)
        gv = gpad[..., padding : padding + v.shape[3]]
    return gv, gw, gb


PRIMITIVES: dict[str, Primitive] = {
    p.kind: p
    for p in (
        Primitive("matmul", _matmul_fwd, _matmul_bwd, 2),
        Primitive("conv2d_time", _conv_fwd, _conv_bwd, 3),
        Primitive("add", _add_fwd, _add_bwd, 2),
        Primitive("sub", _sub_fwd, _sub_bwd, 2),
        Primitive("mul_elementwise", _mul_fwd, _mul_bwd, 2),
        Primitive("scale", _scale_fwd, _scale_bwd, 1),
        Primitive("gelu", _gelu_fwd, _gelu_bwd, 1),
        Primitive("relu", _relu_fwd, _relu_bwd, 1),
        Primitive("sigmoid", _sigmoid_fwd, _sigmoid_bwd, 1),
        Primitive("softmax_with_temperature", _softmax_fwd, _softmax_bwd, 1),
        Primitive("log_softmax", _log_softmax_fwd, _log_softmax_bwd, 1),
        Primitive("global_avg_pool", _gap_fwd, _gap_bwd, 1),
        Primitive("l2_normalize", _l2n_fwd, _l2n_bwd, 1),
        Primitive("log", _log_fwd, _log_bwd, 1),
        Primitive("pow", _pow_fwd, _pow_bwd, 1),
        Primitive("sum", _sum_fwd, _sum_bwd, 1),
        Primitive("mean", _mean_fwd, _mean_bwd, 1),
        Primitive("concat", _concat_fwd, _concat_bwd),
        Primitive("clip", _clip_fwd, _clip_bwd, 1),
        Primitive("index", _index_fwd, _index_bwd, 1),
    )
}


def forward_primitive(kind: str, inputs: abc.Sequence[Tensor], **attrs: typing.Any) -> Tensor:
    primitive = PRIMITIVES.get(kind)
    if primitive is None:
        msg = f"Unknown primitive {kind!r}"
        raise ParameterError(msg)
    if primitive.arity is not None and len(inputs) != primitive.arity:
        msg = f"{kind} takes {primitive.arity} inputs, got {len(inputs)}"
        raise DimensionError(msg)

    arrays = tuple(t.data for t in inputs)
    out, saved = primitive.forward(arrays, attrs)
    if _debug["check_finite"] and not np.all(np.isfinite(out)):
        msg = f"{kind} produced non-finite values"
        raise NumericalError(msg)

    result = Tensor(out)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        ctx = Context(
            inputs=arrays,
            output=out,
            saved=saved,
            attrs=attrs,
            needs=tuple(t.requires_grad for t in inputs),
        )
        tape.record(kind, inputs, result, ctx)
    return result


def backward(loss: Tensor, wrt: abc.Iterable[Tensor] = ()) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss, keyed by node id.

    Every grad-tracked leaf on the loss's tape gets an entry; tensors in `wrt`
    that did not participate map to zeros.
    """
    if loss.data.size != 1:
        msg = f"backward needs a scalar loss, got shape {loss.shape}"
        raise ContractError(msg)
    tape = loss.tape
    if tape is None or loss.node_id not in tape.produced:
        msg = "loss was not produced on a tape; run the forward pass inside `with Tape():`"
        raise ContractError(msg)

    pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        g = pending.pop(entry.output, None)
        if g is None:
            continue
        input_grads = PRIMITIVES[entry.kind].backward(g, entry.ctx)
        for node_id, grad, needed in zip(entry.inputs, input_grads, entry.ctx.needs, strict=True):
            if not needed or grad is None:
                continue
            pending[node_id] = pending[node_id] + grad if node_id in pending else grad

    grads = {node_id: pending.get(node_id, np.zeros_like(leaf.data)) for node_id, leaf in tape.leaves.items()}
    for t in wrt:
        grads.setdefault(t.node_id, np.zeros_like(t.data))
    return grads


# --- convenience wrappers -------------------------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("matmul", [a, b])


def add(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("add", [a, b])


def sub(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("sub", [a, b])


def mul(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("mul_elementwise", [a, b])


def scale(a: Tensor, factor: float) -> Tensor:
    return forward_primitive("scale", [a], factor=float(factor))


def gelu(a: Tensor) -> Tensor:
    return forward_primitive("gelu", [a])


def relu(a: Tensor) -> Tensor:
    return forward_primitive("relu", [a])


def sigmoid(a: Tensor) -> Tensor:
    return forward_primitive("sigmoid", [a])


def softmax(a: Tensor, tau: float = 1.0) -> Tensor:
    return forward_primitive("softmax_with_temperature", [a], tau=tau)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise z - logsumexp(z), max-shifted."""
    return forward_primitive("log_softmax", [a])


def global_avg_pool(a: Tensor) -> Tensor:
    return forward_primitive("global_avg_pool", [a])


def l2_normalize(a: Tensor) -> Tensor:
    return forward_primitive("l2_normalize", [a])


def log(a: Tensor) -> Tensor:
    return forward_primitive("log", [a])


def power(a: Tensor, exponent: float) -> Tensor:
    return forward_primitive("pow", [a], exponent=float(exponent))


def total(a: Tensor, axis: int | None = None) -> Tensor:
    return forward_primitive("sum", [a], axis=axis)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    return forward_primitive("mean", [a], axis=axis)


def concat(parts: abc.Sequence[Tensor], axis: int = -1) -> Tensor:
    return forward_primitive("concat", parts, axis=axis)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    return forward_primitive("clip", [a], lo=lo, hi=hi)


def index(a: Tensor, key: typing.Any) -> Tensor:
    return forward_primitive("index", [a], key=key)


def conv2d_time(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return forward_primitive("conv2d_time", [x, weight, bias], stride=stride, padding=padding)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(x, weight), bias)


# --- gradient checking ----------------------------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class GradcheckReport:
    max_rel_error: float
    kink_distance: float
    n_checked: int


def relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    fn: abc.Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    rng: np.random.Generator,
    h: float = 1e-5,
    coords_per_param: int = 1,
) -> GradcheckReport:
    """Compare tape gradients with central differences on sampled coordinates."""
    leaves = {name: Tensor(value, requires_grad=True) for name, value in params.items()}
    with Tape() as tape:
        loss = fn(leaves)
    grads = backward(loss, leaves.values())
    kink = tape.min_kink_distance()

    def evaluate(name: str, flat: int, delta: float) -> float:
        shifted = {k: Tensor(v) for k, v in params.items()}
        arr = params[name].copy()
        arr.reshape(-1)[flat] += delta
        shifted[name] = Tensor(arr)
        return fn(shifted).item()

    worst = 0.0
    checked = 0
    for name, value in params.items():
        if value.size == 0:
            continue
        analytic = grads[leaves[name].node_id].reshape(-1)
        picks = rng.choice(value.size, size=min(coords_per_param, value.size), replace=False)
        for flat in picks:
            numeric = (evaluate(name, int(flat), h) - evaluate(name, int(flat), -h)) / (2 * h)
            worst = max(worst, relative_error(float(analytic[flat]), numeric))
            checked += 1
    logging.debug(f"gradcheck: {checked} coordinates, max relative error {worst:.3e}")
    return GradcheckReport(max_rel_error=worst, kink_distance=kink, n_checked=checked)
