"""Mini-batch training with best-validation checkpoint selection."""

import dataclasses
import logging
import math

import numpy as np
import pydantic

from ibanet import fields, mfc, nc3
from ibanet import tensor as T
from ibanet.data.records import WindowDataset
from ibanet.errors import DataError, NumericalError
from ibanet.loss import LossConfig, class_weights, compute_loss
from ibanet.metrics import AngleReport, ConfusionMatrix, MetricsReport, RouterSummary
from ibanet.network import IbaNet, NetworkSpec, parse_variant
from ibanet.optim import AdamState, adam_step, lr_at_epoch


class TrainConfig(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid")

    epochs: pydantic.PositiveInt = 100
    batch_size: pydantic.PositiveInt = 256
    lr: pydantic.NonNegativeFloat = 1e-4
    weight_decay: pydantic.NonNegativeFloat = 1e-4
    tau: pydantic.PositiveFloat = 0.4
    k: float = pydantic.Field(default=0.3, ge=0.0, le=1.0)
    factors: fields.IntTuple = (2, 4, 8)
    loss: fields.LossKind = "cb_focal"
    beta: float = pydantic.Field(default=0.9999, ge=0.0, lt=1.0)
    gamma: pydantic.NonNegativeFloat = 0.5
    seed: int = 0
    variant: str = "iba_net"
    arch: mfc.Architecture = mfc.Architecture()

    @pydantic.field_validator("variant")
    @classmethod
    def check_variant(cls, value: str) -> str:
        return str(parse_variant(value))

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(kind=self.loss, beta=self.beta, gamma=self.gamma)

    def network_spec(self, dataset: WindowDataset) -> NetworkSpec:
        return NetworkSpec(
            n_classes=dataset.n_classes,
            sensor_axes=dataset.values.shape[1],
            source_rate_hz=dataset.sampling_rate_hz,
            factors=self.factors,
            arch=self.arch,
            tau=self.tau,
            k=self.k,
            variant=self.variant,
        )


class EpochRecord(pydantic.BaseModel):
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    val_accuracy: float


@dataclasses.dataclass(frozen=True)
class TrainResult:
    model: IbaNet
    history: list[EpochRecord]
    best_epoch: int
    best_val_accuracy: float
    degenerate_features: int = 0
    warnings: list[str] = dataclasses.field(default_factory=list)


class FoldResult(pydantic.BaseModel):
    fold_id: int
    test_subject: str | None = None
    history: list[EpochRecord]
    best_epoch: int
    best_val_accuracy: float
    metrics: MetricsReport
    confusion: ConfusionMatrix
    angles: AngleReport
    router_rates: RouterSummary | None = None
    warnings: list[str] = pydantic.Field(default_factory=list)


def accuracy(model: IbaNet, dataset: WindowDataset) -> float:
    return 100.0 * float(np.mean(model.predict(dataset.values) == dataset.labels))


def training_counts(train_set: WindowDataset) -> tuple[np.ndarray, list[str]]:
    """Per-class counts for the loss weights; absent classes fall back to a count of one."""
    counts = train_set.counts()
    warnings = []
    for c in np.flatnonzero(counts == 0):
        msg = f"class {train_set.class_names[c]} has no training samples; its loss weight uses a count of 1"
        logging.warning(msg)
        warnings.append(msg)
    return np.maximum(counts, 1), warnings


def train(config: TrainConfig, train_set: WindowDataset, val_set: WindowDataset) -> TrainResult:
    if not len(train_set) or not len(val_set):
        msg = f"training needs nonempty splits, got {len(train_set)} train and {len(val_set)} validation windows"
        raise DataError(msg)

    counts, warnings = training_counts(train_set)
    weights = class_weights(counts, config.beta)
    loss_config = config.loss_config
    model = IbaNet.build(config.network_spec(train_set), seed=config.seed)
    rng = np.random.default_rng(config.seed)
    counter = nc3.DegenerateCounter()

    params = model.params
    state = AdamState.zeros_like(params)
    best_params, best_epoch, best_val = params, 0, -math.inf
    history: list[EpochRecord] = []
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config.lr, epoch)
        order = rng.permutation(len(train_set))
        loss_sum = 0.0
        correct = 0
        for batch, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            targets = train_set.labels[idx]
            leaves = {name: T.Tensor(value, requires_grad=True) for name, value in params.items()}
            with T.Tape():
                out = model.forward(leaves, train_set.values[idx], counter)
                loss = compute_loss(out.logits, targets, loss_config, weights)
            value = loss.item()
            if not math.isfinite(value):
                msg = f"loss diverged to {value} at epoch {epoch}, batch {batch}"
                raise NumericalError(msg, epoch=epoch, batch=batch)

            by_node = T.backward(loss, leaves.values())
            grads = {name: by_node[leaf.node_id] for name, leaf in leaves.items()}
            params, state = adam_step(params, grads, state, lr=lr, weight_decay=config.weight_decay)
            loss_sum += value * len(idx)
            correct += int(np.sum(nc3.predict(out.logits.data) == targets))

        val_accuracy = accuracy(model.with_params(params), val_set)
        history.append(
            EpochRecord(
                epoch=epoch,
                lr=lr,
                train_loss=loss_sum / len(train_set),
                train_accuracy=100.0 * correct / len(train_set),
                val_accuracy=val_accuracy,
            )
        )
        logging.info(
            f"epoch {epoch:3d} lr {lr:.2e} loss {history[-1].train_loss:.4f} "
            f"train {history[-1].train_accuracy:.2f}% val {val_accuracy:.2f}%"
        )
        if val_accuracy > best_val:
            best_params, best_epoch, best_val = params, epoch, val_accuracy

    if counter.count:
        warnings.append(f"{counter.count} projected features fell below the normalization guard")
    return TrainResult(
        model=model.with_params(best_params),
        history=history,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        degenerate_features=counter.count,
        warnings=warnings,
    )
