import numpy as np
import pydantic

from ibanet import fields
from ibanet import tensor as T
from ibanet.errors import ContractError, ParameterError

PROB_FLOOR = 1e-12


class LossConfig(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    kind: fields.LossKind = "cb_focal"
    beta: float = pydantic.Field(default=0.9999, ge=0.0, lt=1.0)
    gamma: pydantic.NonNegativeFloat = 0.5


class ClassWeights(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    alpha: tuple[float, ...]
    beta: float
    counts: tuple[int, ...]


def class_weights(counts: np.ndarray | list[int], beta: float) -> ClassWeights:
    """alpha_y = (1 - beta) / (1 - beta ** n_y), the inverse effective number of samples."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0 or counts.min() < 1:
        msg = f"class counts must all be >= 1, got {counts.tolist()}"
        raise ParameterError(msg)
    if not 0 <= beta < 1:
        msg = f"beta must lie in [0, 1), got {beta}"
        raise ParameterError(msg)
    alpha = (1.0 - beta) / (1.0 - np.power(beta, counts.astype(np.float64)))
    return ClassWeights(alpha=tuple(alpha.tolist()), beta=beta, counts=tuple(counts.tolist()))


def _check_targets(logits: T.Tensor, targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.data.ndim != 2 or logits.shape[0] != targets.shape[0]:
        msg = f"logits {logits.shape} do not match {targets.shape[0]} targets"
        raise ContractError(msg)
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        msg = f"targets must lie in [0, {logits.shape[1]}), got {targets.tolist()}"
        raise ContractError(msg)
    return targets


def _one_hot(targets: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[targets]


def cb_focal(logits: T.Tensor, targets: np.ndarray, weights: ClassWeights, gamma: float) -> T.Tensor:
    """Class-balanced focal loss, one-vs-rest sigmoid form, averaged over the batch.

    The true class keeps its logit and every other class is negated, so each
    class contributes a binary term; alpha_y scales the whole per-sample sum.
    """
    targets = _check_targets(logits, targets)
    one_hot = _one_hot(targets, logits.shape[1])
    z_t = T.mul(logits, T.Tensor(2.0 * one_hot - 1.0))
    p_t = T.clip(T.sigmoid(z_t), PROB_FLOOR, 1.0)
    focal = T.power(T.sub(T.Tensor(np.ones(p_t.shape)), p_t), gamma)
    per_sample = T.total(T.mul(focal, T.log(p_t)), axis=1)
    alpha = np.asarray(weights.alpha)[targets]
    return T.scale(T.mean(T.mul(per_sample, T.Tensor(alpha))), -1.0)


def cross_entropy(logits: T.Tensor, targets: np.ndarray) -> T.Tensor:
    targets = _check_targets(logits, targets)
    picked = T.total(T.mul(T.log_softmax(logits), T.Tensor(_one_hot(targets, logits.shape[1]))), axis=1)
    return T.scale(T.mean(picked), -1.0)


def compute_loss(logits: T.Tensor, targets: np.ndarray, config: LossConfig, weights: ClassWeights) -> T.Tensor:
    if config.kind == "cross_entropy":
        return cross_entropy(logits, targets)
    return cb_focal(logits, targets, weights, config.gamma)
