"""Classifier calibration with a fixed simplex equiangular tight frame.

The fixed ETF branch scores normalized projected features against frozen
class prototypes; a learnable linear branch runs alongside and the two are
blended with weight k.
"""

import dataclasses
import logging
import math

import numpy as np

from ibanet import tensor as T
from ibanet.errors import ParameterError

DEGENERATE_NORM = 1e-12


@dataclasses.dataclass(frozen=True)
class EtfPrototypes:
    vectors: np.ndarray  # V, d x M
    normalized: np.ndarray  # columns h_m, d x M

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_classes(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def ideal_gram(self) -> np.ndarray:
        m = self.n_classes
        return (m / (m - 1)) * np.eye(m) - (1 / (m - 1)) * np.ones((m, m))

    def max_gram_deviation(self) -> float:
        return float(np.max(np.abs(self.gram() - self.ideal_gram())))


@dataclasses.dataclass(frozen=True)
class Nc3Params:
    g_weight: T.Tensor  # C x d
    g_bias: T.Tensor  # d
    fc_weight: T.Tensor  # C x M, columns w_m
    fc_bias: T.Tensor  # M
    mu: T.Tensor  # (1,)
    k: float


def _orthonormal_columns(a: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def generate_etf(n_classes: int, dim: int | None = None, seed: int = 0) -> EtfPrototypes:
    m = n_classes
    d = m if dim is None else dim
    if m < 2:
        msg = f"a simplex ETF needs at least 2 classes, got {m}"
        raise ParameterError(msg)
    if d < m - 1:
        msg = f"a simplex ETF of {m} classes exists only for d >= M - 1 = {m - 1}, got d = {d}"
        raise ParameterError(msg)

    rng = np.random.default_rng(seed)
    centering = np.eye(m) - np.ones((m, m)) / m
    if d >= m:
        u = _orthonormal_columns(rng.standard_normal((d, m)))
    else:
        # d = M - 1: rotate an orthonormal basis of the complement of the all-ones vector
        complement = _orthonormal_columns(np.column_stack([np.ones(m), np.eye(m)[:, : m - 1]]))[:, 1:].T
        u = _orthonormal_columns(rng.standard_normal((d, d))) @ complement
    vectors = math.sqrt(m / (m - 1)) * u @ centering
    normalized = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
    vectors.setflags(write=False)
    normalized.setflags(write=False)
    return EtfPrototypes(vectors=vectors, normalized=normalized)


class DegenerateCounter:
    def __init__(self) -> None:
        self.count = 0

    def observe(self, projected: np.ndarray) -> None:
        norms = np.linalg.norm(projected, axis=-1)
        if n := int(np.sum(norms < DEGENERATE_NORM)):
            self.count += n
            logging.warning(f"{n} projected features have norm below {DEGENERATE_NORM}; guarding the division")


def etf_branch(
    e_f: T.Tensor,
    prototypes: EtfPrototypes,
    g_weight: T.Tensor,
    g_bias: T.Tensor,
    mu: T.Tensor,
    counter: DegenerateCounter | None = None,
) -> T.Tensor:
    projected = T.linear(e_f, g_weight, g_bias)
    if counter is not None:
        counter.observe(projected.data)
    unit = T.l2_normalize(projected)
    cosines = T.matmul(unit, T.Tensor(prototypes.normalized))
    return T.mul(cosines, mu)


def fc_branch(e_f: T.Tensor, weight: T.Tensor, bias: T.Tensor) -> T.Tensor:
    return T.linear(e_f, weight, bias)


def blend(z_etf: T.Tensor, z_fc: T.Tensor, k: float) -> T.Tensor:
    """k * z_etf + (1 - k) * z_fc; k = 0 is admitted as the linear-only ablation."""
    if not 0 <= k <= 1:
        msg = f"blend coefficient k must lie in [0, 1], got {k}"
        raise ParameterError(msg)
    return T.add(T.scale(z_etf, k), T.scale(z_fc, 1.0 - k))


def classify(
    e_f: T.Tensor,
    prototypes: EtfPrototypes,
    params: Nc3Params,
    counter: DegenerateCounter | None = None,
) -> T.Tensor:
    z_etf = etf_branch(e_f, prototypes, params.g_weight, params.g_bias, params.mu, counter)
    z_fc = fc_branch(e_f, params.fc_weight, params.fc_bias)
    return blend(z_etf, z_fc, params.k)


def predict(logits: np.ndarray) -> np.ndarray:
    """Class with the highest one-vs-rest probability; sigmoid is monotone so argmax of the logits.

    np.argmax keeps the lowest index on ties.
    """
    return np.argmax(np.atleast_2d(logits), axis=-1)
