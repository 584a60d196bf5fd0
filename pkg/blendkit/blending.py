"""
Ensemble rule and blended distillation loss.

ensemble:          gamma * p_teacher + (1 - gamma) * p_student
cross_entropy_hard: -log softmax(q)[label]
cross_entropy_soft: -sum_c p_teacher[c] * log softmax(q)[c]
blended_loss:      lam * soft + (1 - lam) * hard, averaged over the batch

All losses take student logits and go through log-softmax, never through the
log of a probability. Teacher posteriors are plain arrays; no gradient ever
reaches them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from blendkit.models import ClassDistribution
from blendkit.tensor import Tensor, as_tensor, log_softmax, mean, mul, pick, reshape, row_sum
from blendkit.util.errors import ConfigError, DimensionError, InputError
from blendkit.util.validation import check_unit_interval

TeacherProbs = Union[ClassDistribution, np.ndarray]


@dataclass(frozen=True)
class BlendConfig:
    """Weights of the blended objective and the ensemble.

    Attributes:
        lambda_ (float): Soft-loss weight in [0, 1].
        gamma (float): Teacher weight of the ensemble in [0, 1].
        temperature (float): Softening of the soft term; 1.0 uses raw posteriors.
    """

    lambda_: float = 0.5
    gamma: float = 0.4
    temperature: float = 1.0

    def __post_init__(self) -> None:
        check_unit_interval("lambda", self.lambda_)
        check_unit_interval("gamma", self.gamma)
        if not np.isfinite(self.temperature) or self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")


def _probs(p: TeacherProbs) -> np.ndarray:
    if isinstance(p, ClassDistribution):
        return p.probs
    probs = np.asarray(p, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    if probs.ndim != 2:
        raise DimensionError(f"teacher distribution must be n x K, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)) or (probs < 0).any() or np.abs(probs.sum(axis=1) - 1.0).max() > 1e-9:
        raise InputError("teacher input is not a probability distribution")
    return probs


def _logit_rows(q_logits) -> Tensor:
    q_logits = as_tensor(q_logits)
    if q_logits.data.ndim == 1:
        q_logits = reshape(q_logits, (1, q_logits.shape[0]))
    if q_logits.data.ndim != 2:
        raise DimensionError(f"student logits must be n x K, got shape {q_logits.shape}")
    return q_logits


def ensemble(p_t: ClassDistribution, p_s: ClassDistribution, gamma: float) -> ClassDistribution:
    check_unit_interval("gamma", gamma)
    if p_t.probs.shape != p_s.probs.shape:
        raise DimensionError(f"ensemble: teacher {p_t.probs.shape} and student {p_s.probs.shape} differ")
    if gamma == 1.0:
        return ClassDistribution(p_t.probs.copy(), "ensemble")
    if gamma == 0.0:
        return ClassDistribution(p_s.probs.copy(), "ensemble")
    return ClassDistribution(gamma * p_t.probs + (1.0 - gamma) * p_s.probs, "ensemble")


def entropy(p: TeacherProbs) -> np.ndarray:
    """Shannon entropy (nats) of every row, with 0 log 0 taken as 0."""
    probs = _probs(p)
    logs = np.log(np.where(probs > 0, probs, 1.0))
    return -(probs * logs).sum(axis=1)


def cross_entropy_hard(q_logits, labels) -> Tensor:
    """Mean of -log softmax(q)[label] over the batch."""
    q_logits = _logit_rows(q_logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (q_logits.shape[0],):
        raise DimensionError(f"cross_entropy_hard: {labels.shape[0]} labels for {q_logits.shape[0]} rows")
    num_classes = q_logits.shape[1]
    if labels.min() < 0 or labels.max() >= num_classes:
        raise InputError(f"label out of range for {num_classes} classes: {labels.tolist()}")
    return mul(mean(pick(log_softmax(q_logits), labels)), -1.0)


def soften(probs: np.ndarray, temperature: float) -> np.ndarray:
    """p ** (1/T), renormalised per row; T=1 returns the input unchanged."""
    if temperature == 1.0:
        return probs
    powered = np.power(probs, 1.0 / temperature)
    return powered / powered.sum(axis=1, keepdims=True)


def cross_entropy_soft(p_teacher: TeacherProbs, q_logits, temperature: float = 1.0) -> Tensor:
    """Mean of -sum_c p[c] log softmax(q / T)[c], scaled by T**2."""
    q_logits = _logit_rows(q_logits)
    probs = _probs(p_teacher)
    if probs.shape != q_logits.shape:
        raise DimensionError(f"cross_entropy_soft: teacher {probs.shape} and student {q_logits.shape} differ")
    if temperature != 1.0:
        q_logits = mul(q_logits, 1.0 / temperature)
    targets = Tensor(soften(probs, temperature))
    loss = mul(mean(row_sum(mul(targets, log_softmax(q_logits)))), -1.0)
    if temperature != 1.0:
        loss = mul(loss, temperature * temperature)
    return loss


def blended_loss(cfg: BlendConfig, p_teacher: Optional[TeacherProbs], q_logits, labels) -> Tensor:
    """lam * cross_entropy_soft + (1 - lam) * cross_entropy_hard.

    Args:
        cfg: Blend weights; ``cfg.lambda_ == 0`` is the baseline objective.
        p_teacher: Cached teacher posteriors for the batch. May be None when lam is 0.
        q_logits: Student logits, n x K.
        labels: Gold class ids, length n.

    Returns:
        Tensor: scalar batch loss.

    Raises:
        ConfigError: lam > 0 without teacher posteriors.
    """
    if cfg.lambda_ == 1.0:
        return _soft_term(cfg, p_teacher, q_logits)
    hard = cross_entropy_hard(q_logits, labels)
    if cfg.lambda_ == 0.0:
        return hard
    soft = _soft_term(cfg, p_teacher, q_logits)
    return mul(soft, cfg.lambda_) + mul(hard, 1.0 - cfg.lambda_)


def _soft_term(cfg: BlendConfig, p_teacher: Optional[TeacherProbs], q_logits) -> Tensor:
    if p_teacher is None:
        raise ConfigError(f"lambda={cfg.lambda_} needs teacher posteriors")
    return cross_entropy_soft(p_teacher, q_logits, cfg.temperature)
