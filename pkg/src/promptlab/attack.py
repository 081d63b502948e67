"""Single-step sign attack and the accuracy protocols built on it.

Adversarial accuracy uses the restricted protocol: only samples the
pipeline classifies correctly in the clean pass are attacked, and the
score is the fraction of those that remain correct.  An empty correct
set scores 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GraphError, ShapeError
from .tensor import Graph, Tensor, softmax_cross_entropy

__all__ = [
    "AttackConfig",
    "EvalReport",
    "fgsm",
    "standard_accuracy",
    "adversarial_accuracy",
]

_EVAL_BATCH = 256


@dataclass(frozen=True)
class AttackConfig:
    """ℓ∞ perturbation budget in normalized pixel units."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon >= 0.0):
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class EvalReport:
    standard_accuracy: float
    adversarial_accuracy: float
    n_total: int
    n_correct: int
    n_survived_attack: int

    def __post_init__(self):
        if not (0.0 <= self.standard_accuracy <= 1.0):
            raise ConfigError(f"standard_accuracy out of [0,1]: {self.standard_accuracy}")
        if not (0.0 <= self.adversarial_accuracy <= 1.0):
            raise ConfigError(f"adversarial_accuracy out of [0,1]: {self.adversarial_accuracy}")
        if not (0 <= self.n_survived_attack <= self.n_correct <= self.n_total):
            raise ConfigError(
                f"inconsistent counts: {self.n_survived_attack}/{self.n_correct}/{self.n_total}"
            )


def fgsm(pipeline, x: Tensor, y, cfg: AttackConfig, meter=None) -> Tensor:
    """x_adv = clamp01(x + ε·sign(∇_x loss)); sign(0) = 0.

    The gradient is taken through the full pipeline (prompt, network,
    reduction, mapping — whatever the pipeline composes).  The returned
    batch satisfies ‖x_adv − x‖_∞ ≤ ε and x_adv ∈ [0,1] exactly: after
    the clamped step, any float32 rounding overshoot of the ε-ball is
    pulled back by stepping the offending pixels one ulp toward x.
    """
    if cfg.epsilon == 0.0:
        return Tensor(x.data.copy())
    xt = Tensor(x.data.copy(), requires_grad=True)
    with Graph() as g:
        logits = pipeline.logits(xt)
        loss = softmax_cross_entropy(logits, y)
    g.backward(loss)
    if meter is not None:
        meter.add_graph(g)
    if xt.grad is None:
        raise GraphError("pipeline is not differentiable with respect to its input")
    eps = np.float32(cfg.epsilon)
    adv = np.clip(x.data + eps * np.sign(xt.grad), 0.0, 1.0).astype(np.float32)
    for _ in range(4):
        delta = adv - x.data
        over = np.abs(delta) > eps
        if not over.any():
            break
        adv[over] = np.nextafter(adv[over], x.data[over])
    else:  # pragma: no cover - defensive
        raise GraphError("could not confine perturbation to the epsilon ball")
    return Tensor(adv)


def _predict(pipeline, images: np.ndarray) -> np.ndarray:
    """Argmax class per sample; numpy argmax already ties to lowest index."""
    preds = []
    for start in range(0, images.shape[0], _EVAL_BATCH):
        logits = pipeline.logits(Tensor(images[start : start + _EVAL_BATCH]))
        preds.append(logits.data.argmax(axis=1))
    return np.concatenate(preds)


def standard_accuracy(pipeline, dataset) -> float:
    """Fraction of argmax-correct predictions over the dataset."""
    if len(dataset) == 0:
        raise ShapeError("cannot evaluate on an empty dataset")
    preds = _predict(pipeline, dataset.images)
    return float((preds == dataset.labels).mean())


def adversarial_accuracy(pipeline, dataset, cfg: AttackConfig) -> EvalReport:
    """Attack only the initially-correct samples; score the survivors."""
    if len(dataset) == 0:
        raise ShapeError("cannot evaluate on an empty dataset")
    preds = _predict(pipeline, dataset.images)
    correct = preds == dataset.labels
    n_total = len(dataset)
    n_correct = int(correct.sum())
    std_acc = n_correct / n_total
    if n_correct == 0:
        return EvalReport(std_acc, 0.0, n_total, 0, 0)
    images = dataset.images[correct]
    labels = dataset.labels[correct]
    survived = 0
    for start in range(0, images.shape[0], _EVAL_BATCH):
        xb = images[start : start + _EVAL_BATCH]
        yb = labels[start : start + _EVAL_BATCH]
        adv = fgsm(pipeline, Tensor(xb), yb, cfg)
        adv_preds = pipeline.logits(adv).data.argmax(axis=1)
        survived += int((adv_preds == yb).sum())
    return EvalReport(std_acc, survived / n_correct, n_total, n_correct, survived)
