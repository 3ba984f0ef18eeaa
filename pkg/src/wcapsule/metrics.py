"""Cross-entropy, confusion-matrix metrics and the dynamic cost-sensitive weighting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .corpus import NEGATIVE, POLARITIES, POSITIVE
from .errors import ContractError

PROB_FLOOR = 1e-12
G_MEAN_MODES = ("standard", "literal")


def cross_entropy(p, target: int) -> float:
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= target < p.size:
        raise ContractError(f"target {target} out of range for {p.size} classes")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ContractError(f"probabilities sum to {p.sum()}, not 1")
    return -math.log(max(p[target], PROB_FLOOR))


def cross_entropy_tensor(probs: ad.Tensor, targets: Sequence[int]) -> ad.Tensor:
    """Per-sample ``-log p[target]`` for a (B, C) probability tensor."""
    onehot = np.zeros(probs.shape)
    onehot[np.arange(len(targets)), targets] = 1.0
    picked = ad.sum(probs * onehot, axis=1)
    return -ad.log(ad.clip_min(picked, PROB_FLOOR))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred, positive=POSITIVE):
        tp = fp = tn = fn = 0
        for t, p in zip(y_true, y_pred, strict=True):
            if p == positive:
                if t == positive:
                    tp += 1
                else:
                    fp += 1
            elif t == positive:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    g_mean: float
    undefined: tuple = ()

    def to_dict(self):
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def compute_metrics(cm: ConfusionMatrix, g_mean_mode="standard") -> Metrics:
    """Accuracy, precision, recall, F1 and G-mean; 0/0 yields 0 and is listed in ``undefined``.

    ``g_mean_mode="literal"`` multiplies recall by the false-positive rate
    instead of the specificity; it exists only for auditing.
    """
    if g_mean_mode not in G_MEAN_MODES:
        raise ContractError(f"g_mean_mode must be one of {G_MEAN_MODES}")
    if cm.total == 0:
        raise ContractError("cannot score an empty confusion matrix")
    undefined = []
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", undefined)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", undefined)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", undefined)
    second = cm.fp if g_mean_mode == "literal" else cm.tn
    specificity = _ratio(second, cm.tn + cm.fp, "specificity", undefined)
    g_mean = math.sqrt(recall * specificity)
    return Metrics(accuracy, precision, recall, f1, g_mean, tuple(undefined))


# ---------------------------------------------------------- cost sensitivity

@dataclass(frozen=True)
class CostState:
    ir_overall: float = 1.0
    minority_label: str = NEGATIVE
    g_mean_batch: float = 0.0
    acc_batch: float = 0.0

    def __post_init__(self):
        if self.ir_overall < 1:
            raise ContractError(f"ir_overall must be >= 1, got {self.ir_overall}")
        if self.minority_label not in POLARITIES:
            raise ContractError(f"minority_label must be one of {POLARITIES}")
        for name in ("g_mean_batch", "acc_batch"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_labels(cls, labels, minority_label=None):
        """Imbalance ratio and minority class of a training split (ties pick negative)."""
        n_pos = sum(1 for l in labels if l == POSITIVE)
        n_neg = len(labels) - n_pos
        if minority_label is None:
            minority_label = POSITIVE if n_pos < n_neg else NEGATIVE
        n_min = n_pos if minority_label == POSITIVE else n_neg
        n_maj = len(labels) - n_min
        if n_min == 0:
            raise ContractError("training labels contain no minority samples")
        return cls(ir_overall=max(1.0, n_maj / n_min), minority_label=minority_label)

    def updated(self, y_true, y_pred) -> "CostState":
        """Refresh the batch statistics; batches without minority samples keep the old ones."""
        if self.minority_label not in y_true:
            return self
        cm = ConfusionMatrix.from_labels(y_true, y_pred, positive=self.minority_label)
        m = compute_metrics(cm)
        return replace(self, g_mean_batch=m.g_mean, acc_batch=m.accuracy)


def lambda_weight(state: CostState, sample_label) -> float:
    if sample_label != state.minority_label:
        return 1.0
    return state.ir_overall * math.exp(-state.g_mean_batch / 2) * math.exp(-state.acc_batch / 2)


def cost_sensitive_weights(labels, state: CostState) -> np.ndarray:
    """Per-sample multipliers ``lambda_n / n_class`` so that E = sum(w * loss)."""
    if len(labels) == 0:
        raise ContractError("empty batch")
    counts = {c: sum(1 for l in labels if l == c) for c in POLARITIES}
    return np.array([lambda_weight(state, l) / counts[l] for l in labels])


def cost_sensitive_loss(per_sample, state: CostState) -> float:
    """Class-averaged, lambda-weighted loss over ``(loss, label)`` pairs."""
    per_sample = list(per_sample)
    if not per_sample:
        raise ContractError("empty batch")
    losses = np.array([l for l, _ in per_sample], dtype=np.float64)
    w = cost_sensitive_weights([c for _, c in per_sample], state)
    return float(np.dot(w, losses))
