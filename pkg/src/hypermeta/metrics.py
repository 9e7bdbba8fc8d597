"""Confusion matrices, per-class F1 and the report record."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Any

import numpy as np


def confusion(preds, labels, n_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {labels.size} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def per_class_f1(cm) -> np.ndarray:
    """F1 per class; 0 where precision + recall is 0 (including absent classes)."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    precision = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros_like(tp), where=true_tot > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def config_digest(*configs) -> str:
    """Stable short hash over the fields of one or more config dataclasses."""
    payload = []
    for c in configs:
        payload.append([type(c).__name__, asdict(c) if is_dataclass(c) else c])
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricsReport:
    accuracy: float
    f1: list[float]
    macro_f1: float
    confusion: np.ndarray
    n_eval: int
    metadata: dict[str, Any] = field(default_factory=dict)
    control: MetricsReport | None = None

    @classmethod
    def from_predictions(cls, preds, labels, n_classes: int, **metadata) -> MetricsReport:
        cm = confusion(preds, labels, n_classes)
        f1 = per_class_f1(cm)
        return cls(
            accuracy=accuracy(cm),
            f1=[float(v) for v in f1],
            macro_f1=float(f1.mean()) if f1.size else 0.0,
            confusion=cm,
            n_eval=int(cm.sum()),
            metadata=dict(metadata),
        )

    def to_dict(self) -> dict[str, Any]:
        out = {
            "accuracy": self.accuracy,
            "f1": list(self.f1),
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "n_eval": self.n_eval,
            "metadata": self.metadata,
        }
        if self.control is not None:
            out["control"] = self.control.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def confusion_csv(self) -> str:
        C = self.confusion.shape[0]
        lines = ["true\\pred," + ",".join(str(j) for j in range(C))]
        lines += [f"{i}," + ",".join(str(int(v)) for v in row) for i, row in enumerate(self.confusion)]
        return "\n".join(lines) + "\n"
