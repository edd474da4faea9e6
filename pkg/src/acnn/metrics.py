"""Accuracy and macro-F1 over the three polarity classes."""

import numpy as np

N_CLASSES = 3


def confusion_matrix(gold, pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = gold class, columns = predicted class."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError("gold and pred differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    return cm


def _check(cm):
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if (cm < 0).any():
        raise ValueError("negative counts")
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")
    return cm


def accuracy(cm) -> float:
    cm = _check(cm)
    return float(np.trace(cm) / cm.sum())


def _ratio(num, den):
    # 0/0 is taken as 0
    return num / den if den else 0.0


def per_class_f1(cm) -> np.ndarray:
    cm = _check(cm)
    scores = []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        p = _ratio(tp, cm[:, c].sum())
        r = _ratio(tp, cm[c, :].sum())
        scores.append(_ratio(2 * p * r, p + r))
    return np.array(scores, dtype=np.float64)


def macro_f1(cm) -> float:
    return float(per_class_f1(cm).mean())
