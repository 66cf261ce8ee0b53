"""Confusion matrix, OA/AA/Kappa and classification-map rendering."""

import numpy as np

from .errors import EmptyEvaluation, InvalidClass, InvalidConfig


def confusion(true_labels, predicted_labels, k):
    """k x k count matrix, rows = true class, columns = predicted class."""
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    if true_labels.shape != predicted_labels.shape:
        raise InvalidClass("label sequences have different lengths")
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if not (1 <= t <= k) or not (1 <= p <= k):
            raise InvalidClass(f"label pair ({t}, {p}) outside [1, {k}]")
        cm[t - 1, p - 1] += 1
    return cm


def oa(cm):
    total = cm.sum()
    if total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    return float(np.trace(cm) / total)


def aa(cm):
    """Mean per-class recall over classes with nonzero support."""
    if cm.sum() == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    rows = cm.sum(axis=1)
    present = rows > 0
    recalls = np.diag(cm)[present] / rows[present]
    return float(recalls.mean())


def kappa(cm):
    total = cm.sum()
    if total == 0:
        raise EmptyEvaluation("confusion matrix is empty")
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / total ** 2
    if p_e >= 1.0:
        # single-class degenerate world
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def per_class_accuracy(cm):
    """Recall per class; nan for classes with no support."""
    rows = cm.sum(axis=1)
    out = np.full(cm.shape[0], np.nan)
    present = rows > 0
    out[present] = np.diag(cm)[present] / rows[present]
    return out


def default_palette(k):
    base = [
        (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
        (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
        (210, 245, 60), (250, 190, 190), (0, 128, 128), (230, 190, 255),
        (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
        (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    ]
    while len(base) < k:
        i = len(base)
        base.append(((37 * i) % 256, (97 * i) % 256, (173 * i) % 256))
    return base[:k]


def label_field_to_rgb(labels, palette):
    labels = np.asarray(labels)
    k = int(labels.max())
    if len(palette) < k:
        raise InvalidConfig(
            f"palette has {len(palette)} colors but {k} classes are present")
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    for c in range(1, k + 1):
        rgb[labels == c] = palette[c - 1]
    return rgb


def render_map(labels, palette):
    """Binary PPM (P6) bytes: one palette color per pixel, class 0 black."""
    rgb = label_field_to_rgb(labels, palette)
    h, w = rgb.shape[0], rgb.shape[1]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + rgb.tobytes()
