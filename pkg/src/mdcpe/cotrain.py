"""The co-training engine.

MDCPE sample selection (agreement + class-probability diversity, gated by a
class-anchored k-means over the learner's own features), the plain DCPE
baseline, labeled-set bookkeeping, validation-controlled iteration and
co-decision inference.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (InternalError, InvalidConfig, InvalidInput, ShapeError)

log = logging.getLogger(__name__)


@dataclass
class LearnerSnapshot:
    coords: list           # unlabeled pixel coordinates, aligned across learners
    labels: np.ndarray     # (n,), argmax class per sample, 1-based
    probs: np.ndarray      # (n, k)
    feats: np.ndarray      # (n, k)


@dataclass
class KMeansModel:
    centers: np.ndarray      # (k, dim), center i belongs to class i+1
    assignments: np.ndarray  # (n,), 1-based class per sample
    k: int


@dataclass
class CoTrainConfig:
    n_update: int
    max_iterations: int
    epochs1: int
    epochs2: int
    lr1: float
    lr2: float
    batch_size: int
    mode: str = "mdcpe"          # mdcpe | dcpe | supervised
    dcpe_pool_size: int = 1000
    kmeans_sweeps: int = 100
    kmeans_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 0:
            raise InvalidConfig("max_iterations must be >= 0")
        if self.epochs1 <= 0 or self.epochs2 <= 0:
            raise InvalidConfig("per-iteration epoch counts must be positive")
        if self.n_update < 1:
            raise InvalidConfig("n_update must be >= 1")
        if self.mode not in ("mdcpe", "dcpe", "supervised"):
            raise InvalidConfig(f"unknown co-training mode {self.mode!r}")


@dataclass
class CoTrainState:
    s1: list = field(default_factory=list)   # (row, col, label), possibly pseudo
    s2: list = field(default_factory=list)
    du: list = field(default_factory=list)   # (row, col)
    history: list = field(default_factory=list)      # validation OA per iteration
    log_lines: list = field(default_factory=list)
    best_iteration: int = 0
    best_params1: object = None
    best_params2: object = None


def snapshot_unlabeled(learner1, learner2, du):
    """Predictions, probabilities and features of both learners over the
    entire unlabeled pool."""
    if not du:
        empty = LearnerSnapshot([], np.empty(0, dtype=np.int64),
                                np.empty((0, 0)), np.empty((0, 0)))
        return empty, empty
    l1, p1, f1 = learner1.predict_batch(du)
    l2, p2, f2 = learner2.predict_batch(du)
    return (LearnerSnapshot(list(du), l1, p1, f1),
            LearnerSnapshot(list(du), l2, p2, f2))


def _check_aligned(s1, s2):
    if s1.coords != s2.coords:
        raise InternalError("snapshots are not aligned on the same coordinates")


def agreement_set(s1, s2):
    """Indices where both learners predict the same label, with that label
    and the mean agreed-class probability as a credibility score."""
    _check_aligned(s1, s2)
    out = []
    for i in range(len(s1.coords)):
        if s1.labels[i] == s2.labels[i]:
            c = int(s1.labels[i])
            score = 0.5 * (s1.probs[i, c - 1] + s2.probs[i, c - 1])
            out.append((i, c, float(score)))
    return out


def diversity_labels(target, s1, s2, indices=None):
    """Diversity-labeled candidates over the disagreement samples.

    For the first learner's update set the label is argmax(P2 - P1); for the
    second it is argmax(P1 - P2).  The score is the winning probability gap.
    """
    _check_aligned(s1, s2)
    if indices is None:
        indices = [i for i in range(len(s1.coords))
                   if s1.labels[i] != s2.labels[i]]
    out = []
    for i in indices:
        delta = (s2.probs[i] - s1.probs[i]) if target == 1 else \
                (s1.probs[i] - s2.probs[i])
        c = int(np.argmax(delta)) + 1
        out.append((i, c, float(delta[c - 1])))
    return out


def seeded_kmeans(features, anchors, max_sweeps=100, tolerance=1e-8):
    """Lloyd iterations from class-anchored centers; cluster i keeps the
    identity of class i+1.  A cluster left empty keeps its previous center."""
    features = np.asarray(features, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.ndim != 2 or anchors.shape[0] < 1:
        raise InvalidInput("seeded_kmeans needs one anchor per class")
    if features.shape[0] == 0:
        raise InvalidInput("seeded_kmeans: empty feature set")
    if features.shape[1] != anchors.shape[1]:
        raise ShapeError("feature and anchor dimensions differ")
    k = anchors.shape[0]
    centers = anchors.copy()
    assignments = None
    for _ in range(max_sweeps):
        d2 = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assignments = d2.argmin(axis=1)
        moved = 0.0
        new_centers = centers.copy()
        for c in range(k):
            members = features[assignments == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
                moved += float(np.linalg.norm(new_centers[c] - centers[c]))
        centers = new_centers
        if moved < tolerance:
            break
    d2 = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assignments = d2.argmin(axis=1) + 1
    return KMeansModel(centers=centers, assignments=assignments, k=k)


def select_updates(agreement, diversity, assignments, n_update, k):
    """Per-class pick of up to n_update samples whose pseudo-label matches
    the k-means cluster class: agreement candidates first (by agreed-class
    probability), then diversity candidates (by diversity score)."""
    selected = []
    for c in range(1, k + 1):
        cand = sorted(
            [(i, c, s) for i, lbl, s in agreement
             if lbl == c and assignments[i] == c],
            key=lambda t: (-t[2], t[0]))
        cand += sorted(
            [(i, c, s) for i, lbl, s in diversity
             if lbl == c and assignments[i] == c],
            key=lambda t: (-t[2], t[0]))
        if not cand:
            log.warning("class %d contributed no qualifying candidates", c)
        selected.extend((i, c) for i, _, _ in cand[:n_update])
    return selected


def dcpe_update(s1, s2, count, pool_size, rng):
    """Classic DCPE selection on a random sub-pool: agreement samples plus
    the top-scoring diversity samples, no balancing gate."""
    _check_aligned(s1, s2)
    n = len(s1.coords)
    if pool_size >= n:
        pool = list(range(n))
    else:
        pool = sorted(int(i) for i in rng.permutation(n)[:pool_size])
    pool_set = set(pool)
    agree = sorted([a for a in agreement_set(s1, s2) if a[0] in pool_set],
                   key=lambda t: (-t[2], t[0]))
    disagree = [i for i in pool if s1.labels[i] != s2.labels[i]]
    d1 = [(i, c) for i, c, _ in agree]
    d1 += [(i, c) for i, c, _ in sorted(diversity_labels(1, s1, s2, disagree),
                                        key=lambda t: (-t[2], t[0]))]
    d2 = [(i, c) for i, c, _ in agree]
    d2 += [(i, c) for i, c, _ in sorted(diversity_labels(2, s1, s2, disagree),
                                        key=lambda t: (-t[2], t[0]))]
    return d1[:count], d2[:count]


def apply_updates(state, d1, d2):
    """S1 += D1, S2 += D2, Du -= D1 ∪ D2; overlapping coordinates keep their
    per-set labels independently."""
    coords = state.du
    removed = set()
    for i, c in d1:
        if i >= len(coords):
            raise InternalError("selected sample is not in the unlabeled pool")
        state.s1.append((coords[i][0], coords[i][1], c))
        removed.add(i)
    for i, c in d2:
        if i >= len(coords):
            raise InternalError("selected sample is not in the unlabeled pool")
        state.s2.append((coords[i][0], coords[i][1], c))
        removed.add(i)
    state.du = [coords[i] for i in range(len(coords)) if i not in removed]
    return state


def codecide(p1, p2):
    """Label and (unnormalized) combined vector of the product rule."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p1.shape != p2.shape:
        raise ShapeError(f"codecide: {p1.shape} vs {p2.shape}")
    combined = p1 * p2
    return int(np.argmax(combined)) + 1, combined


def codecide_batch(learner1, learner2, coords):
    _, p1, _ = learner1.predict_batch(coords)
    _, p2, _ = learner2.predict_batch(coords)
    return (p1 * p2).argmax(axis=1) + 1


def _validation_oa(learner1, learner2, validation):
    coords = [(r, c) for r, c, _ in validation]
    truth = np.array([lbl for _, _, lbl in validation])
    pred = codecide_batch(learner1, learner2, coords)
    return float((pred == truth).mean())


def _anchor_features(learner, labeled, k, rng):
    """One labeled sample per class, re-drawn each iteration; its feature is
    recomputed with the current learner."""
    anchors = []
    for c in range(1, k + 1):
        members = [(r, cc) for r, cc, lbl in labeled if lbl == c]
        if not members:
            raise InvalidInput(f"no labeled anchor available for class {c}")
        anchors.append(rng.choice(members))
    _, _, feats = learner.predict_batch(anchors)
    return feats


def _log_line(state, iteration, added1, added2, oa, k):
    a1 = ",".join(str(added1.get(c, 0)) for c in range(1, k + 1))
    a2 = ",".join(str(added2.get(c, 0)) for c in range(1, k + 1))
    return (f"iteration={iteration} s1={len(state.s1)} s2={len(state.s2)} "
            f"du={len(state.du)} added1={a1} added2={a2} val_oa={oa:.6f}")


def cotrain_loop(learner1, learner2, labeled, du, validation, config, rng,
                 k):
    """Full MDCPE/DCPE co-training.

    Iteration 0 pre-trains both learners on the labeled set alone; each
    later iteration snapshots the pool, selects updates, retrains, and logs
    the co-decision validation OA.  Returns the state with checkpoints from
    the best-validation iteration (ties -> earliest).
    """
    if not validation:
        raise InvalidInput("cotrain_loop: empty validation set")
    if not labeled:
        raise InvalidInput("cotrain_loop: empty labeled set")
    state = CoTrainState(s1=list(labeled), s2=list(labeled), du=list(du))
    max_iters = 0 if config.mode == "supervised" else config.max_iterations

    def train_both():
        learner1.train(state.s1, config.epochs1, config.lr1,
                       config.batch_size, rng)
        learner2.train(state.s2, config.epochs2, config.lr2,
                       config.batch_size, rng)

    def record(iteration, added1, added2):
        oa = _validation_oa(learner1, learner2, validation)
        state.history.append(oa)
        state.log_lines.append(_log_line(state, iteration, added1, added2,
                                         oa, k))
        if oa > state.history[state.best_iteration] or iteration == 0:
            state.best_iteration = iteration
            state.best_params1 = learner1.checkpoint()
            state.best_params2 = learner2.checkpoint()

    train_both()
    record(0, {}, {})

    for iteration in range(1, max_iters + 1):
        if not state.du:
            break
        du_before = len(state.du)
        snap1, snap2 = snapshot_unlabeled(learner1, learner2, state.du)
        if config.mode == "mdcpe":
            agree = agreement_set(snap1, snap2)
            div1 = diversity_labels(1, snap1, snap2)
            div2 = diversity_labels(2, snap1, snap2)
            anchors1 = _anchor_features(learner1, labeled, k, rng)
            anchors2 = _anchor_features(learner2, labeled, k, rng)
            km1 = seeded_kmeans(snap1.feats, anchors1, config.kmeans_sweeps,
                                config.kmeans_tol)
            km2 = seeded_kmeans(snap2.feats, anchors2, config.kmeans_sweeps,
                                config.kmeans_tol)
            d1 = select_updates(agree, div1, km1.assignments, config.n_update, k)
            d2 = select_updates(agree, div2, km2.assignments, config.n_update, k)
        else:
            count = config.n_update * k
            d1, d2 = dcpe_update(snap1, snap2, count, config.dcpe_pool_size,
                                 rng)
        apply_updates(state, d1, d2)
        du_set = set(state.du)
        assert not du_set & {(r, c) for r, c, _ in state.s1}
        assert not du_set & {(r, c) for r, c, _ in state.s2}
        if d1 or d2:
            assert len(state.du) < du_before
        train_both()
        added1 = _count_by_class(d1)
        added2 = _count_by_class(d2)
        record(iteration, added1, added2)

    state.best_iteration = int(np.argmax(state.history))
    return state


def _count_by_class(selected):
    counts = {}
    for _, c in selected:
        counts[c] = counts.get(c, 0) + 1
    return counts
