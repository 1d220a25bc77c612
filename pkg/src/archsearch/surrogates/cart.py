"""Regression tree grown by greedy variance reduction.

Splits are searched on the raw integer genes (a threshold between two
adjacent codes), which is equivalent to splitting the min-max scaled
features.  Among equally good splits the lowest gene index wins, then the
lowest threshold.
"""

from __future__ import annotations

import numpy as np

from ..searchspace import GENE_HIGH
from .base import Predictor, TrainingSet, _arr, fingerprint

MAX_DEPTH = 12
MIN_SPLIT = 4
N_LEVELS = int(GENE_HIGH.max()) + 1


class CartPredictor(Predictor):
    model_id = "CART"

    def __init__(self, feature, threshold, left, right, value, fingerprint: str = ""):
        super().__init__(fingerprint)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, genomes) -> np.ndarray:
        G = np.atleast_2d(np.asarray(genomes, dtype=float))
        node = np.zeros(len(G), dtype=np.int64)
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                break
            idx = np.flatnonzero(inner)
            f = self.feature[node[idx]]
            go_left = G[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return np.clip(self.value[node], 0.0, 1.0)

    def state(self):
        return {k: _arr(getattr(self, k)) for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_state(cls, s, fp=""):
        return cls(s["feature"], s["threshold"], s["left"], s["right"], s["value"], fp)


def _best_split(G: np.ndarray, y: np.ndarray):
    """Return (gain, gene, threshold) of the best split, or None."""
    n, d = G.shape
    y = y - y.mean()  # centering keeps the SSE differences well conditioned
    flat = (np.arange(d) * N_LEVELS)[None, :] + G
    size = d * N_LEVELS
    cnt = np.bincount(flat.ravel(), minlength=size).reshape(d, N_LEVELS).astype(float)
    s1 = np.bincount(flat.ravel(), weights=np.repeat(y, d), minlength=size).reshape(d, N_LEVELS)
    s2 = np.bincount(flat.ravel(), weights=np.repeat(y * y, d), minlength=size).reshape(d, N_LEVELS)
    cl, sl, ql = cnt.cumsum(1), s1.cumsum(1), s2.cumsum(1)
    tot_n, tot_s, tot_q = float(n), y.sum(), (y * y).sum()
    cr, sr, qr = tot_n - cl, tot_s - sl, tot_q - ql
    valid = (cl > 0) & (cr > 0) & (cnt > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sse_l = ql - sl * sl / cl
        sse_r = qr - sr * sr / cr
    parent = tot_q - tot_s * tot_s / tot_n
    gain = np.where(valid, parent - sse_l - sse_r, -np.inf)
    best = int(np.argmax(gain))
    g = float(gain.flat[best])
    if not np.isfinite(g) or g <= 1e-14 * max(parent, 1e-300) or g <= 0:
        return None
    gene, level = divmod(best, N_LEVELS)
    higher = np.flatnonzero(cnt[gene, level + 1 :] > 0)
    upper = level + 1 + int(higher[0])
    return g, gene, 0.5 * (level + upper)


def fit_cart(ts: TrainingSet, max_depth: int = MAX_DEPTH, min_split: int = MIN_SPLIT) -> CartPredictor:
    return _fit(ts.genomes, ts.targets, max_depth, min_split)


def _fit(genomes, targets, max_depth=MAX_DEPTH, min_split=MIN_SPLIT) -> CartPredictor:
    G = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
    y = np.asarray(targets, dtype=float)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < min_split or np.ptp(y[idx]) == 0:
            continue
        split = _best_split(G[idx], y[idx])
        if split is None:
            continue
        _, gene, thr = split
        mask = G[idx, gene] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = gene, thr
        left[node], right[node] = new_node(li), new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return CartPredictor(feature, threshold, left, right, value, fingerprint(G, y))
