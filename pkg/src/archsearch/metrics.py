"""Front quality and rank-correlation metrics.

All objectives follow the minimization convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


class AllTied(ValueError):
    """A rank correlation is undefined because one input has no variation."""


MC_SAMPLES = 10**6


@dataclass(frozen=True)
class HvConfig:
    """Reference point plus the affine normalization applied before measuring.

    Objective ``i`` is mapped to ``(f_i - ideal_i) / (ref_i - ideal_i)`` so
    the reference point becomes the all-ones corner.
    """

    ref_point: tuple[float, ...]
    ideal: tuple[float, ...] | None = None

    def __post_init__(self):
        ref = tuple(float(v) for v in self.ref_point)
        ideal = tuple(0.0 for _ in ref) if self.ideal is None else tuple(float(v) for v in self.ideal)
        if len(ideal) != len(ref):
            raise ValueError("ideal and reference point differ in length")
        if any(r <= i for r, i in zip(ref, ideal)):
            raise ValueError("reference point must be strictly worse than the ideal point")
        object.__setattr__(self, "ref_point", ref)
        object.__setattr__(self, "ideal", ideal)

    @classmethod
    def from_points(cls, points: np.ndarray, margin: float = 1.1) -> "HvConfig":
        """Reference at ``margin`` times the componentwise worst of ``points``.

        Objectives are assumed non-negative (error rates, counts, times).
        """
        worst = np.asarray(points, dtype=float).max(axis=0)
        return cls(tuple(np.maximum(worst * margin, 1e-12)))

    def normalize(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        ideal = np.array(self.ideal)
        return (p - ideal) / (np.array(self.ref_point) - ideal)

    def hypervolume(self, points: np.ndarray, **kw) -> float:
        p = np.asarray(points, dtype=float)
        if p.size == 0:
            return 0.0
        return hypervolume(self.normalize(p), np.ones(len(self.ref_point)), **kw)

    def to_dict(self) -> dict:
        return {"ref_point": list(self.ref_point), "ideal": list(self.ideal)}

    @classmethod
    def from_dict(cls, d: dict) -> "HvConfig":
        return cls(tuple(d["ref_point"]), tuple(d["ideal"]))


def _clip(points, ref) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(ref, dtype=float)
    p = np.asarray(points, dtype=float).reshape(-1, ref.size)
    return p[np.all(p <= ref, axis=1)], ref


def _hv2d(p: np.ndarray, ref: np.ndarray) -> float:
    order = np.lexsort((p[:, 1], p[:, 0]))
    volume = 0.0
    best_f2 = ref[1]
    xs, ys = [], []
    for x, y in p[order]:
        if y < best_f2:
            xs.append(x)
            ys.append(y)
            best_f2 = y
    xs.append(ref[0])
    for i, y in enumerate(ys):
        volume += (xs[i + 1] - xs[i]) * (ref[1] - y)
    return volume


def _hv3d(p: np.ndarray, ref: np.ndarray) -> float:
    p = p[np.argsort(p[:, 2], kind="stable")]
    volume = 0.0
    for i in range(len(p)):
        upper = p[i + 1, 2] if i + 1 < len(p) else ref[2]
        thickness = upper - p[i, 2]
        if thickness > 0:
            volume += thickness * _hv2d(p[: i + 1, :2], ref[:2])
    return volume


def hypervolume(points, ref, *, n_samples: int = MC_SAMPLES, seed: int = 0) -> float:
    """Volume dominated by ``points`` and bounded by ``ref``.

    Points not componentwise ``<= ref`` are ignored.  Exact for two and
    three objectives; for more, a seeded Monte Carlo estimate (see
    :func:`hypervolume_mc` for its standard error).
    """
    p, ref = _clip(points, ref)
    if len(p) == 0:
        return 0.0
    m = ref.size
    if m == 1:
        return float(ref[0] - p[:, 0].min())
    if m == 2:
        return float(_hv2d(p, ref))
    if m == 3:
        return float(_hv3d(p, ref))
    return hypervolume_mc(p, ref, n_samples=n_samples, seed=seed)[0]


def hypervolume_mc(points, ref, *, n_samples: int = MC_SAMPLES, seed: int = 0, chunk: int = 100_000) -> tuple[float, float]:
    """Monte Carlo hypervolume: returns ``(estimate, standard_error)``.

    Samples are uniform in the box spanned by the componentwise minimum of
    the points and the reference point.
    """
    p, ref = _clip(points, ref)
    if len(p) == 0:
        return 0.0, 0.0
    low = p.min(axis=0)
    box = float(np.prod(ref - low))
    if box == 0.0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        s = rng.uniform(low, ref, size=(n, ref.size))
        dominated = np.zeros(n, dtype=bool)
        for q in p:
            dominated |= np.all(q <= s, axis=1)
        hits += int(dominated.sum())
        done += n
    frac = hits / n_samples
    return box * frac, box * np.sqrt(frac * (1 - frac) / n_samples)


def hypervolume_curve(points: np.ndarray, cfg: HvConfig) -> np.ndarray:
    """Hypervolume of every prefix of ``points`` (rows in evaluation order)."""
    p = np.asarray(points, dtype=float)
    return np.array([cfg.hypervolume(p[: i + 1]) for i in range(len(p))])


# -- correlations ---------------------------------------------------------------------


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise AllTied("rank correlation undefined for a constant input")
    return x, y


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall rank correlation (tau-b)."""
    x, y = _check_pair(x, y)
    return float(stats.kendalltau(x, y, variant="b").statistic)


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x, y = _check_pair(x, y)
    rx = stats.rankdata(x) - (x.size + 1) / 2
    ry = stats.rankdata(y) - (y.size + 1) / 2
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def rmse(pred, true) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    true = np.asarray(true, dtype=float).ravel()
    if pred.size != true.size or pred.size == 0:
        raise ValueError("rmse needs two non-empty vectors of equal length")
    return float(np.sqrt(np.mean((pred - true) ** 2)))


def spearman_matrix(columns: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise Spearman correlations; undefined entries are NaN."""
    k = len(columns)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            try:
                out[i, j] = out[j, i] = spearman(columns[i], columns[j])
            except AllTied:
                out[i, j] = out[j, i] = np.nan
    return out
