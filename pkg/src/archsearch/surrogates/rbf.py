"""Multiquadric radial basis function interpolant."""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .base import Predictor, SingularSystem, TrainingSet, _arr, encode_features, fingerprint

JITTER = 1e-8


def multiquadric(r, c):
    return np.sqrt(r * r + c * c)


class RbfPredictor(Predictor):
    model_id = "RBF"

    def __init__(self, centers, coef, shape, offset, fingerprint: str = ""):
        super().__init__(fingerprint)
        self.centers = np.asarray(centers, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.shape = float(shape)
        self.offset = float(offset)

    def _raw(self, X):
        return self.offset + multiquadric(cdist(X, self.centers), self.shape) @ self.coef

    def state(self):
        return {"centers": _arr(self.centers), "coef": _arr(self.coef), "shape": self.shape, "offset": self.offset}

    @classmethod
    def from_state(cls, s, fp=""):
        return cls(s["centers"], s["coef"], s["shape"], s["offset"], fp)


def fit_rbf(ts: TrainingSet, jitter: float = JITTER) -> RbfPredictor:
    """Interpolate the targets; the shape parameter is the median pairwise distance.

    The target mean is removed before solving and added back at prediction.
    """
    return _fit(ts.genomes, ts.targets, jitter)


def _fit(genomes, targets, jitter=JITTER) -> RbfPredictor:
    X = encode_features(genomes)
    y = np.asarray(targets, dtype=float)
    shape = float(np.median(pdist(X)))
    if not shape > 0:
        raise SingularSystem("all training points coincide")
    A = multiquadric(cdist(X, X), shape)
    A[np.diag_indices_from(A)] += jitter
    offset = float(y.mean())
    try:
        coef = linalg.solve(A, y - offset, assume_a="sym", check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"RBF system could not be solved: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise SingularSystem("RBF coefficients are not finite")
    return RbfPredictor(X, coef, shape, offset, fingerprint(genomes, y))
