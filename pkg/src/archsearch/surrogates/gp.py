"""Gaussian process regression with a grid-searched squared-exponential kernel.

Targets are standardized before fitting (zero mean, unit variance), the
prior amplitude is 1 and (length-scale, noise variance) maximize the log
marginal likelihood over a small grid.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .base import Predictor, SingularSystem, TrainingSet, _arr, encode_features, fingerprint

log = logging.getLogger(__name__)

LENGTH_FACTORS = (0.5, 1.0, 2.0, 4.0)
NOISE_GRID = (1e-4, 1e-2)
JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def se_kernel(sqdist, lengthscale):
    return np.exp(-0.5 * sqdist / lengthscale**2)


class GpPredictor(Predictor):
    model_id = "GP"

    def __init__(self, X, alpha, lengthscale, noise, y_mean, y_std, lml_table=None, fingerprint: str = ""):
        super().__init__(fingerprint)
        self.X = np.asarray(X, dtype=float)
        self.alpha = np.asarray(alpha, dtype=float)
        self.lengthscale = float(lengthscale)
        self.noise = float(noise)
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)
        self.lml_table = lml_table or []

    def _raw(self, X):
        K = se_kernel(cdist(X, self.X, "sqeuclidean"), self.lengthscale)
        return self.y_mean + self.y_std * (K @ self.alpha)

    def state(self):
        return {
            "X": _arr(self.X),
            "alpha": _arr(self.alpha),
            "lengthscale": self.lengthscale,
            "noise": self.noise,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "lml_table": self.lml_table,
        }

    @classmethod
    def from_state(cls, s, fp=""):
        return cls(s["X"], s["alpha"], s["lengthscale"], s["noise"], s["y_mean"], s["y_std"], s.get("lml_table"), fp)


def _factor(K: np.ndarray, noise: float):
    n = len(K)
    for jitter in JITTERS:
        A = K + (noise + jitter) * np.eye(n)
        try:
            return linalg.cholesky(A, lower=True), jitter
        except linalg.LinAlgError:
            continue
    raise SingularSystem(f"Cholesky failed even with jitter {JITTERS[-1]}")


def log_marginal_likelihood(L: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    alpha = linalg.cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * math.log(2 * math.pi)
    return float(lml), alpha


def fit_gp(ts: TrainingSet, lengthscales=None, noises=NOISE_GRID) -> GpPredictor:
    return _fit(ts.genomes, ts.targets, lengthscales, noises)


def _fit(genomes, targets, lengthscales=None, noises=NOISE_GRID) -> GpPredictor:
    X = encode_features(genomes)
    y = np.asarray(targets, dtype=float)
    if lengthscales is None:
        lengthscales = [f * math.sqrt(X.shape[1]) for f in LENGTH_FACTORS]
    mean = float(y.mean())
    std = float(y.std())
    if std == 0.0:
        std = 1.0
    z = (y - mean) / std
    sq = cdist(X, X, "sqeuclidean")
    best = None
    table = []
    for ell in lengthscales:
        K = se_kernel(sq, ell)
        for noise in noises:
            try:
                L, jitter = _factor(K, noise)
            except SingularSystem:
                log.debug("GP grid point (%g, %g) not factorizable", ell, noise)
                continue
            lml, alpha = log_marginal_likelihood(L, z)
            table.append({"lengthscale": ell, "noise": noise, "jitter": jitter, "lml": lml})
            if best is None or lml > best[0]:
                best = (lml, ell, noise, alpha)
    if best is None:
        raise SingularSystem("no GP grid point could be factorized")
    _, ell, noise, alpha = best
    return GpPredictor(X, alpha, ell, noise, mean, std, table, fingerprint(genomes, y))
