"""Shared pieces of the accuracy predictors."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from ..searchspace import GENE_HIGH, GENE_LOW, GENOME_LENGTH

log = logging.getLogger(__name__)

MIN_TRAINING_SIZE = 20
MODEL_IDS = ("MLP", "CART", "RBF", "GP")


class SurrogateError(RuntimeError):
    pass


class SingularSystem(SurrogateError):
    pass


class DegenerateTargets(SurrogateError):
    pass


class AllModelsFailed(SurrogateError):
    pass


def encode_features(genomes) -> np.ndarray:
    """Min-max scale each gene to [0, 1] by its full-space code range.

    Padding zeros of inactive layer slots map to 0.
    """
    g = np.atleast_2d(np.asarray(genomes, dtype=float))
    return (g - GENE_LOW) / (GENE_HIGH - GENE_LOW)


def fingerprint(genomes: np.ndarray, targets: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(genomes, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(targets, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class TrainingSet:
    genomes: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.genomes, dtype=np.int64))
        y = np.asarray(self.targets, dtype=float).ravel()
        if g.shape[1] != GENOME_LENGTH:
            raise ValueError(f"genomes must have {GENOME_LENGTH} genes")
        if len(g) != len(y):
            raise ValueError(f"{len(g)} genomes but {len(y)} targets")
        if len(y) < MIN_TRAINING_SIZE:
            raise ValueError(f"need at least {MIN_TRAINING_SIZE} samples, got {len(y)}")
        if len(np.unique(g, axis=0)) != len(g):
            raise ValueError("training genomes must be pairwise distinct")
        if not np.all(np.isfinite(y)) or y.min() < 0 or y.max() > 1:
            raise ValueError("targets must lie in [0, 1]")
        object.__setattr__(self, "genomes", g)
        object.__setattr__(self, "targets", y)

    def __len__(self):
        return len(self.targets)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.genomes, self.targets)


class Predictor:
    """A fitted accuracy surrogate; ``predict`` is deterministic and clamped."""

    model_id: str = ""

    def __init__(self, fingerprint: str = ""):
        self.fingerprint = fingerprint

    def _raw(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, genomes) -> np.ndarray:
        X = encode_features(genomes)
        return np.clip(self._raw(X), 0.0, 1.0)

    def state(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "fingerprint": self.fingerprint, "state": self.state()}

    def __repr__(self):
        return f"<{type(self).__name__} {self.fingerprint}>"


def _arr(x) -> list:
    return np.asarray(x).tolist()


def predictor_from_dict(d: dict) -> Predictor:
    from .cart import CartPredictor
    from .gp import GpPredictor
    from .mlp import MlpPredictor
    from .rbf import RbfPredictor

    cls = {"MLP": MlpPredictor, "CART": CartPredictor, "RBF": RbfPredictor, "GP": GpPredictor}[d["model_id"]]
    return cls.from_state(d["state"], d.get("fingerprint", ""))
