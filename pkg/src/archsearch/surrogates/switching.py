"""Adaptive Switching: pick the predictor with the best cross-validated ranking."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..metrics import AllTied, kendall_tau, rmse
from . import cart, gp, mlp, rbf
from .base import MODEL_IDS, AllModelsFailed, Predictor, SurrogateError, TrainingSet

log = logging.getLogger(__name__)

N_FOLDS = 10


@dataclass(frozen=True)
class CvScore:
    model_id: str
    kendall_tau: float
    rmse: float
    fold_taus: tuple[float, ...] = ()

    def as_row(self) -> dict:
        return {"model": self.model_id, "cv_tau": self.kendall_tau, "cv_rmse": self.rmse}


def fit_model(model_id: str, genomes, targets, seed=0) -> Predictor:
    """Fit one predictor without the training-set size check (used on CV folds)."""
    if model_id == "MLP":
        return mlp._fit(genomes, targets, seed)
    if model_id == "CART":
        return cart._fit(genomes, targets)
    if model_id == "RBF":
        return rbf._fit(genomes, targets)
    if model_id == "GP":
        return gp._fit(genomes, targets)
    raise ValueError(f"unknown model {model_id!r}")


def fold_indices(n: int, seed, n_folds: int = N_FOLDS) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, n_folds)]


def _tau_or_zero(pred, true) -> float:
    try:
        return kendall_tau(pred, true)
    except AllTied:
        return 0.0


def cross_validate(ts: TrainingSet, model_id: str, seed=0, n_folds: int = N_FOLDS) -> CvScore:
    """Mean held-out Kendall tau and RMSE over ``n_folds`` folds.

    A fold whose predictions (or targets) are all tied scores tau 0.
    """
    taus, errs = [], []
    folds = fold_indices(len(ts), seed, n_folds)
    for k, test in enumerate(folds):
        train = np.setdiff1d(np.arange(len(ts)), test)
        model = fit_model(model_id, ts.genomes[train], ts.targets[train], seed=[*np.atleast_1d(seed), k])
        pred = model.predict(ts.genomes[test])
        taus.append(_tau_or_zero(pred, ts.targets[test]))
        errs.append(rmse(pred, ts.targets[test]))
    return CvScore(model_id, float(np.mean(taus)), float(np.mean(errs)), tuple(taus))


def choose(scores: list[CvScore]) -> CvScore:
    """Highest mean tau; ties go to lower RMSE, then to the fixed model order."""
    order = {m: i for i, m in enumerate(MODEL_IDS)}
    return min(scores, key=lambda s: (-s.kendall_tau, s.rmse, order[s.model_id]))


def adaptive_switch(ts: TrainingSet, seed=0, models=MODEL_IDS, n_folds: int = N_FOLDS) -> tuple[Predictor, list[CvScore]]:
    """Cross-validate every model, refit the winner on all of ``ts``.

    Models whose fitting raises are dropped from the competition.
    """
    scores = []
    for model_id in models:
        try:
            scores.append(cross_validate(ts, model_id, seed, n_folds))
        except SurrogateError as exc:
            log.warning("%s excluded from adaptive switching: %s", model_id, exc)
    if not scores:
        raise AllModelsFailed("every surrogate failed during cross-validation")
    winner = choose(scores)
    return fit_model(winner.model_id, ts.genomes, ts.targets, seed=seed), scores
