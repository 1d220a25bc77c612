"""
Comparing the accuracy predictors
=================================

Four regressors learn accuracy from genomes: a small perceptron, a
regression tree, a radial basis interpolant and a Gaussian process.
The switcher cross-validates all four and keeps whichever ranks held-out
genomes best.  Here each one is trained on 300 synthetic evaluations
and scored on 200 unseen ones.
"""

import time

import numpy as np

from archsearch.evaluation import synthetic_accuracy
from archsearch.metrics import kendall_tau, spearman
from archsearch.searchspace import FULL_SPACE, sample_uniform
from archsearch.surrogates import MODEL_IDS, TrainingSet, adaptive_switch, fit_model

rng = np.random.default_rng(1)
G = np.unique(sample_uniform(rng, FULL_SPACE, 600), axis=0)[:500]
G = G[rng.permutation(len(G))]

for variant in ("smooth", "rugged", "deceptive"):
    y = synthetic_accuracy(G, variant)
    train, test = slice(0, 300), slice(300, None)
    print(f"\n{variant} landscape")
    for model in MODEL_IDS:
        t0 = time.perf_counter()
        pred = fit_model(model, G[train], y[train], seed=0).predict(G[test])
        print(f"  {model:>4}: kendall {kendall_tau(pred, y[test]):.3f}  "
              f"spearman {spearman(pred, y[test]):.3f}  ({time.perf_counter() - t0:.2f} s)")
    chosen, scores = adaptive_switch(TrainingSet(G[train], y[train]), seed=0)
    pred = chosen.predict(G[test])
    cv = ", ".join(f"{s.model_id} {s.kendall_tau:.3f}" for s in scores)
    print(f"  switch picked {chosen.model_id} (cv tau: {cv}); held-out kendall {kendall_tau(pred, y[test]):.3f}")
