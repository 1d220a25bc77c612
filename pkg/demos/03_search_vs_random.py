"""
Surrogate-assisted search against uniform sampling
==================================================

On the restricted space the true front is known, so progress can be
measured as a fraction of the best attainable hypervolume.  Both
methods get the same evaluation budget and share their first 100
samples.  Pass a path to also save the front plot as SVG.
"""

import sys

import numpy as np

from archsearch import driver, metrics
from archsearch.driver import RunConfig
from archsearch.moea import pareto_mask

cfg = RunConfig(n_initial=100, iterations=10, batch_size=8, space="reduced", seed=0)
state = driver.run_search(cfg)
names = cfg.complexity_names

G, F = driver.exhaustive_front(cfg.search_space(), cfg)
best = state.hv_config.hypervolume(F)
search_curve = metrics.hypervolume_curve(state.archive.objective_matrix(names), state.hv_config)
random_archive = driver.random_search(cfg, budget=len(state.archive))
random_curve = metrics.hypervolume_curve(random_archive.objective_matrix(names), state.hv_config)

print("iteration  evaluations  hypervolume  surrogate  batch spearman")
for row in state.metrics:
    print(f"{row['iteration']:>9}  {row['evaluations']:>11}  {row['hypervolume']:.5f}     "
          f"{row['surrogate'] or '-':>6}  {row['batch_spearman']:>10.3f}")

for n in (100, 120, 150, len(search_curve)):
    n = min(n, len(search_curve))
    print(f"after {n:>3} evaluations: search {search_curve[n - 1] / best:.1%}, "
          f"random {random_curve[n - 1] / best:.1%} of the exhaustive front")

if len(sys.argv) > 1:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(F[:, 1], 1 - F[:, 0], s=10, c="0.6", label="exhaustive front")
    found = state.archive.objective_matrix(names)
    mask = pareto_mask(found)
    ax.scatter(found[mask, 1], 1 - found[mask, 0], s=14, c="C3", label="found")
    ax.set_xlabel("madds")
    ax.set_ylabel("accuracy")
    ax.legend()
    fig.savefig(sys.argv[1])
    print("plot written to", sys.argv[1])
