"""
Reusing a front, and searching for one target size
==================================================

Gene frequencies on one front can seed a search on a different
complexity measure.  The same machinery also drives a single-objective
search that trades accuracy against distance from a MAdds target.
"""

import numpy as np

from archsearch import driver, metrics
from archsearch.driver import RunConfig
from archsearch.searchspace import complexity_batch, enumerate_array

space_name = "reduced"
source = driver.run_search(RunConfig(n_initial=100, iterations=6, batch_size=8, space=space_name, seed=1))
space = source.config.search_space()
dist = driver.mine_frequencies(source.archive, ("madds",), space)
print("front gene frequencies at the variable positions:")
for pos in space.variable_positions():
    freq = dist.frequencies()[pos]
    print(f"  gene {pos:>2}: " + "  ".join(f"{c}:{f:.2f}" for c, f in zip(dist.codes[pos], freq)))

latency = RunConfig(n_initial=100, iterations=0, space=space_name, seed=2, objectives=("accuracy", "latency_cpu"))
seeded = driver.transfer_init(dist, 100, seed=[2, 3], space=space)
_, F = driver.exhaustive_front(space, latency)
cfg = metrics.HvConfig.from_points(F)
for label, init in (("uniform", None), ("transferred", seeded)):
    archive = driver.run_search(latency, seeded=init).archive
    hv = cfg.hypervolume(archive.objective_matrix(("latency_cpu",)))
    print(f"{label:>12} initial sample covers {hv / cfg.hypervolume(F):.1%} of the latency front")

madds = complexity_batch(enumerate_array(space))[:, 0]
target = float(np.median(madds))
result = driver.run_scalarized(RunConfig(n_initial=100, iterations=6, batch_size=8, space=space_name, seed=3,
                                         scalar_target=target))
best = result.best
print(f"\ntarget {target:.4g} MAdds: best {best.text}")
print(f"  accuracy {best.accuracy:.4f}, madds {best.complexity['madds']:.4g} "
      f"({best.complexity['madds'] / target - 1:+.1%} from target), value {result.trajectory[-1]:.4f}")
