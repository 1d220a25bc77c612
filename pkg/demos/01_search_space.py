"""
Walking through the architecture encoding
=========================================

A genome is 46 integers: one resolution gene, then for each of five
blocks a depth gene followed by four (kernel, expansion) slots.  Slots
past the block's depth are zero.  This script decodes a few genomes,
prices them, and enumerates the small restricted space that the search
benchmarks use.
"""

import numpy as np

from archsearch.searchspace import (
    FULL_SPACE,
    SearchSpace,
    complexity,
    complexity_batch,
    decode_text,
    encode_text,
    enumerate_array,
    layer_table,
    log10_cardinality,
    sample_uniform,
)
from archsearch.evaluation import synthetic_accuracy
from archsearch.moea import pareto_mask

# The smallest network: resolution 192, two layers per block, kernel 3, expansion 3.
smallest = decode_text("0" + "-2-1-1-1-1-0-0-0-0" * 5)
print("smallest genome:", encode_text(smallest))
print("its layers:")
for row in layer_table(smallest):
    print("   ", row)
print("complexity:", complexity(smallest).as_dict())
print("synthetic accuracy: %.4f" % synthetic_accuracy(smallest[None, :])[0])

# The full space is far too large to enumerate.
print("\nfull space holds about 10^%.1f genomes" % log10_cardinality(FULL_SPACE))
G = sample_uniform(np.random.default_rng(0), FULL_SPACE, 5)
for g, c in zip(G, complexity_batch(G)):
    print(f"  {encode_text(g)}  madds={c[0]:.3g}  params={c[1]:.3g}")

# The restricted space varies only resolution and the first two blocks.
reduced = SearchSpace.reduced()
print("\nrestricted space:", reduced.cardinality(), "genomes, variable positions",
      reduced.variable_positions().tolist())
R = enumerate_array(reduced)
acc = synthetic_accuracy(R)
madds = complexity_batch(R)[:, 0]
front = pareto_mask(np.column_stack([-acc, madds]))
print(f"its exact accuracy/MAdds front has {front.sum()} members")
order = np.argsort(madds[front])
for i in order[:: max(1, len(order) // 6)]:
    print(f"  madds={madds[front][i]:.4g}  accuracy={acc[front][i]:.4f}")
