"""
Evaluating through a child process
==================================

Training jobs usually live outside the search process.  The external
evaluator speaks one JSON object per line over stdin/stdout; the bundled
stub answers with the synthetic landscape, optionally out of order and
with a deliberately lost request, so the run below should match an
in-process run exactly.
"""

import sys
from dataclasses import replace

from archsearch import driver
from archsearch.driver import RunConfig

cfg = RunConfig(n_initial=20, iterations=2, batch_size=4, space="reduced", pop_size=20, generations=10, seed=0)
local = driver.run_search(cfg)

stub = [sys.executable, "-m", "archsearch.stub", "--variant", "smooth", "--shuffle", "--drop-once", "21"]
remote = driver.run_search(replace(cfg, evaluator={"kind": "external", "command": stub, "timeout": 1.0}))

for a, b in zip(local.archive, remote.archive):
    assert (a.text, a.accuracy) == (b.text, b.accuracy)
print(f"{len(remote.archive)} evaluations through the child process match the in-process run")
print("evaluator column:", sorted({a.evaluator for a in remote.archive}))
