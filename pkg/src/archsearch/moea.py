"""NSGA-II over integer genomes.

The inner optimizer minimizes a vector of cheap objectives (negated
predicted accuracy plus analytic complexities).  Offspring come from binary
tournaments on (rank, crowding), uniform crossover and random-reset
mutation, and are repaired with :func:`canonicalize_batch`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .searchspace import FULL_SPACE, GENOME_LENGTH, SearchSpace, canonicalize_batch

log = logging.getLogger(__name__)

ObjectiveFn = Callable[[np.ndarray], np.ndarray]


class ArityMismatch(ValueError):
    pass


def dominates(a, b) -> bool:
    """True when ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ArityMismatch(f"objective vectors of different arity: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row i dominates row j."""
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    le = np.ones((n, n), dtype=bool)
    lt = np.zeros((n, n), dtype=bool)
    for k in range(m):
        col = F[:, k]
        le &= col[:, None] <= col[None, :]
        lt |= col[:, None] < col[None, :]
    return le & lt


def nondominated_sort(F: np.ndarray) -> list[np.ndarray]:
    """Partition row indices of ``F`` into successive non-dominated fronts."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = len(F)
    if n == 0:
        raise ValueError("cannot sort an empty population")
    D = dominance_matrix(F)
    n_dominators = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(n_dominators == 0)
    while current.size:
        fronts.append(current)
        n_dominators = n_dominators - D[current].sum(axis=0)
        n_dominators[current] = -1
        current = np.flatnonzero(n_dominators == 0)
    return fronts


def front_ranks(F: np.ndarray) -> np.ndarray:
    rank = np.empty(len(F), dtype=np.int64)
    for i, front in enumerate(nondominated_sort(F)):
        rank[front] = i
    return rank


def pareto_mask(F: np.ndarray) -> np.ndarray:
    mask = np.zeros(len(F), dtype=bool)
    mask[nondominated_sort(F)[0]] = True
    return mask


def crowding_distance(F: np.ndarray) -> np.ndarray:
    """Crowding distance of the points of one front.

    Extremes along each objective get +inf, interior points sum the
    normalized gap between their neighbours.  Repeated copies of a point
    after its first occurrence get 0 so that duplicates never look sparse.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n, m = F.shape
    if n == 0:
        raise ValueError("empty front")
    _, first = np.unique(F, axis=0, return_index=True)
    unique_idx = np.sort(first)
    U = F[unique_idx]
    k = len(U)
    dist = np.zeros(k)
    if k <= 2:
        dist[:] = np.inf
    else:
        for j in range(m):
            order = np.argsort(U[:, j], kind="stable")
            col = U[order, j]
            span = col[-1] - col[0]
            dist[order[0]] = dist[order[-1]] = np.inf
            if span > 0:
                dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    out = np.zeros(n)
    out[unique_idx] = dist
    return out


@dataclass
class Population:
    genomes: np.ndarray
    objectives: np.ndarray
    rank: np.ndarray
    crowding: np.ndarray

    def __len__(self):
        return len(self.genomes)

    def front(self, i: int = 0) -> "Population":
        sel = self.rank == i
        return Population(self.genomes[sel], self.objectives[sel], self.rank[sel], self.crowding[sel])

    def ordered(self) -> np.ndarray:
        """Indices sorted by rank, then by decreasing crowding."""
        return np.lexsort((-self.crowding, self.rank))


def rank_and_crowd(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = np.empty(len(F), dtype=np.int64)
    crowd = np.empty(len(F))
    for i, front in enumerate(nondominated_sort(F)):
        rank[front] = i
        crowd[front] = crowding_distance(F[front])
    return rank, crowd


def survival(F: np.ndarray, n: int) -> np.ndarray:
    """Elitist environmental selection: indices of the ``n`` survivors."""
    chosen = []
    for front in nondominated_sort(F):
        if len(chosen) + len(front) <= n:
            chosen.extend(front.tolist())
            if len(chosen) == n:
                break
            continue
        crowd = crowding_distance(F[front])
        order = np.argsort(-crowd, kind="stable")
        chosen.extend(front[order[: n - len(chosen)]].tolist())
        break
    return np.array(chosen, dtype=np.int64)


def binary_tournament(rank: np.ndarray, crowd: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.integers(len(rank), size=n)
    b = rng.integers(len(rank), size=n)
    coin = rng.random(n) < 0.5
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
    tie = (rank[a] == rank[b]) & (crowd[a] == crowd[b])
    a_wins |= tie & coin
    return np.where(a_wins, a, b)


def uniform_crossover(parents: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Children from consecutive parent pairs; each gene swaps with probability 0.5."""
    p1, p2 = parents[0::2], parents[1::2]
    do = rng.random(len(p1)) < prob
    swap = (rng.random(p1.shape) < 0.5) & do[:, None]
    c1 = np.where(swap, p2, p1)
    c2 = np.where(swap, p1, p2)
    out = np.empty((2 * len(p1), parents.shape[1]), dtype=parents.dtype)
    out[0::2], out[1::2] = c1, c2
    return out


def random_reset_mutation(X: np.ndarray, space: SearchSpace, prob: float, rng: np.random.Generator) -> np.ndarray:
    X = X.copy()
    legal = space.legal_codes()
    for pos in space.variable_positions():
        hit = rng.random(len(X)) < prob
        if hit.any():
            codes = legal[pos]
            X[hit, pos] = codes[rng.integers(len(codes), size=int(hit.sum()))]
    return X


def _unique_new(children: np.ndarray, seen: set[bytes]) -> np.ndarray:
    keep = []
    for i, c in enumerate(children):
        key = c.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return children[keep]


def evolve(
    objective_fn: ObjectiveFn,
    *,
    space: SearchSpace = FULL_SPACE,
    pop_size: int = 100,
    generations: int = 100,
    seed=0,
    initial: np.ndarray | None = None,
    crossover_prob: float = 0.9,
    mutation_prob: float | None = None,
    max_refill: int = 10,
) -> Population:
    """Run NSGA-II and return the final population.

    ``objective_fn`` maps an (n, GENOME_LENGTH) genome array to an (n, m) array to be
    minimized.  ``initial`` seeds the first population (topped up with
    uniform samples).  Offspring duplicating a current member or each other
    are discarded and regenerated up to ``max_refill`` times.  The default
    mutation rate is one over the number of genes that can vary in
    ``space`` (1/46 in the full space).
    """
    if pop_size < 8 or pop_size % 2:
        raise ValueError("pop_size must be even and at least 8")
    rng = np.random.default_rng(seed)
    n_var = max(len(space.variable_positions()), 1)
    pm = 1.0 / n_var if mutation_prob is None else mutation_prob

    X = np.empty((0, GENOME_LENGTH), dtype=np.int64)
    seen: set[bytes] = set()
    if initial is not None and len(initial):
        X = _unique_new(canonicalize_batch(np.asarray(initial)[:pop_size], space), seen)
    attempts = 0
    while len(X) < pop_size and attempts < 100:
        X = np.vstack([X, _unique_new(space.sample(rng, pop_size - len(X)), seen)])
        attempts += 1
    F = np.asarray(objective_fn(X), dtype=float).reshape(len(X), -1)
    rank, crowd = rank_and_crowd(F)

    for gen in range(generations):
        seen = {x.tobytes() for x in X}
        children = np.empty((0, X.shape[1]), dtype=np.int64)
        for _ in range(max_refill):
            need = pop_size - len(children)
            if need <= 0:
                break
            n_par = need + need % 2
            parents = X[binary_tournament(rank, crowd, n_par, rng)]
            kids = uniform_crossover(parents, crossover_prob, rng)
            kids = canonicalize_batch(random_reset_mutation(kids, space, pm, rng), space)
            children = np.vstack([children, _unique_new(kids, seen)[:need]])
        if len(children) == 0:
            log.debug("generation %d produced no new offspring", gen)
            continue
        Fc = np.asarray(objective_fn(children), dtype=float).reshape(len(children), -1)
        X_all = np.vstack([X, children])
        F_all = np.vstack([F, Fc])
        keep = survival(F_all, pop_size)
        X, F = X_all[keep], F_all[keep]
        rank, crowd = rank_and_crowd(F)

    return Population(X, F, rank, crowd)
