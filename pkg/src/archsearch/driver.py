"""The outer search loop and its bookkeeping.

``run_search`` evaluates N uniform samples, then for K iterations refits the
accuracy surrogate by adaptive switching, runs NSGA-II on (predicted
accuracy, complexities), picks a diverse batch of B new candidates,
evaluates them and grows the archive.  The result is the archive's
non-dominated set together with per-iteration logs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .evaluation import (
    EvalRequest,
    EvaluationError,
    ExternalEvaluator,
    SyntheticEvaluator,
    TabularEvaluator,
    scalarize,
)
from .moea import crowding_distance, evolve, nondominated_sort, pareto_mask
from .searchspace import (
    COMPLEXITY_NAMES,
    FULL_SPACE,
    GENOME_LENGTH,
    MAX_LAYERS,
    N_BLOCKS,
    POSITION_KINDS,
    SearchSpace,
    backbone_from_dict,
    canonicalize,
    canonicalize_batch,
    complexity_batch,
    decode_text,
    depth_position,
    encode_text,
    latency_from_dict,
    slot_positions,
)
from .surrogates import MODEL_IDS, TrainingSet, adaptive_switch, predictor_from_dict

log = logging.getLogger(__name__)


class SearchError(RuntimeError):
    pass


class EmptyAfterDedup(SearchError):
    pass


class CorruptCheckpoint(SearchError):
    pass


class SearchAborted(SearchError):
    """Evaluation failed mid-run; ``checkpoint`` points at the last good state."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


# -- configuration -------------------------------------------------------------------


@dataclass
class RunConfig:
    n_initial: int = 100
    iterations: int = 30
    batch_size: int = 8
    objectives: tuple[str, ...] = ("accuracy", "madds")
    seed: int = 0
    space: dict | None = None
    evaluator: dict = field(default_factory=lambda: {"kind": "synthetic", "variant": "smooth"})
    pop_size: int = 100
    generations: int = 100
    models: tuple[str, ...] = MODEL_IDS
    hv_margin: float = 1.1
    hv_ref: tuple[float, ...] | None = None
    backbone: dict = field(default_factory=dict)
    latency: dict = field(default_factory=dict)
    scalar_target: float | None = None
    scalar_exponent: float = -0.07

    def __post_init__(self):
        self.objectives = tuple(self.objectives)
        self.models = tuple(self.models)
        if self.hv_ref is not None:
            self.hv_ref = tuple(float(v) for v in self.hv_ref)
        if self.n_initial < 20:
            raise ValueError("n_initial must be at least 20")
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch_size >= 1")
        if not self.objectives or self.objectives[0] != "accuracy":
            raise ValueError("the first objective must be 'accuracy'")
        unknown = [o for o in self.objectives[1:] if o not in COMPLEXITY_NAMES]
        if unknown:
            raise ValueError(f"unknown complexity objectives {unknown}; choose from {COMPLEXITY_NAMES}")
        if len(self.objectives) < 2:
            raise ValueError("need accuracy plus at least one complexity objective")
        if self.scalarized and len(self.objectives) != 2:
            raise ValueError("scalarized search takes exactly one complexity objective")
        if self.scalarized and self.scalar_target <= 0:
            raise ValueError("scalar_target must be positive")

    @property
    def scalarized(self) -> bool:
        return self.scalar_target is not None

    @property
    def complexity_names(self) -> tuple[str, ...]:
        return self.objectives[1:]

    def search_space(self) -> SearchSpace:
        if self.space is None or self.space == "full":
            return FULL_SPACE
        if self.space == "reduced":
            return SearchSpace.reduced()
        return SearchSpace.from_dict(self.space)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objectives"] = list(self.objectives)
        d["models"] = list(self.models)
        d["hv_ref"] = None if self.hv_ref is None else list(self.hv_ref)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_evaluator(spec: dict):
    kind = spec.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticEvaluator(
            spec.get("variant", "smooth"),
            sigma=spec.get("sigma", 0.0),
            noise_seed=spec.get("noise_seed", 0),
            landscape_seed=spec.get("landscape_seed", 0),
        )
    if kind == "tabular":
        return TabularEvaluator(spec["path"])
    if kind == "external":
        return ExternalEvaluator(
            spec["command"],
            timeout=spec.get("timeout", 24 * 3600.0),
            max_retries=spec.get("max_retries", 3),
            name=spec.get("name"),
        )
    raise ValueError(f"unknown evaluator kind {kind!r}")


# -- archive -------------------------------------------------------------------------


@dataclass
class EvaluatedArch:
    genome: np.ndarray
    accuracy: float
    complexity: dict[str, float]
    iteration: int
    evaluator: str
    request_id: int = -1

    @property
    def text(self) -> str:
        return encode_text(self.genome)

    def to_dict(self) -> dict:
        return {
            "genome": self.text,
            "accuracy": self.accuracy,
            "complexity": dict(self.complexity),
            "iteration": self.iteration,
            "evaluator": self.evaluator,
            "request_id": self.request_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluatedArch":
        return cls(
            decode_text(d["genome"]),
            float(d["accuracy"]),
            {k: float(v) for k, v in d["complexity"].items()},
            int(d["iteration"]),
            d["evaluator"],
            int(d.get("request_id", -1)),
        )


class Archive:
    """Evaluated architectures keyed by canonical text, in insertion order."""

    def __init__(self):
        self._items: dict[str, EvaluatedArch] = {}

    def __len__(self):
        return len(self._items)

    def __contains__(self, genome) -> bool:
        key = genome if isinstance(genome, str) else encode_text(genome)
        return key in self._items

    def __iter__(self):
        return iter(self._items.values())

    def __getitem__(self, key: str) -> EvaluatedArch:
        return self._items[key]

    def add(self, arch: EvaluatedArch):
        key = arch.text
        if key in self._items:
            raise SearchError(f"genome {key} already evaluated")
        self._items[key] = arch

    def genomes(self) -> np.ndarray:
        return np.array([a.genome for a in self], dtype=np.int64).reshape(-1, GENOME_LENGTH)

    def accuracies(self) -> np.ndarray:
        return np.array([a.accuracy for a in self])

    def iterations(self) -> np.ndarray:
        return np.array([a.iteration for a in self], dtype=np.int64)

    def complexity_matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.array([[a.complexity[n] for n in names] for a in self]).reshape(len(self), len(names))

    def objective_matrix(self, names: Sequence[str]) -> np.ndarray:
        """Minimization objectives: error rate (1 - accuracy) then complexities."""
        return np.column_stack([1.0 - self.accuracies(), self.complexity_matrix(names)])

    def front(self, names: Sequence[str]) -> list[EvaluatedArch]:
        items = list(self)
        if not items:
            return []
        mask = pareto_mask(self.objective_matrix(names))
        return [a for a, keep in zip(items, mask) if keep]

    def training_set(self) -> TrainingSet:
        return TrainingSet(self.genomes(), self.accuracies())

    def to_list(self) -> list[dict]:
        return [a.to_dict() for a in self]

    @classmethod
    def from_list(cls, rows: list[dict]) -> "Archive":
        archive = cls()
        for row in rows:
            archive.add(EvaluatedArch.from_dict(row))
        return archive

    def export_csv(self, path, config_hash: str = ""):
        Path(path).write_text(archive_csv(self, config_hash))


def archive_csv(archive: Archive, config_hash: str = "") -> str:
    buf = io.StringIO()
    if config_hash:
        buf.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    cols = COMPLEXITY_NAMES
    writer.writerow(["genome", "accuracy", *cols, "iteration", "evaluator"])
    for a in archive:
        writer.writerow([a.text, repr(a.accuracy), *(repr(a.complexity[c]) for c in cols), a.iteration, a.evaluator])
    return buf.getvalue()


def read_archive_csv(path) -> tuple[Archive, str]:
    """Load an archive export; returns the archive and its config hash ("" if absent)."""
    text = Path(path).read_text()
    config_hash = ""
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            if line.startswith("# config_hash="):
                config_hash = line.split("=", 1)[1].strip()
            continue
        body.append(line)
    archive = Archive()
    for row in csv.DictReader(body):
        archive.add(
            EvaluatedArch(
                decode_text(row["genome"]),
                float(row["accuracy"]),
                {n: float(row[n]) for n in COMPLEXITY_NAMES},
                int(row["iteration"]),
                row["evaluator"],
            )
        )
    return archive, config_hash


# -- run state -------------------------------------------------------------------------


@dataclass
class SurrogateReport:
    iteration: int
    model_id: str
    cv_tau: float
    cv_rmse: float
    cv_scores: list[dict]
    batch_spearman: float
    batch_rmse: float
    n_candidates: int
    n_evaluated: int


@dataclass
class SearchState:
    config: RunConfig
    archive: Archive = field(default_factory=Archive)
    reports: list[SurrogateReport] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    next_iteration: int = 0
    next_request_id: int = 0
    hv_config: metrics.HvConfig | None = None
    predictor: dict | None = None

    @property
    def finished(self) -> bool:
        return self.next_iteration > self.config.iterations

    def front(self) -> list[EvaluatedArch]:
        return self.archive.front(self.config.complexity_names)

    def best_scalarized(self) -> EvaluatedArch:
        cfg = self.config
        items = list(self.archive)
        values = scalarized_values(self.archive, cfg)
        return items[int(np.argmax(values))]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "archive": self.archive.to_list(),
            "reports": [asdict(r) for r in self.reports],
            "metrics": self.metrics,
            "next_iteration": self.next_iteration,
            "next_request_id": self.next_request_id,
            "hv_config": None if self.hv_config is None else self.hv_config.to_dict(),
            "predictor": self.predictor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchState":
        config = RunConfig.from_dict(d["config"])
        columns = metric_columns(config)
        return cls(
            config=config,
            archive=Archive.from_list(d["archive"]),
            reports=[SurrogateReport(**r) for r in d["reports"]],
            metrics=[{k: row[k] for k in columns} for row in d["metrics"]],
            next_iteration=int(d["next_iteration"]),
            next_request_id=int(d["next_request_id"]),
            hv_config=None if d["hv_config"] is None else metrics.HvConfig.from_dict(d["hv_config"]),
            predictor=d.get("predictor"),
        )

    def last_predictor(self):
        return None if self.predictor is None else predictor_from_dict(self.predictor)


def metric_columns(cfg: RunConfig) -> list[str]:
    quality = "best_scalarized" if cfg.scalarized else "hypervolume"
    return ["iteration", "evaluations", quality, "surrogate", "cv_tau", "batch_spearman", "batch_rmse"]


def scalarized_values(archive: Archive, cfg: RunConfig) -> np.ndarray:
    comp = archive.complexity_matrix(cfg.complexity_names)[:, 0]
    return scalarize(archive.accuracies(), comp, cfg.scalar_target, cfg.scalar_exponent)


# -- checkpointing ----------------------------------------------------------------------


def _digest(payload: str) -> str:
    return hashlib.sha256(payload.encode()).hexdigest()


def checkpoint(state: SearchState, path) -> Path:
    """Write ``state`` atomically with an integrity hash."""
    path = Path(path)
    payload = json.dumps(state.to_dict(), sort_keys=True)
    doc = json.dumps({"format": "archsearch-checkpoint/1", "sha256": _digest(payload), "state": payload})
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(doc)
    os.replace(tmp, path)
    return path


def resume(path) -> SearchState:
    try:
        doc = json.loads(Path(path).read_text())
        payload = doc["state"]
        if _digest(payload) != doc["sha256"]:
            raise CorruptCheckpoint(f"{path}: integrity hash mismatch")
        return SearchState.from_dict(json.loads(payload))
    except CorruptCheckpoint:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc


# -- candidate selection -------------------------------------------------------------------


def _normalize_columns(*blocks: np.ndarray) -> list[np.ndarray]:
    stacked = np.vstack([b for b in blocks if len(b)])
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return [(b - lo) / span for b in blocks]


def subset_select(
    pred_accuracy: np.ndarray,
    candidate_complexity: np.ndarray,
    front_complexity: np.ndarray,
    batch_size: int,
) -> list[int]:
    """Pick the top predicted candidate, then greedily fill sparse regions.

    Each further pick maximizes its smallest distance, in min-max scaled
    complexity coordinates, to everything already chosen plus the current
    front.  Ties go to the earlier candidate.
    """
    pred_accuracy = np.asarray(pred_accuracy, dtype=float)
    n = len(pred_accuracy)
    if n == 0:
        raise EmptyAfterDedup("no candidates left after removing evaluated genomes")
    cand = np.asarray(candidate_complexity, dtype=float).reshape(n, -1)
    front = np.asarray(front_complexity, dtype=float).reshape(-1, cand.shape[1])
    cand_n, front_n = _normalize_columns(cand, front)
    chosen = [int(np.argmax(pred_accuracy))]
    anchors = np.vstack([front_n, cand_n[chosen]])
    nearest = np.min(np.linalg.norm(cand_n[:, None, :] - anchors[None, :, :], axis=2), axis=1)
    nearest[chosen] = -np.inf
    while len(chosen) < min(batch_size, n):
        pick = int(np.argmax(nearest))
        chosen.append(pick)
        nearest = np.minimum(nearest, np.linalg.norm(cand_n - cand_n[pick], axis=1))
        nearest[chosen] = -np.inf
    return chosen


def select_diverse_top(pred_values: np.ndarray, genomes: np.ndarray, batch_size: int) -> list[int]:
    """Top ``batch_size - 1`` by predicted value plus the candidate farthest
    (minimum Hamming distance) from those."""
    n = len(pred_values)
    if n == 0:
        raise EmptyAfterDedup("no candidates left after removing evaluated genomes")
    order = np.argsort(-np.asarray(pred_values), kind="stable")
    if batch_size <= 1 or n <= batch_size:
        return order[: min(batch_size, n)].tolist()
    chosen = order[: batch_size - 1].tolist()
    rest = order[batch_size - 1 :]
    ham = (genomes[rest][:, None, :] != genomes[chosen][None, :, :]).sum(axis=2).min(axis=1)
    chosen.append(int(rest[int(np.argmax(ham))]))
    return chosen


# -- the loop ------------------------------------------------------------------------------


def _seed(cfg: RunConfig, stream: int, iteration: int = 0) -> list[int]:
    return [int(cfg.seed), stream, iteration]


def initial_genomes(cfg: RunConfig, space: SearchSpace, seeded: np.ndarray | None = None) -> np.ndarray:
    """N distinct genomes: ``seeded`` ones first (deduplicated), then uniform samples."""
    rng = np.random.default_rng(_seed(cfg, 0))
    seen: set[str] = set()
    out = []
    if seeded is not None:
        for g in canonicalize_batch(np.atleast_2d(seeded), space):
            key = encode_text(g)
            if key not in seen and len(out) < cfg.n_initial:
                seen.add(key)
                out.append(g)
    tries = 0
    while len(out) < cfg.n_initial:
        g = space.sample(rng)
        key = encode_text(g)
        if key not in seen:
            seen.add(key)
            out.append(g)
            tries = 0
        else:
            tries += 1
            if tries > 10_000:
                raise SearchError("search space too small for the requested initial sample")
    return np.array(out, dtype=np.int64)


class Search:
    """Resumable execution of one run; see :func:`run_search`."""

    def __init__(self, state: SearchState, evaluator=None, checkpoint_path=None):
        self.state = state
        self.cfg = state.config
        self.space = self.cfg.search_space()
        self.backbone = backbone_from_dict(self.cfg.backbone)
        self.latency = latency_from_dict(self.cfg.latency)
        self.evaluator = evaluator if evaluator is not None else make_evaluator(self.cfg.evaluator)
        self.checkpoint_path = checkpoint_path

    def complexity(self, genomes: np.ndarray) -> np.ndarray:
        full = complexity_batch(genomes, self.backbone, self.latency)
        return full[:, [COMPLEXITY_NAMES.index(n) for n in self.cfg.complexity_names]]

    def _evaluate(self, genomes: np.ndarray, iteration: int) -> list[EvaluatedArch]:
        st = self.state
        requests = []
        for g in genomes:
            requests.append(EvalRequest.for_genome(st.next_request_id, g, self.cfg.objectives))
            st.next_request_id += 1
        try:
            results = self.evaluator.evaluate(requests)
        except EvaluationError as exc:
            path = self.save()
            raise SearchAborted(f"evaluation failed in iteration {iteration}: {exc}", path) from exc
        comp = complexity_batch(genomes, self.backbone, self.latency)
        archs = []
        for req, g, c in zip(requests, genomes, comp):
            res = results[req.id]
            archs.append(
                EvaluatedArch(g.copy(), float(res.accuracy), dict(zip(COMPLEXITY_NAMES, map(float, c))), iteration, res.evaluator, req.id)
            )
        return archs

    def save(self):
        if self.checkpoint_path is None:
            return None
        return checkpoint(self.state, self.checkpoint_path)

    def hv_points(self) -> np.ndarray:
        return self.state.archive.objective_matrix(self.cfg.complexity_names)

    def _log(self, iteration: int, report: SurrogateReport | None):
        st = self.state
        row = {"iteration": iteration, "evaluations": len(st.archive)}
        if self.cfg.scalarized:
            row["best_scalarized"] = float(np.max(scalarized_values(st.archive, self.cfg)))
        else:
            row["hypervolume"] = st.hv_config.hypervolume(self.hv_points())
        row["surrogate"] = report.model_id if report else ""
        row["cv_tau"] = report.cv_tau if report else math.nan
        row["batch_spearman"] = report.batch_spearman if report else math.nan
        row["batch_rmse"] = report.batch_rmse if report else math.nan
        st.metrics.append(row)

    def initialize(self, seeded: np.ndarray | None = None):
        st = self.state
        genomes = initial_genomes(self.cfg, self.space, seeded)
        for arch in self._evaluate(genomes, 0):
            st.archive.add(arch)
        if not self.cfg.scalarized:
            if self.cfg.hv_ref is not None:
                st.hv_config = metrics.HvConfig(self.cfg.hv_ref)
            else:
                st.hv_config = metrics.HvConfig.from_points(self.hv_points(), self.cfg.hv_margin)
        self._log(0, None)
        st.next_iteration = 1
        self.save()

    def _inner_initial(self) -> np.ndarray:
        archive = self.state.archive
        if self.cfg.scalarized:
            order = np.argsort(-scalarized_values(archive, self.cfg), kind="stable")
        else:
            F = self.hv_points()
            rank = np.empty(len(F), dtype=np.int64)
            crowd = np.empty(len(F))
            for i, fr in enumerate(nondominated_sort(F)):
                rank[fr] = i
                crowd[fr] = crowding_distance(F[fr])
            order = np.lexsort((-crowd, rank))
        return archive.genomes()[order[: self.cfg.pop_size]]

    def step(self):
        st, cfg = self.state, self.cfg
        it = st.next_iteration
        predictor, scores = adaptive_switch(st.archive.training_set(), seed=_seed(cfg, 1, it), models=cfg.models)
        winner = next(s for s in scores if s.model_id == predictor.model_id)

        if cfg.scalarized:
            def objective(G):
                acc = predictor.predict(G)
                return -scalarize(np.maximum(acc, 1e-12), self.complexity(G)[:, 0], cfg.scalar_target, cfg.scalar_exponent)[:, None]
        else:
            def objective(G):
                return np.column_stack([-predictor.predict(G), self.complexity(G)])

        pop = evolve(
            objective,
            space=self.space,
            pop_size=cfg.pop_size,
            generations=cfg.generations,
            seed=_seed(cfg, 2, it),
            initial=self._inner_initial(),
        )
        fresh = np.array([g not in st.archive for g in pop.genomes], dtype=bool)
        order = pop.ordered()
        order = order[fresh[order]]
        if cfg.scalarized:
            candidates = pop.genomes[order]
        else:
            # front 0 first; later fronts only when front 0 cannot fill a batch
            keep = []
            for r in np.unique(pop.rank[order]):
                if len(keep) >= cfg.batch_size:
                    break
                keep.extend(order[pop.rank[order] == r].tolist())
            candidates = pop.genomes[keep]

        if len(candidates) == 0:
            log.warning("iteration %d: every proposed genome was already evaluated; skipping", it)
            chosen_genomes = np.empty((0, GENOME_LENGTH), dtype=np.int64)
        else:
            pred_acc = predictor.predict(candidates)
            if cfg.scalarized:
                values = scalarize(np.maximum(pred_acc, 1e-12), self.complexity(candidates)[:, 0], cfg.scalar_target, cfg.scalar_exponent)
                idx = select_diverse_top(values, candidates, cfg.batch_size)
            else:
                front_c = np.array([[a.complexity[n] for n in cfg.complexity_names] for a in st.front()])
                idx = subset_select(pred_acc, self.complexity(candidates), front_c, cfg.batch_size)
            chosen_genomes = candidates[idx]

        new = self._evaluate(chosen_genomes, it) if len(chosen_genomes) else []
        if new:
            pred = predictor.predict(chosen_genomes)
            true = np.array([a.accuracy for a in new])
            try:
                rho = metrics.spearman(pred, true)
            except (metrics.AllTied, ValueError):
                rho = math.nan
            err = metrics.rmse(pred, true)
        else:
            rho = err = math.nan
        for arch in new:
            st.archive.add(arch)
        report = SurrogateReport(
            iteration=it,
            model_id=predictor.model_id,
            cv_tau=winner.kendall_tau,
            cv_rmse=winner.rmse,
            cv_scores=[s.as_row() for s in scores],
            batch_spearman=rho,
            batch_rmse=err,
            n_candidates=len(candidates),
            n_evaluated=len(new),
        )
        st.reports.append(report)
        st.predictor = predictor.to_dict()
        self._log(it, report)
        st.next_iteration = it + 1
        self.save()
        return report

    def run(self, seeded: np.ndarray | None = None, stop_after: int | None = None) -> SearchState:
        """Advance until all iterations are done (or ``stop_after`` is reached)."""
        if self.state.next_iteration == 0:
            self.initialize(seeded)
        while not self.state.finished:
            if stop_after is not None and self.state.next_iteration > stop_after:
                break
            self.step()
        return self.state


def run_search(
    cfg: RunConfig,
    evaluator=None,
    *,
    seeded: np.ndarray | None = None,
    checkpoint_path=None,
    stop_after: int | None = None,
) -> SearchState:
    """Run the surrogate-assisted multi-objective search described by ``cfg``.

    ``seeded`` genomes replace the first uniform initial samples (objective
    transfer).  ``stop_after`` halts after that iteration, leaving a state
    that :func:`resume_search` can continue.
    """
    state = SearchState(config=cfg)
    return Search(state, evaluator, checkpoint_path).run(seeded, stop_after)


def resume_search(path, evaluator=None, stop_after: int | None = None) -> SearchState:
    state = resume(path)
    return Search(state, evaluator, path).run(stop_after=stop_after)


@dataclass
class ScalarResult:
    best: EvaluatedArch
    trajectory: np.ndarray
    state: SearchState


def run_scalarized(cfg: RunConfig, evaluator=None, **kw) -> ScalarResult:
    """Single-objective variant maximizing ``acc * (complexity / target) ** exponent``."""
    if not cfg.scalarized:
        raise ValueError("config has no scalar_target")
    state = run_search(cfg, evaluator, **kw)
    values = scalarized_values(state.archive, cfg)
    return ScalarResult(state.best_scalarized(), np.maximum.accumulate(values), state)


def random_search(cfg: RunConfig, evaluator=None, budget: int | None = None) -> Archive:
    """Uniform sampling baseline sharing the run's initial sample stream."""
    space = cfg.search_space()
    budget = cfg.n_initial + cfg.iterations * cfg.batch_size if budget is None else budget
    search = Search(SearchState(config=replace(cfg, n_initial=budget)), evaluator)
    genomes = initial_genomes(replace(cfg, n_initial=budget), space)
    for arch in search._evaluate(genomes, 0):
        search.state.archive.add(arch)
    return search.state.archive


# -- post-search analysis -------------------------------------------------------------------


@dataclass
class GeneDistribution:
    """Per-position categorical distributions over the codes of a space.

    Layer-slot positions that can be inactive carry an extra code 0 that
    stands for an absent layer.  ``counts`` are raw front counts and
    ``probs`` include additive smoothing.
    """

    codes: list[np.ndarray]
    counts: list[np.ndarray]
    probs: list[np.ndarray]

    def frequencies(self) -> list[np.ndarray]:
        return [c / c.sum() if c.sum() else np.full(len(c), 1.0 / len(c)) for c in self.counts]

    def to_dict(self) -> dict:
        return {
            "codes": [c.tolist() for c in self.codes],
            "counts": [c.tolist() for c in self.counts],
            "probs": [p.tolist() for p in self.probs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneDistribution":
        return cls(
            [np.array(c, dtype=np.int64) for c in d["codes"]],
            [np.array(c, dtype=float) for c in d["counts"]],
            [np.array(p, dtype=float) for p in d["probs"]],
        )


def position_categories(space: SearchSpace) -> list[np.ndarray]:
    legal = space.legal_codes()
    cats = []
    for pos, kind in enumerate(POSITION_KINDS):
        codes = legal[pos]
        if kind in ("kernel", "expansion"):
            block = (pos - 1) // (1 + 2 * MAX_LAYERS)
            layer = (pos - depth_position(block) - 1) // 2
            choices = space.blocks[block]
            active = codes if layer < max(choices.depths) else np.array([], dtype=np.int64)
            if layer >= min(choices.depths):
                codes = np.concatenate([[0], active])
            else:
                codes = active
        cats.append(np.asarray(codes, dtype=np.int64))
    return cats


def gene_distribution(genomes: np.ndarray, space: SearchSpace = FULL_SPACE, smoothing: float = 1.0) -> GeneDistribution:
    G = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
    cats = position_categories(space)
    counts, probs = [], []
    for pos, codes in enumerate(cats):
        c = np.array([(G[:, pos] == code).sum() for code in codes], dtype=float)
        counts.append(c)
        probs.append((c + smoothing) / (c.sum() + smoothing * len(c)))
    return GeneDistribution(cats, counts, probs)


def mine_frequencies(
    archive: Archive, complexity_names: Sequence[str], space: SearchSpace = FULL_SPACE, smoothing: float = 1.0
) -> GeneDistribution:
    """Gene-choice frequencies over the archive's non-dominated architectures."""
    front = archive.front(complexity_names)
    if not front:
        raise SearchError("archive is empty")
    return gene_distribution(np.array([a.genome for a in front]), space, smoothing)


def transfer_init(dist: GeneDistribution, n: int, seed=0, space: SearchSpace = FULL_SPACE, max_attempts: int = 100) -> np.ndarray:
    """Sample ``n`` canonical genomes position by position from ``dist``.

    Depths are drawn first; an active layer slot draws from its non-absent
    codes and an inactive one is zero.  A duplicate is redrawn up to
    ``max_attempts`` times and then kept.
    """
    rng = np.random.default_rng(seed)

    def draw() -> np.ndarray:
        g = np.zeros(GENOME_LENGTH, dtype=np.int64)
        g[0] = rng.choice(dist.codes[0], p=dist.probs[0])
        for b in range(N_BLOCKS):
            dp = depth_position(b)
            g[dp] = rng.choice(dist.codes[dp], p=dist.probs[dp])
            for layer in range(int(g[dp])):
                for pos in slot_positions(b, layer):
                    codes, p = dist.codes[pos], dist.probs[pos]
                    live = codes != 0
                    g[pos] = rng.choice(codes[live], p=p[live] / p[live].sum())
        return canonicalize(g, space)

    out, seen = [], set()
    for _ in range(n):
        for _attempt in range(max_attempts):
            g = draw()
            if encode_text(g) not in seen:
                break
        seen.add(encode_text(g))
        out.append(g)
    return np.array(out, dtype=np.int64).reshape(-1, GENOME_LENGTH)


def evaluations_to_reach(curve: np.ndarray, level: float) -> float:
    """1-based index of the first entry of ``curve`` at or above ``level`` (inf if never)."""
    hit = np.flatnonzero(np.asarray(curve) >= level)
    return float(hit[0] + 1) if hit.size else math.inf


def exhaustive_front(space: SearchSpace, cfg: RunConfig, evaluator=None) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate ``space`` and return (genomes, objective matrix) of its Pareto set."""
    from .searchspace import enumerate_array

    G = enumerate_array(space)
    ev = evaluator if evaluator is not None else make_evaluator(cfg.evaluator)
    acc = ev.accuracy(G)
    comp = complexity_batch(G, backbone_from_dict(cfg.backbone), latency_from_dict(cfg.latency))
    comp = comp[:, [COMPLEXITY_NAMES.index(n) for n in cfg.complexity_names]]
    F = np.column_stack([1.0 - acc, comp])
    mask = _pareto_mask_large(F)
    return G[mask], F[mask]


def _pareto_mask_large(F: np.ndarray) -> np.ndarray:
    """Non-dominated mask without an n-by-n matrix (for enumerated spaces)."""
    n = len(F)
    order = np.lexsort(F.T[::-1])
    keep = np.zeros(n, dtype=bool)
    front: list[int] = []
    for i in order:
        f = F[i]
        if front:
            P = F[front]
            if np.any(np.all(P <= f, axis=1) & np.any(P < f, axis=1)):
                continue
        front.append(i)
        keep[i] = True
    return keep
