"""Stand-ins for the lower-level training step.

Every evaluator maps architectures to a validation accuracy in [0, 1].  The
synthetic landscape is cheap and exactly reproducible, the tabular evaluator
replays a precomputed benchmark file, and :class:`ExternalEvaluator` talks to
a child process (for instance a real trainer) over a line-delimited JSON
protocol on its standard streams.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import queue
import subprocess
import threading
import time
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .searchspace import (
    GENOME_LENGTH,
    MAX_LAYERS,
    N_BLOCKS,
    RESOLUTIONS,
    decode_text,
    depth_position,
    encode_text,
    slot_positions,
)

log = logging.getLogger(__name__)

VARIANTS = ("smooth", "rugged", "deceptive")

KERNEL_GAIN = np.array([0.0, 0.20, 0.50, 0.60])  # indexed by kernel code
EXPANSION_GAIN = np.array([0.0, 0.30, 0.55, 0.80])  # indexed by expansion code
BLOCK_WEIGHTS = (1.0, 1.1, 1.2, 1.3, 1.4)
LAYER_DECAY = 0.9
INTERACTION_AMPLITUDE = 0.03
DECEPTION_PENALTY = 0.05


class EvaluationError(RuntimeError):
    pass


class MissingEntry(EvaluationError):
    def __init__(self, genome_text: str):
        super().__init__(f"no table entry for {genome_text}")
        self.genome_text = genome_text


class DuplicateKey(EvaluationError):
    pass


class ChildCrashed(EvaluationError):
    pass


class EvaluationTimeout(EvaluationError):
    """Some requests were never answered; ``partial`` holds the ones that were."""

    def __init__(self, ids: Sequence[int], partial: dict | None = None):
        super().__init__(f"no response for request ids {sorted(ids)}")
        self.ids = sorted(ids)
        self.partial = partial or {}


class MalformedResponse(EvaluationError):
    def __init__(self, line: str, reason: str = ""):
        super().__init__(f"malformed response {line!r}" + (f": {reason}" if reason else ""))
        self.line = line


class NonPositiveInput(ValueError):
    pass


@dataclass(frozen=True)
class EvalRequest:
    id: int
    genome: str
    resolution: int
    objectives: tuple[str, ...] = ("accuracy",)

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "genome": self.genome, "resolution": self.resolution, "objectives": list(self.objectives)}
        )

    @classmethod
    def for_genome(cls, request_id: int, genome: Sequence[int], objectives=("accuracy",)) -> "EvalRequest":
        return cls(request_id, encode_text(genome), RESOLUTIONS[int(genome[0])], tuple(objectives))


@dataclass
class EvalResult:
    id: int
    accuracy: float
    evaluator: str
    extras: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.accuracy) and 0.0 <= self.accuracy <= 1.0):
            raise EvaluationError(f"accuracy {self.accuracy} outside [0, 1] for request {self.id}")


# -- synthetic landscape ---------------------------------------------------------


def _smooth_score(g: np.ndarray) -> np.ndarray:
    res = 192 + 4 * g[:, 0]
    z = 0.5 * (res - 192) / 64.0
    for b in range(N_BLOCKS):
        depth = g[:, depth_position(b)]
        for layer in range(MAX_LAYERS):
            kp, ep = slot_positions(b, layer)
            gain = KERNEL_GAIN[g[:, kp]] + EXPANSION_GAIN[g[:, ep]]
            z = z + np.where(layer < depth, BLOCK_WEIGHTS[b] * LAYER_DECAY**layer * gain, 0.0)
    return z


def _max_score() -> float:
    g = np.zeros((1, GENOME_LENGTH), dtype=np.int64)
    g[0, 0] = 16
    for b in range(N_BLOCKS):
        g[0, depth_position(b)] = 4
        for layer in range(MAX_LAYERS):
            g[0, list(slot_positions(b, layer))] = 3
    return float(_smooth_score(g)[0])


MAX_SCORE = _max_score()


def interaction_table(seed: int = 0) -> np.ndarray:
    """Coupling strengths between neighbouring gene positions, uniform in ±0.03."""
    rng = np.random.default_rng([seed, 0x5EED])
    return rng.uniform(-INTERACTION_AMPLITUDE, INTERACTION_AMPLITUDE, size=GENOME_LENGTH - 1)


def _unit_genes(g: np.ndarray) -> np.ndarray:
    from .searchspace import GENE_HIGH, GENE_LOW

    return (g - GENE_LOW) / (GENE_HIGH - GENE_LOW)


def synthetic_accuracy(
    genomes: np.ndarray,
    variant: str = "smooth",
    noise_seed: int = 0,
    sigma: float = 0.0,
    landscape_seed: int = 0,
) -> np.ndarray | float:
    """Closed-form accuracy landscape over canonical genomes.

    Accepts a single genome (returns a float) or an (n, 46) array.  The
    smooth variant is additive over layers and monotone in every
    complexity-increasing choice; ``rugged`` adds couplings between adjacent
    genes; ``deceptive`` penalizes blocks made only of (k=7, e=6) layers.
    With ``sigma > 0`` Gaussian noise is drawn from a generator keyed by
    (noise_seed, genome), so repeated calls agree.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    g = np.asarray(genomes, dtype=np.int64)
    single = g.ndim == 1
    g = np.atleast_2d(g)
    acc = _smooth_score(g) / MAX_SCORE
    if variant == "rugged":
        u = _unit_genes(g)
        # row-wise sum rather than a matmul: same bits whatever the batch size
        acc = acc + (u[:, :-1] * u[:, 1:] * interaction_table(landscape_seed)).sum(axis=1)
    elif variant == "deceptive":
        for b in range(N_BLOCKS):
            depth = g[:, depth_position(b)]
            all_max = np.ones(len(g), dtype=bool)
            for layer in range(MAX_LAYERS):
                kp, ep = slot_positions(b, layer)
                is_max = (g[:, kp] == 3) & (g[:, ep] == 3)
                all_max &= np.where(layer < depth, is_max, True)
            acc = acc - DECEPTION_PENALTY * all_max
    if sigma > 0:
        noise = np.array([
            np.random.default_rng([noise_seed, zlib.crc32(row.tobytes())]).normal(0.0, sigma) for row in g
        ])
        acc = acc + noise
    acc = np.clip(acc, 0.0, 1.0)
    return float(acc[0]) if single else acc


class SyntheticEvaluator:
    def __init__(self, variant: str = "smooth", sigma: float = 0.0, noise_seed: int = 0, landscape_seed: int = 0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.sigma = sigma
        self.noise_seed = noise_seed
        self.landscape_seed = landscape_seed

    @property
    def evaluator_id(self) -> str:
        return f"synthetic:{self.variant}"

    def accuracy(self, genomes: np.ndarray) -> np.ndarray:
        return synthetic_accuracy(genomes, self.variant, self.noise_seed, self.sigma, self.landscape_seed)

    def evaluate(self, requests: Iterable[EvalRequest]) -> dict[int, EvalResult]:
        out = {}
        for req in requests:
            t0 = time.perf_counter()
            acc = self.accuracy(decode_text(req.genome))
            out[req.id] = EvalResult(req.id, float(acc), self.evaluator_id, wall_time=time.perf_counter() - t0)
        return out

    def close(self):
        pass

    def to_dict(self) -> dict:
        return {
            "kind": "synthetic",
            "variant": self.variant,
            "sigma": self.sigma,
            "noise_seed": self.noise_seed,
            "landscape_seed": self.landscape_seed,
        }


# -- tabular benchmark -------------------------------------------------------------


class TabularEvaluator:
    """Exact-match lookup into a CSV of ``genome,accuracy[,extra...]`` rows."""

    def __init__(self, path):
        self.path = str(path)
        self.table: dict[str, dict[str, float]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(row for row in fh if not row.startswith("#"))
            if reader.fieldnames is None or "genome" not in reader.fieldnames or "accuracy" not in reader.fieldnames:
                raise EvaluationError(f"{path}: header must contain 'genome' and 'accuracy'")
            for row in reader:
                key = encode_text(decode_text(row.pop("genome")))
                if key in self.table:
                    raise DuplicateKey(f"{path}: duplicate genome {key}")
                self.table[key] = {k: float(v) for k, v in row.items()}

    @property
    def evaluator_id(self) -> str:
        return f"tabular:{self.path}"

    def lookup(self, genome: Sequence[int] | str, request_id: int = 0) -> EvalResult:
        key = genome if isinstance(genome, str) else encode_text(genome)
        try:
            row = dict(self.table[key])
        except KeyError:
            raise MissingEntry(key) from None
        acc = row.pop("accuracy")
        return EvalResult(request_id, acc, self.evaluator_id, extras=row)

    def accuracy(self, genomes: np.ndarray) -> np.ndarray:
        return np.array([self.lookup(g).accuracy for g in np.atleast_2d(genomes)])

    def evaluate(self, requests: Iterable[EvalRequest]) -> dict[int, EvalResult]:
        return {req.id: self.lookup(req.genome, req.id) for req in requests}

    def close(self):
        pass

    def to_dict(self) -> dict:
        return {"kind": "tabular", "path": self.path}


# -- external process ----------------------------------------------------------------


class ExternalEvaluator:
    """Evaluate through a long-running child speaking line-delimited JSON.

    Requests ``{"id", "genome", "resolution", "objectives"}`` go to the
    child's stdin one per line; responses ``{"id", "accuracy", "extras"}``
    may come back in any order.  Unanswered requests are re-sent after
    ``timeout`` seconds, at most ``max_retries`` times, and a crashed child
    is restarted.  The first accepted response for an id wins.
    """

    def __init__(self, command: Sequence[str], timeout: float = 24 * 3600.0, max_retries: int = 3, name: str | None = None):
        self.command = list(command)
        self.timeout = timeout
        self.max_retries = max_retries
        self.name = name or "external"
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._reader: threading.Thread | None = None

    @property
    def evaluator_id(self) -> str:
        return self.name

    def to_dict(self) -> dict:
        return {"kind": "external", "command": self.command, "timeout": self.timeout, "max_retries": self.max_retries, "name": self.name}

    def _start(self):
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines = queue.Queue()
        proc, lines = self._proc, self._lines

        def pump():
            for line in proc.stdout:
                lines.put(line)
            lines.put(None)

        self._reader = threading.Thread(target=pump, daemon=True)
        self._reader.start()

    def _alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _send(self, requests: Iterable[EvalRequest]):
        if not self._alive():
            self._start()
        try:
            for req in requests:
                self._proc.stdin.write(req.to_json() + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._proc = None

    def _parse(self, line: str, pending: dict[int, EvalRequest]) -> EvalResult | None:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(line.rstrip("\n"), str(exc)) from None
        if not isinstance(rec, dict) or "id" not in rec:
            raise MalformedResponse(line.rstrip("\n"), "missing id")
        if "error" in rec:
            raise EvaluationError(f"child reported error for request {rec.get('id')}: {rec['error']}")
        if "accuracy" not in rec:
            raise MalformedResponse(line.rstrip("\n"), "missing accuracy")
        rid = rec["id"]
        if rid not in pending:
            log.debug("ignoring response for id %s (unknown or already answered)", rid)
            return None
        try:
            return EvalResult(rid, float(rec["accuracy"]), self.evaluator_id, extras=dict(rec.get("extras") or {}))
        except (TypeError, ValueError, EvaluationError) as exc:
            raise MalformedResponse(line.rstrip("\n"), str(exc)) from None

    def evaluate(self, requests: Iterable[EvalRequest]) -> dict[int, EvalResult]:
        pending = {req.id: req for req in requests}
        results: dict[int, EvalResult] = {}
        attempts = 0
        crashes = 0
        self._send(pending.values())
        deadline = time.monotonic() + self.timeout
        while pending:
            wait = deadline - time.monotonic()
            line = None
            got_line = False
            if wait > 0:
                try:
                    line = self._lines.get(timeout=wait)
                    got_line = True
                except queue.Empty:
                    pass
            if got_line and line is not None:
                res = self._parse(line, pending)
                if res is not None:
                    results[res.id] = res
                    del pending[res.id]
                    deadline = time.monotonic() + self.timeout
                continue
            if got_line:  # EOF: the child died
                crashes += 1
                if self._proc is not None:
                    self._proc.wait()
                self._proc = None
                if crashes > self.max_retries:
                    raise ChildCrashed(f"child {self.command} exited {crashes} times")
                log.warning("evaluator child exited; restarting and re-sending %d requests", len(pending))
            else:
                attempts += 1
                if attempts > self.max_retries:
                    raise EvaluationTimeout(list(pending), partial=results)
                log.warning("re-sending %d unanswered requests (retry %d)", len(pending), attempts)
            self._send(pending.values())
            deadline = time.monotonic() + self.timeout
        return results

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- scalarization ------------------------------------------------------------------


def scalarize(accuracy, complexity_value, target, exponent: float = -0.07):
    """Soft-constrained single objective ``acc * (complexity / target) ** exponent``.

    Larger is better.  Works elementwise on arrays.
    """
    c = np.asarray(complexity_value, dtype=float)
    if np.any(c <= 0) or target <= 0:
        raise NonPositiveInput("complexity and target must be positive")
    out = np.asarray(accuracy, dtype=float) * (c / target) ** exponent
    return float(out) if out.ndim == 0 else out
