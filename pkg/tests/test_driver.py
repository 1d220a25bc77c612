import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from archsearch.driver import (
    Archive,
    CorruptCheckpoint,
    EmptyAfterDedup,
    EvaluatedArch,
    RunConfig,
    SearchAborted,
    SearchError,
    checkpoint,
    evaluations_to_reach,
    gene_distribution,
    initial_genomes,
    mine_frequencies,
    position_categories,
    random_search,
    read_archive_csv,
    resume,
    resume_search,
    run_scalarized,
    run_search,
    select_diverse_top,
    subset_select,
    transfer_init,
)
from archsearch.evaluation import EvaluationError, SyntheticEvaluator
from archsearch.searchspace import (
    FULL_SPACE,
    SearchSpace,
    complexity_batch,
    enumerate_array,
    is_canonical,
    sample_uniform,
)

from conftest import genome_batches


def same(a, b):
    """State equality that treats NaN metrics as equal."""
    return json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def small_config(**kw):
    base = dict(n_initial=20, iterations=2, batch_size=4, space="reduced", pop_size=20, generations=8, seed=3)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def short_run():
    return run_search(small_config())


# -- configuration ----------------------------------------------------------------------


def test_config_round_trip_and_hash():
    cfg = small_config(objectives=("accuracy", "madds", "latency_cpu"))
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.config_hash() == cfg.config_hash()
    assert len(cfg.config_hash()) == 16
    assert small_config(seed=4).config_hash() != cfg.config_hash()


@pytest.mark.parametrize(
    "kw",
    [
        {"n_initial": 19},
        {"iterations": -1},
        {"batch_size": 0},
        {"objectives": ("madds", "accuracy")},
        {"objectives": ("accuracy",)},
        {"objectives": ("accuracy", "flops")},
        {"objectives": ("accuracy", "madds", "params"), "scalar_target": 1e8},
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        small_config(**kw)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"n_initial": 20, "colour": "red"})


# -- candidate selection --------------------------------------------------------------------


def test_subset_select_fills_the_gap():
    pred = np.array([0.9, 0.5, 0.4])
    comp = np.array([[100.0], [110.0], [500.0]])
    assert subset_select(pred, comp, np.array([[105.0]]), 2) == [0, 2]
    assert subset_select(pred, comp, np.array([[105.0]]), 1) == [0]


def test_subset_select_caps_at_candidate_count():
    pred = np.array([0.2, 0.8])
    assert sorted(subset_select(pred, np.array([[1.0], [2.0]]), np.empty((0, 1)), 8)) == [0, 1]


def test_subset_select_empty():
    with pytest.raises(EmptyAfterDedup):
        subset_select(np.empty(0), np.empty((0, 1)), np.array([[1.0]]), 4)


@given(st.integers(1, 30), st.integers(1, 10), st.integers(0, 2**16))
def test_subset_select_properties(n, b, seed):
    rng = np.random.default_rng(seed)
    pred = rng.random(n)
    picks = subset_select(pred, rng.random((n, 2)), rng.random((3, 2)), b)
    assert len(picks) == min(n, b) == len(set(picks))
    assert picks[0] == int(np.argmax(pred))


def test_select_diverse_top():
    G = np.array([[0] * 46, [0] * 45 + [1], [1] * 46])
    picks = select_diverse_top(np.array([0.9, 0.8, 0.1]), G, 2)
    assert picks == [0, 2]


# -- initial sampling ---------------------------------------------------------------------


def test_initial_genomes_unique_and_seeded(reduced):
    cfg = small_config()
    seeded = sample_uniform(np.random.default_rng(1), reduced, 5)
    G = initial_genomes(cfg, reduced, seeded)
    assert len(G) == 20 and len(np.unique(G, axis=0)) == 20
    assert np.array_equal(G[:5], seeded)
    assert all(reduced.contains(g) for g in G)


# -- the outer loop ---------------------------------------------------------------------------


def test_zero_iterations_is_initial_sample():
    state = run_search(small_config(iterations=0))
    assert len(state.archive) == 20
    assert set(state.archive.iterations()) == {0}
    assert [r["iteration"] for r in state.metrics] == [0]


def test_run_shape_and_invariants(short_run):
    cfg = short_run.config
    assert len(short_run.archive) <= cfg.n_initial + cfg.iterations * cfg.batch_size
    assert len(short_run.archive) > cfg.n_initial
    hv = [r["hypervolume"] for r in short_run.metrics]
    assert len(hv) == cfg.iterations + 1
    assert all(b >= a - 1e-15 for a, b in zip(hv, hv[1:]))
    assert len(short_run.reports) == cfg.iterations
    texts = [a.text for a in short_run.archive]
    assert len(set(texts)) == len(texts)
    assert all(is_canonical(g) for g in short_run.archive.genomes())
    ev = SyntheticEvaluator("smooth")
    assert np.array_equal(short_run.archive.accuracies(), ev.accuracy(short_run.archive.genomes()))


def test_run_is_deterministic(short_run):
    again = run_search(small_config())
    assert same(again, short_run)


def test_front_is_nondominated(short_run):
    front = short_run.front()
    F = np.array([[1 - a.accuracy, a.complexity["madds"]] for a in front])
    for i in range(len(F)):
        assert not np.any(np.all(F <= F[i], axis=1) & np.any(F < F[i], axis=1))


def test_archive_csv_round_trip(short_run, tmp_path):
    path = tmp_path / "archive.csv"
    short_run.archive.export_csv(path, "abc123")
    archive, h = read_archive_csv(path)
    assert h == "abc123"
    # request ids are bookkeeping and not part of the CSV columns
    strip = lambda rows: [{k: v for k, v in r.items() if k != "request_id"} for r in rows]
    assert strip(archive.to_list()) == strip(short_run.archive.to_list())


def test_archive_rejects_duplicates():
    arch = EvaluatedArch(np.array([0] * 46), 0.5, {}, 0, "x", 0)
    a = Archive()
    a.add(arch)
    with pytest.raises(SearchError):
        a.add(arch)


# -- checkpointing ------------------------------------------------------------------------


def test_checkpoint_round_trip(short_run, tmp_path):
    path = checkpoint(short_run, tmp_path / "state.json")
    assert same(resume(path), short_run)


def test_truncated_checkpoint(short_run, tmp_path):
    path = checkpoint(short_run, tmp_path / "state.json")
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CorruptCheckpoint):
        resume(path)


def test_tampered_checkpoint(short_run, tmp_path):
    path = checkpoint(short_run, tmp_path / "state.json")
    blob = json.loads(path.read_text())
    blob["state"] = blob["state"].replace('"accuracy": 0.', '"accuracy": 1.', 1)
    path.write_text(json.dumps(blob))
    with pytest.raises(CorruptCheckpoint):
        resume(path)


def test_interrupted_run_resumes_to_same_result(short_run, tmp_path):
    path = tmp_path / "state.json"
    partial = run_search(small_config(), checkpoint_path=path, stop_after=1)
    assert partial.next_iteration == 2 and not partial.finished
    finished = resume_search(path)
    assert same(finished, short_run)


class FailingEvaluator:
    """Synthetic answers for the first ``good`` batches, then an error."""

    def __init__(self, good):
        self.inner = SyntheticEvaluator("smooth")
        self.good = good

    def evaluate(self, requests):
        if self.good == 0:
            raise EvaluationError("worker lost")
        self.good -= 1
        return self.inner.evaluate(requests)


def test_evaluator_failure_keeps_checkpoint(tmp_path):
    path = tmp_path / "state.json"
    with pytest.raises(SearchAborted) as info:
        run_search(small_config(), FailingEvaluator(good=2), checkpoint_path=path)
    assert info.value.checkpoint == path
    state = resume(path)
    assert len(state.archive) > 20
    done = resume_search(path)
    assert done.finished
    # ids consumed by the failed batch are not reused; everything else matches
    key = lambda st: [(a.text, a.accuracy, a.iteration) for a in st.archive]
    assert key(done) == key(run_search(small_config()))


# -- scalarized variant and baseline ---------------------------------------------------------------


def test_scalarized_target_at_largest_genome(reduced):
    G = enumerate_array(reduced)
    target = float(complexity_batch(G)[:, 0].max())
    cfg = small_config(scalar_target=target, iterations=2)
    result = run_scalarized(cfg)
    assert np.all(np.diff(result.trajectory) >= 0)
    assert len(result.trajectory) == len(result.state.archive)
    assert result.trajectory[-1] == pytest.approx(
        result.best.accuracy * (result.best.complexity["madds"] / target) ** -0.07
    )
    assert "best_scalarized" in result.state.metrics[-1]


def test_random_search_shares_initial_stream():
    cfg = small_config()
    rs = random_search(cfg, budget=28)
    assert len(rs) == 28
    assert np.array_equal(rs.genomes()[:20], initial_genomes(cfg, cfg.search_space()))


# -- gene-frequency transfer ----------------------------------------------------------------


def test_point_mass_distribution(minimal_genome):
    dist = gene_distribution(minimal_genome[None, :], FULL_SPACE, smoothing=0.0)
    G = transfer_init(dist, 10, seed=0)
    assert len(np.unique(G, axis=0)) == 1
    assert np.array_equal(G[0], minimal_genome)


def test_uniform_sample_gives_near_uniform_rows():
    G = sample_uniform(np.random.default_rng(0), FULL_SPACE, 20000)
    dist = gene_distribution(G, FULL_SPACE)
    assert np.allclose(dist.probs[0], 1 / 17, atol=0.01)
    for b in range(5):
        assert np.allclose(dist.probs[1 + 9 * b], 1 / 3, atol=0.02)


@given(genome_batches(FULL_SPACE, 1, 30), st.floats(0, 3))
def test_distribution_rows_sum_to_one(G, smoothing):
    dist = gene_distribution(G, FULL_SPACE, smoothing)
    for codes, p in zip(dist.codes, dist.probs):
        assert len(codes) == len(p)
        assert abs(p.sum() - 1) <= 1e-12
    assert dist.to_dict() == type(dist).from_dict(dist.to_dict()).to_dict()


@given(st.integers(0, 2**20))
def test_transfer_init_outputs_are_canonical(seed):
    dist = gene_distribution(sample_uniform(np.random.default_rng(seed), FULL_SPACE, 15), FULL_SPACE)
    G = transfer_init(dist, 12, seed=seed)
    assert G.shape == (12, 46)
    assert all(is_canonical(g) and FULL_SPACE.contains(g) for g in G)


def test_transfer_init_respects_reduced_space(reduced):
    dist = gene_distribution(enumerate_array(reduced)[::97], reduced)
    G = transfer_init(dist, 40, seed=1, space=reduced)
    assert all(reduced.contains(g) for g in G)
    assert len(np.unique(G, axis=0)) == 40


def test_position_categories_include_absent_slots():
    cats = position_categories(FULL_SPACE)
    assert cats[0].tolist() == list(range(17))
    assert cats[1].tolist() == [2, 3, 4]
    assert 0 not in cats[2].tolist()  # first layer is always present
    assert cats[8].tolist() == [0, 1, 2, 3]  # fourth layer may be absent


def test_mine_frequencies_uses_front(short_run):
    dist = mine_frequencies(short_run.archive, ("madds",), SearchSpace.reduced(), smoothing=0.0)
    front = np.array([a.genome for a in short_run.front()])
    assert dist.counts[0].sum() == len(front)


def test_evaluations_to_reach():
    assert evaluations_to_reach(np.array([0.1, 0.5, 0.9]), 0.5) == 2
    assert math.isinf(evaluations_to_reach(np.array([0.1, 0.2]), 0.5))
