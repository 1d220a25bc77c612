import numpy as np
import pytest

from archsearch import surrogates
from archsearch.evaluation import synthetic_accuracy
from archsearch.metrics import kendall_tau
from archsearch.searchspace import FULL_SPACE, GENE_HIGH, GENE_LOW, sample_uniform
from archsearch.surrogates import (
    MODEL_IDS,
    AllModelsFailed,
    SingularSystem,
    TrainingSet,
    adaptive_switch,
    choose,
    CvScore,
    cross_validate,
    encode_features,
    fit_cart,
    fit_gp,
    fit_mlp,
    fit_model,
    fit_rbf,
    predictor_from_dict,
)
from archsearch.surrogates import switching


def landscape(n, seed=0, space=FULL_SPACE, variant="smooth"):
    G = np.unique(sample_uniform(np.random.default_rng(seed), space, int(n * 1.2) + 5), axis=0)
    G = G[np.random.default_rng(seed + 1).permutation(len(G))][:n]
    return G, synthetic_accuracy(G, variant)


@pytest.fixture(scope="module")
def split():
    G, y = landscape(700, seed=21)
    return G[:500], y[:500], G[500:], y[500:]


@pytest.fixture(scope="module")
def small():
    G, y = landscape(60, seed=2)
    return TrainingSet(G, y)


# -- training set --------------------------------------------------------------------------


def test_training_set_invariants():
    G, y = landscape(25)
    with pytest.raises(ValueError):
        TrainingSet(G[:19], y[:19])
    with pytest.raises(ValueError):
        TrainingSet(np.vstack([G, G[:1]]), np.append(y, y[0]))
    with pytest.raises(ValueError):
        TrainingSet(G, y + 1.0)


def test_feature_encoding_range():
    G = sample_uniform(np.random.default_rng(0), FULL_SPACE, 200)
    X = encode_features(G)
    assert X.min() >= 0 and X.max() <= 1
    assert np.all(X[G == 0][:, None] == 0) if (G[:, 1:] == 0).any() else True
    assert np.array_equal(encode_features(np.array([GENE_HIGH])), np.ones((1, 46)))
    assert np.array_equal(encode_features(np.array([GENE_LOW])), np.zeros((1, 46)))


# -- MLP -------------------------------------------------------------------------------------


def test_mlp_constant_targets():
    G, _ = landscape(30)
    p = fit_mlp(TrainingSet(G, np.full(30, 0.5)))
    assert p.degenerate
    assert np.all(np.abs(p.predict(sample_uniform(np.random.default_rng(1), FULL_SPACE, 50)) - 0.5) <= 1e-6)


def test_mlp_deterministic(small):
    a = fit_mlp(small, seed=4).predict(small.genomes)
    b = fit_mlp(small, seed=4).predict(small.genomes)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, fit_mlp(small, seed=5).predict(small.genomes))


def test_mlp_architecture(small):
    p = fit_mlp(small)
    assert [w.shape for w in p.weights] == [(46, 64), (64, 64), (64, 1)]


def test_mlp_held_out_rank(split):
    Gtr, ytr, Gte, yte = split
    p = fit_mlp(TrainingSet(Gtr, ytr), seed=0)
    assert kendall_tau(p.predict(Gte), yte) >= 0.6


# -- CART ------------------------------------------------------------------------------------


def test_cart_training_error_below_std(small):
    p = fit_cart(small)
    err = np.sqrt(np.mean((p.predict(small.genomes) - small.targets) ** 2))
    assert err <= small.targets.std()
    assert p.depth <= 12


def test_cart_single_gene_split():
    G, _ = landscape(40, seed=3)
    y = np.where(G[:, 0] >= 8, 0.8, 0.2)
    p = fit_cart(TrainingSet(G, y))
    assert p.depth == 1
    assert p.feature[0] == 0
    assert set(np.round(p.predict(G), 12)) == {0.2, 0.8}


def test_cart_tie_goes_to_lowest_gene():
    # block-1 depth (gene 1) and block-2 depth (gene 10) carry the same partition
    G = sample_uniform(np.random.default_rng(4), FULL_SPACE, 400)
    G = np.unique(G[(G[:, 1] == 2) == (G[:, 10] == 2)], axis=0)[:60]
    y = np.where(G[:, 1] == 2, 0.3, 0.6)
    p = fit_cart(TrainingSet(G, y))
    assert p.feature[0] == 1
    assert p.depth == 1


def test_cart_deterministic(small):
    a, b = fit_cart(small), fit_cart(small)
    assert a.to_dict() == b.to_dict()


def test_cart_respects_min_split(small):
    p = fit_cart(small, max_depth=12, min_split=4)
    leaves = p.feature < 0
    assert leaves.sum() == p.n_leaves


# -- RBF -------------------------------------------------------------------------------------


def test_rbf_interpolates(small):
    p = fit_rbf(small)
    assert np.all(np.abs(p.predict(small.genomes) - small.targets) <= 1e-4)


def test_rbf_solves_many_random_sets():
    rng = np.random.default_rng(0)
    for i in range(1000):
        G = np.unique(sample_uniform(rng, FULL_SPACE, 24), axis=0)
        y = rng.random(len(G))
        fit_rbf(TrainingSet(G, y))


def test_rbf_near_constant_surface():
    G, _ = landscape(40, seed=6)
    y = 0.5 + 1e-6 * np.random.default_rng(0).random(40)
    p = fit_rbf(TrainingSet(G, y))
    probe = sample_uniform(np.random.default_rng(9), FULL_SPACE, 100)
    assert np.ptp(p.predict(probe)) < 1e-4


def test_rbf_training_tau_at_least_cv_tau(small):
    p = fit_rbf(small)
    cv = cross_validate(small, "RBF", seed=0)
    assert kendall_tau(p.predict(small.genomes), small.targets) >= cv.kendall_tau


# -- GP --------------------------------------------------------------------------------------


def test_gp_grid_argmax(small):
    p = fit_gp(small)
    assert len(p.lml_table) == 8
    best = max(p.lml_table, key=lambda r: r["lml"])
    assert (best["lengthscale"], best["noise"]) == (p.lengthscale, p.noise)
    assert np.sqrt(46) * 0.5 <= p.lengthscale <= np.sqrt(46) * 4


def test_gp_training_points_within_two_sigma(small):
    p = fit_gp(small, noises=(1e-4,))
    sigma = np.sqrt(1e-4) * p.y_std
    assert np.all(np.abs(p.predict(small.genomes) - small.targets) <= 2 * sigma)


def test_gp_held_out_rank(split):
    Gtr, ytr, Gte, yte = split
    assert kendall_tau(fit_gp(TrainingSet(Gtr, ytr)).predict(Gte), yte) >= 0.6


def test_gp_singular_when_grid_empty(small):
    with pytest.raises(SingularSystem):
        fit_gp(small, lengthscales=(1e12,), noises=(-10.0,))


# -- serialization and clamping ----------------------------------------------------------------


@pytest.mark.parametrize("model", MODEL_IDS)
def test_round_trip_and_clamp(model, small):
    p = fit_model(model, small.genomes, small.targets, seed=1)
    q = predictor_from_dict(p.to_dict())
    probe = sample_uniform(np.random.default_rng(3), FULL_SPACE, 64)
    assert np.array_equal(p.predict(probe), q.predict(probe))
    assert q.model_id == model and q.fingerprint == p.fingerprint
    out = p.predict(probe)
    assert out.min() >= 0 and out.max() <= 1
    assert np.array_equal(surrogates.predict(p, probe), out)


# -- adaptive switching ------------------------------------------------------------------------


def test_choose_order():
    scores = [CvScore("MLP", 0.5, 0.1), CvScore("CART", 0.7, 0.3), CvScore("RBF", 0.7, 0.2), CvScore("GP", 0.7, 0.2)]
    assert choose(scores).model_id == "RBF"
    assert choose([CvScore("GP", 0.4, 0.1), CvScore("MLP", 0.4, 0.1)]).model_id == "MLP"


def test_switch_selection_rules(small):
    p, scores = adaptive_switch(small, seed=3)
    taus = {s.model_id: s.kendall_tau for s in scores}
    assert taus[p.model_id] == max(taus.values())
    assert taus[p.model_id] >= np.mean(list(taus.values()))
    assert all(len(s.fold_taus) == 10 for s in scores)
    fold_best = [s for s in scores if all(
        all(t > o for t, o in zip(s.fold_taus, other.fold_taus)) for other in scores if other is not s)]
    if fold_best:
        assert p.model_id == fold_best[0].model_id


def test_switch_deterministic(small):
    a, sa = adaptive_switch(small, seed=7)
    b, sb = adaptive_switch(small, seed=7)
    assert sa == sb
    assert np.array_equal(a.predict(small.genomes), b.predict(small.genomes))


def test_folds_partition():
    folds = switching.fold_indices(57, seed=1)
    assert len(folds) == 10
    assert sorted(np.concatenate(folds).tolist()) == list(range(57))


def test_failed_model_excluded(small, monkeypatch):
    real = switching.fit_model

    def flaky(model_id, *a, **kw):
        if model_id == "GP":
            raise SingularSystem("forced")
        return real(model_id, *a, **kw)

    monkeypatch.setattr(switching, "fit_model", flaky)
    p, scores = adaptive_switch(small, seed=0)
    assert "GP" not in {s.model_id for s in scores}
    assert p.model_id != "GP"


def test_all_models_failed(small, monkeypatch):
    def broken(*a, **kw):
        raise SingularSystem("forced")

    monkeypatch.setattr(switching, "fit_model", broken)
    with pytest.raises(AllModelsFailed):
        adaptive_switch(small)


@pytest.mark.parametrize("variant", ["smooth", "rugged", "deceptive"])
def test_switch_close_to_best_single_model(variant):
    G, y = landscape(700, seed=5, variant=variant)
    Gtr, ytr, Gte, yte = G[:500], y[:500], G[500:], y[500:]
    single = {m: kendall_tau(fit_model(m, Gtr, ytr, seed=0).predict(Gte), yte) for m in MODEL_IDS}
    p, _ = adaptive_switch(TrainingSet(Gtr, ytr), seed=0)
    tau = kendall_tau(p.predict(Gte), yte)
    assert all(tau >= t - 0.02 for t in single.values())
