import numpy as np
import pytest

from hcinfer.classify import (
    GRIDS,
    KINDS,
    ClassifierSpec,
    DegenerateDataError,
    InsufficientDataError,
    entity_accuracy,
    fit,
    global_accuracy,
    grid,
    grid_search,
    stratified_split,
)


def two_clusters(n=40, seed=0, gap=4.0):
    r = np.random.default_rng(seed)
    a = r.normal(0, 1, (n, 3))
    b = r.normal(gap, 1, (n, 3))
    return np.vstack([a, b]), np.r_[np.zeros(n, int), np.ones(n, int)]


def test_all_kinds_fit_and_predict():
    x, y = two_clusters()
    for kind in KINDS:
        model = fit(ClassifierSpec.make(kind), x, y, seed=1)
        assert np.mean(model.predict(x) == y) > 0.9, kind


def test_sgd_log_loss_supported():
    x, y = two_clusters()
    model = fit(ClassifierSpec.make("sgd_linear", {"loss": "log"}), x, y, seed=0)
    assert np.mean(model.predict(x) == y) > 0.9


def test_separable_linear_svm_hard_margin():
    x, y = two_clusters(gap=8.0)
    model = fit(ClassifierSpec.make("svm", {"kernel": "linear", "C": 1000}), x, y)
    assert np.mean(model.predict(x) == y) == 1.0


def test_knn_one_neighbor_memorizes():
    x = np.random.default_rng(3).random((30, 3))
    y = np.r_[np.zeros(15, int), np.ones(15, int)]
    model = fit(ClassifierSpec.make("knn", {"n_neighbors": 1}), x, y)
    assert np.mean(model.predict(x) == y) == 1.0


def test_same_distribution_null():
    r = np.random.default_rng(5)
    accs = [entity_accuracy(r.random((50, 3)), r.random((50, 3)), ClassifierSpec.make("svm"),
                            seed=s) for s in range(40)]
    assert abs(np.mean(accs) - 0.5) <= 0.05


def test_deterministic_given_seed():
    x, y = two_clusters(gap=1.0)
    for kind in ("random_forest", "sgd_linear", "decision_tree"):
        a = fit(ClassifierSpec.make(kind), x, y, seed=3).predict(x)
        b = fit(ClassifierSpec.make(kind), x, y, seed=3).predict(x)
        assert np.array_equal(a, b)


def test_single_class_rejected():
    with pytest.raises(DegenerateDataError):
        fit(ClassifierSpec.make("svm"), np.zeros((4, 3)), np.zeros(4))


def test_identical_rows_give_constant_guess():
    model = fit(ClassifierSpec.make("svm"), np.ones((6, 3)), np.r_[0, 0, 0, 1, 1, 1])
    assert np.all(model.predict(np.zeros((3, 3))) == 0)


def test_entity_accuracy_examples():
    real = np.tile([1.0, 0, 0], (20, 1))
    sim = np.tile([0.0, 0, 1], (20, 1))
    assert entity_accuracy(real, sim, ClassifierSpec.make("svm")) == 1.0
    with pytest.raises(InsufficientDataError):
        entity_accuracy(real[:4], sim[:4], ClassifierSpec.make("svm"))
    with pytest.raises(InsufficientDataError):
        entity_accuracy(real, sim[:10], ClassifierSpec.make("svm"))


def test_entity_accuracy_fixed_training_block():
    real = np.tile([1.0, 0, 0], (10, 1))
    sim = np.tile([0.0, 0, 1], (10, 1))
    assert entity_accuracy(real, sim, ClassifierSpec.make("svm"), train_rows=6) == 1.0
    with pytest.raises(InsufficientDataError):
        entity_accuracy(real, sim, ClassifierSpec.make("svm"), train_rows=10)


def test_split_is_stratified_sixty_forty():
    tr_r, te_r, tr_s, te_s = stratified_split(50, 50, 0.6, seed=1, entity=3)
    assert len(tr_r) == len(tr_s) == 30 and len(te_r) == len(te_s) == 20
    assert set(tr_r).isdisjoint(te_r)
    again = stratified_split(50, 50, 0.6, seed=1, entity=3)
    assert all(np.array_equal(a, b) for a, b in zip((tr_r, te_r, tr_s, te_s), again))


def test_global_accuracy_examples():
    assert global_accuracy([0.4, 0.6]).global_accuracy == pytest.approx(0.5)
    assert global_accuracy({7: 0.43}).global_accuracy == 0.43
    assert global_accuracy([1.0] * 5).global_accuracy == 1.0
    assert global_accuracy({1: 0.2, 0: 0.9}).global_accuracy == global_accuracy({0: 0.9, 1: 0.2}).global_accuracy
    with pytest.raises(ValueError):
        global_accuracy([])


def test_label_swap_symmetry():
    r = np.random.default_rng(8)
    real, sim = r.normal(0, 1, (30, 3)), r.normal(0.7, 1, (30, 3))
    for kind in ("svm", "knn", "logistic_regression"):
        spec = ClassifierSpec.make(kind)
        assert entity_accuracy(real, sim, spec, seed=2) == entity_accuracy(sim, real, spec, seed=2)


def test_feature_permutation_equivariance():
    r = np.random.default_rng(9)
    real, sim = r.normal(0, 1, (30, 3)), r.normal(0.7, 1, (30, 3))
    perm = [2, 0, 1]
    for kind in ("knn", "decision_tree"):
        spec = ClassifierSpec.make(kind)
        assert entity_accuracy(real, sim, spec, seed=4) == entity_accuracy(
            real[:, perm], sim[:, perm], spec, seed=4)


def test_svm_duplication_invariance():
    x, y = two_clusters(gap=1.5, seed=6)
    spec = ClassifierSpec.make("svm")
    once = fit(spec, x, y)
    twice = fit(spec, np.vstack([x, x]), np.r_[y, y])
    probe = np.random.default_rng(7).normal(0.75, 2, (200, 3))
    assert np.array_equal(once.predict(probe), twice.predict(probe))
    np.testing.assert_allclose(once.decision_function(probe), twice.decision_function(probe),
                               atol=1e-4)


def test_grid_enumeration_and_search():
    assert len(grid("svm")) == 4 * 3 * 3
    assert len(grid("naive_bayes")) == len(GRIDS["naive_bayes"]["var_smoothing"])
    x, y = two_clusters(gap=6.0)
    real, sim = x[y == 0], x[y == 1]
    one = [ClassifierSpec.make("svm", {"C": 10})]
    assert grid_search("svm", real, sim, candidates=one) == one[0]
    best = grid_search("svm", real, sim, seed=3)
    assert entity_accuracy(real, sim, best, seed=3) == 1.0
    # all candidates tie at 1.0, so the first in enumeration order wins
    assert best == grid("svm")[0]
    noisy = np.random.default_rng(1)
    a, b = noisy.random((30, 3)), noisy.random((30, 3)) + 0.1
    assert grid_search("svm", a, b, seed=5) == grid_search("svm", a, b, seed=5)


def test_spec_validation():
    with pytest.raises(ValueError):
        ClassifierSpec.make("perceptron")
    with pytest.raises(ValueError):
        ClassifierSpec.make("svm", {"kernel": "sigmoid"})
    with pytest.raises(ValueError):
        ClassifierSpec.make("svm", {"C": -1})
    spec = ClassifierSpec.make("svm", {"C": 10})
    assert spec.params == {"C": 10, "kernel": "rbf", "gamma": 0.1}
    assert ClassifierSpec("svm").params["C"] == 100


def test_effective_key_ignores_unused_hyperparameters():
    a = ClassifierSpec.make("svm", {"kernel": "linear", "gamma": 0.01})
    b = ClassifierSpec.make("svm", {"kernel": "linear", "gamma": 1})
    c = ClassifierSpec.make("svm", {"kernel": "rbf", "gamma": 1})
    assert a.effective_key() == b.effective_key() != c.effective_key()
