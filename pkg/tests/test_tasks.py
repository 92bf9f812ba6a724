import logging

import numpy as np
import pytest

from gtwidl import tasks
from gtwidl.baselines import clustering_accuracy
from gtwidl.exceptions import InvalidArgumentError
from gtwidl.optimizer import TrainConfig, fit
from gtwidl.warping import invert_warp

from conftest import bump

CFG = TrainConfig(t1=10)


def wave(n):
    return np.sin(2 * np.pi * np.linspace(0, 1, n))


def toy_set(rng, m=6, noise=0.01):
    """Bumps (class 'a') and full sine periods (class 'b') of varying length."""
    X, y = [], []
    for label, shape in (("a", bump), ("b", wave)):
        for n in rng.integers(26, 35, m):
            X.append(shape(int(n)) * rng.uniform(0.8, 1.2) + noise * rng.standard_normal(int(n)))
            y.append(label)
    return X, y


class TestSelectK:
    def test_eigenvalue_rule(self):
        assert tasks.k_from_eigenvalues([4, 3, 2, 1], 0.7) == 2
        assert tasks.k_from_eigenvalues([1, 2, 3, 4], 0.71) == 3
        assert tasks.k_from_eigenvalues([4, 3, 2, 1], 1.0) == 4

    def test_zeta_one_gives_rank(self, rng):
        base = np.stack([bump(24, 0.3), bump(24, 0.7)])
        X = [rng.uniform(0.2, 1.0, 2) @ base for _ in range(6)]
        result = fit(X, TrainConfig(n_atoms=6, t1=5))
        rows = np.vstack([invert_warp(x, w.path, 24) for x, w in zip(X, result.warps)])
        k = tasks.select_k(X, 1.0, k_max=6, _fit=result)
        assert k == min(np.linalg.matrix_rank(rows, tol=1e-6 * np.linalg.norm(rows, 2)), 6)

    def test_single_shape_class(self):
        X = [bump(30) * s for s in (1.0, 1.5, 2.0, 0.7)]
        assert tasks.select_k(X, 0.7, CFG) == 1

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            tasks.select_k([], 0.7)

    @pytest.mark.parametrize("zeta", [0.0, 1.5])
    def test_zeta_range(self, zeta):
        with pytest.raises(InvalidArgumentError):
            tasks.k_from_eigenvalues([1.0], zeta)


class TestClassifier:
    def test_identical_samples_single_atom(self):
        x = bump(30) + 0.1
        models = tasks.train_classifier([x] * 4, ["c"] * 4, 1e-4, 0.7, CFG)
        assert len(models) == 1 and models[0].dictionary.n_atoms == 1
        np.testing.assert_allclose(models[0].dictionary.atoms[0, 0], x / np.linalg.norm(x), atol=1e-6)

    def test_cross_reconstruction_gap(self, rng):
        X, y = toy_set(rng)
        models = tasks.train_classifier(X, y, 1e-4, 0.7, CFG)
        _, E = tasks.predict(X, models, CFG)
        own = np.array([E[i, 0 if lbl == "a" else 1] for i, lbl in enumerate(y)])
        other = np.array([E[i, 1 if lbl == "a" else 0] for i, lbl in enumerate(y)])
        assert np.mean(own) * 10 < np.mean(other)

    def test_atom_classified_to_its_class(self, rng):
        X, y = toy_set(rng)
        models = tasks.train_classifier(X, y, 1e-4, 0.7, CFG)
        atom = models[1].dictionary.atoms[0, 0]
        label, errors = tasks.classify(atom, models, CFG)
        # only the l1 shrinkage of the code separates it from a perfect fit
        assert label == "b" and errors[1] < 1e-4

    def test_label_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            tasks.train_classifier([np.ones(5)], [], 1e-4, 0.7)

    def test_numeric_labels_sorted_numerically(self):
        X = [bump(20)] * 2 + [wave(20)] * 2 + [bump(20, 0.2)] * 2
        models = tasks.train_classifier(X, ["10", "10", "2", "2", "1", "1"], 1e-4, 0.7, CFG, n_atoms=1)
        assert [m.label for m in models] == ["1", "2", "10"]


class TestCrossValidate:
    def test_single_point_grid(self, rng):
        X, y = toy_set(rng, m=4)
        cv = tasks.cross_validate(X, y, [5e-4], [0.8], CFG)
        assert (cv.lam, cv.zeta) == (5e-4, 0.8)

    def test_separable_ties(self, rng):
        X, y = toy_set(rng, m=4)
        cv = tasks.cross_validate(X, y, [1e-4, 1e-3], [0.9, 0.5], CFG)
        assert all(v == 1.0 for v in cv.scores.values())
        assert (cv.lam, cv.zeta) == (1e-3, 0.5)

    def test_small_class_kept_in_training(self, rng, caplog):
        X, y = toy_set(rng, m=4)
        X, y = X + [bump(30, 0.2)] * 2, y + ["c", "c"]
        with caplog.at_level(logging.WARNING, logger="gtwidl.tasks"):
            folds = list(tasks._folds(y, 0))
        assert "fewer than 3" in caplog.text
        small = {len(y) - 2, len(y) - 1}
        for train, val in folds:
            assert small <= set(train.tolist()) and not small & set(val.tolist())


class TestCluster:
    def test_separated_clusters_one_round(self, rng):
        X, y = toy_set(rng, m=5)
        init = [0] * 4 + [1] + [1] * 4 + [0]  # one sample misplaced per cluster
        # one shape per cluster, so one atom each; more atoms would absorb the misfits
        res = tasks.cluster(X, 2, TrainConfig(t1=10, n_atoms=1), init=init)
        assert clustering_accuracy(y, res.assignment) == 1.0
        assert res.converged and res.rounds <= 2

    def test_total_error_non_increasing(self, rng):
        X, y = toy_set(rng, m=5, noise=0.05)
        res = tasks.cluster(X, 2, TrainConfig(t1=10), seed=1)
        assert np.all(np.diff(res.total_error) <= 1e-9)

    def test_k_equals_m(self, rng):
        X, y = toy_set(rng, m=2)
        res = tasks.cluster(X, len(X), TrainConfig(t1=5), max_rounds=2)
        assert sorted(res.assignment.tolist()) == list(range(len(X)))

    @pytest.mark.parametrize("k", [1, 99])
    def test_invalid_k(self, rng, k):
        X, _ = toy_set(rng, m=2)
        with pytest.raises(InvalidArgumentError):
            tasks.cluster(X, k)
