"""scikit-learn style wrappers around the library functions.

Inputs ``X`` may be a list of 1-D arrays, a list of ``(p, n)`` arrays (lengths
may differ), a list of :class:`~gtwidl.core.TimeSeries`, a 2-D array of
equal-length univariate series or a 3-D ``(m, p, n)`` array.
"""
from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines, tasks
from .core import TimeSeries
from .exceptions import InvalidArgumentError
from .optimizer import TrainConfig, encode, fit
from .warping import DEFAULT_BASIS


def check_series(X, min_length: int = 2) -> List[np.ndarray]:
    """Validate a batch of series and return it as a list of ``(p, n)`` arrays."""
    if isinstance(X, np.ndarray) and X.dtype != object:
        if X.ndim == 2:
            X = [row[None, :] for row in X]
        elif X.ndim == 3:
            X = list(X)
        else:
            raise InvalidArgumentError(f"expected a 2-D or 3-D array of series, got {X.ndim}-D")
    out = []
    for i, s in enumerate(X):
        arr = np.asarray(s.channels if isinstance(s, TimeSeries) else s, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise InvalidArgumentError(f"series {i} must be 1-D or (p, n), got shape {arr.shape}")
        if arr.shape[1] < min_length:
            raise InvalidArgumentError(f"series {i} has {arr.shape[1]} frames, need {min_length}")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError(f"series {i} contains non-finite values")
        out.append(arr)
    if not out:
        raise InvalidArgumentError("empty batch of series")
    if len({a.shape[0] for a in out}) != 1:
        raise InvalidArgumentError("series differ in channel count")
    return out


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise InvalidArgumentError(f"expected {n} labels, got shape {y.shape}")
    return y


class _ConfigMixin:
    def _config(self, **overrides) -> TrainConfig:
        params = dict(
            lam=self.lam,
            n_atoms=getattr(self, "n_atoms", None) or 5,
            gamma=self.gamma,
            basis=tuple(self.basis),
            t1=self.t1,
            t2=self.t2,
            tol=self.tol,
            atom_length=self.atom_length,
            seed=self.random_state,
            n_jobs=self.n_jobs,
        )
        params.update(overrides)
        return TrainConfig(**params)


class GTWIDL(_ConfigMixin, TransformerMixin, BaseEstimator):
    """Warping-invariant dictionary learner.

    Parameters
    ----------
    n_atoms : int, default=5
    lam : float, default=1e-4
        l1 weight on the codes.
    gamma : float, default=0.2
        Boundary slack of the warping paths.
    basis : tuple of str
        Warping basis families.
    t1, t2 : int
        Outer / coefficient iteration caps.
    tol : float
        Relative objective change ending the outer loop.
    atom_length : int, optional
        Defaults to the rounded mean training length.
    random_state : int
    n_jobs : int
        Threads for the per-sample coefficient updates.

    Attributes
    ----------
    dictionary_ : Dictionary
    codes_ : ndarray of shape (m, n_atoms)
    warps_ : list of WarpModel
    report_ : FitReport
    """

    def __init__(self, n_atoms=5, lam=1e-4, gamma=0.2, basis=DEFAULT_BASIS, t1=50, t2=20, tol=1e-4,
                 atom_length=None, random_state=0, n_jobs=1):
        self.n_atoms = n_atoms
        self.lam = lam
        self.gamma = gamma
        self.basis = basis
        self.t1 = t1
        self.t2 = t2
        self.tol = tol
        self.atom_length = atom_length
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_series(X)
        result = fit(X, self._config())
        self.dictionary_ = result.dictionary
        self.codes_ = np.array([c.alpha for c in result.codes])
        self.warps_ = result.warps
        self.report_ = result.report
        self.n_channels_ = self.dictionary_.n_channels
        return self

    def _encode(self, X):
        check_is_fitted(self, "dictionary_")
        cfg = self._config(atom_length=self.dictionary_.atom_length)
        return [encode(x, self.dictionary_, cfg, seed=self.random_state) for x in check_series(X)]

    def transform(self, X):
        """Sparse codes of ``X`` against the learned atoms, shape ``(m, n_atoms)``."""
        return np.array([r.alpha for r in self._encode(X)])

    def reconstruction_error(self, X):
        """Squared reconstruction error of each series after coding."""
        X = check_series(X)
        lam = self.lam
        return np.array([(r.objective - lam * r.alpha.sum()) * x.shape[1] for r, x in zip(self._encode(X), X)])


class GTWIDLClassifier(_ConfigMixin, ClassifierMixin, BaseEstimator):
    """Minimum-reconstruction-error classifier with one dictionary per class.

    ``n_atoms=None`` picks K per class from the eigenvalue proportion ``zeta``.
    """

    def __init__(self, lam=1e-4, zeta=0.7, n_atoms=None, gamma=0.2, basis=DEFAULT_BASIS, t1=50, t2=20,
                 tol=1e-4, atom_length=None, random_state=0, n_jobs=1):
        self.lam = lam
        self.zeta = zeta
        self.n_atoms = n_atoms
        self.gamma = gamma
        self.basis = basis
        self.t1 = t1
        self.t2 = t2
        self.tol = tol
        self.atom_length = atom_length
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = check_series(X)
        y = check_labels(y, len(X))
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.models_ = tasks.train_classifier(X, list(encoded), self.lam, self.zeta, self._config(),
                                              n_atoms=self.n_atoms)
        return self

    def reconstruction_errors(self, X):
        """Per-class squared reconstruction errors, shape ``(m, n_classes)``."""
        check_is_fitted(self, "models_")
        _, E = tasks.predict(check_series(X), self.models_, self._config())
        return E

    def predict(self, X):
        E = self.reconstruction_errors(X)
        idx = [self.models_[i].label for i in np.argmin(E, axis=1)]
        return self.classes_[np.asarray(idx, dtype=int)]


class GTWIDLClustering(_ConfigMixin, ClusterMixin, BaseEstimator):
    """Iterative clustering by per-cluster dictionaries."""

    def __init__(self, n_clusters=2, lam=1e-4, n_atoms=5, gamma=0.2, basis=DEFAULT_BASIS, t1=50, t2=20,
                 tol=1e-4, atom_length=None, max_rounds=20, random_state=0, n_jobs=1):
        self.n_clusters = n_clusters
        self.lam = lam
        self.n_atoms = n_atoms
        self.gamma = gamma
        self.basis = basis
        self.t1 = t1
        self.t2 = t2
        self.tol = tol
        self.atom_length = atom_length
        self.max_rounds = max_rounds
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_series(X)
        res = tasks.cluster(X, self.n_clusters, self._config(), self.max_rounds, seed=self.random_state)
        self.labels_ = res.assignment
        self.dictionaries_ = res.dictionaries
        self.n_rounds_ = res.rounds
        self.converged_ = res.converged
        return self


class DTWNeighborsClassifier(ClassifierMixin, BaseEstimator):
    """1-nearest-neighbour classifier under DTW, DDTW or WDTW."""

    def __init__(self, metric="dtw", g=0.05):
        self.metric = metric
        self.g = g

    def fit(self, X, y):
        if self.metric not in baselines.METHODS:
            raise InvalidArgumentError(f"unknown metric {self.metric!r}")
        self.train_ = [x[0] if x.shape[0] == 1 else x.reshape(-1) for x in check_series(X, 1)]
        self.y_ = check_labels(y, len(self.train_))
        self.classes_ = np.unique(self.y_)
        return self

    def predict(self, X):
        check_is_fitted(self, "train_")
        Q = [x[0] if x.shape[0] == 1 else x.reshape(-1) for x in check_series(X, 1)]
        D = baselines.cross_distances(Q, self.train_, self.metric, self.g)
        return self.y_[np.argmin(D, axis=1)]
