"""Classification and clustering with one dictionary per class."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.model_selection import StratifiedKFold

from . import baselines
from .core import Dictionary
from .exceptions import GTWIDLError, InvalidArgumentError, NumericalFailureError
from .optimizer import (
    TrainConfig,
    as_array,
    default_atom_length,
    encode,
    fit,
    resample,
)
from .warping import invert_warp

logger = logging.getLogger(__name__)

LAMBDA_GRID = (0.001, 0.0005, 0.0001, 0.00005, 0.0)
ZETA_GRID = (0.5, 0.7, 0.8, 0.9, 0.95, 0.99)
K_MAX = 10


@dataclass
class ClassDictionary:
    label: Optional[str]
    dictionary: Dictionary
    n_train: int
    objective: float = float("nan")
    outer_iterations: int = 0
    report: Optional[object] = None


@dataclass
class CVResult:
    lam: float
    zeta: float
    scores: Dict[tuple, float]


@dataclass
class ClusterResult:
    assignment: np.ndarray
    dictionaries: List[Dictionary]
    rounds: int
    converged: bool
    total_error: List[float] = field(default_factory=list)


def k_from_eigenvalues(eigenvalues, zeta: float) -> int:
    """Smallest K whose leading eigenvalues reach the proportion ``zeta``."""
    if not 0 < zeta <= 1:
        raise InvalidArgumentError(f"zeta must lie in (0, 1], got {zeta}")
    ev = np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]
    total = ev.sum()
    if total <= 0:
        return 1
    ratio = np.cumsum(ev) / total
    # a relative slack keeps zeta = 1 from failing on round-off
    return int(np.searchsorted(ratio, zeta - 1e-12) + 1)


def warped_spectrum(samples, fit_result) -> np.ndarray:
    """Squared singular values of the inverse-warped samples, stacked channel-wise."""
    n_atom = fit_result.atom_length
    rows = [invert_warp(as_array(x), w.path, n_atom).reshape(-1) for x, w in zip(samples, fit_result.warps)]
    s = np.linalg.svd(np.vstack(rows), compute_uv=False)
    return s**2


def select_k(samples, zeta: float, config: Optional[TrainConfig] = None, k_max: Optional[int] = None,
             _fit=None):
    """Adaptive atom count for one class.

    Fits ``min(m, 10)`` atoms, maps every sample into dictionary frames
    and returns the smallest K reaching the eigenvalue proportion ``zeta``.
    """
    if len(samples) == 0:
        raise InvalidArgumentError("cannot select K for an empty class")
    if not 0 < zeta <= 1:
        raise InvalidArgumentError(f"zeta must lie in (0, 1], got {zeta}")
    config = config or TrainConfig()
    k_max = k_max or min(len(samples), K_MAX)
    result = _fit or fit(samples, replace(config, n_atoms=k_max))
    return min(k_from_eigenvalues(warped_spectrum(samples, result), zeta), k_max)


class _FitCache:
    """Memoised dictionary fits keyed by (group, lambda, K)."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.store = {}

    def get(self, key, samples, lam, K, atom_length):
        full = (key, lam, K)
        if full not in self.store:
            cfg = replace(self.config, lam=lam, n_atoms=K, atom_length=atom_length)
            self.store[full] = fit(samples, cfg)
        return self.store[full]


def _group(labels):
    classes = sorted(set(labels), key=_label_key)
    return classes, {c: [i for i, y in enumerate(labels) if y == c] for c in classes}


def _label_key(label):
    try:
        return (0, float(label), str(label))
    except (TypeError, ValueError):
        return (1, 0.0, str(label))


def _train_from_cache(samples, labels, lam, zeta, config, cache, tag, fixed_k=None):
    classes, members = _group(labels)
    models = []
    for c in classes:
        xs = [samples[i] for i in members[c]]
        n_atom = config.atom_length or default_atom_length(xs)
        if fixed_k is not None:
            K = min(fixed_k, len(xs))
        else:
            k_max = min(len(xs), K_MAX)
            big = cache.get((tag, c), xs, lam, k_max, n_atom)
            K = select_k(xs, zeta, config, k_max=k_max, _fit=big)
        res = cache.get((tag, c), xs, lam, K, n_atom)
        models.append(ClassDictionary(c, res.dictionary, len(xs), res.report.objective[-1],
                                      res.report.outer_iterations, res.report))
    return models


def train_classifier(samples, labels, lam: float = 1e-4, zeta: float = 0.7,
                     config: Optional[TrainConfig] = None, n_atoms: Optional[int] = None) -> List[ClassDictionary]:
    """One dictionary per class; K per class from ``zeta`` unless ``n_atoms`` fixes it."""
    if len(samples) != len(labels):
        raise InvalidArgumentError("one label per sample is required")
    if len(samples) == 0:
        raise InvalidArgumentError("training set is empty")
    config = config or TrainConfig()
    cache = _FitCache(replace(config, lam=lam))
    return _train_from_cache(samples, list(labels), lam, zeta, config, cache, "train", n_atoms)


def classify(sample, models: Sequence[ClassDictionary], config: Optional[TrainConfig] = None, seed=None):
    """Assign ``sample`` to the class whose dictionary reconstructs it best.

    Returns
    -------
    label, errors : label of the winning class and the per-class squared
        reconstruction errors (``inf`` for classes whose solve failed).
    """
    if not models:
        raise InvalidArgumentError("no class dictionaries")
    config = config or TrainConfig()
    seed = config.seed if seed is None else seed
    x = as_array(sample)
    errors = np.full(len(models), np.inf)
    failures = []
    for c, model in enumerate(models):
        try:
            res = encode(x, model.dictionary, config, seed=seed)
        except InvalidArgumentError:
            raise
        except GTWIDLError as exc:
            failures.append(f"class {model.label}: {exc}")
            continue
        errors[c] = (res.objective - config.lam * float(res.alpha.sum())) * x.shape[1]
    if np.all(np.isinf(errors)):
        raise NumericalFailureError("every class failed: " + "; ".join(failures))
    return models[int(np.argmin(errors))].label, errors


def predict(samples, models, config=None):
    out = [classify(s, models, config) for s in samples]
    return [o[0] for o in out], np.array([o[1] for o in out])


def _folds(labels, seed):
    labels = np.asarray(labels, dtype=object)
    classes, counts = np.unique(labels.astype(str), return_counts=True)
    small = set(classes[counts < 3])
    if small:
        logger.warning("classes %s have fewer than 3 samples; kept in every training fold", sorted(small))
    always = np.array([i for i, y in enumerate(labels) if str(y) in small], dtype=int)
    idx = np.array([i for i, y in enumerate(labels) if str(y) not in small], dtype=int)
    if idx.size == 0:
        raise InvalidArgumentError("no class has the 3 samples needed for 3-fold validation")
    skf = StratifiedKFold(n_splits=3, shuffle=True, random_state=seed)
    for tr, va in skf.split(idx, labels[idx].astype(str)):
        yield np.concatenate([idx[tr], always]), idx[va]


def cross_validate(samples, labels, lam_grid=LAMBDA_GRID, zeta_grid=ZETA_GRID,
                   config: Optional[TrainConfig] = None, seed: int = 0) -> CVResult:
    """Stratified 3-fold grid search over (lambda, zeta) by mean validation accuracy.

    Ties go to the larger lambda, then the smaller zeta.
    """
    config = config or TrainConfig()
    labels = list(labels)
    cache = _FitCache(config)
    fold_scores = {(lam, z): [] for lam in lam_grid for z in zeta_grid}
    for f, (tr, va) in enumerate(_folds(labels, seed)):
        xs = [samples[i] for i in tr]
        ys = [labels[i] for i in tr]
        coded = {}
        for lam in lam_grid:
            run_cfg = replace(config, lam=lam)
            for z in zeta_grid:
                models = _train_from_cache(xs, ys, lam, z, run_cfg, cache, f)
                correct = 0
                for i in va:
                    errs = []
                    for model in models:
                        key = (i, lam, model.label, model.dictionary.n_atoms)
                        if key not in coded:
                            coded[key] = classify(samples[i], [model], run_cfg)[1][0]
                        errs.append(coded[key])
                    correct += models[int(np.argmin(errs))].label == labels[i]
                fold_scores[(lam, z)].append(correct / len(va))
    scores = {k: float(np.mean(v)) for k, v in fold_scores.items()}
    best = None
    for lam in sorted(lam_grid, reverse=True):
        for z in sorted(zeta_grid):
            if best is None or scores[(lam, z)] > scores[best]:
                best = (lam, z)
    return CVResult(best[0], best[1], scores)


def _initial_clusters(X, k, seed):
    padded_len = max(x.shape[1] for x in X)
    flat = np.vstack([np.pad(x, ((0, 0), (0, padded_len - x.shape[1]))).reshape(-1) for x in X])
    sq = np.sum(flat**2, axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2 * flat @ flat.T, 0.0)
    np.fill_diagonal(D, 0.0)
    try:
        labels = baselines.spectral_cluster(baselines.similarity_matrix(D), k, seed=seed)
        if len(np.unique(labels)) == k:
            return labels
    except (np.linalg.LinAlgError, ValueError):
        pass
    n = default_atom_length(X)
    flat = np.vstack([resample(x, n).reshape(-1) for x in X])
    return KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(flat)


def cluster(samples, k: int, config: Optional[TrainConfig] = None, max_rounds: int = 20,
            seed: int = 0, init: Optional[Sequence[int]] = None) -> ClusterResult:
    """Alternate per-cluster dictionary fits and minimum-error reassignment.

    A refit is accepted only if it does not raise the total reconstruction
    error of the current assignment; otherwise the previous dictionaries
    are kept and the loop stops.  It also stops when the assignment no
    longer changes, or after ``max_rounds`` rounds.
    """
    X = [as_array(s) for s in samples]
    m = len(X)
    if k < 2:
        raise InvalidArgumentError(f"need k >= 2 clusters, got {k}")
    if k > m:
        raise InvalidArgumentError(f"k = {k} exceeds the sample count {m}")
    config = config or TrainConfig(lam=1e-4, n_atoms=5)
    config = replace(config, seed=seed)
    n_atom = config.atom_length or default_atom_length(X)
    config = replace(config, atom_length=n_atom)
    assign = np.asarray(init if init is not None else _initial_clusters(X, k, seed), dtype=int)
    history = []
    dicts: List[Dictionary] = []
    prev_dicts, prev_total = None, None
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        dicts = []
        for c in range(k):
            members = [X[i] for i in np.flatnonzero(assign == c)]
            K = min(config.n_atoms, len(members))
            dicts.append(fit(members, replace(config, n_atoms=K)).dictionary)
        models = [ClassDictionary(c, d, 0) for c, d in enumerate(dicts)]
        E = np.array([classify(x, models, config)[1] for x in X])
        if prev_total is not None and E[np.arange(m), assign].sum() > prev_total:
            # the refit made things worse: keep the dictionaries that produced
            # the current assignment, which is then a fixed point
            dicts = prev_dicts
            converged = True
            break
        new = np.argmin(E, axis=1)
        # reseed empty clusters with the worst-fitting samples
        for c in range(k):
            if np.any(new == c):
                continue
            own = E[np.arange(m), new]
            counts = np.bincount(new, minlength=k)
            order = np.argsort(-own, kind="stable")
            donor = next(i for i in order if counts[new[i]] > 1)
            new[donor] = c
        total = float(E[np.arange(m), new].sum())
        history.append(total)
        if np.array_equal(new, assign):
            converged = True
            break
        assign, prev_dicts, prev_total = new, dicts, total
    return ClusterResult(assign, dicts, rounds, converged, history)
