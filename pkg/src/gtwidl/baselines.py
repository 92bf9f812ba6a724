"""Discrete DTW and its derivative / weighted variants, 1NN and spectral clustering.

All DTW costs are squared differences summed along the warping path.  The
dynamic programs are compiled with numba; the pairwise matrices are the hot
loop of every baseline experiment.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from .exceptions import InvalidArgumentError

METHODS = ("dtw", "ddtw", "wdtw")


@njit(cache=True)
def _cost_table(x, y, weights):
    nx, ny = x.shape[0], y.shape[0]
    D = np.empty((nx, ny))
    for i in range(nx):
        for j in range(ny):
            c = weights[abs(i - j)] * (x[i] - y[j]) ** 2
            if i == 0 and j == 0:
                D[i, j] = c
            elif i == 0:
                D[i, j] = c + D[i, j - 1]
            elif j == 0:
                D[i, j] = c + D[i - 1, j]
            else:
                best = D[i - 1, j - 1]
                if D[i - 1, j] < best:
                    best = D[i - 1, j]
                if D[i, j - 1] < best:
                    best = D[i, j - 1]
                D[i, j] = c + best
    return D


@njit(cache=True)
def _distance(x, y, weights):
    # two-row version of _cost_table
    nx, ny = x.shape[0], y.shape[0]
    prev = np.empty(ny)
    cur = np.empty(ny)
    for i in range(nx):
        for j in range(ny):
            c = weights[abs(i - j)] * (x[i] - y[j]) ** 2
            if i == 0:
                cur[j] = c if j == 0 else c + cur[j - 1]
            elif j == 0:
                cur[j] = c + prev[j]
            else:
                best = prev[j - 1]
                if prev[j] < best:
                    best = prev[j]
                if cur[j - 1] < best:
                    best = cur[j - 1]
                cur[j] = c + best
        prev, cur = cur, prev
    return prev[ny - 1]


def _as_sequence(x, name, min_len=1) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a single-channel sequence, got shape {arr.shape}")
    if arr.shape[0] < min_len:
        raise InvalidArgumentError(f"{name} needs at least {min_len} samples, got {arr.shape[0]}")
    return np.ascontiguousarray(arr)


def _unit_weights(nx, ny):
    return np.ones(max(nx, ny))


def _backtrack(D):
    i, j = D.shape[0] - 1, D.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # prefer the diagonal on ties
            moves = ((D[i - 1, j - 1], i - 1, j - 1), (D[i - 1, j], i - 1, j), (D[i, j - 1], i, j - 1))
            _, i, j = min(moves, key=lambda m: m[0])
        path.append((i, j))
    path.reverse()
    return np.asarray(path, dtype=np.int64)


def dtw(x, y, return_path: bool = True):
    """Dynamic time warping with squared pointwise cost.

    Parameters
    ----------
    x, y : array-like, 1-D
    return_path : bool
        When true also return the optimal path as a ``(T, 2)`` array of
        0-based index pairs, starting at ``(0, 0)`` and ending at
        ``(n_x - 1, n_y - 1)``.

    Returns
    -------
    distance : float
    path : ndarray, optional
    """
    x = _as_sequence(x, "x")
    y = _as_sequence(y, "y")
    w = _unit_weights(len(x), len(y))
    if not return_path:
        return float(_distance(x, y, w))
    D = _cost_table(x, y, w)
    return float(D[-1, -1]), _backtrack(D)


def derivative(x) -> np.ndarray:
    """Slope estimate averaging the backward difference and the centred one.

    End values are replicated from their neighbours.
    """
    x = _as_sequence(x, "x", min_len=3)
    d = np.empty_like(x)
    d[1:-1] = ((x[1:-1] - x[:-2]) + (x[2:] - x[:-2]) / 2.0) / 2.0
    d[0], d[-1] = d[1], d[-2]
    return d


def ddtw(x, y) -> float:
    """DTW between the derivative estimates of ``x`` and ``y``."""
    return dtw(derivative(x), derivative(y), return_path=False)


def wdtw_weights(g: float, n_x: int, n_y: int) -> np.ndarray:
    """Logistic phase weights ``w(d)`` for ``d = 0 .. max(n_x, n_y) - 1``."""
    if g < 0:
        raise InvalidArgumentError(f"g must be non-negative, got {g}")
    L = max(n_x, n_y)
    d = np.arange(L, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-g * (d - L / 2.0)))


def wdtw(x, y, g: float = 0.05) -> float:
    """DTW with each cell cost scaled by the logistic weight of ``|i - j|``."""
    x = _as_sequence(x, "x")
    y = _as_sequence(y, "y")
    return float(_distance(x, y, wdtw_weights(g, len(x), len(y))))


def _distance_fn(method: str, g: float):
    if method == "dtw":
        return lambda a, b: dtw(a, b, return_path=False)
    if method == "ddtw":
        return ddtw
    if method == "wdtw":
        return lambda a, b: wdtw(a, b, g)
    raise InvalidArgumentError(f"unknown distance {method!r}; choose from {METHODS}")


def _prepare(series, method):
    seqs = [_as_sequence(s, "series", 3 if method == "ddtw" else 1) for s in series]
    if method == "ddtw":
        seqs = [derivative(s) for s in seqs]
    return seqs


def cross_distances(A: Sequence, B: Sequence, method: str = "dtw", g: float = 0.05) -> np.ndarray:
    """Distance matrix between every series of ``A`` (rows) and ``B`` (columns)."""
    _distance_fn(method, g)
    A = _prepare(A, method)
    B = _prepare(B, method)
    out = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            w = wdtw_weights(g, len(a), len(b)) if method == "wdtw" else _unit_weights(len(a), len(b))
            out[i, j] = _distance(a, b, w)
    return out


def pairwise_distances(series: Sequence, method: str = "dtw", g: float = 0.05) -> np.ndarray:
    """Symmetric distance matrix with a zero diagonal."""
    _distance_fn(method, g)
    S = _prepare(series, method)
    m = len(S)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            w = wdtw_weights(g, len(S[i]), len(S[j])) if method == "wdtw" else _unit_weights(len(S[i]), len(S[j]))
            out[i, j] = out[j, i] = _distance(S[i], S[j], w)
    return out


def nn1_classify(train: Sequence, train_labels: Sequence, test, method: str = "dtw", g: float = 0.05):
    """Label of the nearest training series (lowest index on ties).

    ``test`` may be a single sequence or a list of them; the return type
    follows.
    """
    if len(train) == 0:
        raise InvalidArgumentError("training set is empty")
    if len(train) != len(train_labels):
        raise InvalidArgumentError("one label per training series is required")
    try:
        single = np.asarray(test, dtype=np.float64).ndim == 1
    except ValueError:  # ragged list of queries
        single = False
    queries = [test] if single else list(test)
    D = cross_distances(queries, train, method, g)
    labels = [train_labels[int(np.argmin(row))] for row in D]
    return labels[0] if single else labels


def similarity_matrix(distances, sigma: float = 5.0) -> np.ndarray:
    """Gaussian-style affinity ``exp(-d / sigma**2)``."""
    if sigma == 0:
        raise InvalidArgumentError("sigma must be non-zero")
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidArgumentError("distance matrix must be square")
    S = np.exp(-d / sigma**2)
    return 0.5 * (S + S.T)


def spectral_cluster(S, k: int, seed: int = 0, n_init: int = 10) -> np.ndarray:
    """Normalised-Laplacian spectral embedding followed by k-means.

    Uses the ``k`` leading eigenvectors of ``D^-1/2 S D^-1/2`` (equivalently
    the smallest of the normalised Laplacian), row-normalises them and runs
    k-means with ``n_init`` seeded restarts.
    """
    S = np.asarray(S, dtype=np.float64)
    m = S.shape[0]
    if k < 2:
        raise InvalidArgumentError(f"need k >= 2 clusters, got {k}")
    if k > m:
        raise InvalidArgumentError(f"k = {k} exceeds the sample count {m}")
    deg = S.sum(axis=1)
    inv = 1.0 / np.sqrt(np.maximum(deg, 1e-300))
    M = inv[:, None] * S * inv[None, :]
    _, vecs = np.linalg.eigh(0.5 * (M + M.T))
    U = vecs[:, -k:]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = U / np.where(norms > 0, norms, 1.0)
    km = KMeans(n_clusters=k, n_init=n_init, random_state=seed)
    return km.fit_predict(U)


def clustering_accuracy(truth: Sequence, assignment: Sequence) -> float:
    """Fraction of samples correctly grouped under the best cluster-to-class matching."""
    truth = np.asarray(truth)
    assignment = np.asarray(assignment)
    if truth.shape != assignment.shape:
        raise InvalidArgumentError("truth and assignment lengths differ")
    if truth.size == 0:
        raise InvalidArgumentError("no samples to score")
    classes, t = np.unique(truth, return_inverse=True)
    clusters, a = np.unique(assignment, return_inverse=True)
    C = np.zeros((len(clusters), len(classes)))
    np.add.at(C, (a, t), 1)
    rows, cols = linear_sum_assignment(-C)
    return float(C[rows, cols].sum() / truth.size)
