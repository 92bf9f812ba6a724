"""Block-coordinate-descent trainer: Gauss-Newton/QP coefficient steps and atom updates.

Samples are handled internally as ``(p, n)`` float arrays; the public entry
points also accept :class:`~gtwidl.core.TimeSeries` objects.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import qp
from .core import (
    Dictionary,
    FitReport,
    SparseCode,
    TimeSeries,
    WarpMatrix,
    WarpModel,
    snap_path,
)
from .exceptions import (
    ConfigurationError,
    InvalidArgumentError,
    NumericalFailureError,
    QPInfeasibleError,
)
from .warping import DEFAULT_BASIS, build_constraints, interp_slope, invert_warp, make_basis, straight_beta

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one dictionary fit.

    Attributes
    ----------
    lam : float
        Weight of the l1 penalty on the codes.
    n_atoms : int
        Number of atoms K.
    gamma : float
        Boundary slack; path endpoints may float within ``gamma * n_atom``.
    basis : tuple of str
        Warping basis families, see :mod:`gtwidl.warping`.
    eps_alpha, eps_beta : float
        Coefficient-loop step tolerances.
    eps_d : float
        Squared atom-movement tolerance of the dictionary passes.
    t1, t2 : int
        Outer and coefficient iteration caps.
    tol : float
        Relative objective change that ends the outer loop.
    atom_length : int or None
        Atom length; ``None`` uses the rounded mean training length.
    fixed_warp : bool
        Keep every path on its straight-line start (no-warping ablation).
    """

    lam: float = 1e-4
    n_atoms: int = 5
    gamma: float = 0.2
    basis: tuple = DEFAULT_BASIS
    eps_alpha: float = 1e-3
    eps_beta: float = 1e-3
    eps_d: float = 1e-2
    t1: int = 50
    t2: int = 20
    tol: float = 1e-4
    seed: int = 0
    atom_length: Optional[int] = None
    max_halvings: int = 10
    dict_passes: int = 10
    n_jobs: int = 1
    fixed_warp: bool = False

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be non-negative, got {self.lam}")
        if self.n_atoms < 1:
            raise ConfigurationError(f"need at least one atom, got {self.n_atoms}")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 5 <= self.t1 <= 50:
            raise ConfigurationError(f"t1 must lie in [5, 50], got {self.t1}")
        if not 5 <= self.t2 <= 20:
            raise ConfigurationError(f"t2 must lie in [5, 20], got {self.t2}")
        if min(self.eps_alpha, self.eps_beta, self.eps_d) <= 0 or self.tol < 0:
            raise ConfigurationError("tolerances must be positive")
        if self.atom_length is not None and self.atom_length < 2:
            raise ConfigurationError(f"atom length must be at least 2, got {self.atom_length}")
        if self.n_jobs == 0:
            raise ConfigurationError("n_jobs must be non-zero")
        try:
            straight_beta(self.basis)  # fails early on a basis without constant/linear columns
        except InvalidArgumentError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["basis"] = list(self.basis)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class CoefficientResult:
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int
    converged: bool
    objective: float


@dataclass
class FitResult:
    dictionary: Dictionary
    codes: List[SparseCode]
    warps: List[WarpModel]
    report: FitReport
    config: TrainConfig
    atom_length: int = field(init=False)

    def __post_init__(self):
        self.atom_length = self.dictionary.atom_length


# ---------------------------------------------------------------------------
# helpers


def as_array(sample) -> np.ndarray:
    if isinstance(sample, TimeSeries):
        return np.asarray(sample.channels)
    arr = np.asarray(sample, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


def _check_batch(samples) -> List[np.ndarray]:
    X = [as_array(s) for s in samples]
    if not X:
        raise InvalidArgumentError("no training samples")
    p = X[0].shape[0]
    for i, x in enumerate(X):
        if x.ndim != 2 or x.shape[0] != p:
            raise InvalidArgumentError(f"sample {i}: channel mismatch (p), expected {p}")
        if x.shape[1] < 2:
            raise InvalidArgumentError(f"sample {i}: needs at least 2 frames")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError(f"sample {i}: contains non-finite values")
    return X


def default_atom_length(samples) -> int:
    return int(max(2, round(float(np.mean([as_array(s).shape[1] for s in samples])))))


def _locate(path, n_atom):
    # fast WarpMatrix.from_path without validation; callers guarantee feasibility
    s = snap_path(np.clip(path, 1.0, float(n_atom)))
    lo = np.minimum(np.floor(s).astype(np.int64), n_atom - 1)
    return lo - 1, s - lo


def _warp_rows(rows, lo, frac):
    return rows[..., lo] * (1.0 - frac) + rows[..., lo + 1] * frac


def _sample_objective(x, atoms, alpha, path, lam):
    lo, frac = _locate(path, atoms.shape[2])
    Z = _warp_rows(np.einsum("k,jkn->jn", alpha, atoms), lo, frac)
    return float(np.sum((x - Z) ** 2)) / x.shape[1] + lam * float(alpha.sum())


class _BasisCache:
    """Basis matrices and constraint systems keyed by sample length."""

    def __init__(self, n_atom, basis, gamma):
        self.n_atom, self.basis, self.gamma = n_atom, tuple(basis), gamma
        self._store = {}

    def __call__(self, n):
        if n not in self._store:
            Q = make_basis(n, self.n_atom, self.basis)
            self._store[n] = (Q, build_constraints(Q, self.n_atom, self.gamma))
        return self._store[n]


# ---------------------------------------------------------------------------
# initialisation


def init_codes(m: int, K: int, seed=0) -> List[SparseCode]:
    """Uniform random codes on [0, 1] rescaled to sum to one."""
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.0, 1.0, size=(m, K))
    raw[raw.sum(axis=1) == 0] = 1.0
    raw /= raw.sum(axis=1, keepdims=True)
    return [SparseCode(a) for a in raw]


def init_warps(samples, atom_length: int, basis=DEFAULT_BASIS, gamma: float = 0.2) -> List[WarpModel]:
    """Straight-line warps from frame 1 to ``atom_length`` for every sample."""
    try:
        beta = straight_beta(basis)
    except InvalidArgumentError as exc:
        raise ConfigurationError(str(exc)) from None
    cache = _BasisCache(atom_length, basis, gamma)
    return [WarpModel(cache(as_array(s).shape[1])[0], beta, gamma) for s in samples]


def resample(x, length: int) -> np.ndarray:
    """Linear resampling of every channel onto ``length`` equally spaced frames."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    if n == length:
        return x.copy()
    grid = np.linspace(0.0, n - 1.0, length)
    out = np.vstack([np.interp(grid, np.arange(n), row) for row in x])
    out[:, 0], out[:, -1] = x[:, 0], x[:, -1]
    return out


def init_dictionary(samples, K: int, atom_length: int) -> Dictionary:
    """Leading right singular vectors of the stretched samples, per channel."""
    X = _check_batch(samples)
    if len(X) < K:
        raise InvalidArgumentError(f"need at least K = {K} samples, got {len(X)}")
    stretched = np.stack([resample(x, atom_length) for x in X])  # (m, p, n_atom)
    p = stretched.shape[1]
    atoms = np.empty((p, K, atom_length))
    for j in range(p):
        _, _, Vt = np.linalg.svd(stretched[:, j, :], full_matrices=False)
        V = Vt[:K]
        if V.shape[0] < K:  # fewer frames than atoms; pad with unit vectors
            extra = np.eye(atom_length)[: K - V.shape[0]]
            V = np.vstack([V, extra])
        # codes are non-negative, so orient atoms along the bulk of the data;
        # the largest-magnitude entry breaks exact ties
        proj = stretched[:, j, :] @ V.T
        signs = np.sign(proj.sum(axis=0))
        pivot = np.argmax(np.abs(V), axis=1)
        tie = signs == 0
        signs[tie] = np.sign(V[np.arange(K), pivot])[tie]
        atoms[j] = V * signs[:, None]
    return Dictionary.from_unnormalized(atoms)


# ---------------------------------------------------------------------------
# coefficient step


def jacobians(x, atoms, alpha, beta, Q):
    """Residual and Gauss-Newton Jacobians of one sample.

    Returns
    -------
    v : (p, n) residual ``x - Z``
    G_alpha : (p, n, K)
    G_beta : (p, n, k)
    """
    n_atom = atoms.shape[2]
    path = Q @ beta
    lo, frac = _locate(path, n_atom)
    comb = np.einsum("k,jkn->jn", alpha, atoms)
    v = x - _warp_rows(comb, lo, frac)
    G_alpha = _warp_rows(atoms, lo, frac).transpose(0, 2, 1)
    slope = interp_slope(comb, path)
    G_beta = slope[:, :, None] * Q[None, :, :]
    return v, G_alpha, G_beta


def update_coefficients(sample, dictionary, code, warp: WarpModel, config: TrainConfig,
                        constraints=None) -> CoefficientResult:
    """Gauss-Newton / QP iterations on one sample's ``(alpha, beta)``.

    Every accepted step strictly lowers the per-sample objective; a step
    is halved up to ``config.max_halvings`` times before the loop gives up
    and reports convergence.
    """
    x = as_array(sample)
    atoms = dictionary.atoms if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    alpha = np.array(code.alpha if isinstance(code, SparseCode) else code, dtype=np.float64)
    beta = np.array(warp.beta, dtype=np.float64)
    Q = warp.basis
    n = x.shape[1]
    K, k = alpha.shape[0], beta.shape[0]
    if x.shape[0] != atoms.shape[0]:
        raise InvalidArgumentError(f"channel mismatch (p): sample {x.shape[0]}, dictionary {atoms.shape[0]}")
    if K != atoms.shape[1]:
        raise InvalidArgumentError(f"atom-count mismatch (K): code {K}, dictionary {atoms.shape[1]}")
    if Q.shape[0] != n:
        raise InvalidArgumentError(f"length mismatch (n): sample {n}, basis {Q.shape[0]}")
    cons = constraints or build_constraints(Q, atoms.shape[2], warp.gamma)
    lam = config.lam

    n_free = 0 if config.fixed_warp else k
    A = np.zeros((K + (cons.L.shape[0] if n_free else 0), K + n_free))
    A[:K, :K] = -np.eye(K)
    if n_free:
        A[K:, K:] = cons.L

    obj = _sample_objective(x, atoms, alpha, Q @ beta, lam)
    active = None
    converged = False
    it = 0
    for it in range(1, config.t2 + 1):
        v, Ga, Gb = jacobians(x, atoms, alpha, beta, Q)
        G = np.concatenate([Ga, Gb], axis=2) if n_free else Ga
        if not np.all(np.isfinite(G)):
            bad = int(np.argwhere(~np.isfinite(G))[0][1])
            raise NumericalFailureError(f"non-finite Jacobian at frame {bad + 1}")
        H = np.einsum("jns,jnt->st", G, G) / n
        f = -np.einsum("jns,jn->s", G, v) / n
        f[:K] += 0.5 * lam
        rhs = np.concatenate([alpha, cons.b - cons.L @ beta]) if n_free else alpha.copy()
        rhs = np.maximum(rhs, 0.0)  # current iterate is feasible; absorb round-off
        try:
            res = qp.solve(qp.QpProblem(0.5 * (H + H.T), f, A, rhs), x0=np.zeros(K + n_free), working_set=active)
        except QPInfeasibleError as exc:
            raise QPInfeasibleError(f"coefficient subproblem infeasible: {exc}") from None
        active = res.active
        da, db = res.x[:K], (res.x[K:] if n_free else np.zeros(k))
        t = 1.0
        accepted = False
        for _ in range(config.max_halvings + 1):
            a_new = np.maximum(alpha + t * da, 0.0)
            b_new = np.maximum(beta + t * db, 0.0)  # QP round-off can dip below zero
            o = _sample_objective(x, atoms, a_new, Q @ b_new, lam)
            if o < obj:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True
            break
        alpha, beta, obj = a_new, b_new, o
        if np.max(np.abs(t * da), initial=0.0) <= config.eps_alpha and np.max(np.abs(t * db)) <= config.eps_beta:
            converged = True
            break
    return CoefficientResult(alpha, beta, it, converged, obj)


# ---------------------------------------------------------------------------
# dictionary step


def _total_objective(X, atoms, alphas, paths, lam):
    return sum(_sample_objective(x, atoms, a, p, lam) for x, a, p in zip(X, alphas, paths))


def update_dictionary(samples, dictionary, codes, warps, config: Optional[TrainConfig] = None,
                      lam: Optional[float] = None):
    """Sequential atom refresh from inverse-warped residuals.

    Each atom becomes the code-weighted mean of the inverse-warped samples
    minus the other atoms' contributions, is rescaled to unit norm (its
    codes absorb the scale) and is kept only when the full objective does
    not increase.  Passes repeat until every accepted atom moves by at most
    ``eps_d`` in squared norm, or ``dict_passes`` passes.

    Returns
    -------
    dictionary : Dictionary
    codes : list of SparseCode
    passes : int
    """
    config = config or TrainConfig()
    lam = config.lam if lam is None else lam
    X = _check_batch(samples)
    atoms = np.array(dictionary.atoms)
    alphas = np.array([c.alpha if isinstance(c, SparseCode) else c for c in codes], dtype=np.float64)
    paths = [w.path for w in warps]
    p, K, n_atom = atoms.shape
    U = np.stack([invert_warp(x, path, n_atom) for x, path in zip(X, paths)])  # (m, p, n_atom)
    current = _total_objective(X, atoms, alphas, paths, lam)
    passes = 0
    for passes in range(1, config.dict_passes + 1):
        moved = 0.0
        for k in range(K):
            w = alphas[:, k]
            denom = float(w @ w)
            if denom <= 0:
                logger.warning("atom %d has zero usage; left unchanged", k)
                continue
            others = np.einsum("ik,jkn->ijn", alphas, atoms) - w[:, None, None] * atoms[None, :, k, :]
            d_raw = np.einsum("i,ijn->jn", w, U - others) / denom
            norms = np.linalg.norm(d_raw, axis=1)
            if np.any(norms <= 1e-12):
                continue
            trial_atoms = atoms.copy()
            trial_atoms[:, k] = d_raw / norms[:, None]
            trial_alphas = alphas.copy()
            trial_alphas[:, k] *= float(np.sqrt(np.mean(norms**2)))
            value = _total_objective(X, trial_atoms, trial_alphas, paths, lam)
            if value <= current:
                change = float(np.max(np.sum((trial_atoms[:, k] - atoms[:, k]) ** 2, axis=1)))
                moved = max(moved, change)
                atoms, alphas, current = trial_atoms, trial_alphas, value
        if moved <= config.eps_d:
            break
    return Dictionary.from_unnormalized(atoms), [SparseCode(a) for a in alphas], passes


# ---------------------------------------------------------------------------
# full fit


def eval_metrics(sample, dictionary, code, warp, reference: Optional[WarpMatrix] = None):
    """Length-normalised reconstruction MSE and optional alignment error.

    The alignment error is the squared Frobenius distance between the
    estimated and reference warp matrices divided by the sample length.
    """
    x = as_array(sample)
    alpha = code.alpha if isinstance(code, SparseCode) else np.asarray(code, dtype=np.float64)
    Z = warp.matrix(dictionary.atom_length).apply(dictionary.combine(alpha))
    if Z.shape != x.shape:
        raise InvalidArgumentError(f"reconstruction shape {Z.shape} differs from sample {x.shape}")
    mse = float(np.sum((x - Z) ** 2)) / x.shape[1]
    if reference is None:
        return mse, None
    W = warp.matrix(dictionary.atom_length).toarray()
    R = reference.toarray() if isinstance(reference, WarpMatrix) else np.asarray(reference)
    if R.shape != W.shape:
        raise InvalidArgumentError(f"warp matrix shapes differ: {W.shape} vs {R.shape}")
    return mse, float(np.sum((W - R) ** 2)) / x.shape[1]


def _coef_task(x, atoms, alpha, beta, Q, cons, gamma, config):
    return update_coefficients(x, atoms, alpha, WarpModel(Q, beta, gamma), config, constraints=cons)


def fit(samples, config: Optional[TrainConfig] = None, dictionary: Optional[Dictionary] = None,
        reference_paths: Optional[Sequence] = None, warps: Optional[Sequence[WarpModel]] = None) -> FitResult:
    """Learn a warping-invariant dictionary by block coordinate descent.

    Parameters
    ----------
    samples : sequence of TimeSeries or arrays
    config : TrainConfig
    dictionary : Dictionary, optional
        Starting atoms; by default the stretched-SVD initialisation.
    reference_paths : sequence of arrays, optional
        Ground-truth paths; when given the report tracks alignment error.
    warps : sequence of WarpModel, optional
        Starting warps (straight lines by default).  Their bases must be
        the ones ``config.basis`` produces; with ``config.fixed_warp`` they
        stay put, which fits a dictionary under known alignments.
    """
    config = config or TrainConfig()
    X = _check_batch(samples)
    m = len(X)
    n_atom = config.atom_length or default_atom_length(X)
    K = config.n_atoms
    if dictionary is None:
        dictionary = init_dictionary(X, K, n_atom)
    elif dictionary.n_atoms != K or dictionary.atom_length != n_atom:
        raise ConfigurationError("starting dictionary does not match n_atoms/atom_length")
    atoms = np.array(dictionary.atoms)
    cache = _BasisCache(n_atom, config.basis, config.gamma)
    Qs = [cache(x.shape[1]) for x in X]
    beta0 = straight_beta(config.basis)
    alphas = np.array([c.alpha for c in init_codes(m, K, config.seed)])
    betas = np.tile(beta0, (m, 1))
    if warps is not None:
        if len(warps) != m:
            raise InvalidArgumentError(f"got {len(warps)} warps for {m} samples")
        for i, (w, (Q, _)) in enumerate(zip(warps, Qs)):
            if w.basis.shape != Q.shape or not np.allclose(w.basis, Q, rtol=0, atol=1e-12):
                raise ConfigurationError(f"warp {i} was not built from config.basis")
        betas = np.array([w.beta for w in warps], dtype=np.float64)
        if np.any(betas < 0):
            raise InvalidArgumentError("starting warps need non-negative beta")

    report = FitReport()
    refs = None
    if reference_paths is not None:
        refs = [WarpMatrix.from_path(r, n_atom) for r in reference_paths]

    def record(iters, conv):
        paths = [Q @ b for (Q, _), b in zip(Qs, betas)]
        per = [_sample_objective(x, atoms, a, path, 0.0) for x, a, path in zip(X, alphas, paths)]
        report.mse.append(float(np.mean(per)))
        report.objective.append(float(sum(per) + config.lam * alphas.sum()))
        if refs is not None:
            errs = [float(np.sum((WarpMatrix.from_path(path, n_atom).toarray() - R.toarray()) ** 2)) / len(path)
                    for path, R in zip(paths, refs)]
            report.alignment_error.append(float(np.mean(errs)))
        report.inner_iterations.append(iters)
        report.inner_converged.append(conv)

    record([], [])
    parallel = Parallel(n_jobs=config.n_jobs, prefer="threads") if config.n_jobs != 1 else None
    for outer in range(1, config.t1 + 1):
        jobs = (
            (x, atoms, alphas[i], betas[i], Qs[i][0], Qs[i][1], config.gamma, config)
            for i, x in enumerate(X)
        )
        if parallel is None:
            results = [_coef_task(*job) for job in jobs]
        else:
            results = parallel(delayed(_coef_task)(*job) for job in jobs)
        alphas = np.array([r.alpha for r in results])
        betas = np.array([r.beta for r in results])
        warps = [WarpModel(Q, b, config.gamma) for (Q, _), b in zip(Qs, betas)]
        new_dict, new_codes, _ = update_dictionary(X, Dictionary(atoms), alphas, warps, config)
        atoms = np.array(new_dict.atoms)
        alphas = np.array([c.alpha for c in new_codes])
        record([r.iterations for r in results], [r.converged for r in results])
        prev, cur = report.objective[-2], report.objective[-1]
        if abs(prev - cur) <= config.tol * max(abs(prev), 1e-300):
            report.converged = True
            break

    warps = [WarpModel(Q, b, config.gamma) for (Q, _), b in zip(Qs, betas)]
    return FitResult(Dictionary(atoms), [SparseCode(a) for a in alphas], warps, report, config)


def encode(sample, dictionary: Dictionary, config: TrainConfig, seed=0) -> CoefficientResult:
    """Code one sample against a fixed dictionary from a fresh initialisation."""
    x = as_array(sample)
    if x.shape[0] != dictionary.n_channels:
        raise InvalidArgumentError(
            f"channel mismatch (p): sample has {x.shape[0]}, dictionary has {dictionary.n_channels}"
        )
    cache = _BasisCache(dictionary.atom_length, config.basis, config.gamma)
    Q, cons = cache(x.shape[1])
    alpha = init_codes(1, dictionary.n_atoms, seed)[0].alpha
    warp = WarpModel(Q, straight_beta(config.basis), config.gamma)
    return update_coefficients(x, dictionary, alpha, warp, config, constraints=cons)


def with_atoms(config: TrainConfig, K: int) -> TrainConfig:
    return replace(config, n_atoms=int(K))
