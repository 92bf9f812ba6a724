"""Small dense convex QP: minimise 0.5 x'Hx + f'x subject to Ax <= b.

Primal active-set method (Goldfarb-Idnani style bookkeeping is unnecessary at
these sizes: every equality-constrained subproblem is solved directly from its
KKT system).  Problems here have a handful of variables, so clarity wins over
factorisation updates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .exceptions import InvalidArgumentError, QPInfeasibleError, QPNonConvergenceError

FEAS_TOL = 1e-9
REG_SCALE = 1e-8


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=np.float64))
        f = np.asarray(self.f, dtype=np.float64).reshape(-1)
        s = f.shape[0]
        if H.shape != (s, s):
            raise InvalidArgumentError(f"H has shape {H.shape}, expected {(s, s)}")
        if not np.allclose(H, H.T, atol=1e-10, rtol=0):
            raise InvalidArgumentError("H must be symmetric")
        A = np.zeros((0, s)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.shape[1] != s or A.shape[0] != b.shape[0]:
            raise InvalidArgumentError(f"constraint shapes A{A.shape}, b{b.shape} do not match s={s}")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def size(self) -> int:
        return self.f.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QpResult:
    x: np.ndarray
    active: list
    multipliers: np.ndarray
    status: str
    iterations: int = 0


def regularized_hessian(H: np.ndarray) -> np.ndarray:
    s = H.shape[0]
    shift = REG_SCALE * max(np.trace(H) / s, 1e-12)
    return H + shift * np.eye(s)


def _phase_one(problem: QpProblem) -> np.ndarray:
    # any feasible point will do; HiGHS handles the tiny LP
    s = problem.size
    res = linprog(np.zeros(s), A_ub=problem.A, b_ub=problem.b, bounds=[(None, None)] * s, method="highs")
    if res.status != 0:
        raise QPInfeasibleError("constraint set is empty")
    return res.x


def _solve_eqp(H, g, Aw):
    """Step p and multipliers mu for min 0.5p'Hp + g'p s.t. Aw p = 0.

    Solves H p + Aw' mu = -g, Aw p = 0.
    """
    s = H.shape[0]
    m = Aw.shape[0]
    if m == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    K = np.zeros((s + m, s + m))
    K[:s, :s] = H
    K[:s, s:] = Aw.T
    K[s:, :s] = Aw
    rhs = np.concatenate([-g, np.zeros(m)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:s], sol[s:]


def solve(
    problem: QpProblem,
    x0: Optional[np.ndarray] = None,
    working_set: Optional[Sequence[int]] = None,
    max_iter: Optional[int] = None,
    regularize: bool = True,
) -> QpResult:
    """Solve a convex QP by the primal active-set method.

    Parameters
    ----------
    problem : QpProblem
    x0 : array, optional
        Feasible starting point.  Defaults to the origin when feasible,
        otherwise a phase-one LP point.
    working_set : sequence of int, optional
        Constraint indices to warm-start from; entries not active at ``x0``
        are dropped.
    max_iter : int, optional
        Iteration cap, default ``100 * s``.
    regularize : bool
        Add ``1e-8 * tr(H)/s`` to the diagonal so PSD Hessians become PD.

    Returns
    -------
    QpResult
        ``x``, the final working set as ``active``, the full multiplier
        vector (zero off the working set) and ``status == "optimal"``.
    """
    H = regularized_hessian(problem.H) if regularize else problem.H
    f, A, b = problem.f, problem.A, problem.b
    s, c = problem.size, A.shape[0]
    max_iter = 100 * s if max_iter is None else max_iter

    if x0 is None:
        x = np.zeros(s)
        if c and np.any(A @ x - b > FEAS_TOL):
            x = _phase_one(problem)
    else:
        x = np.array(x0, dtype=np.float64)
        if c and np.any(A @ x - b > 1e-7):
            raise QPInfeasibleError("starting point violates the constraints")

    slack = b - A @ x if c else np.zeros(0)
    active = [int(i) for i in (working_set or []) if 0 <= i < c and abs(slack[i]) <= 1e-8]
    active = _independent(A, active)

    for it in range(1, max_iter + 1):
        g = H @ x + f
        Aw = A[active] if active else np.zeros((0, s))
        p, mu = _solve_eqp(H, g, Aw)
        if np.linalg.norm(p) <= 1e-11 * (1.0 + np.linalg.norm(x)):
            if len(active) == 0 or mu.min() >= -1e-12:
                full = np.zeros(c)
                full[active] = np.maximum(mu, 0.0)
                return QpResult(x, sorted(active), full, "optimal", it)
            active.pop(int(np.argmin(mu)))
            continue
        step, blocking = 1.0, None
        if c:
            Ap = A @ p
            slack = b - A @ x
            for i in range(c):
                if i in active or Ap[i] <= 1e-14:
                    continue
                t = max(slack[i], 0.0) / Ap[i]
                if t < step:
                    step, blocking = t, i
        x = x + step * p
        if blocking is not None:
            active.append(blocking)
    raise QPNonConvergenceError(f"active-set loop exceeded {max_iter} iterations")


def _independent(A, idx):
    kept = []
    for i in idx:
        trial = kept + [i]
        if np.linalg.matrix_rank(A[trial]) == len(trial):
            kept = trial
    return kept


def kkt_residuals(problem: QpProblem, result: QpResult, regularize: bool = True):
    """Return (primal violation, stationarity, min multiplier, complementarity)."""
    H = regularized_hessian(problem.H) if regularize else problem.H
    x, mu = result.x, result.multipliers
    A, b = problem.A, problem.b
    primal = float(np.max(A @ x - b, initial=0.0))
    station = float(np.max(np.abs(H @ x + problem.f + A.T @ mu), initial=0.0))
    dual = float(np.min(mu, initial=0.0))
    comp = float(np.max(np.abs(mu * (A @ x - b)), initial=0.0))
    return primal, station, dual, comp
