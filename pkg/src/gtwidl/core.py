"""Domain types and the reconstruction / objective evaluations built on them.

Conventions used throughout the package:

* a series is stored channel-major as a ``(p, n)`` float64 array;
* a dictionary is a ``(p, K, n_atom)`` array, ``atoms[j, k]`` being atom ``k``
  of channel ``j``;
* warping paths are expressed in 1-based dictionary frame coordinates, so a
  valid path takes values in ``[1, n_atom]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvalidArgumentError

# Path positions closer than this to an integer are treated as integers.
INTEGER_SNAP = 1e-9
UNIT_NORM_TOL = 1e-8


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """One (optionally labelled) multichannel sequence.

    ``channels`` may be given as a 1-D sequence for a single channel; it is
    stored as a read-only ``(p, n)`` float64 array.
    """

    id: str
    channels: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        ch = np.array(self.channels, dtype=np.float64)
        if ch.ndim == 1:
            ch = ch[None, :]
        if ch.ndim != 2:
            raise InvalidArgumentError(f"series {self.id!r}: channels must be 1-D or 2-D, got {ch.ndim}-D")
        if ch.shape[0] < 1:
            raise InvalidArgumentError(f"series {self.id!r}: needs at least one channel")
        if ch.shape[1] < 2:
            raise InvalidArgumentError(f"series {self.id!r}: needs at least 2 frames, got {ch.shape[1]}")
        if not np.all(np.isfinite(ch)):
            raise InvalidArgumentError(f"series {self.id!r}: contains non-finite values")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        if self.label is not None:
            object.__setattr__(self, "label", str(self.label))

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class Dictionary:
    """Per-channel atom matrices with unit-norm rows, shape ``(p, K, n_atom)``."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim == 2:
            atoms = atoms[None]
        if atoms.ndim != 3:
            raise InvalidArgumentError("atoms must have shape (p, K, n_atom)")
        p, K, n_atom = atoms.shape
        if p < 1 or K < 1 or n_atom < 2:
            raise InvalidArgumentError(f"invalid dictionary shape {atoms.shape}")
        norms = np.linalg.norm(atoms, axis=2)
        if not np.all(np.abs(norms - 1.0) <= UNIT_NORM_TOL):
            raise InvalidArgumentError("every atom must have unit Euclidean norm")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_unnormalized(cls, atoms) -> "Dictionary":
        atoms = np.array(atoms, dtype=np.float64)
        if atoms.ndim == 2:
            atoms = atoms[None]
        norms = np.linalg.norm(atoms, axis=2, keepdims=True)
        if np.any(norms == 0):
            raise InvalidArgumentError("cannot normalise an all-zero atom")
        return cls(atoms / norms)

    @property
    def n_channels(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def atom_length(self) -> int:
        return self.atoms.shape[2]

    def combine(self, alpha) -> np.ndarray:
        """Return ``alpha^T D_j`` for every channel, shape ``(p, n_atom)``."""
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (self.n_atoms,):
            raise InvalidArgumentError(f"K mismatch: code has {alpha.shape} entries, dictionary has {self.n_atoms} atoms")
        return np.einsum("k,jkn->jn", alpha, self.atoms)


@dataclass(frozen=True)
class SparseCode:
    """Non-negative combination weights of one sample over the atoms."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64).reshape(-1)
        if np.any(alpha < 0):
            raise InvalidArgumentError("sparse code entries must be non-negative")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class WarpMatrix:
    """Column-stochastic interpolation matrix realising a continuous path.

    Column ``t`` carries weight ``1 - frac[t]`` at row ``lower[t]`` and
    ``frac[t]`` at row ``lower[t] + 1`` (0-based rows).
    """

    lower: np.ndarray
    frac: np.ndarray
    n_rows: int

    @classmethod
    def from_path(cls, path, n_rows: int) -> "WarpMatrix":
        p = np.array(path, dtype=np.float64).reshape(-1)
        if n_rows < 2:
            raise InvalidArgumentError("atom length must be at least 2")
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("path contains non-finite positions")
        if p.min() < 1 - INTEGER_SNAP or p.max() > n_rows + INTEGER_SNAP:
            raise InvalidArgumentError(
                f"path leaves [1, {n_rows}]: range [{p.min():.6g}, {p.max():.6g}]"
            )
        if np.any(np.diff(p) < -INTEGER_SNAP):
            raise InvalidArgumentError("path must be non-decreasing")
        p = snap_path(np.clip(p, 1.0, float(n_rows)))
        lower = np.floor(p).astype(np.int64)
        frac = p - lower
        # integer positions put their whole mass on one row
        at_end = lower == n_rows
        lower[at_end] = n_rows - 1
        frac[at_end] = 1.0
        lower -= 1
        lower.setflags(write=False)
        frac.setflags(write=False)
        return cls(lower, frac, int(n_rows))

    @property
    def shape(self):
        return (self.n_rows, self.lower.shape[0])

    def apply(self, rows) -> np.ndarray:
        """Right-multiply ``rows`` (shape ``(..., n_rows)``) by this matrix."""
        rows = np.asarray(rows, dtype=np.float64)
        return rows[..., self.lower] * (1.0 - self.frac) + rows[..., self.lower + 1] * self.frac

    def toarray(self) -> np.ndarray:
        n = self.lower.shape[0]
        W = np.zeros((self.n_rows, n))
        cols = np.arange(n)
        W[self.lower, cols] += 1.0 - self.frac
        W[self.lower + 1, cols] += self.frac
        return W


@dataclass(frozen=True)
class WarpModel:
    """Monotone basis ``Q`` (n x k) and non-negative weights ``beta``."""

    basis: np.ndarray
    beta: np.ndarray
    gamma: float = 0.2

    def __post_init__(self):
        basis = _frozen(self.basis)
        beta = _frozen(np.reshape(self.beta, -1))
        if basis.ndim != 2 or basis.shape[1] != beta.shape[0]:
            raise InvalidArgumentError(f"basis {basis.shape} incompatible with beta {beta.shape}")
        if not 0 < self.gamma <= 1:
            raise InvalidArgumentError(f"gamma must lie in (0, 1], got {self.gamma}")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "beta", beta)

    @property
    def path(self) -> np.ndarray:
        if np.any(self.beta < 0):
            raise InvalidArgumentError("beta must be non-negative")
        return self.basis @ self.beta

    def matrix(self, atom_length: int) -> WarpMatrix:
        return WarpMatrix.from_path(self.path, atom_length)


@dataclass(frozen=True)
class ConstraintSystem:
    """Linear inequalities ``L beta <= b`` keeping a path monotone and in range."""

    L: np.ndarray
    b: np.ndarray

    def residual(self, beta) -> np.ndarray:
        return self.L @ np.asarray(beta, dtype=np.float64) - self.b

    def satisfied(self, beta, tol: float = 1e-8) -> bool:
        return bool(np.all(self.residual(beta) <= tol))


@dataclass
class FitReport:
    """Per-outer-iteration trace of a dictionary fit.

    Index 0 of every list holds the state right after initialisation.
    """

    objective: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    alignment_error: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_converged: list = field(default_factory=list)
    converged: bool = False

    @property
    def outer_iterations(self) -> int:
        return max(len(self.objective) - 1, 0)


def snap_path(p: np.ndarray) -> np.ndarray:
    rounded = np.round(p)
    return np.where(np.abs(p - rounded) <= INTEGER_SNAP, rounded, p)


def _alpha_of(code) -> np.ndarray:
    return code.alpha if isinstance(code, SparseCode) else np.asarray(code, dtype=np.float64)


def reconstruct(series: TimeSeries, dictionary: Dictionary, code, warp: WarpModel) -> np.ndarray:
    """Warped reconstruction ``alpha^T D_j W(Q beta)`` for every channel."""
    alpha = _alpha_of(code)
    channels = series.channels if isinstance(series, TimeSeries) else np.atleast_2d(series)
    p, n = channels.shape
    if p != dictionary.n_channels:
        raise InvalidArgumentError(f"channel mismatch (p): series has {p}, dictionary has {dictionary.n_channels}")
    if alpha.shape != (dictionary.n_atoms,):
        raise InvalidArgumentError(f"atom-count mismatch (K): code {alpha.shape[0]}, dictionary {dictionary.n_atoms}")
    if warp.basis.shape[0] != n:
        raise InvalidArgumentError(f"length mismatch (n): series has {n} frames, warp basis has {warp.basis.shape[0]}")
    return warp.matrix(dictionary.atom_length).apply(dictionary.combine(alpha))


def objective(
    series: Sequence[TimeSeries],
    dictionary: Dictionary,
    codes: Sequence,
    warps: Sequence[WarpModel],
    lam: float,
) -> float:
    """Sum over samples of length-normalised squared error plus ``lam * sum(alpha)``."""
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be non-negative, got {lam}")
    if not len(series) == len(codes) == len(warps):
        raise InvalidArgumentError("need exactly one code and one warp per series")
    total = 0.0
    for s, c, w in zip(series, codes, warps):
        resid = s.channels - reconstruct(s, dictionary, c, w)
        total += float(np.sum(resid**2)) / len(s) + lam * float(np.sum(_alpha_of(c)))
    return total
