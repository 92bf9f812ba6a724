"""Monotone basis sets, continuous warping matrices and inverse warps.

A basis specification is a list of family strings::

    "constant"            column of ones (lets the path start above 1)
    "linear"              x
    "poly:b"              x**b, b > 0
    "exp:a[,b]"           exp(a*x + b), a > 0
    "log:a,b"             log(a*x + b), a > 0 and a*x + b > 0 on [0, 1]
    "tanh:a,b"            tanh(a*x + b), a > 0
    "ispline:i,n"         i-th quadratic I-spline on n uniform interior knots

where ``x = (t - 1) / (n - 1)`` for frames ``t = 1..n``.  Every non-constant
column is rescaled so it runs from 0 at the first frame to ``n_atom - 1`` at
the last, which makes ``beta = (1, 1, 0, ...)`` on a constant+linear basis the
straight diagonal path from 1 to ``n_atom``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline

from .core import (
    INTEGER_SNAP,
    ConstraintSystem,
    WarpMatrix,
    WarpModel,
    snap_path,
)
from .exceptions import DegenerateWarpError, InvalidArgumentError

DEFAULT_BASIS = ("constant", "linear", "poly:0.5", "poly:2", "tanh:6,-3")


def _parse_family(spec: str):
    name, _, params = spec.partition(":")
    name = name.strip().lower()
    try:
        values = [float(v) for v in params.split(",")] if params.strip() else []
    except ValueError:
        raise InvalidArgumentError(f"bad basis parameters in {spec!r}") from None
    return name, values


def _ispline(x: np.ndarray, index: int, n_knots: int) -> np.ndarray:
    degree = 2
    interior = np.linspace(0.0, 1.0, n_knots + 2)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    n_funcs = len(knots) - degree - 1
    if not 0 <= index < n_funcs:
        raise InvalidArgumentError(f"ispline index {index} outside [0, {n_funcs})")
    coef = np.zeros(n_funcs)
    coef[index] = 1.0
    integral = BSpline(knots, coef, degree, extrapolate=False).antiderivative()
    values = integral(x)
    return np.nan_to_num(values, nan=float(integral(1.0)))


def _family_values(spec: str, x: np.ndarray) -> np.ndarray | None:
    name, v = _parse_family(spec)
    if name == "constant":
        return None
    if name == "linear":
        return x.copy()
    if name in ("poly", "polynomial"):
        if len(v) != 1 or v[0] <= 0:
            raise InvalidArgumentError(f"{spec!r}: polynomial exponent must be positive")
        return x ** v[0]
    if name == "exp":
        a, b = (v + [0.0])[:2] if v else (None, None)
        if a is None or a <= 0:
            raise InvalidArgumentError(f"{spec!r}: exponential rate must be positive")
        return np.exp(a * x + b)
    if name == "log":
        if len(v) != 2:
            raise InvalidArgumentError(f"{spec!r}: log needs a,b")
        a, b = v
        arg = a * x + b
        if a <= 0 or np.any(arg <= 0):
            raise InvalidArgumentError(f"{spec!r}: log(ax+b) is not increasing and defined on the frame range")
        return np.log(arg)
    if name == "tanh":
        a, b = (v + [0.0])[:2] if v else (None, None)
        if a is None or a <= 0:
            raise InvalidArgumentError(f"{spec!r}: tanh slope must be positive")
        return np.tanh(a * x + b)
    if name == "ispline":
        if len(v) != 2:
            raise InvalidArgumentError(f"{spec!r}: ispline needs index,n_knots")
        return _ispline(x, int(v[0]), int(v[1]))
    raise InvalidArgumentError(f"unknown basis family {spec!r}")


def make_basis(n_frames: int, atom_length: int, spec: Sequence[str] = DEFAULT_BASIS) -> np.ndarray:
    """Sample the basis families at ``n_frames`` frames.

    Returns an ``(n_frames, len(spec))`` matrix whose non-constant columns are
    non-decreasing and rescaled to ``[0, atom_length - 1]``.
    """
    if n_frames < 2:
        raise InvalidArgumentError(f"need at least 2 frames, got {n_frames}")
    if atom_length < 2:
        raise InvalidArgumentError(f"atom length must be at least 2, got {atom_length}")
    if isinstance(spec, str):
        spec = [spec]
    if len(spec) == 0:
        raise InvalidArgumentError("basis specification is empty")
    x = np.arange(n_frames, dtype=np.float64) / (n_frames - 1)
    Q = np.empty((n_frames, len(spec)))
    for c, family in enumerate(spec):
        g = _family_values(family, x)
        if g is None:
            Q[:, c] = 1.0
            continue
        span = g[-1] - g[0]
        if not np.all(np.isfinite(g)) or span <= 0:
            raise InvalidArgumentError(f"basis family {family!r} is not increasing on the frame range")
        if np.any(np.diff(g) < -1e-12 * span):
            raise InvalidArgumentError(f"basis family {family!r} is not monotone on the frame range")
        col = (g - g[0]) / span * (atom_length - 1)
        col[0], col[-1] = 0.0, atom_length - 1.0
        Q[:, c] = np.maximum.accumulate(col)
    return Q


def straight_beta(basis_spec: Sequence[str]) -> np.ndarray:
    """Weights giving the diagonal path 1 -> n_atom on a normalised basis."""
    names = [_parse_family(s)[0] for s in basis_spec]
    if "constant" not in names:
        raise InvalidArgumentError("basis needs a constant column for the straight-line start")
    if "linear" in names:
        lin = names.index("linear")
    else:
        lin = next((i for i, s in enumerate(basis_spec) if _parse_family(s) == ("poly", [1.0])), None)
        if lin is None:
            raise InvalidArgumentError("basis needs a linear column for the straight-line start")
    beta = np.zeros(len(basis_spec))
    beta[names.index("constant")] = 1.0
    beta[lin] = 1.0
    return beta


def path_from_beta(warp: WarpModel) -> np.ndarray:
    """Path ``Q beta`` of a warp model; rejects negative weights."""
    beta = np.asarray(warp.beta)
    if np.any(beta < 0):
        raise InvalidArgumentError(f"beta must be non-negative, min entry {beta.min():.3g}")
    return warp.basis @ beta


def warp_matrix(path, atom_length: int) -> WarpMatrix:
    """Continuous warping matrix for a path in ``[1, atom_length]``."""
    return WarpMatrix.from_path(path, atom_length)


def interp_slope(rows: np.ndarray, path: np.ndarray) -> np.ndarray:
    """Slope of the piecewise-linear interpolant of ``rows`` at ``path``.

    ``rows`` has shape ``(..., n_atom)``.  At fractional positions the slope
    is that of the enclosing segment; at interior integers the left and right
    slopes are averaged; the end frames use one-sided differences.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n_atom = rows.shape[-1]
    s = snap_path(np.clip(np.asarray(path, dtype=np.float64), 1.0, float(n_atom)))
    lo = np.floor(s).astype(np.int64) - 1
    lo = np.clip(lo, 0, n_atom - 2)
    seg = rows[..., lo + 1] - rows[..., lo]
    is_int = s == np.round(s)
    interior = is_int & (s > 1) & (s < n_atom)
    if np.any(interior):
        k = s[interior].astype(np.int64) - 1
        seg[..., interior] = 0.5 * (rows[..., k + 1] - rows[..., k - 1])
    return seg


def invert_warp(x, path, atom_length: int) -> np.ndarray:
    """Map a sample into dictionary frame space along a monotone path.

    Frames covered by the path get the linear interpolation of ``x`` at their
    pre-image; plateaus of the path are collapsed to the mean of ``x`` over
    the plateau; uncovered leading/trailing frames repeat the nearest covered
    value.  ``x`` may be 1-D or ``(p, n)``; the output mirrors that.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    p = np.asarray(path, dtype=np.float64).reshape(-1)
    if p.shape[0] != x2.shape[1]:
        raise InvalidArgumentError(f"path has {p.shape[0]} frames, series has {x2.shape[1]}")
    if np.any(np.diff(p) < -INTEGER_SNAP):
        raise InvalidArgumentError("path must be non-decreasing")
    if p.min() < 1 - INTEGER_SNAP or p.max() > atom_length + INTEGER_SNAP:
        raise InvalidArgumentError(f"path leaves [1, {atom_length}]")
    p = snap_path(np.clip(np.maximum.accumulate(p), 1.0, float(atom_length)))
    if p[-1] - p[0] <= INTEGER_SNAP:
        raise DegenerateWarpError("constant warping path has no inverse")

    starts = np.flatnonzero(np.concatenate([[True], np.diff(p) > 1e-12]))
    counts = np.diff(np.append(starts, p.shape[0]))
    knots = p[starts]
    values = np.add.reduceat(x2, starts, axis=1) / counts

    first = int(np.ceil(knots[0] - INTEGER_SNAP))
    last = int(np.floor(knots[-1] + INTEGER_SNAP))
    if last < first:
        raise DegenerateWarpError("path covers no whole dictionary frame")
    frames = np.arange(first, last + 1, dtype=np.float64)
    out = np.empty((x2.shape[0], atom_length))
    for j in range(x2.shape[0]):
        out[j, first - 1 : last] = np.interp(frames, knots, values[j])
    out[:, : first - 1] = out[:, [first - 1]]
    out[:, last:] = out[:, [last - 1]]
    return out[0] if squeeze else out


def build_constraints(warp, atom_length: int, gamma: float) -> ConstraintSystem:
    """Inequalities ``L beta <= b`` for non-negativity and boundary bands.

    ``warp`` is a :class:`WarpModel` or a bare basis matrix.
    """
    if not 0 < gamma <= 1:
        raise InvalidArgumentError(f"gamma must lie in (0, 1], got {gamma}")
    Q = warp.basis if isinstance(warp, WarpModel) else np.asarray(warp, dtype=np.float64)
    k = Q.shape[1]
    first, last = Q[0], Q[-1]
    L = np.vstack([-np.eye(k), -first, first, last, -last])
    b = np.concatenate([
        np.zeros(k),
        [-1.0, atom_length * gamma, float(atom_length), -atom_length * (1.0 - gamma)],
    ])
    return ConstraintSystem(L, b)
