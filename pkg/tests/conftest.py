import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gtwidl.core import Dictionary, WarpMatrix
from gtwidl.warping import DEFAULT_BASIS, build_constraints, make_basis

DATA_DIR = Path(os.environ.get("GTWIDL_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ucr_path(name, split="TRAIN"):
    return DATA_DIR / "ucr" / name / f"{name}_{split}.tsv"


def mv_path(name, split="TRAIN"):
    return DATA_DIR / "multivariate" / f"{name}_{split}.jsonl"


def bump(n, centre=0.5, width=0.12):
    t = np.linspace(0.0, 1.0, n)
    return np.exp(-(((t - centre) / width) ** 2))


def random_feasible_beta(rng, Q, n_atom, gamma=0.2, spread=0.4):
    """Non-negative weights whose path starts and ends inside the boundary bands.

    The start is drawn from the lower band, the end from the upper band and
    the non-constant columns get random non-negative shares (at most
    ``spread`` each for the non-linear columns) scaled to join them.
    """
    k = Q.shape[1]
    start = rng.uniform(1.0, max(1.0, gamma * n_atom))
    stop = rng.uniform(max(start, (1.0 - gamma) * n_atom), n_atom)
    shares = np.zeros(k)
    shares[2:] = rng.uniform(0.0, spread, k - 2)
    shares[1] = max(0.0, 1.0 - shares[2:].sum())
    if shares[1:].sum() == 0:
        shares[1] = 1.0
    beta = np.zeros(k)
    beta[0] = start
    beta[1:] = shares[1:] / shares[1:].sum() * (stop - start) / (n_atom - 1)
    assert build_constraints(Q, n_atom, gamma).satisfied(beta)
    return beta


def synthetic_warped(rng, atom, m=30, sigma=0.01, lengths=(50, 71)):
    """Noisy copies of one atom under random feasible warps; returns (samples, paths)."""
    n_atom = atom.shape[0]
    X, paths = [], []
    for _ in range(m):
        n = int(rng.integers(*lengths))
        Q = make_basis(n, n_atom, DEFAULT_BASIS)
        path = Q @ random_feasible_beta(rng, Q, n_atom)
        X.append(WarpMatrix.from_path(path, n_atom).apply(atom) * rng.uniform(0.5, 1.5)
                 + sigma * rng.standard_normal(n))
        paths.append(path)
    return X, paths


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_atom_dict():
    t = np.linspace(0, 1, 20)
    return Dictionary.from_unnormalized(np.stack([bump(20, 0.3), np.sin(np.pi * t)])[None])


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
