"""Shared generators for the test suite.

Randomness is seeded per test; pairs in convex order are built by applying
mean-preserving spreads, which is exact by construction.
"""

from __future__ import annotations

import numpy as np
import pytest

from mot_stability import Coupling, CouplingRow, DiscreteMeasure, strassen_coupling


def random_measure(rng: np.random.Generator, n_max: int = 8, span: float = 3.0) -> DiscreteMeasure:
    n = int(rng.integers(1, n_max + 1))
    positions = np.sort(rng.uniform(-span, span, n))
    weights = rng.uniform(0.2, 1.0, n)
    return DiscreteMeasure(positions, weights)


def random_prob_measure(rng: np.random.Generator, n_max: int = 8, span: float = 3.0) -> DiscreteMeasure:
    m = random_measure(rng, n_max, span)
    return m.normalized()


def mean_preserving_spread(rng: np.random.Generator, m: DiscreteMeasure) -> DiscreteMeasure:
    """Split random atoms symmetrically; the output dominates `m` in convex order."""
    rows = []
    for x, w in zip(m.positions, m.weights):
        if rng.uniform() < 0.6:
            d = float(rng.uniform(0.05, 1.0))
            rows.append((x - d, w / 2.0))
            rows.append((x + d, w / 2.0))
        else:
            rows.append((float(x), float(w)))
    return DiscreteMeasure([r[0] for r in rows], [r[1] for r in rows])


def random_convex_pair(
    rng: np.random.Generator, n_max: int = 6, spreads: int = 2
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    mu = random_prob_measure(rng, n_max)
    nu = mu
    for _ in range(spreads):
        nu = mean_preserving_spread(rng, nu)
    return mu, nu


def random_coupling(rng: np.random.Generator, rows_max: int = 4, kernel_max: int = 4) -> Coupling:
    n = int(rng.integers(1, rows_max + 1))
    xs = np.sort(rng.uniform(-2.0, 2.0, n))
    weights = rng.uniform(0.2, 1.0, n)
    weights = weights / weights.sum()
    rows = []
    for x, w in zip(xs, weights):
        rows.append(CouplingRow(float(x), float(w), random_prob_measure(rng, kernel_max)))
    return Coupling(rows)


def random_martingale_coupling(rng: np.random.Generator, n_max: int = 5, spreads: int = 2) -> Coupling:
    mu, nu = random_convex_pair(rng, n_max, spreads)
    return strassen_coupling(mu, nu)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
