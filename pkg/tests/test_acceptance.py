"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.  Every tolerance is pinned here; time budgets are asserted.
"""

import time

import numpy as np
import pytest
from scipy.optimize import linprog

from mot_stability import (
    ConvexOrderViolation,
    Coupling,
    DiscreteMeasure,
    adapted_wasserstein,
    adapted_wasserstein_embedded,
    decompose_coupling,
    in_convex_order,
    irreducible_components,
    martingale_diagnostics,
    measure_from_potential,
    min_cost_martingale,
    potential_of,
    strassen_coupling,
    tail_moment,
    transfer_coupling,
    wasserstein_1d,
)
from mot_stability.pipeline import approximate, quantile_coarsen
from mot_stability.potentials import convex_inf, convex_sup

from conftest import (
    mean_preserving_spread,
    random_convex_pair,
    random_coupling,
    random_measure,
    random_prob_measure,
)

FIXED_MU = DiscreteMeasure([-0.6, -0.3, 0.0, 0.3, 0.6], [0.25, 0.125, 0.25, 0.125, 0.25])
FIXED_NU = DiscreteMeasure(
    [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
    [0.25, 0.05, 0.05, 0.05, 0.2, 0.05, 0.05, 0.05, 0.25],
)


class Stopwatch:
    def __init__(self, budget: float, label: str):
        self.budget = budget
        self.label = label

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        status = "PASS" if exc_type is None and elapsed < self.budget else "FAIL"
        print(f"{status} {self.label} ({elapsed:.2f}s < {self.budget:.0f}s)")
        if exc_type is None:
            assert elapsed < self.budget, f"{self.label} exceeded its time budget"
        return False


def cdf_gap(a, b):
    probe = np.union1d(a.positions, b.positions)
    return max((abs(a.cdf(t) - b.cdf(t)) for t in probe), default=0.0)


def test_criterion_01_split_example_exactness():
    with Stopwatch(1.0, "criterion 1: two-point split example exact to 1e-9"):
        for k in (1, 2, 5, 10):
            p = Coupling.from_joint([(1.0 / k, 1.0, 1.0), (-1.0 / k, -1.0, 1.0)])
            q = Coupling.from_joint([(0.0, 1.0, 1.0), (0.0, -1.0, 1.0)])
            value = adapted_wasserstein(p, q, 1.0).distance
            assert abs(value - (2.0 / k + 2.0)) <= 1e-9


def _refine_jumps(rng, m):
    positions, weights = [], []
    gaps = np.diff(m.positions) if len(m) > 1 else np.array([1.0])
    spread = float(gaps.min()) / 3.0 if len(m) > 1 else 0.3
    for x, w in zip(m.positions, m.weights):
        k = int(rng.integers(1, 4))
        shares = rng.uniform(0.2, 1.0, k)
        shares = shares / shares.sum() * w
        offsets = np.sort(rng.uniform(-spread, spread, k))
        for dx, share in zip(offsets, shares):
            positions.append(float(x + dx))
            weights.append(float(share))
    return DiscreteMeasure(positions, weights)


def test_criterion_02_marginal_error_estimate():
    rng = np.random.default_rng(2024_02)
    with Stopwatch(30.0, "criterion 2: jump-nested transfer obeys the marginal bound"):
        for _ in range(200):
            p = random_coupling(rng, 4, 3)
            mu_new = _refine_jumps(rng, p.first_marginal())
            nu_new = random_prob_measure(rng, 5)
            out = transfer_coupling(p, mu_new, nu_new)
            for r in (1.0, 2.0):
                lhs = adapted_wasserstein(p, out, r).distance ** r
                rhs = (
                    wasserstein_1d(p.first_marginal(), mu_new, r) ** r
                    + wasserstein_1d(p.second_marginal(), nu_new, r) ** r
                )
                assert lhs <= rhs + 1e-9


def test_criterion_03_dilation_scaling_identity():
    rng = np.random.default_rng(2024_03)
    with Stopwatch(5.0, "criterion 3: dilation scaling identity and peacock order"):
        for _ in range(100):
            m = random_prob_measure(rng)
            alpha, beta = sorted(rng.uniform(0.0, 3.0, 2))
            r = float(rng.choice([1.0, 2.0]))
            m1 = m.barycenter()
            lhs = wasserstein_1d(m.scale_about_barycenter(alpha), m.scale_about_barycenter(beta), r)
            rhs = (beta - alpha) * m.moment(r, m1) ** (1.0 / r)
            assert abs(lhs - rhs) <= 1e-10 * (1.0 + rhs)
            assert in_convex_order(m.scale_about_barycenter(alpha), m.scale_about_barycenter(beta))


def _knapsack(m, eps, r, x0):
    v = np.abs(m.positions - x0) ** r
    res = linprog(
        -v,
        A_ub=np.ones((1, len(m))),
        b_ub=[eps],
        bounds=[(0.0, float(w)) for w in m.weights],
        method="highs",
    )
    assert res.success
    return -res.fun


def test_criterion_04_tail_moment_oracle():
    rng = np.random.default_rng(2024_04)
    with Stopwatch(10.0, "criterion 4: tail moment equals the knapsack LP, monotone"):
        for _ in range(100):
            m = random_measure(rng, 8)
            x0 = float(rng.uniform(-1, 1))
            for r in (1.0, 2.0):
                for eps in np.linspace(0.0, 1.1 * m.total_mass, 10):
                    assert abs(tail_moment(m, float(eps), r, x0) - _knapsack(m, eps, r, x0)) <= 1e-10
        for _ in range(30):
            m = random_measure(rng, 6)
            bigger = m + random_measure(rng, 3)
            for eps in np.linspace(0.05, 1.0, 6):
                assert tail_moment(m, float(eps)) <= tail_moment(bigger, float(eps)) + 1e-12
        for _ in range(30):
            mu = random_prob_measure(rng, 6)
            nu = mean_preserving_spread(rng, mu)
            x0 = float(rng.uniform(-0.5, 0.5))
            for eps in np.linspace(0.05, 1.0, 8):
                assert tail_moment(mu, float(eps), 1.0, x0) <= tail_moment(nu, float(eps), 1.0, x0) + 1e-12


def test_criterion_05_strassen_soundness_completeness():
    rng = np.random.default_rng(2024_05)
    with Stopwatch(20.0, "criterion 5: Strassen construction sound and complete"):
        for _ in range(100):
            mu, nu = random_convex_pair(rng)
            c = strassen_coupling(mu, nu)
            scale = 1.0 + max(abs(float(x)) for x in mu.positions)
            assert martingale_diagnostics(c).max_defect <= 1e-9 * scale
            assert c.first_marginal() == mu
            assert cdf_gap(c.second_marginal(), nu) <= 1e-10
        rejected = 0
        for _ in range(100):
            mu, nu = random_convex_pair(rng)
            if wasserstein_1d(mu, nu) == 0.0:
                rejected += 1
                continue
            with pytest.raises(ConvexOrderViolation) as err:
                strassen_coupling(nu, mu)
            assert err.value.gap > 0.0
            assert potential_of(nu)(err.value.position) > potential_of(mu)(err.value.position)
        assert rejected < 20


def test_criterion_06_lattice_laws_and_continuity():
    rng = np.random.default_rng(2024_06)
    with Stopwatch(20.0, "criterion 6: lattice laws, round trip and refinement continuity"):
        for _ in range(50):
            n = int(rng.integers(1, 65))
            m = DiscreteMeasure(np.sort(rng.uniform(-5, 5, n)), rng.uniform(0.01, 1.0, n))
            assert measure_from_potential(potential_of(m)) == m
        for _ in range(200):
            a = random_prob_measure(rng, 5)
            b = random_prob_measure(rng, 5)
            b = b.translate(a.barycenter() - b.barycenter())
            lo, hi = convex_inf(a, b), convex_sup(a, b)
            assert in_convex_order(lo, a, 1e-8) and in_convex_order(lo, b, 1e-8)
            assert in_convex_order(a, hi, 1e-8) and in_convex_order(b, hi, 1e-8)
        for _ in range(5):
            a = random_prob_measure(rng, 6)
            b = random_prob_measure(rng, 6)
            b = b.translate(a.barycenter() - b.barycenter())
            sup0, inf0 = convex_sup(a, b), convex_inf(a, b)
            a2, b2 = quantile_coarsen(a, 2), quantile_coarsen(b, 2)
            prev = None
            for t in (0.2, 0.1, 0.05, 1e-4):
                ak, bk = a * (1 - t) + a2 * t, b * (1 - t) + b2 * t
                d = max(
                    wasserstein_1d(convex_sup(ak, bk), sup0),
                    wasserstein_1d(convex_inf(ak, bk), inf0),
                )
                if prev is not None:
                    assert d <= prev + 1e-12
                prev = d
            assert prev < 1e-3


def test_criterion_07_martingale_cost_bound():
    rng = np.random.default_rng(2024_07)
    with Stopwatch(20.0, "criterion 7: martingale transport cost at most twice W1"):
        for _ in range(100):
            nu_prime, nu = random_convex_pair(rng)
            c = min_cost_martingale(nu_prime, nu)
            cost = sum(r.weight * r.kernel.moment(1.0, r.x) for r in c.rows)
            assert cost <= 2.0 * wasserstein_1d(nu_prime, nu) + 1e-9


def test_criterion_08_adapted_distance_oracle():
    rng = np.random.default_rng(2024_08)
    with Stopwatch(20.0, "criterion 8: nested solver equals embedded oracle, metric axioms"):
        for _ in range(100):
            p = random_coupling(rng, 4)
            q = random_coupling(rng, 4)
            r = float(rng.choice([1.0, 2.0]))
            assert abs(adapted_wasserstein(p, q, r).distance - adapted_wasserstein_embedded(p, q, r)) <= 1e-9
        for _ in range(25):
            p, q, s = (random_coupling(rng, 5) for _ in range(3))
            d_pq = adapted_wasserstein(p, q, 1.0).distance
            assert abs(d_pq - adapted_wasserstein(q, p, 1.0).distance) <= 1e-10
            assert d_pq <= (
                adapted_wasserstein(p, s, 1.0).distance
                + adapted_wasserstein(s, q, 1.0).distance
                + 1e-9
            )


def test_criterion_09_decomposition_integrity():
    rng = np.random.default_rng(2024_09)
    with Stopwatch(10.0, "criterion 9: irreducible decomposition re-sums exactly"):
        for _ in range(50):
            mu, nu = random_convex_pair(rng)
            d = irreducible_components(mu, nu)
            mu_sum, nu_sum = d.eta, d.eta
            for (lo, hi), mu_n, nu_n in d.components:
                mu_sum = mu_sum + mu_n
                nu_sum = nu_sum + nu_n
                assert abs(potential_of(mu_n)(lo) - potential_of(nu_n)(lo)) <= 1e-10
                assert abs(potential_of(mu_n)(hi) - potential_of(nu_n)(hi)) <= 1e-10
            assert cdf_gap(mu_sum, mu) <= 1e-12
            assert cdf_gap(nu_sum, nu) <= 1e-10
            p = strassen_coupling(mu, nu)
            parts, chi = decompose_coupling(p, d)
            total = chi
            for part in parts:
                total = part if total is None else total + part
            assert cdf_gap(total.first_marginal(), mu) <= 1e-12
            assert cdf_gap(total.second_marginal(), nu) <= 1e-10
        # the two-component hand example
        mu = DiscreteMeasure([-2.0, 2.0], [0.5, 0.5])
        nu = DiscreteMeasure([-3.0, -1.0, 1.0, 3.0], [0.25] * 4)
        d = irreducible_components(mu, nu)
        assert len(d.components) == 2
        assert d.components[0][1] == DiscreteMeasure([-2.0], [0.5])
        assert d.components[0][2].isclose(DiscreteMeasure([-3.0, -1.0], [0.25, 0.25]))
        assert d.components[1][1] == DiscreteMeasure([2.0], [0.5])
        assert d.components[1][2].isclose(DiscreteMeasure([1.0, 3.0], [0.25, 0.25]))
        assert d.eta.is_zero()


def test_criterion_10_end_to_end_stability():
    with Stopwatch(60.0, "criterion 10: end-to-end approximation converges"):
        pi = min_cost_martingale(FIXED_MU, FIXED_NU)
        diam = float(FIXED_NU.positions[-1] - FIXED_NU.positions[0])
        center = DiscreteMeasure([FIXED_NU.barycenter()], [1.0])
        base_err_nu = wasserstein_1d(FIXED_NU, center, 1.0)
        prev = None
        fallbacks = []
        for frac in (0.2, 0.1, 0.05, 0.02):
            t = frac * diam / base_err_nu
            mu_k = FIXED_MU * (1.0 - t) + center * t
            nu_k = FIXED_NU * (1.0 - t) + center * t
            assert in_convex_order(mu_k, nu_k)
            out, report = approximate(pi, mu_k, nu_k, eps=0.01)
            assert report.w1_nu_error == pytest.approx(frac * diam, abs=1e-9)
            scale = 1.0 + max(abs(r.x) for r in out.rows)
            assert martingale_diagnostics(out).max_defect <= 1e-8 * scale
            assert cdf_gap(out.first_marginal(), mu_k) <= 1e-10
            assert cdf_gap(out.second_marginal(), nu_k) <= 1e-10
            if prev is not None:
                assert report.final_aw1 <= 1.1 * prev
            prev = report.final_aw1
            fallbacks.append(report.fallbacks)
        assert prev < 0.05 * diam
        print(f"  fallback counts per level: {fallbacks}")


def test_criterion_11_small_mass_additivity_bound():
    rng = np.random.default_rng(2024_11)
    with Stopwatch(20.0, "criterion 11: additivity bound for small-mass decompositions"):
        for _ in range(100):
            big = random_coupling(rng, 4)
            big_k = random_coupling(rng, 4)
            eps = float(rng.uniform(0.05, 0.3))
            small = random_coupling(rng, 3)
            small = small.scale_mass(eps / small.total_mass)
            small_k = random_coupling(rng, 3)
            small_k = small_k.scale_mass(eps / small_k.total_mass)
            r = float(rng.choice([1.0, 2.0]))
            mu = big.first_marginal() + small.first_marginal()
            nu = big.second_marginal() + small.second_marginal()
            lhs = adapted_wasserstein(big + small, big_k + small_k, r).distance ** r
            c1 = 2.0 ** (2 * (r - 1.0))
            c2 = 2.0 ** (r - 1.0) * (1.0 + 2.0 ** (r - 1.0))
            rhs = (
                adapted_wasserstein(big, big_k, r).distance ** r
                + c1
                * (
                    wasserstein_1d(small.first_marginal(), small_k.first_marginal(), r) ** r
                    + wasserstein_1d(small.second_marginal(), small_k.second_marginal(), r) ** r
                    + 2.0 * wasserstein_1d(big.second_marginal(), big_k.second_marginal(), r) ** r
                )
                + c2 * tail_moment(mu, eps, r, 0.0)
                + 3.0 * c2 * tail_moment(nu, eps, r, 0.0)
            )
            assert lhs <= rhs + 1e-9
