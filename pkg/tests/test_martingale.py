import numpy as np
import pytest

from mot_stability import (
    ConvexOrderViolation,
    Coupling,
    CouplingRow,
    DiscreteMeasure,
    compose,
    decompose_coupling,
    identity_coupling,
    in_convex_order,
    irreducible_components,
    martingale_diagnostics,
    min_cost_martingale,
    potential_of,
    slice_by_quantiles,
    strassen_coupling,
    wasserstein_1d,
)

from conftest import random_convex_pair, random_martingale_coupling


def half_half(a, b):
    return DiscreteMeasure([a, b], [0.5, 0.5])


def cdf_gap(a, b):
    probe = np.union1d(a.positions, b.positions)
    return max((abs(a.cdf(t) - b.cdf(t)) for t in probe), default=0.0)


class TestDiagnostics:
    def test_examples(self):
        mart = Coupling([CouplingRow(0.0, 1.0, half_half(-1.0, 1.0))])
        assert martingale_diagnostics(mart).max_defect == 0.0
        assert martingale_diagnostics(mart).is_martingale

        shifted = Coupling([CouplingRow(0.0, 1.0, DiscreteMeasure([1.0], [1.0]))])
        d = martingale_diagnostics(shifted)
        assert d.max_defect == 1.0 and not d.is_martingale

        comono = identity_coupling(half_half(0.0, 1.0))
        assert martingale_diagnostics(comono).max_defect == 0.0

    def test_mean_weighting(self):
        c = Coupling(
            [
                CouplingRow(0.0, 0.75, DiscreteMeasure([0.0], [1.0])),
                CouplingRow(1.0, 0.25, DiscreteMeasure([2.0], [1.0])),
            ]
        )
        d = martingale_diagnostics(c)
        assert d.max_defect == 1.0
        assert d.mean_defect == pytest.approx(0.25)


class TestStrassen:
    def test_unique_coupling(self):
        c = strassen_coupling(DiscreteMeasure([0.0], [1.0]), half_half(-1.0, 1.0))
        assert len(c) == 1
        assert c.rows[0].kernel.isclose(half_half(-1.0, 1.0))

    def test_identity_for_equal_measures(self, rng):
        from conftest import random_prob_measure

        m = random_prob_measure(rng)
        c = strassen_coupling(m, m)
        for row in c.rows:
            assert len(row.kernel) == 1 and row.kernel.positions[0] == row.x

    def test_two_by_two_barycenters(self):
        c = strassen_coupling(half_half(-1.0, 1.0), half_half(-2.0, 2.0))
        assert c.rows[0].kernel.isclose(DiscreteMeasure([-2.0, 2.0], [0.75, 0.25]), 1e-9)
        assert c.rows[1].kernel.isclose(DiscreteMeasure([-2.0, 2.0], [0.25, 0.75]), 1e-9)

    def test_soundness(self, rng):
        for _ in range(100):
            mu, nu = random_convex_pair(rng)
            c = strassen_coupling(mu, nu)
            scale = 1.0 + max(abs(float(x)) for x in mu.positions)
            assert martingale_diagnostics(c).max_defect <= 1e-9 * scale
            assert c.first_marginal() == mu
            assert cdf_gap(c.second_marginal(), nu) <= 1e-10

    def test_completeness(self, rng):
        for _ in range(100):
            mu, nu = random_convex_pair(rng)
            if wasserstein_1d(mu, nu) == 0.0:
                continue
            with pytest.raises(ConvexOrderViolation) as err:
                strassen_coupling(nu, mu)
            assert err.value.gap > 0.0
            u_mu, u_nu = potential_of(nu), potential_of(mu)
            assert u_mu(err.value.position) > u_nu(err.value.position)


class TestMinCost:
    def test_identity_cost_zero(self, rng):
        from conftest import random_prob_measure

        m = random_prob_measure(rng)
        c = min_cost_martingale(m, m)
        cost = sum(r.weight * r.kernel.moment(1.0, r.x) for r in c.rows)
        assert cost == 0.0

    def test_point_to_pair(self):
        c = min_cost_martingale(DiscreteMeasure([0.0], [1.0]), half_half(-1.0, 1.0))
        cost = sum(r.weight * r.kernel.moment(1.0, r.x) for r in c.rows)
        assert cost == pytest.approx(1.0)
        assert cost <= 2.0 * wasserstein_1d(DiscreteMeasure([0.0], [1.0]), half_half(-1.0, 1.0))

    def test_unique_plan_cost(self):
        # the only martingale coupling between these measures costs 1.5
        c = min_cost_martingale(half_half(-1.0, 1.0), half_half(-2.0, 2.0))
        cost = sum(r.weight * r.kernel.moment(1.0, r.x) for r in c.rows)
        assert cost == pytest.approx(1.5, abs=1e-9)
        assert cost <= 2.0 * wasserstein_1d(half_half(-1.0, 1.0), half_half(-2.0, 2.0)) + 1e-9

    def test_cost_bound_on_random_pairs(self, rng):
        for _ in range(100):
            mu, nu = random_convex_pair(rng)
            c = min_cost_martingale(mu, nu)
            cost = sum(r.weight * r.kernel.moment(1.0, r.x) for r in c.rows)
            assert cost <= 2.0 * wasserstein_1d(mu, nu) + 1e-9


class TestCompose:
    def test_identity_right(self, rng):
        p = random_martingale_coupling(rng)
        out = compose(p, identity_coupling(p.second_marginal()))
        assert adapted_result_equal(p, out)

    def test_identity_left(self, rng):
        p = random_martingale_coupling(rng)
        out = compose(identity_coupling(p.first_marginal()), p)
        assert adapted_result_equal(p, out)

    def test_mixture_arithmetic(self):
        p = Coupling([CouplingRow(0.0, 1.0, half_half(-1.0, 1.0))])
        m = Coupling(
            [
                CouplingRow(-1.0, 0.5, half_half(-2.0, 0.0)),
                CouplingRow(1.0, 0.5, half_half(0.0, 2.0)),
            ]
        )
        out = compose(p, m)
        assert out.rows[0].kernel.isclose(DiscreteMeasure([-2.0, 0.0, 2.0], [0.25, 0.5, 0.25]))

    def test_tower_property(self, rng):
        for _ in range(20):
            p = random_martingale_coupling(rng)
            nu = p.second_marginal()
            nu2 = nu
            from conftest import mean_preserving_spread

            nu2 = mean_preserving_spread(rng, nu)
            m = strassen_coupling(nu, nu2)
            out = compose(p, m)
            d_p = martingale_diagnostics(p).max_defect
            d_m = martingale_diagnostics(m).max_defect
            assert martingale_diagnostics(out).max_defect <= d_p + d_m + 1e-12

    def test_marginal_mismatch_rejected(self, rng):
        p = random_martingale_coupling(rng)
        with pytest.raises(ValueError):
            compose(p, identity_coupling(half_half(17.0, 18.0)))


def adapted_result_equal(p: Coupling, q: Coupling) -> bool:
    if len(p) != len(q):
        return False
    for r1, r2 in zip(p.rows, q.rows):
        if r1.x != r2.x or abs(r1.weight - r2.weight) > 1e-12:
            return False
        if not r1.kernel.isclose(r2.kernel, 1e-12):
            return False
    return True


class TestDecomposeCoupling:
    def test_single_component(self):
        mu, nu = DiscreteMeasure([0.0], [1.0]), half_half(-1.0, 1.0)
        p = strassen_coupling(mu, nu)
        d = irreducible_components(mu, nu)
        parts, chi = decompose_coupling(p, d)
        assert len(parts) == 1 and chi is None
        assert adapted_result_equal(parts[0], p)

    def test_equal_marginals(self, rng):
        from conftest import random_prob_measure

        m = random_prob_measure(rng)
        p = identity_coupling(m)
        d = irreducible_components(m, m)
        parts, chi = decompose_coupling(p, d)
        assert parts == [] and adapted_result_equal(chi, p)

    def test_two_components(self):
        mu = half_half(-2.0, 2.0)
        nu = DiscreteMeasure([-3.0, -1.0, 1.0, 3.0], [0.25] * 4)
        p = strassen_coupling(mu, nu)
        d = irreducible_components(mu, nu)
        parts, chi = decompose_coupling(p, d)
        assert chi is None and len(parts) == 2
        recombined = parts[0] + parts[1]
        assert adapted_result_equal(recombined, p)
        for part, (_, mu_n, nu_n) in zip(parts, d.components):
            assert part.first_marginal() == mu_n
            assert part.second_marginal().isclose(nu_n, 1e-9)
            assert martingale_diagnostics(part).max_defect <= 1e-9

    def test_reassembly_random(self, rng):
        for _ in range(20):
            p = random_martingale_coupling(rng)
            d = irreducible_components(p.first_marginal(), p.second_marginal())
            parts, chi = decompose_coupling(p, d)
            total = chi
            for part in parts:
                total = part if total is None else total + part
            assert adapted_result_equal(total, p)


class TestSliceByQuantiles:
    def test_whole_interval(self, rng):
        p = random_martingale_coupling(rng)
        slices, (eta, ups, rem) = slice_by_quantiles(p, [(0.0, 1.0)])
        assert rem is None and eta.is_zero()
        assert adapted_result_equal(slices[0][2], p)

    def test_empty_boundaries(self, rng):
        p = random_martingale_coupling(rng)
        slices, (eta, ups, rem) = slice_by_quantiles(p, [])
        assert slices == [] and adapted_result_equal(rem, p)

    def test_half_split(self):
        p = strassen_coupling(half_half(-1.0, 1.0), half_half(-2.0, 2.0))
        slices, (eta, ups, rem) = slice_by_quantiles(p, [(0.0, 0.5), (0.5, 1.0)])
        assert rem is None
        (mu1, nu1, c1), (mu2, nu2, c2) = slices
        assert mu1 == DiscreteMeasure([-1.0], [0.5])
        assert mu2 == DiscreteMeasure([1.0], [0.5])
        assert in_convex_order(mu1, nu1) and in_convex_order(mu2, nu2)

    def test_atom_straddling_split(self, rng):
        p = random_martingale_coupling(rng)
        slices, (eta, ups, rem) = slice_by_quantiles(p, [(0.0, 0.3), (0.3, 0.85)])
        total = sum(s[0].total_mass for s in slices) + eta.total_mass
        assert total == pytest.approx(1.0, abs=1e-12)
        resum = slices[0][2] + slices[1][2]
        if rem is not None:
            resum = resum + rem
        assert adapted_result_equal(resum, p)
        for mu_n, nu_n, _ in slices:
            assert in_convex_order(mu_n, nu_n)

    def test_overlap_rejected(self, rng):
        p = random_martingale_coupling(rng)
        with pytest.raises(ValueError):
            slice_by_quantiles(p, [(0.0, 0.6), (0.5, 1.0)])

    def test_non_martingale_rejected(self):
        p = Coupling([CouplingRow(0.0, 1.0, DiscreteMeasure([1.0], [1.0]))])
        with pytest.raises(ValueError):
            slice_by_quantiles(p, [(0.0, 1.0)])
