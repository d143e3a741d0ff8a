"""MC estimators against exact enumeration oracles and closed-form bounds."""

import itertools
import math

import numpy as np
import pytest

from sparseloc import models as m
from sparseloc import stochastic as st
from sparseloc.geometry import make_annulus


def bernoulli_lattice(d=1, radius=16.0, p=0.5):
    return m.RandomPotentialModel(
        sites=m.SiteSet.lattice(d, radius),
        potential=m.SingleSitePotential.indicator(1.0, 1.0),
        laws=m.LawAssignment.shared_law(m.CouplingLaw.bernoulli(p)),
    )


def enumerate_a_n_oracle(norms, probs, lo, hi, width, grid=2001):
    """Independent exact a_n: every pattern, dense-grid free scan."""
    total = 0.0
    rs = np.linspace(lo, hi, grid)
    for pattern in itertools.product([0, 1], repeat=len(norms)):
        weight = 1.0
        for bit, p in zip(pattern, probs):
            weight *= p if bit else (1.0 - p)
        bad = [v for bit, v in zip(pattern, norms) if bit]
        free = np.ones(grid, dtype=bool)
        for v in bad:
            free &= ~((rs >= v - width) & (rs <= v))
        if not free.any():
            total += weight
    return total


class TestFreeProbability:
    def test_exact_product_ten_sites(self):
        model = bernoulli_lattice(d=1, radius=16.0, p=0.1)
        annulus = make_annulus(4.0, 8.0, 1)  # sites +-4..+-8: ten of them
        rec = st.estimate_free_probability(model, annulus, 0.5, trials=10_000, seed=42)
        assert rec.exact == pytest.approx(0.9**10, rel=1e-12)
        assert rec.within(rec.exact, 3.0)

    def test_p_zero_gives_one(self):
        model = bernoulli_lattice(p=0.0)
        rec = st.estimate_free_probability(model, make_annulus(2.0, 9.0, 1), 0.5, 200, 1)
        assert rec.value == 1.0
        assert rec.exact == 1.0

    def test_p_one_gives_zero(self):
        model = bernoulli_lattice(p=1.0)
        rec = st.estimate_free_probability(model, make_annulus(2.0, 9.0, 1), 0.5, 200, 1)
        assert rec.value == 0.0
        assert rec.exact == 0.0

    def test_zero_trials_rejected(self):
        model = bernoulli_lattice()
        with pytest.raises(ValueError):
            st.estimate_free_probability(model, make_annulus(2.0, 4.0, 1), 0.5, 0, 1)

    def test_uniform_law_matches_product(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(1, 12.0),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.uniform()),
        )
        annulus = make_annulus(3.0, 8.0, 1)
        rec = st.estimate_free_probability(model, annulus, 0.7, trials=20_000, seed=5)
        n_sites = len(model.sites.indices_in(annulus))
        assert rec.exact == pytest.approx(0.7**n_sites)
        assert rec.within(rec.exact, 3.0)

    def test_calibration_over_100_seeds(self):
        # |estimate - exact| <= 3 SE in at least 99 of 100 seeded repetitions
        model = bernoulli_lattice(d=1, radius=16.0, p=0.1)
        annulus = make_annulus(4.0, 8.0, 1)
        exact = 0.9**10
        hits = 0
        for seed in range(100):
            rec = st.estimate_free_probability(model, annulus, 0.5, trials=10_000, seed=seed)
            se = math.sqrt(exact * (1.0 - exact) / rec.trials)
            if abs(rec.value - exact) <= 3.0 * se:
                hits += 1
        assert hits >= 99


class TestBruteForceAN:
    def test_all_p_zero(self):
        model = bernoulli_lattice(p=0.0)
        assert st.brute_force_a_n(model, 0.5, a=2.0, n=2) == 0.0

    def test_all_p_one_dense(self):
        # integer sites block every width-2 annulus in [4, 6]
        model = bernoulli_lattice(p=1.0)
        assert st.brute_force_a_n(model, 0.5, a=2.0, n=2) == 1.0

    def test_matches_independent_enumeration(self):
        model = bernoulli_lattice(d=1, radius=16.0, p=0.5)
        got = st.brute_force_a_n(model, 0.5, a=2.0, n=2)
        norms = [4.0, 4.0, 5.0, 5.0, 6.0, 6.0, 7.0, 7.0, 8.0, 8.0]
        want = enumerate_a_n_oracle(norms, [0.5] * 10, 4.0, 6.0, 2.0)
        assert got == pytest.approx(want, abs=1e-12)
        assert 0.0 < got < 1.0

    def test_matches_enumeration_uneven_probs(self):
        sites = [[4.0], [-5.0], [5.5], [6.0], [-7.0], [8.0]]
        laws = [
            m.CouplingLaw.bernoulli(p) for p in [0.2, 0.5, 0.9, 0.3, 0.6, 0.05]
        ]
        site_set = m.SiteSet.explicit(sites, r_sigma=0.5)
        # canonical order sorts sites; align laws with that order
        order = np.lexsort(site_set.points.T[::-1])
        del order  # explicit() already sorted; map laws by matching coordinates
        law_by_site = {tuple(s): l for s, l in zip(sites, laws)}
        per_site = [law_by_site[tuple(p)] for p in site_set.points.tolist()]
        model = m.RandomPotentialModel(
            sites=site_set,
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.per_site_laws(per_site),
        )
        got = st.brute_force_a_n(model, 0.5, a=2.0, n=2)
        norms = [abs(s[0]) for s in site_set.points.tolist()]
        probs = [l.tail_mass(0.5) for l in per_site]
        want = enumerate_a_n_oracle(norms, probs, 4.0, 6.0, 2.0)
        assert got == pytest.approx(want, abs=1e-12)

    def test_budget(self):
        model = bernoulli_lattice(d=2, radius=40.0, p=0.5)
        with pytest.raises(st.BudgetExceededError):
            st.brute_force_a_n(model, 0.5, a=2.0, n=4)

    def test_p_one_pruning_keeps_budget(self):
        # p = 1 sites are resolved without enumeration
        model = bernoulli_lattice(d=2, radius=40.0, p=1.0)
        assert st.brute_force_a_n(model, 0.5, a=2.0, n=4) == 1.0


class TestEstimateAN:
    def test_mc_matches_brute_force(self):
        model = bernoulli_lattice(d=1, radius=16.0, p=0.5)
        exact = st.brute_force_a_n(model, 0.5, a=2.0, n=2)
        rec = st.estimate_a_n(model, 0.5, a=2.0, n=2, trials=10_000, seed=17)
        assert abs(rec.value - exact) <= 3.0 * rec.std_error

    def test_all_zero_probability(self):
        model = bernoulli_lattice(p=0.0)
        rec = st.estimate_a_n(model, 0.5, a=2.0, n=2, trials=500, seed=3)
        assert rec.value == 0.0

    def test_dense_always_blocked(self):
        model = bernoulli_lattice(p=1.0)
        rec = st.estimate_a_n(model, 0.5, a=2.0, n=2, trials=300, seed=3)
        assert rec.value == 1.0

    def test_degenerate_scale_defined_zero(self):
        model = bernoulli_lattice(d=1, radius=16.0, p=1.0)
        rec = st.estimate_a_n(model, 0.5, a=1.3, n=5, trials=100, seed=0)
        assert rec.value == 0.0
        assert rec.exact == 0.0
        assert rec.std_error == 0.0

    def test_window_guard(self):
        model = bernoulli_lattice(d=1, radius=6.0)
        with pytest.raises(ValueError):
            st.estimate_a_n(model, 0.5, a=2.0, n=3, trials=10, seed=0)

    def test_monotone_in_p_by_coupling(self):
        # same uniforms drive both models: a_n nonincreasing when p drops
        seeds = [2, 9, 31]
        for seed in seeds:
            lo = st.estimate_a_n(bernoulli_lattice(p=0.3), 0.5, 2.0, 2, 2000, seed)
            hi = st.estimate_a_n(bernoulli_lattice(p=0.7), 0.5, 2.0, 2, 2000, seed)
            assert lo.value <= hi.value + 1e-12


class TestANBound:
    def test_plug_in_n4(self):
        bound, vacuous = st.a_n_bound(2.0, 0.25, 4)
        assert bound == pytest.approx(math.exp(-(0.75**4) * (16.0 / 4.0 - 1.0)), rel=1e-12)
        assert bound == pytest.approx(0.38705, abs=1e-4)
        assert not vacuous

    def test_plug_in_n10(self):
        bound, _ = st.a_n_bound(2.0, 0.25, 10)
        want = math.exp(-(0.75**10) * (2.0**10 / 10.0 - 1.0))
        assert bound == pytest.approx(want, rel=1e-12)
        assert bound == pytest.approx(0.00332, abs=1e-5)

    def test_vacuous_flag(self):
        # n=1, a=1.2: a(a-1)/1 - 1 < 0, bound > 1
        bound, vacuous = st.a_n_bound(1.2, 0.1, 1)
        assert bound >= 1.0
        assert vacuous

    def test_invalid_eta(self):
        with pytest.raises(ValueError):
            st.a_n_bound(2.0, 0.6, 4)  # a(1-eta) = 0.8 <= 1
        with pytest.raises(ValueError):
            st.a_n_bound(2.0, 0.0, 4)


class TestQuasi1DThreshold:
    def test_values(self):
        assert st.quasi1d_threshold(0.0, 4.0) == 1.0
        assert st.quasi1d_threshold(0.5, 4.0) == pytest.approx(16.0)
        assert st.quasi1d_threshold(0.5, 1.0) == pytest.approx(2.0)

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            st.quasi1d_threshold(1.0, 2.0)


class TestBorelCantelliReport:
    def test_all_zero_summable(self):
        model = bernoulli_lattice(d=1, radius=70.0, p=0.0)
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 5), trials=200, seed=1)
        assert report.verdict == "summable"
        assert all(r.estimate == 0.0 for r in report.rows)

    def test_dense_lattice_not_summable(self):
        model = bernoulli_lattice(d=1, radius=70.0, p=1.0)
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 5), trials=100, seed=1)
        assert report.verdict == "not-summable"
        assert all(r.estimate == 1.0 for r in report.rows)

    def test_partial_sums_monotone(self):
        model = bernoulli_lattice(d=1, radius=70.0, p=0.4)
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 5), trials=400, seed=7)
        sums = [r.partial_sum for r in report.rows]
        assert all(b >= a for a, b in zip(sums, sums[1:]))

    def test_exact_attached_when_affordable(self):
        model = bernoulli_lattice(d=1, radius=70.0, p=0.5)
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 4), trials=2000, seed=11)
        for row in report.rows:
            if row.exact is not None:
                assert abs(row.estimate - row.exact) <= 4.0 * max(row.std_error, 1e-4)

    def test_csv_shape(self, tmp_path):
        model = bernoulli_lattice(d=1, radius=70.0, p=0.2)
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 4), trials=100, seed=2)
        path = tmp_path / "an.csv"
        with open(path, "w") as fp:
            report.write_csv(fp)
        lines = path.read_text().splitlines()
        assert lines[0] == "n,exact,estimate,std_error,bound,eta,vacuous,partial_sum"
        assert len(lines) == 1 + len(report.rows)

    def test_free_annulus_success_tends_to_one(self):
        # p_i -> 0: the per-scale success frequency 1 - a_n climbs to 1
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(1, 70.0),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.radial_bernoulli(1.0),
        )
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 5), trials=400, seed=5)
        success = [1.0 - r.estimate for r in report.rows]
        assert success[-1] >= 0.95
        assert all(b >= a - 0.05 for a, b in zip(success, success[1:]))

    def test_decaying_p_estimates_below_bounds_d2(self):
        # radial Bernoulli p = min(1, |i|^-3): a_n well under the plug-in bound
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(2, 33.0),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.radial_bernoulli(3.0),
        )
        report = st.borel_cantelli_report(model, 0.5, 2.0, (2, 4), trials=600, seed=3)
        for row in report.rows:
            assert row.estimate <= row.bound + 3.0 * row.std_error
