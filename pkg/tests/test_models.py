"""Coupling-law exactness, sampling contracts, and assumption validation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseloc import models as m
from sparseloc._rng import site_uniforms
from sparseloc.geometry import RegionSet, make_annulus


def lattice_model(d=2, radius=10.0, law=None, amplitude=1.0, rho=1.0):
    return m.RandomPotentialModel(
        sites=m.SiteSet.lattice(d, radius),
        potential=m.SingleSitePotential.indicator(amplitude, rho),
        laws=m.LawAssignment.shared_law(law or m.CouplingLaw.bernoulli(0.5)),
    )


class TestCouplingLaw:
    def test_p_epsilon_bernoulli(self):
        assert m.p_epsilon(m.CouplingLaw.bernoulli(0.3), 0.5) == pytest.approx(0.3)

    def test_p_epsilon_uniform(self):
        assert m.p_epsilon(m.CouplingLaw.uniform(), 0.25) == pytest.approx(0.75)

    def test_p_epsilon_delta0(self):
        assert m.p_epsilon(m.CouplingLaw.delta(0.0), 0.5) == 0.0

    def test_p_epsilon_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            m.p_epsilon(m.CouplingLaw.uniform(), 0.0)

    def test_ac_mass(self):
        assert m.ac_mass(m.CouplingLaw.bernoulli(0.7)) == 0.0
        assert m.ac_mass(m.CouplingLaw.uniform()) == 1.0
        mix = m.CouplingLaw.mixture([(m.CouplingLaw.delta(0.0), 0.5), (m.CouplingLaw.uniform(), 0.5)])
        assert m.ac_mass(mix) == pytest.approx(0.5)

    def test_mass_identity(self):
        laws = [
            m.CouplingLaw.bernoulli(0.4),
            m.CouplingLaw.uniform(0.2, 0.9),
            m.CouplingLaw.bernoulli_times_uniform(0.3),
            m.CouplingLaw.point_masses([(0.1, 0.5), (0.8, 0.5)]),
        ]
        for law in laws:
            for eps in [0.05, 0.1, 0.5, 0.8, 1.0]:
                assert m.p_epsilon(law, eps) + law.mass_below(eps) == pytest.approx(1.0)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_p_epsilon_nonincreasing(self, e1, e2):
        law = m.CouplingLaw.mixture(
            [(m.CouplingLaw.bernoulli(0.4), 0.5), (m.CouplingLaw.uniform(0.1, 0.7), 0.5)]
        )
        lo, hi = min(e1, e2), max(e1, e2)
        assert m.p_epsilon(law, lo) >= m.p_epsilon(law, hi)

    def test_jump_at_atom_is_atom_mass(self):
        law = m.CouplingLaw.point_masses([(0.5, 0.6), (1.0, 0.4)])
        jump = m.p_epsilon(law, 0.5) - m.p_epsilon(law, 0.5 + 1e-12)
        assert jump == pytest.approx(0.6)

    def test_support_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            m.CouplingLaw.point_masses([(1.5, 1.0)])
        with pytest.raises(ValueError):
            m.CouplingLaw("uniform_interval", segments=((0.0, 2.0, 1.0),))

    def test_mass_must_be_one(self):
        with pytest.raises(ValueError):
            m.CouplingLaw("point_masses", atoms=((0.0, 0.5),))

    def test_moments(self):
        assert m.CouplingLaw.uniform().second_moment() == pytest.approx(1.0 / 3.0)
        assert m.CouplingLaw.bernoulli(0.3).second_moment() == pytest.approx(0.3)
        assert m.CouplingLaw.uniform().mean() == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "law",
        [
            m.CouplingLaw.bernoulli(0.35),
            m.CouplingLaw.uniform(0.0, 1.0),
            m.CouplingLaw.bernoulli_times_uniform(0.6, 0.0, 1.0),
            m.CouplingLaw.point_masses([(0.2, 0.25), (0.5, 0.5), (0.9, 0.25)]),
            m.CouplingLaw.mixture(
                [(m.CouplingLaw.delta(0.0), 0.3), (m.CouplingLaw.uniform(0.4, 0.8), 0.7)]
            ),
        ],
    )
    def test_sampling_frequency_matches_tail_mass(self, law):
        # 4-standard-error agreement between empirical tail and p_epsilon
        n = 10_000
        u = np.random.default_rng(7).random(n)
        draws = law.quantile(u)
        assert np.all((draws >= 0.0) & (draws <= 1.0))
        for eps in [0.1, 0.5, 0.85]:
            p = m.p_epsilon(law, eps)
            freq = np.mean(draws >= eps)
            se = math.sqrt(max(p * (1 - p), 1e-12) / n)
            assert abs(freq - p) <= 4 * se + 1e-12

    def test_quantile_monotone_in_u(self):
        law = m.CouplingLaw.mixture(
            [(m.CouplingLaw.bernoulli(0.4), 0.4), (m.CouplingLaw.uniform(0.3, 0.6), 0.6)]
        )
        u = np.linspace(0.0, 0.999999, 1000)
        q = law.quantile(u)
        assert np.all(np.diff(q) >= -1e-12)

    def test_law_dict_roundtrip(self):
        law = m.CouplingLaw.bernoulli_times_uniform(0.4, 0.2, 0.9)
        assert m.CouplingLaw.from_dict(law.to_dict()) == law


class TestSiteSets:
    def test_lattice_separation(self):
        sites = m.SiteSet.lattice(2, 5.0)
        assert sites.r_sigma == 1.0
        assert sites.min_separation() == pytest.approx(1.0)

    def test_tube_counts(self):
        sites = m.SiteSet.tube(2, 10.0)
        # integers k with |k| <= 10, cross-section {0}
        assert len(sites) == 21

    def test_duplicate_site_witness(self):
        sites = m.SiteSet.explicit([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], r_sigma=1.0)
        assert sites.separation_witness() is not None

    def test_indices_in_annulus(self):
        sites = m.SiteSet.lattice(1, 10.0)
        idx = sites.indices_in(make_annulus(2.0, 4.0, 1))
        norms = np.abs(sites.points[idx, 0])
        assert set(norms) == {2.0, 3.0, 4.0}

    def test_window_guard(self):
        sites = m.SiteSet.lattice(1, 5.0)
        with pytest.raises(m.WindowTooSmallError):
            sites.indices_in(make_annulus(0.0, 10.0, 1))


class TestSampling:
    def test_bernoulli_one_gives_all_ones(self):
        model = lattice_model(d=1, radius=5.0, law=m.CouplingLaw.bernoulli(1.0))
        cm = m.sample_couplings(model, seed=3)
        assert np.all(cm.values == 1.0)

    def test_bernoulli_zero_gives_all_zeros(self):
        model = lattice_model(d=1, radius=5.0, law=m.CouplingLaw.bernoulli(0.0))
        cm = m.sample_couplings(model, seed=3)
        assert np.all(cm.values == 0.0)

    def test_determinism(self):
        model = lattice_model(d=2, radius=6.0, law=m.CouplingLaw.uniform())
        a = m.sample_couplings(model, seed=11)
        b = m.sample_couplings(model, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_seed_changes_values(self):
        model = lattice_model(d=2, radius=6.0, law=m.CouplingLaw.uniform())
        a = m.sample_couplings(model, seed=11)
        b = m.sample_couplings(model, seed=12)
        assert not np.array_equal(a.values, b.values)

    def test_window_restriction_preserves_values(self):
        # per-site streams: shrinking the window must not change shared draws
        model = lattice_model(d=1, radius=8.0, law=m.CouplingLaw.uniform())
        full = m.sample_couplings(model, seed=5)
        small = m.sample_couplings(model, seed=5, window=3.0)
        for j, idx in enumerate(small.site_indices):
            pos = np.where(full.site_indices == idx)[0][0]
            assert small.values[j] == full.values[pos]

    def test_stream_independent_of_order(self):
        u1 = site_uniforms(9, np.array([4, 7, 2]))
        u2 = site_uniforms(9, np.array([2, 4, 7]))
        assert u1[2, 0] == u2[0, 0]
        assert u1[0, 0] == u2[1, 0]


class TestEvaluatePotential:
    def test_single_bump(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.explicit([[0.0]]),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.delta(0.7)),
        )
        cm = m.sample_couplings(model, seed=0)
        assert m.evaluate_potential(model, cm, [0.5]) == pytest.approx(0.7)
        assert m.evaluate_potential(model, cm, [2.0]) == 0.0

    def test_overlapping_bumps_sum(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.explicit([[0.0], [1.0]]),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.delta(0.5)),
        )
        cm = m.sample_couplings(model, seed=0)
        assert m.evaluate_potential(model, cm, [0.5]) == pytest.approx(1.0)

    def test_linearity_in_couplings(self):
        model = lattice_model(d=1, radius=6.0, law=m.CouplingLaw.uniform(0.0, 0.5))
        cm = m.sample_couplings(model, seed=21)
        doubled = m.CouplingMap(
            model, cm.site_indices, 2.0 * cm.values, None, cm.window_radius, transform="x2"
        )
        xs = np.array([[0.3], [1.7], [-2.4]])
        v1 = m.evaluate_potential(model, cm, xs, include_background=False)
        v2 = m.evaluate_potential(model, doubled, xs, include_background=False)
        assert np.allclose(v2, 2.0 * v1)

    def test_background_flag(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.explicit([[0.0]]),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.delta(0.0)),
            background=m.BackgroundPotential.constant(5.0),
        )
        cm = m.sample_couplings(model, seed=0)
        assert m.evaluate_potential(model, cm, [0.2]) == pytest.approx(5.0)
        assert m.evaluate_potential(model, cm, [0.2], include_background=False) == 0.0


class TestSecondMoment:
    def test_uniform_law_single_site(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.explicit([[0.0]]),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.uniform()),
        )
        assert m.second_moment_profile(model, [0.0]) == pytest.approx(math.sqrt(1.0 / 3.0))

    def test_bernoulli_single_site(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.explicit([[0.0]]),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.bernoulli(0.4)),
        )
        assert m.second_moment_profile(model, [0.0]) == pytest.approx(math.sqrt(0.4))

    def test_all_delta0_zero(self):
        model = lattice_model(d=1, radius=5.0, law=m.CouplingLaw.delta(0.0))
        assert m.second_moment_profile(model, [0.0]) == 0.0

    def test_decay_fit_detects_fast_decay(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(1, 60.0),
            potential=m.SingleSitePotential.indicator(1.0, 0.4),
            laws=m.LawAssignment.radial_bernoulli(3.0),
        )
        # Bernoulli(p_i) second moment = p_i ~ |i|^-3, so W ~ |i|^-1.5
        exponent, quality, fast = m.second_moment_decay_fit(model, np.arange(4.0, 55.0, 1.0))
        assert fast
        assert exponent == pytest.approx(1.5, abs=0.3)
        assert quality > 0.9


class TestQuasiDimension:
    def test_tube_is_quasi_1d(self):
        report = m.quasi_dimension_bound(m.SiteSet.tube(2, 60.0), m=1.0, r_max=55.0)
        assert report.passed
        assert report.constant <= 4.0 + 1e-9

    def test_full_lattice_fails_quasi_1d(self):
        report = m.quasi_dimension_bound(m.SiteSet.lattice(2, 40.0), m=1.0, r_max=38.0)
        assert not report.passed

    def test_full_lattice_is_quasi_2d(self):
        report = m.quasi_dimension_bound(m.SiteSet.lattice(2, 40.0), m=2.0, r_max=38.0)
        assert report.passed
        assert report.constant <= 8.0 * math.pi

    def test_cumulative_variant_tube(self):
        report = m.quasi_dimension_bound(m.SiteSet.tube(2, 60.0), m=1.0, r_max=55.0)
        assert report.cumulative_passed
        assert report.cumulative_constant <= 3.0


class TestModel1Remark:
    def test_bernoulli_tail_is_p_for_every_eps(self):
        model = lattice_model(d=2, radius=12.0, law=None)
        model = m.RandomPotentialModel(
            sites=model.sites,
            potential=model.potential,
            laws=m.LawAssignment.radial_bernoulli(1.5),
        )
        idx = np.arange(len(model.sites))
        for eps in [1e-6, 0.3, 1.0]:
            got = model.tail_masses(idx, eps)
            norms = model.sites.norms
            with np.errstate(divide="ignore"):
                want = np.minimum(np.where(norms > 0, norms**-1.5, np.inf), 1.0)
            assert np.allclose(got, want)


class TestValidateAssumptions:
    def test_lattice_bernoulli_all_pass(self):
        model = lattice_model(d=2, radius=8.0)
        report = m.validate_assumptions(model)
        assert report.passed
        assert report["A2"].detail.startswith("min separation 1")

    def test_duplicate_site_fails_a2(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.explicit([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]], r_sigma=1.0),
            potential=m.SingleSitePotential.indicator(1.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.bernoulli(0.5)),
        )
        report = m.validate_assumptions(model)
        assert not report["A2"].passed
        assert report["A2"].witness is not None

    def test_support_violation_fails_a3(self):
        bad = m.SingleSitePotential(
            support_radius=1.0,
            profile=lambda r: np.where(r <= 2.0, 1.0, 0.0),
            p_norm_bound=10.0,
        )
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(1, 5.0),
            potential=bad,
            laws=m.LawAssignment.shared_law(m.CouplingLaw.bernoulli(0.5)),
        )
        report = m.validate_assumptions(model)
        assert not report["A3"].passed

    def test_a5_checked_when_distinguished_site_set(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(1, 5.0),
            potential=m.SingleSitePotential.indicator(-2.0, 1.0),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.uniform()),
            distinguished_site=0,
        )
        report = m.validate_assumptions(model)
        assert report["A5"].passed


class TestModelSerialization:
    def test_roundtrip_lattice(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.lattice(2, 6.0),
            potential=m.SingleSitePotential.indicator(-3.0, 1.0),
            laws=m.LawAssignment.radial_bernoulli(1.5),
            background=m.BackgroundPotential.constant(2.0),
        )
        back = m.model_from_dict(m.model_to_dict(model))
        assert back.dimension == 2
        assert np.array_equal(back.sites.points, model.sites.points)
        assert back.laws.tau == 1.5
        assert back.background.value == 2.0

    def test_roundtrip_tube(self):
        model = m.RandomPotentialModel(
            sites=m.SiteSet.tube(2, 7.0),
            potential=m.SingleSitePotential.indicator(1.0, 0.5),
            laws=m.LawAssignment.shared_law(m.CouplingLaw.uniform()),
        )
        back = m.model_from_dict(m.model_to_dict(model))
        assert np.array_equal(back.sites.points, model.sites.points)
