"""Distortion-model unit tests: frozen examples plus randomized invariants."""

import itertools
import math
import random

import pytest

from mvsched.rdmodel import (
    BadPopularity,
    CorrelationModel,
    DecoderState,
    EmptyNeighborhood,
    FrameId,
    RateParams,
    VersionKind,
    expected_distortion,
    frame_distortion,
    full_neighborhood,
    p_rate,
    psnr,
    recoverable_fraction,
    smoothness_penalty,
    spatial_neighborhood,
    temporal_neighborhood,
    wz_rate,
)

from conftest import make_corr


class TestNeighborhoods:
    def test_boundary_camera_has_one_sided_neighbors(self):
        # camera 0 of 8, extent 4: only right-side neighbors exist
        t = 3
        pairs = {((t, 0), (t, l)): 0.8 for l in (1, 2)}
        cm = make_corr(pairs, spatial_extent=4)
        assert spatial_neighborhood(FrameId(t, 0), cm) == {FrameId(t, 1), FrameId(t, 2)}

    def test_zero_correlation_gives_empty_neighborhood(self):
        cm = make_corr({}, spatial_extent=4)
        assert spatial_neighborhood(FrameId(0, 3), cm) == set()

    def test_at_most_half_extent_per_side(self):
        t, m = 0, 4
        pairs = {((t, m), (t, l)): 0.9 for l in (2, 3, 5, 6)}
        cm = make_corr(pairs, spatial_extent=4)
        nb = spatial_neighborhood(FrameId(t, m), cm)
        assert len(nb) == 4
        assert all(abs(g.m - m) <= 2 for g in nb)

    def test_temporal_empty_at_start(self):
        cm = make_corr({((1, 0), (0, 0)): 0.9})
        assert temporal_neighborhood(FrameId(0, 0), cm) == set()

    def test_temporal_single_predecessor(self):
        cm = make_corr({((1, 0), (0, 0)): 0.9}, temporal_extent=1)
        assert temporal_neighborhood(FrameId(1, 0), cm) == {FrameId(0, 0)}

    def test_temporal_extent_zero_always_empty(self):
        cm = make_corr({((0, 0), (0, 1)): 0.5}, temporal_extent=0)
        for t in range(3):
            assert temporal_neighborhood(FrameId(t, 0), cm) == set()

    def test_below_threshold_excluded(self):
        cm = make_corr({((0, 0), (0, 1)): 0.05}, beta_s=0.1)
        assert spatial_neighborhood(FrameId(0, 0), cm) == set()

    def test_correlation_model_rejects_bad_pairs(self):
        with pytest.raises(ValueError):
            make_corr({((0, 0), (0, 3)): 0.5}, spatial_extent=4)  # distance 3 > 2
        with pytest.raises(ValueError):
            make_corr({((0, 0), (1, 0)): 0.5})  # source after target
        with pytest.raises(ValueError):
            make_corr({((0, 0), (0, 1)): 1.5})


class TestRates:
    def test_rate_uses_least_correlated_neighbor(self):
        cm = make_corr({((0, 1), (0, 0)): 0.8, ((0, 1), (0, 2)): 0.5})
        rp = RateParams(key_cost=100, rate_to_bits=0.04)
        assert wz_rate(FrameId(0, 1), cm, rp) == 50

    def test_perfect_correlation_clamps_to_one(self):
        cm = make_corr({((0, 1), (0, 0)): 1.0, ((0, 1), (0, 2)): 1.0})
        rp = RateParams(key_cost=100, rate_to_bits=0.04)
        assert wz_rate(FrameId(0, 1), cm, rp) == 1

    def test_single_neighbor_rate(self):
        cm = make_corr({((0, 1), (0, 0)): 0.25})
        rp = RateParams(key_cost=100, rate_to_bits=0.04)
        assert wz_rate(FrameId(0, 1), cm, rp) == 75

    def test_empty_neighborhood_raises(self):
        cm = make_corr({})
        rp = RateParams()
        with pytest.raises(EmptyNeighborhood):
            wz_rate(FrameId(0, 0), cm, rp)
        with pytest.raises(EmptyNeighborhood):
            p_rate(FrameId(0, 0), cm, rp)

    def test_p_rate_restricted_to_temporal(self):
        cm = make_corr({((1, 1), (1, 0)): 0.3, ((1, 1), (0, 1)): 0.9})
        rp = RateParams(key_cost=100, rate_to_bits=0.04)
        assert p_rate(FrameId(1, 1), cm, rp) == 10
        assert wz_rate(FrameId(1, 1), cm, rp) == 70

    def test_dependent_rates_never_exceed_key_rate(self):
        rng = random.Random(11)
        rp = RateParams(key_cost=100, rate_to_bits=0.04)
        for _ in range(200):
            rho = rng.uniform(0.001, 1.0)
            cm = make_corr({((0, 1), (0, 0)): rho})
            assert 1 <= wz_rate(FrameId(0, 1), cm, rp) <= rp.key_cost


class TestRecoverableFraction:
    def test_nothing_delivered(self):
        cm = make_corr({((0, 0), (0, 1)): 0.8})
        assert recoverable_fraction(FrameId(0, 0), DecoderState(), cm) == 0.0

    def test_single_source(self):
        cm = make_corr({((0, 0), (0, 1)): 0.6})
        state = DecoderState(keys=[FrameId(0, 1)])
        assert recoverable_fraction(FrameId(0, 0), state, cm) == pytest.approx(0.6)

    def test_two_sources_complement_product(self):
        cm = make_corr({((0, 0), (0, 1)): 0.5, ((0, 0), (0, 2)): 0.5})
        state = DecoderState(keys=[FrameId(0, 1), FrameId(0, 2)])
        assert recoverable_fraction(FrameId(0, 0), state, cm) == pytest.approx(0.75)

    def test_monotone_over_all_subsets_three_cameras(self):
        # brute force over every delivered-key subset of a 3-camera slice:
        # coverage equals the complement product and never decreases as the
        # subset grows
        target = FrameId(0, 0)
        rhos = {1: 0.6, 2: 0.3}
        cm = make_corr({((0, 0), (0, l)): r for l, r in rhos.items()})
        cov = {}
        for subset in itertools.chain.from_iterable(
            itertools.combinations([1, 2], k) for k in range(3)
        ):
            state = DecoderState(keys=[FrameId(0, l) for l in subset])
            expected = 1.0
            for l in subset:
                expected *= 1.0 - rhos[l]
            got = recoverable_fraction(target, state, cm)
            assert got == pytest.approx(1.0 - expected)
            cov[subset] = got
        for subset, value in cov.items():
            for other, other_value in cov.items():
                if set(subset) <= set(other):
                    assert value <= other_value + 1e-15


class TestFrameDistortion:
    def test_key_delivered_gives_intra_distortion(self):
        rp = RateParams(key_cost=100, mu_sigma2=65025.0, d_max=3000.0, rate_to_bits=0.04)
        cm = make_corr({})
        state = DecoderState(keys=[FrameId(0, 0)])
        d = frame_distortion(FrameId(0, 0), state, cm, rp)
        assert d == 65025.0 * 2.0 ** -8
        assert d == pytest.approx(254.0, abs=0.01)

    def test_nothing_delivered_no_correlation_gives_floor(self):
        rp = RateParams()
        cm = make_corr({})
        assert frame_distortion(FrameId(0, 0), DecoderState(), cm, rp) == rp.d_max

    def test_partial_coverage_mixes_linearly(self):
        # d(key)=10 exactly (rate_to_bits 0), floor 100, coverage 0.6
        rp = RateParams(key_cost=100, mu_sigma2=10.0, d_max=100.0, rate_to_bits=0.0)
        cm = make_corr({((0, 0), (0, 1)): 0.6})
        state = DecoderState(keys=[FrameId(0, 1)])
        assert frame_distortion(FrameId(0, 0), state, cm, rp) == pytest.approx(46.0)

    def test_wz_with_si_decodes_fully(self, simple_rates):
        cm = make_corr({((0, 0), (0, 1)): 0.6})
        state = DecoderState(
            keys=[FrameId(0, 1)], dependents=[(FrameId(0, 0), VersionKind.WZ)]
        )
        assert frame_distortion(FrameId(0, 0), state, cm, simple_rates) == simple_rates.intra_distortion()

    def test_wz_without_si_is_noop(self, simple_rates):
        cm = make_corr({((0, 0), (0, 1)): 0.6})
        with_wz = DecoderState(dependents=[(FrameId(0, 0), VersionKind.WZ)])
        without = DecoderState()
        assert frame_distortion(FrameId(0, 0), with_wz, cm, simple_rates) == frame_distortion(
            FrameId(0, 0), without, cm, simple_rates
        )

    def test_p_needs_temporal_si(self, simple_rates):
        # spatial key present: enough for WZ, not for P
        cm = make_corr({((1, 0), (1, 1)): 0.6, ((1, 0), (0, 0)): 0.5})
        spatial_only = DecoderState(
            keys=[FrameId(1, 1)], dependents=[(FrameId(1, 0), VersionKind.P)]
        )
        d = frame_distortion(FrameId(1, 0), spatial_only, cm, simple_rates)
        assert d > simple_rates.intra_distortion()
        temporal = DecoderState(
            keys=[FrameId(0, 0)], dependents=[(FrameId(1, 0), VersionKind.P)]
        )
        assert frame_distortion(FrameId(1, 0), temporal, cm, simple_rates) == simple_rates.intra_distortion()


def _random_world(rng, m_cams=4, periods=3):
    pairs = {}
    for t in range(periods):
        for m in range(m_cams):
            for l in range(max(0, m - 2), min(m_cams, m + 3)):
                if l != m and rng.random() < 0.7:
                    pairs[((t, m), (t, l))] = rng.uniform(0.05, 0.98)
            if t > 0 and rng.random() < 0.6:
                pairs[((t, m), (t - 1, m))] = rng.uniform(0.05, 0.98)
    cm = make_corr(pairs, spatial_extent=4, temporal_extent=1)
    key_cost = rng.randint(10, 100)
    mu_sigma2 = rng.uniform(100.0, 70000.0)
    d_key = rng.uniform(0.01, 0.4)  # intra distortion as a fraction of mu_sigma2
    rp = RateParams(
        key_cost=key_cost,
        mu_sigma2=mu_sigma2,
        d_max=mu_sigma2 * d_key * rng.uniform(1.5, 40.0),
        rate_to_bits=math.log2(1.0 / d_key) / (2.0 * key_cost),
    )
    return cm, rp, m_cams, periods


def _random_state(rng, m_cams, periods):
    keys, deps = set(), {}
    for t in range(periods):
        for m in range(m_cams):
            roll = rng.random()
            if roll < 0.3:
                keys.add(FrameId(t, m))
            elif roll < 0.45:
                deps[FrameId(t, m)] = rng.choice([VersionKind.WZ, VersionKind.P])
    return DecoderState(keys, deps.items())


class TestInvariantSuites:
    N_CASES = 1000

    def test_adding_keys_never_increases_distortion(self):
        rng = random.Random(101)
        for _ in range(self.N_CASES):
            cm, rp, m_cams, periods = _random_world(rng)
            state = _random_state(rng, m_cams, periods)
            candidates = [
                FrameId(t, m)
                for t in range(periods)
                for m in range(m_cams)
                if not state.has_any(FrameId(t, m))
            ]
            if not candidates:
                continue
            new_key = rng.choice(candidates)
            grown = state.with_key(new_key)
            for t in range(periods):
                for m in range(m_cams):
                    f = FrameId(t, m)
                    before = frame_distortion(f, state, cm, rp)
                    after = frame_distortion(f, grown, cm, rp)
                    assert after <= before + 1e-12

    def test_distortion_bounded_by_intra_and_floor(self):
        rng = random.Random(202)
        for _ in range(self.N_CASES):
            cm, rp, m_cams, periods = _random_world(rng)
            state = _random_state(rng, m_cams, periods)
            f = FrameId(rng.randrange(periods), rng.randrange(m_cams))
            d = frame_distortion(f, state, cm, rp)
            assert rp.intra_distortion() - 1e-12 <= d <= rp.d_max + 1e-12

    def test_undecodable_dependents_are_noop(self):
        rng = random.Random(303)
        for _ in range(self.N_CASES):
            cm, rp, m_cams, periods = _random_world(rng)
            state = _random_state(rng, m_cams, periods)
            f = FrameId(rng.randrange(periods), rng.randrange(m_cams))
            if state.has_any(f):
                continue
            kind = rng.choice([VersionKind.WZ, VersionKind.P])
            nb = full_neighborhood(f, cm) if kind == VersionKind.WZ else temporal_neighborhood(f, cm)
            if any(state.key_delivered(g) for g in nb):
                continue  # decodable, not the case under test
            with_dep = state.with_dependent(f, kind)
            assert frame_distortion(f, with_dep, cm, rp) == frame_distortion(f, state, cm, rp)

    def test_decodable_versions_all_reach_intra_quality(self):
        rng = random.Random(404)
        checked = 0
        while checked < 300:
            cm, rp, m_cams, periods = _random_world(rng)
            state = _random_state(rng, m_cams, periods)
            f = FrameId(rng.randrange(periods), rng.randrange(m_cams))
            if state.has_any(f):
                continue
            nb_t = temporal_neighborhood(f, cm)
            if not any(state.key_delivered(g) for g in nb_t):
                continue
            checked += 1
            for kind in (VersionKind.WZ, VersionKind.P):
                d = frame_distortion(f, state.with_dependent(f, kind), cm, rp)
                assert d == rp.intra_distortion()
            assert frame_distortion(f, state.with_key(f), cm, rp) == rp.intra_distortion()

    def test_rate_covers_worst_neighbor(self):
        # the priced rate is the max over the neighborhood, so decoding
        # succeeds no matter which single SI key happens to be present
        rng = random.Random(505)
        for _ in range(300):
            cm, rp, m_cams, periods = _random_world(rng)
            f = FrameId(rng.randrange(periods), rng.randrange(m_cams))
            nb = full_neighborhood(f, cm)
            if not nb:
                continue
            rate = wz_rate(f, cm, rp)
            for g in nb:
                assert rate >= (1.0 - cm.rho(f, g)) * rp.key_cost - 1e-9
                state = DecoderState(keys=[g], dependents=[(f, VersionKind.WZ)])
                assert frame_distortion(f, state, cm, rp) == rp.intra_distortion()


class TestAggregates:
    def test_constant_field_gives_constant(self, simple_rates):
        cm = make_corr({})
        pop = [[0.4, 0.35, 0.25]]
        val = expected_distortion(0, DecoderState(), pop, cm, simple_rates)
        assert val == pytest.approx(simple_rates.d_max)

    def test_uniform_popularity_mean(self):
        rp = RateParams(key_cost=100, mu_sigma2=10.0, d_max=30.0, rate_to_bits=0.0)
        cm = make_corr({})
        state = DecoderState(keys=[FrameId(0, 0)])  # D = {10, 30}
        pop = [[0.5, 0.5]]
        assert expected_distortion(0, state, pop, cm, rp) == pytest.approx(20.0)

    def test_weighted_mean(self):
        rp = RateParams(key_cost=100, mu_sigma2=10.0, d_max=100.0, rate_to_bits=0.0)
        cm = make_corr({})
        state = DecoderState(keys=[FrameId(0, 0)])  # D = {10, 100}
        pop = [[0.9, 0.1]]
        assert expected_distortion(0, state, pop, cm, rp) == pytest.approx(19.0)

    def test_bad_popularity_rejected(self, simple_rates):
        cm = make_corr({})
        with pytest.raises(BadPopularity):
            expected_distortion(0, DecoderState(), [[0.5, 0.4]], cm, simple_rates)
        with pytest.raises(BadPopularity):
            expected_distortion(0, DecoderState(), [[1.5, -0.5]], cm, simple_rates)

    def test_smoothness_zero_when_flat(self, simple_rates):
        cm = make_corr({})
        pop = [[0.5, 0.5], [0.5, 0.5]]
        w = [[0.5, 0.5], [0.5, 0.5]]
        assert smoothness_penalty(1, DecoderState(), pop, w, cm, simple_rates) == 0.0

    def test_smoothness_static_navigation(self):
        # previous slice at 10, current at 30, identity transitions
        rp = RateParams(key_cost=100, mu_sigma2=10.0, d_max=30.0, rate_to_bits=0.0)
        cm = make_corr({})
        state = DecoderState(keys=[FrameId(0, 0), FrameId(0, 1)])
        pop = [[0.5, 0.5], [0.5, 0.5]]
        w = [[1.0, 0.0], [0.0, 1.0]]
        assert smoothness_penalty(1, state, pop, w, cm, rp) == pytest.approx(20.0)

    def test_smoothness_zero_at_origin(self, simple_rates):
        cm = make_corr({})
        assert smoothness_penalty(0, DecoderState(), [[1.0]], [[1.0]], cm, simple_rates) == 0.0

    def test_naive_reevaluation_matches(self, simple_rates):
        # aggregate ops must equal a hand-rolled per-frame loop exactly
        rng = random.Random(77)
        for _ in range(50):
            cm, rp, m_cams, periods = _random_world(rng)
            state = _random_state(rng, m_cams, periods)
            raw = [rng.uniform(0.1, 1.0) for _ in range(m_cams)]
            tot = math.fsum(raw)
            pop_row = [p / tot for p in raw]
            pop_row[-1] = 1.0 - math.fsum(pop_row[:-1])
            pop = [pop_row, pop_row]
            w = [[1.0 / m_cams] * m_cams for _ in range(m_cams)]
            got = expected_distortion(1, state, pop, cm, rp)
            want = math.fsum(
                pop[1][m] * frame_distortion(FrameId(1, m), state, cm, rp)
                for m in range(m_cams)
            )
            assert got == want
            got_s = smoothness_penalty(1, state, pop, w, cm, rp)
            want_s = math.fsum(
                w[m][l]
                * pop[0][l]
                * abs(
                    frame_distortion(FrameId(0, l), state, cm, rp)
                    - frame_distortion(FrameId(1, m), state, cm, rp)
                )
                for m in range(m_cams)
                for l in range(m_cams)
            )
            assert got_s == want_s


def test_psnr_map():
    assert psnr(65025.0) == 0.0
    assert psnr(65025.0 / 1024.0) == pytest.approx(10.0 * math.log10(1024.0))
