import math

import numpy as np
import pytest

from dpntk.kernel import Dataset, sample_weights
from dpntk.privacy import continuous_sensitivity_psi
from dpntk.rng import RngStream
from dpntk.sensitivity import (
    BoundCheck,
    NeighborPair,
    beta_neighbor,
    cts_sensitivity_check,
    dis_cts_gap,
    dis_sensitivity_check,
    entry_lipschitz_check,
    psd_sandwich_check,
)


def unit_data(n=5, d=4, seed=0, scale=1.0):
    g = np.random.default_rng(seed)
    x = g.standard_normal((n, d))
    x = scale * x / np.linalg.norm(x, axis=1, keepdims=True)
    return Dataset(x, np.zeros((n, 1)), bound_B=1.0)


class TestBetaNeighbor:
    def test_beta_zero_identity(self):
        data = unit_data()
        pair = beta_neighbor(data, 0.0, RngStream(1))
        np.testing.assert_array_equal(pair.base.features, pair.neighbor.features)

    def test_post_hoc_invariants(self):
        data = unit_data()
        for s in range(200):
            pair = beta_neighbor(data, 0.1, RngStream(s))
            assert pair.row_distance() <= 0.1 + 1e-12
            assert np.linalg.norm(pair.neighbor.features[-1]) <= 1.0 + 1e-12

    def test_changes_only_the_last_row(self):
        data = unit_data(n=7)
        pair = beta_neighbor(data, 0.2, RngStream(3))
        assert pair.changed_index == 6
        np.testing.assert_array_equal(pair.base.features[:6], pair.neighbor.features[:6])

    def test_pair_invariants_enforced(self):
        data = unit_data(n=3, d=2, seed=5)
        other = unit_data(n=3, d=2, seed=6)
        with pytest.raises(ValueError, match="changed row"):
            NeighborPair(base=data, neighbor=other, beta=0.1, changed_index=2)


class TestEntryLipschitz:
    def test_beta_zero_all_ratios_zero(self):
        pair = beta_neighbor(unit_data(), 0.0, RngStream(1))
        rep = entry_lipschitz_check(pair, sigma=1.0)
        assert rep.max_ratio == 0.0
        assert rep.passed

    def test_bounds_hold_over_one_thousand_pairs(self):
        data = unit_data()
        worst = 0.0
        for s in range(1000):
            pair = beta_neighbor(data, 0.1, RngStream(s).substream("lip"))
            rep = entry_lipschitz_check(pair, sigma=1.0)
            assert rep.passed
            assert rep.max_unaffected_delta == 0.0
            worst = max(worst, rep.max_ratio)
        assert worst <= 1.0

    def test_shrunk_extreme_row_is_near_tight(self):
        # x = B e1 shrunk to (1 - t) x maximizes the diagonal change:
        # ratio (1 - (1-t)^4) / (4t) -> 1 from below as t -> 0.
        d = 3
        base_feats = np.vstack([np.eye(d)[:2], np.array([1.0, 0.0, 0.0])])
        base = Dataset(base_feats, np.zeros((3, 1)), bound_B=1.0)
        t = 1e-3
        nb_feats = base_feats.copy()
        nb_feats[-1] = (1.0 - t) * nb_feats[-1]
        neighbor = Dataset(nb_feats, base.labels, 1.0)
        pair = NeighborPair(base=base, neighbor=neighbor, beta=t, changed_index=2)
        rep = entry_lipschitz_check(pair, sigma=1.0)
        assert 0.99 <= rep.diagonal.ratio <= 1.0
        assert rep.passed


class TestCtsSensitivity:
    def test_beta_zero_gap_zero(self):
        rep = cts_sensitivity_check(unit_data(), 1.0, 0.0, 10, RngStream(2))
        assert rep.frobenius.empirical == 0.0
        assert rep.passed

    def test_frobenius_bound_holds(self):
        rep = cts_sensitivity_check(unit_data(), 1.0, 0.1, 1000, RngStream(3))
        assert rep.frobenius.theoretical == pytest.approx(math.sqrt(48.0) * 0.1)
        assert rep.passed

    def test_gap_scales_linearly_in_beta(self):
        # Rows strictly inside the ball so no clipping disturbs the scaling.
        data = unit_data(scale=0.8)
        hi = cts_sensitivity_check(data, 1.0, 0.1, 300, RngStream(4))
        lo = cts_sensitivity_check(data, 1.0, 0.05, 300, RngStream(4))
        ratio = hi.frobenius.empirical / lo.frobenius.empirical
        assert abs(ratio - 2.0) <= 0.2

    def test_deterministic(self):
        a = cts_sensitivity_check(unit_data(), 1.0, 0.1, 50, RngStream(9))
        b = cts_sensitivity_check(unit_data(), 1.0, 0.1, 50, RngStream(9))
        np.testing.assert_array_equal(a.gaps, b.gaps)


class TestPsdSandwich:
    def test_whitened_spectrum_contained_over_pairs(self):
        data = unit_data()
        for s in range(300):
            pair = beta_neighbor(data, 0.1, RngStream(s).substream("sw"))
            rep = psd_sandwich_check(pair, sigma=1.0)
            assert rep.applicable
            assert rep.containment.passed

    def test_interval_positive_only_when_eta_exceeds_psi(self):
        data = unit_data()
        pair = beta_neighbor(data, 1e-6, RngStream(1))
        rep = psd_sandwich_check(pair, sigma=1.0)
        assert rep.interval_positive  # psi is tiny at beta = 1e-6
        pair_wide = beta_neighbor(data, 0.5, RngStream(1))
        rep_wide = psd_sandwich_check(pair_wide, sigma=1.0)
        assert rep_wide.psi > rep.psi


class TestDisCtsGap:
    def test_large_m_gap_small(self):
        data = unit_data(n=4, d=3, seed=8)
        w = sample_weights(10**5, 3, 1.0, RngStream(5))
        gap = dis_cts_gap(data, w, 1.0)
        assert gap <= 0.05 * 4

    def test_duplicate_rows_still_finite(self):
        feats = np.array([[0.6, 0.8], [0.6, 0.8]])
        data = Dataset(feats, np.zeros((2, 1)), 1.0)
        w = sample_weights(16, 2, 1.0, RngStream(6))
        assert math.isfinite(dis_cts_gap(data, w, 1.0))

    def test_sigma_mismatch_rejected(self):
        data = unit_data()
        w = sample_weights(8, 4, 1.0, RngStream(7))
        with pytest.raises(ValueError, match="sigma"):
            dis_cts_gap(data, w, 2.0)

    def test_median_gap_decreases_when_m_quadruples(self):
        data = unit_data(n=4, d=3, seed=9)
        gaps = {m: [] for m in (256, 1024)}
        for m in gaps:
            for s in range(50):
                w = sample_weights(m, 3, 1.0, RngStream(s).substream(f"g{m}"))
                gaps[m].append(dis_cts_gap(data, w, 1.0))
        assert np.median(gaps[1024]) < np.median(gaps[256])


class TestDisSensitivity:
    def test_beta_zero(self):
        data = unit_data()
        w = sample_weights(500, 4, 1.0, RngStream(1))
        rep = dis_sensitivity_check(data, w, 0.0, 20, RngStream(2))
        assert rep.frobenius.empirical == 0.0
        assert rep.frac_within == 1.0

    def test_slack_two_bound_mostly_holds(self):
        data = unit_data()
        w = sample_weights(10**4, 4, 1.0, RngStream(3))
        rep = dis_sensitivity_check(data, w, 0.1, 200, RngStream(4))
        assert rep.frobenius.theoretical == pytest.approx(
            2.0 * continuous_sensitivity_psi(5, 1.0, 1.0, 0.1)
        )
        assert rep.frac_within >= 0.99

    def test_sandwich_counts_consistent(self):
        data = unit_data()
        w = sample_weights(2000, 4, 1.0, RngStream(5))
        rep = dis_sensitivity_check(data, w, 0.01, 50, RngStream(6))
        assert 0 <= rep.sandwich_within <= rep.sandwich_applicable <= 50
        assert rep.sandwich_frac_within <= 1.0


class TestBoundCheck:
    def test_ratio_and_pass(self):
        assert BoundCheck("x", 2.0, 1.0).ratio == 0.5
        assert BoundCheck("x", 2.0, 1.0).passed
        assert not BoundCheck("x", 1.0, 2.0).passed

    def test_zero_bound_cases(self):
        assert BoundCheck("x", 0.0, 0.0).ratio == 0.0
        assert BoundCheck("x", 0.0, 0.0).passed
        assert BoundCheck("x", 0.0, 1.0).ratio == math.inf
