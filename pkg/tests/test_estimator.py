"""Bandwidth grid, window sums, variance truncation, and the selection rule.

Hand-worked selection cases carry their full arithmetic in comments; the
rule itself is cross-checked against a plain-loop reference implementation
in ``tests/_oracles.py`` on randomized inputs, and the compiled summation
core against the numpy fallback.
"""

import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import lodens
from lodens import _purecore, estimator as estimator_module
from _oracles import (
    brute_kde,
    brute_sq_sum,
    reference_selection,
    triangular_profile,
)

LN2 = math.log(2.0)


def make_config(**kw):
    kw.setdefault("density_sup_bound", 1.2)
    return lodens.EstimatorConfig(**kw)


class TestGrid:
    def test_five_levels_at_1024(self):
        # floor(log2(1024 / ln^2 1024)) = floor(log2(1024 / 48.05)) = 4
        grid = lodens.build_grid(1024)
        np.testing.assert_array_equal(grid.indices, [[0], [1], [2], [3], [4]])
        np.testing.assert_allclose(grid.bandwidths[:, 0], [1, 0.5, 0.25, 0.125, 0.0625])

    def test_single_level_at_8(self):
        # 8 / ln^2 8 = 1.85, floor(log2) = 0: only the unit bandwidth
        grid = lodens.build_grid(8)
        np.testing.assert_array_equal(grid.indices, [[0]])

    def test_two_axis_simplex(self):
        # n = 2: max level 2, all index vectors with |j| <= 2
        grid = lodens.build_grid(2, dims=2)
        got = {tuple(map(int, r)) for r in grid.indices}
        assert got == {(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)}

    def test_isotropic_diagonal(self):
        grid = lodens.build_grid(1024, dims=2, isotropic=True)
        assert all(len(set(map(int, r))) == 1 for r in grid.indices)

    def test_meet_is_componentwise_minimum(self):
        grid = lodens.build_grid(2, dims=2)
        m = grid.indices.shape[0]
        for a in range(m):
            for b in range(m):
                expect = np.minimum(grid.indices[a], grid.indices[b])
                np.testing.assert_array_equal(grid.indices[grid.meet_table[a, b]], expect)

    def test_too_small_rejected(self):
        for n in (1, 0, -5):
            with pytest.raises(ValueError):
                lodens.build_grid(n)


class TestKde:
    def test_single_atom(self, tri_kernel):
        assert lodens.kde([0.0], tri_kernel, 1.0, 0.0) == 1.0

    def test_empty_window(self, tri_kernel):
        assert lodens.kde([5.0], tri_kernel, 0.5, 0.0) == 0.0

    def test_two_point_hand_value(self, tri_kernel):
        # (K(0.25) + K(-0.25)) / 2 = (0.75 + 0.75) / 2 = 0.75
        assert lodens.kde([0.0, 0.5], tri_kernel, 1.0, 0.25) == 0.75

    def test_matches_brute_force(self, tri_kernel, rng):
        x = rng.uniform(-1, 1, 40)
        for t, h in [(0.0, 0.3), (0.7, 0.12), (-0.4, 1.0)]:
            assert lodens.kde(x, tri_kernel, h, t) == pytest.approx(
                brute_kde(x.reshape(-1, 1), [triangular_profile], [h], [t]), rel=1e-12
            )

    def test_matches_brute_force_two_axes(self, rng):
        spec = lodens.triangular_kernel(dims=2)
        X = rng.uniform(-1, 1, size=(30, 2))
        t, h = [0.1, -0.2], [0.4, 0.7]
        assert lodens.kde(X, spec, h, t) == pytest.approx(
            brute_kde(X, [triangular_profile] * 2, h, t), rel=1e-12
        )

    def test_batch_equals_singles(self, tri_kernel, rng):
        x = rng.uniform(-1, 1, 64)
        cfg = make_config()
        pts = np.linspace(-1, 1, 9)
        batch = lodens.adaptive_estimate_batch(x, tri_kernel, cfg, pts.reshape(-1, 1))
        singles = [lodens.adaptive_estimate(x, tri_kernel, cfg, t) for t in pts]
        np.testing.assert_array_equal(batch, singles)


class TestEmpiricalVariance:
    def test_single_atom(self, tri_kernel):
        # K(0)^2 / (1 * 1)^2 = 1
        assert lodens.empirical_variance([0.0], tri_kernel, 1.0, 0.0) == 1.0

    def test_empty_window(self, tri_kernel):
        assert lodens.empirical_variance([5.0, 6.0], tri_kernel, 1.0, 0.0) == 0.0

    def test_empty_sample_rejected(self, tri_kernel):
        with pytest.raises(ValueError):
            lodens.empirical_variance([], tri_kernel, 1.0, 0.0)

    def test_matches_brute_force(self, tri_kernel, rng):
        x = rng.uniform(-1, 1, 35)
        n, h = 35, 0.4
        direct = brute_sq_sum(x.reshape(-1, 1), [triangular_profile], [h], [0.1])
        assert lodens.empirical_variance(x, tri_kernel, h, 0.1) == pytest.approx(
            direct / (n * h) ** 2, rel=1e-12
        )

    def test_unbiased_for_convolution_variance(self, tri_kernel, tri_density):
        # E sum K^2((t-X)/h) / (n h)^2 = (1/(n h)) int K^2(u) p(t+hu) du.
        # Monte Carlo mean over 100k replicates of size 50, straight inverse-
        # CDF triangular draws, compared within 3 standard errors.
        t, h, n, reps = 0.3, 0.5, 50, 100_000
        rng = np.random.default_rng(20260814)
        u = rng.random((reps, n))
        x = np.where(u < 0.5, -1.0 + np.sqrt(2.0 * u), 1.0 - np.sqrt(2.0 * (1.0 - u)))
        terms = np.maximum(0.0, 1.0 - np.abs((t - x) / h)) ** 2
        sig = terms.sum(axis=1) / (n * h) ** 2
        spot = lodens.empirical_variance(x[0], tri_kernel, h, t)
        assert spot == pytest.approx(sig[0], rel=1e-12)
        target = lodens.oracle_variance(tri_density, tri_kernel, t, h, n)
        se = sig.std(ddof=1) / math.sqrt(reps)
        assert abs(sig.mean() - target) < 3.0 * se


class TestTruncation:
    def test_floor_formula(self):
        assert lodens.variance_floor(2, 1.0) == LN2**2 / 4.0
        assert lodens.variance_floor(100, [0.5, 0.25]) == pytest.approx(
            math.log(100) ** 2 / (100 * 0.125) ** 2, rel=1e-12
        )

    def test_cap_formula(self, tri_kernel):
        assert lodens.variance_cap(tri_kernel, 1.2, 100, 0.5) == pytest.approx(
            (2.0 / 3.0) * 1.2 / (100 * 0.5), rel=1e-12
        )

    def test_empty_window_hits_floor(self, tri_kernel):
        # ln^2(2) / (2 * 1)^2 = 0.12011325347955035
        v = lodens.floored_variance([5.0, 6.0], tri_kernel, 1.0, 0.0)
        assert v == LN2**2 / 4.0
        assert v == pytest.approx(0.12011325347955035, abs=1e-17)

    def test_identity_region_passthrough(self, tri_kernel):
        # X = {-1/3, 1/3}, h = 1: raw sigma = 2 (2/3)^2 / 4 = 2/9, which sits
        # inside [floor, cap] = [0.1201, 0.4], so truncation returns it as is.
        x = [-1.0 / 3.0, 1.0 / 3.0]
        raw = lodens.empirical_variance(x, tri_kernel, 1.0, 0.0)
        assert raw == pytest.approx(2.0 / 9.0, rel=1e-12)
        assert lodens.truncated_variance(x, tri_kernel, 1.0, 0.0, 1.2) == raw

    def test_degenerate_cluster_hits_cap(self, tri_kernel):
        # Ten copies of t with h = 0.01: raw sigma = 10/(0.1)^2 = 1000, far
        # above cap = (2/3)(1.2)/(10 * 0.01) = 8.
        x = np.zeros(10)
        assert lodens.truncated_variance(x, tri_kernel, 0.01, 0.0, 1.2) == pytest.approx(
            lodens.variance_cap(tri_kernel, 1.2, 10, 0.01), rel=1e-12
        )

    @given(
        seed=st.integers(0, 2**31),
        h=st.sampled_from([1.0, 0.5, 0.25, 0.125]),
        t=st.floats(-1.0, 1.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_clip_identity(self, tri_kernel, seed, h, t):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, 16)
        raw = lodens.empirical_variance(x, tri_kernel, h, t)
        lo = lodens.variance_floor(16, h)
        hi = lodens.variance_cap(tri_kernel, 1.2, 16, h)
        assert lodens.truncated_variance(x, tri_kernel, h, t, 1.2) == min(
            max(raw, lo), hi
        )
        assert lodens.floored_variance(x, tri_kernel, h, t) == max(raw, lo)


class TestSelection:
    def test_cluster_separation_excludes_coarse_row(self, tri_kernel):
        """Two clusters at +-0.9, t = 0, n = 4 (grid levels {0, 1}).

        h=1 row: est = 0.1, raw sigma = 4(0.1)^2/16 = 0.0025 -> floor 0.1201.
        h=0.5 row: window empty, est = 0, sigma = cap = (2/3)(1.2)/2 = 0.4.
        Test of row 0 vs row 1: |0.1 - 0| > 0.1 sqrt(0.4 ln 4) = 0.0745,
        so the wide row is rejected and the empty fine row is chosen: the
        low-density point gets estimate exactly 0.
        """
        x = np.array([-0.9, -0.9, 0.9, 0.9])
        cfg = make_config(threshold_const=0.1)
        tr = lodens.select_bandwidth(x, tri_kernel, cfg, 0.0)
        np.testing.assert_array_equal(tr.indices, [[0], [1]])
        np.testing.assert_allclose(tr.estimates, [0.1, 0.0], atol=1e-15)
        assert tr.sigma_sq[0] == pytest.approx(math.log(4) ** 2 / 16.0, rel=1e-12)
        assert tr.sigma_sq[1] == pytest.approx(0.4, rel=1e-12)
        np.testing.assert_array_equal(tr.admissible, [False, True])
        assert tr.chosen == 1 and not tr.fallback
        assert tr.estimate == 0.0

    def test_dense_sample_keeps_widest_row(self, tri_kernel):
        # A well-spread uniform sample at an interior point: every row passes
        # its comparisons and the variance proxy grows with level, so the
        # rule settles on the widest bandwidth (the minimal-variance row).
        rng = np.random.default_rng(20260814)
        x = rng.uniform(-1, 1, 200)
        tr = lodens.select_bandwidth(x, tri_kernel, make_config(threshold_const=4.0), 0.0)
        assert np.all(tr.admissible)
        assert np.all(np.diff(tr.sigma_sq) > 0)
        assert tr.chosen == 0 and not tr.fallback

    def test_fallback_tie_picks_first_row_in_index_order(self):
        """Vanishing threshold: every comparison fails, so selection falls
        back to the highest-variance row.  With n = 2 in two axes the three
        quarter-volume rows are all capped at (4/9)(1.2)/(2/4) = 1.0667 --
        an exact three-way tie resolved to the first row in index order.
        """
        spec = lodens.triangular_kernel(dims=2)
        x = np.array([[0.0, 0.32], [0.55, 0.0]])
        cfg = make_config(threshold_const=1e-9)
        tr = lodens.select_bandwidth(x, spec, cfg, [0.0, 0.0])
        assert not np.any(tr.admissible)
        assert tr.fallback
        rows = {tuple(map(int, r)): i for i, r in enumerate(tr.indices)}
        tied = [rows[(0, 2)], rows[(1, 1)], rows[(2, 0)]]
        cap = spec.l2_norm_sq * 1.2 / (2 * 0.25)
        assert all(tr.sigma_sq[i] == cap for i in tied)
        assert tr.chosen == min(tied)
        assert tuple(map(int, tr.indices[tr.chosen])) == (0, 2)

    def test_floor_ties_are_exact(self):
        # Same construction: the two half-volume rows share the identical
        # floor value ln^2(2)/(2 * 0.5)^2 bit for bit.
        spec = lodens.triangular_kernel(dims=2)
        x = np.array([[0.0, 0.32], [0.55, 0.0]])
        tr = lodens.select_bandwidth(x, spec, make_config(), [0.0, 0.0])
        rows = {tuple(map(int, r)): i for i, r in enumerate(tr.indices)}
        assert tr.sigma_sq[rows[(0, 1)]] == tr.sigma_sq[rows[(1, 0)]] == LN2**2

    def test_estimate_capped_at_sup_bound(self, tri_kernel):
        x = np.zeros(16)
        cfg = make_config(density_sup_bound=0.5, threshold_const=8.0)
        assert lodens.adaptive_estimate(x, tri_kernel, cfg, 0.0) == 0.5

    def test_degenerate_sample_hand_value(self, tri_kernel):
        """X = {0, 0}, t = 0, sup bound 2, threshold 4: grid levels {0,1,2},
        estimates (1, 2, 4), proxies (0.5, cap 4/3, cap 8/3).  All rows pass
        at threshold 4 (largest gap 3 < 4 sqrt((8/3) ln 2) = 5.44), the
        widest row wins, and the estimate is min(1, 2) = 1.
        """
        cfg = lodens.EstimatorConfig(density_sup_bound=2.0, threshold_const=4.0)
        tr = lodens.select_bandwidth([0.0, 0.0], tri_kernel, cfg, 0.0)
        np.testing.assert_allclose(tr.estimates, [1.0, 2.0, 4.0])
        assert tr.chosen == 0 and not tr.fallback
        assert tr.estimate == 1.0

    def test_admissible_set_exposes_trace(self, tri_kernel, rng):
        x = rng.uniform(-1, 1, 64)
        cfg = make_config()
        mask, sig, margins = lodens.admissible_set(x, tri_kernel, cfg, 0.2)
        tr = lodens.select_bandwidth(x, tri_kernel, cfg, 0.2)
        np.testing.assert_array_equal(mask, tr.admissible)
        np.testing.assert_array_equal(sig, tr.sigma_sq)
        assert margins.shape == (len(sig), len(sig))
        # a row is admissible exactly when its margin row is nonnegative
        np.testing.assert_array_equal(mask, np.all(margins >= 0, axis=1))

    def test_small_sample_rejected(self, tri_kernel):
        with pytest.raises(ValueError):
            lodens.adaptive_estimate([0.0], tri_kernel, make_config(), 0.0)

    @pytest.mark.parametrize("dims,isotropic", [(1, False), (2, False), (2, True)])
    def test_matches_reference_rule(self, dims, isotropic):
        """Replay the library's comparison inputs through the plain-loop
        reference implementation and demand identical decisions."""
        spec = lodens.triangular_kernel(dims=dims)
        cfg = make_config(threshold_const=0.8, isotropic=isotropic)
        rng = np.random.default_rng(42)
        for trial in range(25):
            n = int(rng.integers(2, 40))
            X = rng.uniform(-1, 1, size=(n, dims))
            t = rng.uniform(-1.2, 1.2, size=dims)
            tr = lodens.select_bandwidth(X, spec, cfg, t)
            m = len(tr.sigma_sq)
            grid = lodens.build_grid(n, dims=dims, isotropic=isotropic)
            if isotropic:
                competitors = [
                    [k for k in range(m) if np.all(grid.indices[k] >= grid.indices[j])]
                    for j in range(m)
                ]
            else:
                competitors = [
                    [k for k in range(m) if tr.sigma_sq[k] >= tr.sigma_sq[j]]
                    for j in range(m)
                ]
            adm, chosen, fb = reference_selection(
                tr.estimates, tr.sigma_sq, grid.meet_table, 0.8, n, competitors
            )
            assert list(tr.admissible) == adm, (trial, t)
            assert tr.chosen == chosen and tr.fallback == fb


class TestKnownSmoothness:
    def test_zeroes_small_estimates(self, tri_kernel, tri_density):
        # level = n^(-b/(b+1)) ln n = 100^(-1/2) ln 100 = 0.4605 at beta = 1
        rng = np.random.default_rng(20260814)
        x = lodens.draw_sample(tri_density, 100, rng)[:, 0]
        cfg = make_config(threshold_const=1.0)
        near_edge = lodens.adaptive_estimate(x, tri_kernel, cfg, 0.9)
        assert near_edge < 0.46
        assert lodens.known_beta_estimate(x, tri_kernel, cfg, 0.9, 1.0) == 0.0

    def test_keeps_large_estimates(self, tri_kernel, tri_density):
        rng = np.random.default_rng(20260814)
        x = lodens.draw_sample(tri_density, 100, rng)[:, 0]
        cfg = make_config(threshold_const=1.0)
        bulk = lodens.adaptive_estimate(x, tri_kernel, cfg, 0.0)
        assert bulk > 0.46
        assert lodens.known_beta_estimate(x, tri_kernel, cfg, 0.0, 1.0) == bulk


class TestFixedBandwidthEstimators:
    def test_classical_bandwidth_values(self):
        assert lodens.classical_bandwidth(1000, 1.0) == pytest.approx(
            1000 ** (-1.0 / 3.0), rel=1e-12
        )
        assert lodens.classical_bandwidth(1000, [1.0, 1.0]) == pytest.approx(
            1000 ** (-1.0 / 4.0), rel=1e-12
        )

    def test_classical_estimate_atom(self, tri_kernel):
        # n = 1: h = 1, estimate = K(0)/(1*1) = 1
        assert lodens.classical_estimate([0.0], tri_kernel, 0.0, 1.0) == 1.0

    def test_classical_matches_kde(self, tri_kernel, rng):
        x = rng.uniform(-1, 1, 50)
        h = lodens.classical_bandwidth(50, 1.0)
        assert lodens.classical_estimate(x, tri_kernel, 0.3, 1.0) == lodens.kde(
            x, tri_kernel, h, 0.3
        )

    def test_oracle_bandwidth_regimes(self):
        # below the breakpoint n^(-beta/(beta+1)) the oracle truncates to 0
        n = 1000
        bp = lodens.breakpoint_level(1.0, n)
        assert bp == pytest.approx(n ** (-0.5), rel=1e-12)
        assert lodens.oracle_estimate(np.zeros(8), lodens.triangular_kernel(), 0.0,
                                      bp / 10.0, 1.0) == 0.0

    def test_oracle_bandwidth_formula(self):
        # h = (delta/n)^((b/(2b+1))/beta): at n = 1000, delta = 1, beta = 1
        # this is 1000^(-1/3) = 0.1 exactly
        h = lodens.oracle_bandwidth(1000, 1.0, 1.0)
        assert h[0] == pytest.approx(0.1, rel=1e-12)
        h2 = lodens.oracle_bandwidth(4096, 0.5, [1.0, 1.0])
        # two axes: bar beta = 1/2, exponent (1/4)/1 per axis
        np.testing.assert_allclose(h2, (0.5 / 4096) ** 0.25, rtol=1e-12)
        with pytest.raises(ValueError):
            lodens.oracle_bandwidth(1000, 0.0, 1.0)


class TestBalancing:
    def test_zero_density_branch(self, tri_kernel):
        # p(t) = 0: the bias-variance balance degenerates to the pure
        # (log n / n)^(bar_beta/(bar_beta+1)) root, one per axis.
        n = 4096
        h = lodens.balancing_bandwidth(tri_kernel, 1.0, 1.0, n, 0.0)
        c8 = lodens.sandwich_scale(tri_kernel, 1.0, 1.0)
        assert h[0] == pytest.approx(c8 * (math.log(n) / n) ** 0.5, rel=1e-12)

    def test_positive_density_branch(self, tri_kernel):
        # large p(t): the (p ln n / n)^(bar_beta/(2 bar_beta+1)) term wins
        n = 4096
        p = 1.0
        h = lodens.balancing_bandwidth(tri_kernel, 1.0, 1.0, n, p)
        c8 = lodens.sandwich_scale(tri_kernel, 1.0, 1.0)
        expect = c8 * max(
            (math.log(n) / n) ** 0.5, (p * math.log(n) / n) ** (1.0 / 3.0)
        )
        assert h[0] == pytest.approx(expect, rel=1e-12)

    @given(h=st.floats(min_value=1e-6, max_value=1.0, exclude_min=True))
    @settings(max_examples=50, deadline=None)
    def test_dyadic_level_sandwich(self, h):
        # 2^(-level(h)) must land in [h/2, h]
        lvl = lodens.balancing_level(h)
        assert h / 2.0 <= 2.0 ** (-lvl) <= h * (1 + 1e-12)


class TestEffectiveSmoothness:
    def test_values(self):
        assert lodens.effective_smoothness(1.0) == 1.0
        assert lodens.effective_smoothness([1.0, 1.0]) == 0.5
        assert lodens.effective_smoothness([2.0, 2.0]) == 1.0
        assert lodens.effective_smoothness([1.0, 2.0]) == pytest.approx(2.0 / 3.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lodens.effective_smoothness([1.0, 0.0])


class TestConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            lodens.EstimatorConfig(density_sup_bound=0.0)
        with pytest.raises(ValueError):
            lodens.EstimatorConfig(density_sup_bound=1.0, threshold_const=0.0)
        with pytest.raises(ValueError):
            lodens.EstimatorConfig(density_sup_bound=1.0, risk_power=0.5)
        with pytest.raises(ValueError):
            lodens.EstimatorConfig(density_sup_bound=1.0, beta_range=(2.0, 1.0))


class TestBackends:
    def test_window_sums_agree(self, rng):
        for power in (1.0, 2.0):
            for h in (1.0, 0.31, 0.0625):
                x = np.sort(rng.uniform(-1, 1, 400))
                pts = np.ascontiguousarray(rng.uniform(-1.2, 1.2, 9))
                fast = estimator_module.window_sums(x, 1.0, power, pts, h)
                pure = _purecore.window_sums(x, 1.0, power, pts, h)
                np.testing.assert_allclose(fast[0], pure[0], rtol=1e-10)
                np.testing.assert_allclose(fast[1], pure[1], rtol=1e-10)

    def test_window_sums_match_brute_force(self, rng):
        x = np.sort(rng.uniform(-1, 1, 60))
        pts = np.ascontiguousarray(np.linspace(-0.8, 0.8, 5))
        h = 0.27
        s1, s2 = estimator_module.window_sums(x, 1.0, 1.0, pts, h)
        for i, t in enumerate(pts):
            terms = [triangular_profile((t - xi) / h) for xi in x]
            assert s1[i] == pytest.approx(sum(terms), rel=1e-12, abs=1e-15)
            assert s2[i] == pytest.approx(sum(v * v for v in terms), rel=1e-12, abs=1e-15)

    def test_pipeline_identical_on_pure_backend(self, tri_kernel, monkeypatch):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, 300)
        pts = np.linspace(-1, 1, 21).reshape(-1, 1)
        cfg = make_config()
        fast = lodens.adaptive_estimate_batch(x, tri_kernel, cfg, pts)
        monkeypatch.setattr(estimator_module, "window_sums", _purecore.window_sums)
        pure = lodens.adaptive_estimate_batch(x, tri_kernel, cfg, pts)
        np.testing.assert_allclose(fast, pure, rtol=1e-10, atol=1e-14)

    def test_env_var_forces_pure_backend(self):
        code = "import lodens; print(lodens.BACKEND_KIND)"
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"PATH": "/usr/bin:/bin", "LODENS_PURE": "1"},
        )
        assert out.stdout.strip() == "pure"
