import numpy as np
import pytest
from conftest import profile_fixture

from jointmet.currents import (
    CONSTITUENT_FREQUENCIES,
    HarmonicFitConfig,
    harmonic_split,
    hourly_extrema,
    principal_axes,
    process_current_profiles,
    profile_conditional_extremes,
    recombine,
)

M2_PERIOD_H = 1.0 / CONSTITUENT_FREQUENCIES["M2"]
K1_PERIOD_H = 1.0 / CONSTITUENT_FREQUENCIES["K1"]


class TestPrincipalAxes:
    def test_flow_along_45_degrees(self):
        rng = np.random.default_rng(0)
        speed = rng.normal(0.0, 1.0, size=500)
        east = speed * np.cos(np.radians(45.0))
        north = speed * np.sin(np.radians(45.0))
        angle, major, minor = principal_axes(east, north)
        assert angle == pytest.approx(45.0, abs=1e-9)
        assert np.max(np.abs(minor)) < 1e-12

    def test_isotropic_tie_break(self):
        east = np.array([1.0, -1.0, 0.0, 0.0])
        north = np.array([0.0, 0.0, 1.0, -1.0])
        angle, _, _ = principal_axes(east, north)
        assert angle == 0.0

    def test_recovers_planted_angle(self):
        rng = np.random.default_rng(7)
        a = rng.normal(0.0, 2.0, size=20_000)
        b = rng.normal(0.0, 0.5, size=20_000)
        th = np.radians(30.0)
        east = a * np.cos(th) - b * np.sin(th)
        north = a * np.sin(th) + b * np.cos(th)
        angle, major, minor = principal_axes(east, north)
        assert angle == pytest.approx(30.0, abs=2.0)
        assert np.std(major) > np.std(minor)

    def test_energy_preserved(self):
        rng = np.random.default_rng(9)
        east = rng.normal(size=1000)
        north = rng.normal(size=1000)
        _, major, minor = principal_axes(east, north)
        np.testing.assert_allclose(major ** 2 + minor ** 2, east ** 2 + north ** 2,
                                   rtol=1e-12, atol=1e-12)
        total = np.sum(east ** 2 + north ** 2)
        assert np.sum(major ** 2 + minor ** 2) == pytest.approx(total, rel=1e-9)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero-variance"):
            principal_axes(np.zeros(10), np.zeros(10))


def ten_minute_timestamps(days):
    return np.arange(0.0, days * 24 * 3600.0, 600.0)


class TestHarmonicSplit:
    def test_pure_m2_recovered(self):
        t = ten_minute_timestamps(30)
        t_h = t / 3600.0
        series = 0.8 * np.cos(2.0 * np.pi * t_h / M2_PERIOD_H + 0.3)
        tidal, residual = harmonic_split(series, t)
        assert np.sqrt(np.mean(residual ** 2)) < 1e-6
        assert np.max(np.abs(tidal - series)) < 1e-6

    def test_white_noise_amplitudes_bounded(self):
        rng = np.random.default_rng(12)
        t = ten_minute_timestamps(30)
        sigma = 0.3
        series = rng.normal(0.0, sigma, size=t.size)
        cfg = HarmonicFitConfig()
        tidal, _ = harmonic_split(series, t, cfg)
        # project the tidal estimate back onto each constituent globally;
        # least-squares coefficient noise scales as sigma * sqrt(2 / n)
        t_h = t / 3600.0
        n_window = int(cfg.window_hours * 6)
        for name, f in cfg.frequencies.items():
            c = 2.0 * np.mean(tidal * np.cos(2.0 * np.pi * f * t_h))
            s = 2.0 * np.mean(tidal * np.sin(2.0 * np.pi * f * t_h))
            amp = np.hypot(c, s)
            assert amp < 3.0 * sigma / np.sqrt(n_window), name

    def test_m2_plus_k1_with_noise_within_two_percent(self):
        rng = np.random.default_rng(13)
        t = ten_minute_timestamps(30)
        t_h = t / 3600.0
        a_m2, a_k1 = 0.8, 0.45
        series = (
            a_m2 * np.cos(2.0 * np.pi * t_h / M2_PERIOD_H + 0.4)
            + a_k1 * np.cos(2.0 * np.pi * t_h / K1_PERIOD_H - 1.1)
            + rng.normal(0.0, 0.05, size=t.size)
        )
        tidal, residual = harmonic_split(series, t)

        # global least-squares oracle on the full record
        def global_amp(y, period):
            design = np.column_stack([
                np.ones_like(t_h),
                np.cos(2.0 * np.pi * t_h / M2_PERIOD_H),
                np.sin(2.0 * np.pi * t_h / M2_PERIOD_H),
                np.cos(2.0 * np.pi * t_h / K1_PERIOD_H),
                np.sin(2.0 * np.pi * t_h / K1_PERIOD_H),
            ])
            coef, *_ = np.linalg.lstsq(design, y, rcond=None)
            if period == M2_PERIOD_H:
                return np.hypot(coef[1], coef[2])
            return np.hypot(coef[3], coef[4])

        for period, amp_true in ((M2_PERIOD_H, a_m2), (K1_PERIOD_H, a_k1)):
            amp_tidal = global_amp(tidal, period)
            amp_oracle = global_amp(series, period)
            assert amp_tidal == pytest.approx(amp_true, rel=0.02)
            assert amp_tidal == pytest.approx(amp_oracle, rel=0.02)

    def test_exact_reconstruction(self):
        rng = np.random.default_rng(14)
        t = ten_minute_timestamps(20)
        series = rng.normal(size=t.size) + 0.5 * np.sin(t / 7000.0)
        tidal, residual = harmonic_split(series, t)
        np.testing.assert_allclose(tidal + residual, series, atol=1e-9, rtol=0.0)

    def test_unresolvable_pair_named(self):
        with pytest.raises(ValueError, match=r"\(M2, S2\)"):
            HarmonicFitConfig(
                frequencies={"M2": CONSTITUENT_FREQUENCIES["M2"],
                             "S2": CONSTITUENT_FREQUENCIES["S2"]},
                window_hours=100.0, step_hours=24.0,
            )

    def test_record_shorter_than_window(self):
        t = ten_minute_timestamps(3)
        with pytest.raises(ValueError, match="shorter than one window"):
            harmonic_split(np.sin(t / 5000.0), t)


class TestHourlyExtrema:
    def test_constant_series(self):
        t = np.arange(0.0, 5 * 3600.0, 600.0)
        out = hourly_extrema(np.full(t.size, 2.5), t)
        assert np.all(out.maxima == 2.5)
        assert np.all(out.minima == 2.5)
        assert out.maxima.size == 5

    def test_planted_spike_in_hour_seven(self):
        t = np.arange(0.0, 12 * 3600.0, 600.0)
        v = np.zeros(t.size)
        v[int(7.5 * 6)] = 9.0
        out = hourly_extrema(v, t)
        assert out.maxima[7] == 9.0
        assert np.all(np.delete(out.maxima, 7) == 0.0)

    def test_brute_force_recount(self):
        rng = np.random.default_rng(15)
        t = np.sort(rng.uniform(0.0, 48 * 3600.0, size=3000))
        t = t[np.diff(t, prepend=-1.0) > 0]
        v = rng.normal(size=t.size)
        out = hourly_extrema(v, t)
        n_hours = int(np.floor((t[-1] - t[0] + np.median(np.diff(t))) / 3600.0))
        kept = 0
        for h in range(n_hours):
            mask = (t - t[0] >= h * 3600.0) & (t - t[0] < (h + 1) * 3600.0)
            if not mask.any():
                assert t[0] + h * 3600.0 in out.missing_hours
                continue
            assert out.maxima[kept] == np.max(v[mask])
            assert out.minima[kept] == np.min(v[mask])
            kept += 1
        assert kept == out.maxima.size

    def test_incomplete_trailing_hour_dropped(self):
        t = np.arange(0.0, 3 * 3600.0 + 1800.0, 600.0)  # 3.5 hours
        out = hourly_extrema(np.ones(t.size), t)
        assert out.maxima.size == 3

    def test_gap_reported_missing(self):
        t = np.concatenate([np.arange(0.0, 3600.0, 600.0),
                            np.arange(2 * 3600.0, 4 * 3600.0, 600.0)])
        out = hourly_extrema(np.ones(t.size), t)
        assert out.missing_hours.tolist() == [3600.0]

    def test_extrema_ordering_invariant(self):
        rng = np.random.default_rng(16)
        t = np.arange(0.0, 24 * 3600.0, 300.0)
        v = rng.normal(size=t.size)
        out = hourly_extrema(v, t)
        assert np.all(out.maxima >= out.minima)

    def test_coarse_sampling_rejected(self):
        t = np.arange(0.0, 10 * 7200.0, 7200.0)
        with pytest.raises(ValueError, match="exceeds 1 hour"):
            hourly_extrema(np.ones(t.size), t)


class TestRecombine:
    def test_zero_tidal_pool_is_identity(self):
        res = np.arange(12.0).reshape(4, 3)
        out = recombine(res, np.zeros((1, 3)), seed=3)
        np.testing.assert_array_equal(out, res)

    def test_zero_residuals_yield_pool_rows(self):
        rng = np.random.default_rng(17)
        pool = rng.normal(size=(20, 4))
        out = recombine(np.zeros((50, 4)), pool, seed=8)
        for row in out:
            assert any(np.array_equal(row, p) for p in pool)

    def test_single_row_pool_deterministic(self):
        res = np.arange(8.0).reshape(4, 2)
        pool = np.array([[1.0, -1.0]])
        a = recombine(res, pool, seed=1)
        b = recombine(res, pool, seed=999)
        np.testing.assert_array_equal(a, b)

    def test_mean_additivity(self):
        rng = np.random.default_rng(18)
        res = rng.normal(1.0, 0.5, size=(100_000, 2))
        pool = rng.normal(-2.0, 1.0, size=(500, 2))
        out = recombine(res, pool, seed=9)
        for j in range(2):
            expected = res[:, j].mean() + pool[:, j].mean()
            se = np.sqrt(res[:, j].var() / res.shape[0] + pool[:, j].var() / res.shape[0])
            assert abs(out[:, j].mean() - expected) < 3.0 * se + pool[:, j].std() / np.sqrt(res.shape[0]) * 3

    def test_layout_mismatch(self):
        with pytest.raises(ValueError, match="layout"):
            recombine(np.zeros((5, 3)), np.zeros((4, 2)), seed=0)




class TestProfilePipeline:
    def test_processing_invariants(self):
        velocities, t = profile_fixture()
        ds = process_current_profiles(velocities, t)
        for depth, (east, north) in zip(ds.depths, velocities.values()):
            np.testing.assert_allclose(
                depth.tidal_major + depth.residual_major, depth.major, atol=1e-9)
            np.testing.assert_allclose(
                depth.tidal_minor + depth.residual_minor, depth.minor, atol=1e-9)
            energy_in = np.sum(np.asarray(east) ** 2 + np.asarray(north) ** 2)
            energy_out = np.sum(depth.major ** 2 + depth.minor ** 2)
            assert energy_out == pytest.approx(energy_in, rel=1e-9)
        assert ds.column_labels == ("D1:major", "D1:minor", "D2:major", "D2:minor")
        assert np.all(ds.residual_maxima >= ds.residual_minima)

    def test_identical_depths_symmetric(self):
        rng = np.random.default_rng(22)
        velocities, t = profile_fixture()
        e, n = velocities["D1"]
        ds = process_current_profiles({"D1": (e, n), "D2": (e.copy(), n.copy())}, t)
        report = profile_conditional_extremes(
            ds, "D1", "major", condition_on="residual",
            return_period_years=10.0, n_sim=2000, seed=5,
        )
        d1 = report["depths"]["D1"]
        d2 = report["depths"]["D2"]
        assert d1["median_major"] == pytest.approx(d2["median_major"], rel=1e-6)
        assert d1["median_minor"] == pytest.approx(d2["median_minor"], abs=1e-6)

    def test_planted_rotation_sign(self):
        velocities, t = profile_fixture(rotation_deg_d2=10.0)
        ds = process_current_profiles(velocities, t)
        report = profile_conditional_extremes(
            ds, "D1", "major", condition_on="residual",
            return_period_years=10.0, n_sim=3000, seed=6,
        )
        assert report["depths"]["D2"]["rotation_deg"] > 1.0
        assert abs(report["depths"]["D1"]["rotation_deg"]) < \
            report["depths"]["D2"]["rotation_deg"]

    def test_independent_depths_regress_to_unconditional(self):
        velocities, t = profile_fixture(independent_d2=True, days=60)
        ds = process_current_profiles(velocities, t)
        report = profile_conditional_extremes(
            ds, "D1", "major", condition_on="residual",
            return_period_years=10.0, n_sim=4000, seed=7,
        )
        d1 = report["depths"]["D1"]
        d2 = report["depths"]["D2"]

        # direct simulation oracle: the same residual + resampled-tide
        # pipeline with no conditioning at all
        rng = np.random.default_rng(99)
        idx = rng.integers(0, ds.residual_maxima.shape[0], size=20_000)
        unconditional = recombine(ds.residual_maxima[idx], ds.tidal_maxima, seed=100)
        oracle_d1 = np.median(unconditional[:, ds.column_index("D1", "major")])
        oracle_d2 = np.median(unconditional[:, ds.column_index("D2", "major")])

        # conditioning depth is pushed far above its unconditional level;
        # the independent depth barely moves in comparison
        lift_d1 = d1["median_major"] - oracle_d1
        lift_d2 = d2["median_major"] - oracle_d2
        assert lift_d1 > 4.0 * oracle_d1
        assert abs(lift_d2) < 0.5 * oracle_d2
        assert abs(lift_d2) < 0.15 * lift_d1

    def test_total_conditioning_mode(self):
        velocities, t = profile_fixture()
        ds = process_current_profiles(velocities, t)
        report = profile_conditional_extremes(
            ds, "D1", "major", condition_on="total",
            return_period_years=1.0, n_sim=20_000, seed=8,
        )
        assert report["n_conditioned"] >= 100
        assert report["conditioning"]["condition_on"] == "total"

    def test_condition_on_is_required_choice(self):
        velocities, t = profile_fixture()
        ds = process_current_profiles(velocities, t)
        with pytest.raises(ValueError, match="condition_on"):
            profile_conditional_extremes(ds, "D1", "major", condition_on="both")
