import math

import numpy as np
import pytest

from levycal import (BucketSpec, KouModel, MarketSlice, MertonModel, NoiseSpec, SpectralCurve,
                     SpectralGrid, TrainConfig, bucketed_errors, calibrate_parametric,
                     generate_virtual_market, parametric_char_shifted, run_elnn,
                     spectral_target, stability_summary)
from levycal.calibrate import PeriodEstimate
from levycal.errors import LengthMismatch

T, R = 0.05, 0.02


def noise_free_slice(model, grid, wmax):
    curve = SpectralCurve(grid.w, parametric_char_shifted(model, grid.w, T)).clip(wmax)
    return MarketSlice("clean", T, R, np.array([0.0]), np.array([0.0]), spectral=curve)


# --- buckets ----------------------------------------------------------------------


def test_bucket_boundaries():
    spec = BucketSpec()
    assert spec.k_bucket(-0.05) == "ATM"
    assert spec.k_bucket(-0.050001) == "ITM"
    assert spec.k_bucket(0.03) == "OTM"
    assert spec.k_bucket(0.0299) == "ATM"
    assert spec.w_bucket(-25.0) == "Mid"
    assert spec.w_bucket(19.9) == "Low"
    assert spec.w_bucket(40.0) == "High"
    assert spec.w_bucket(60.0) is None


def test_bucketed_zero_errors(rng):
    k = rng.uniform(-0.2, 0.2, 100)
    vals = rng.uniform(0, 0.02, 100)
    table = bucketed_errors(k, vals, vals)
    assert all(v == 0.0 for v in table.entries.values())
    assert table.total == 0.0


def test_bucketed_single_sample():
    table = bucketed_errors(np.array([0.0]), np.array([0.013]), np.array([0.01]))
    assert table.entries["ATM"] == pytest.approx(1e4 * 0.003, rel=1e-12)
    assert table.entries["ITM"] is None
    assert table.entries["OTM"] is None
    assert table.total == table.entries["ATM"]


def test_bucketed_matches_hand_computation(rng):
    k = rng.uniform(-0.3, 0.3, 64)
    target = rng.uniform(0, 0.02, 64)
    pred = target + rng.normal(0, 1e-3, 64)
    spec = BucketSpec()
    table = bucketed_errors(k, pred, target, spec)
    for name in ("ATM", "ITM", "OTM"):
        mask = np.array([spec.k_bucket(v) == name for v in k])
        want = 1e4 * math.sqrt(np.mean((pred[mask] - target[mask]) ** 2))
        assert table.entries[name] == pytest.approx(want, abs=1e-12)
    assert table.total == pytest.approx(sum(table.entries.values()), abs=1e-12)


def test_bucketed_permutation_invariant(rng):
    k = rng.uniform(-0.3, 0.3, 64)
    target = rng.uniform(0, 0.02, 64)
    pred = target + rng.normal(0, 1e-3, 64)
    perm = rng.permutation(64)
    t1 = bucketed_errors(k, pred, target)
    t2 = bucketed_errors(k[perm], pred[perm], target[perm])
    for name, value in t1.entries.items():
        assert value == pytest.approx(t2.entries[name], rel=1e-12)


def test_bucketed_spectral_scaling():
    w = np.array([5.0, 10.0, 25.0, 30.0, 50.0, 55.0, 70.0])
    target = np.array([1.0, 0.8, 0.55, 0.5, 0.2, 0.15, 0.05])
    pred = target + np.array([0.01, -0.01, 0.02, 0.01, 0.005, 0.004, 99.0])
    table = bucketed_errors(w, pred, target, kind="spectral")
    for name, idx in [("Low", [0, 1]), ("Mid", [2, 3]), ("High", [4, 5])]:
        std = np.std(target[idx])
        want = 100.0 * math.sqrt(np.mean((pred[idx] - target[idx]) ** 2)) / std
        assert table.entries[name] == pytest.approx(want, rel=1e-12)
    # the huge error at w=70 is outside every bucket, so totals stay finite
    assert table.total < 100.0


def test_bucketed_spectral_single_point_bucket():
    # a one-sample bucket has zero target spread: entry reported as absent
    table = bucketed_errors(np.array([5.0]), np.array([1.2]), np.array([1.0]),
                            kind="spectral")
    assert table.entries["Low"] is None


def test_bucketed_length_mismatch():
    with pytest.raises(LengthMismatch):
        bucketed_errors(np.zeros(3), np.zeros(2), np.zeros(3))


# --- parametric calibration --------------------------------------------------------


@pytest.fixture(scope="module")
def grid_cal():
    return SpectralGrid()


def test_merton_self_calibration(grid_cal):
    truth = MertonModel(sigma=0.2, lam=1.0, mu=-0.05, delta=0.05)
    slc = noise_free_slice(truth, grid_cal, 400.0)
    fitted, loss = calibrate_parametric("merton", slc, seed=1)
    assert loss < 1e-8
    assert fitted.sigma == pytest.approx(0.2, rel=0.02)
    assert fitted.lam == pytest.approx(1.0, rel=0.02)
    assert fitted.mu == pytest.approx(-0.05, rel=0.02)
    assert fitted.delta == pytest.approx(0.05, rel=0.02)


def test_kou_self_calibration(grid_cal):
    truth = KouModel(sigma=0.21, lam=1.4, p=0.04, lam_plus=3.7, lam_minus=1.8)
    slc = noise_free_slice(truth, grid_cal, 220.0)
    fitted, loss = calibrate_parametric("kou", slc, seed=1, budget=20_000)
    assert fitted.sigma == pytest.approx(0.21, rel=0.05)
    assert fitted.lam == pytest.approx(1.4, rel=0.05)
    assert fitted.p == pytest.approx(0.04, rel=0.05)
    assert fitted.lam_plus == pytest.approx(3.7, rel=0.05)
    assert fitted.lam_minus == pytest.approx(1.8, rel=0.05)


def test_budget_zero_returns_init(grid_cal):
    truth = MertonModel(sigma=0.2, lam=1.0, mu=-0.05, delta=0.05)
    slc = noise_free_slice(truth, grid_cal, 400.0)
    fitted, loss = calibrate_parametric("merton", slc, init=truth, budget=0)
    assert fitted == truth
    assert loss == pytest.approx(0.0, abs=1e-18)


def test_unknown_family(grid_cal):
    with pytest.raises(ValueError):
        calibrate_parametric("heston", noise_free_slice(
            MertonModel(0.2, 1.0, -0.05, 0.05), grid_cal, 400.0))


# --- stability summary ---------------------------------------------------------------


def test_stability_identical_periods():
    entries = [PeriodEstimate(str(y), 0.2, 1.0) for y in range(3)]
    summary = stability_summary(entries)
    assert summary.sigma_cv == pytest.approx(0.0, abs=1e-14)
    assert summary.lam_cv == pytest.approx(0.0, abs=1e-14)


def test_stability_cv_value():
    entries = [PeriodEstimate("a", 0.2, 1.0), PeriodEstimate("b", 0.2, 1.2)]
    summary = stability_summary(entries)
    assert summary.lam_cv == pytest.approx(0.1 / 1.1, rel=1e-12)


def test_stability_needs_two_periods():
    with pytest.raises(ValueError):
        stability_summary([PeriodEstimate("a", 0.2, 1.0)])


# --- driver -----------------------------------------------------------------------


def test_run_elnn_smoke_and_determinism(merton_model):
    grid = SpectralGrid(n=2**12, dw=0.2)
    slices = generate_virtual_market(merton_model, 20, 100, T, R,
                                     noise=NoiseSpec(scale=0.05, seed=11), grid=grid)
    cfg = TrainConfig(m_cutoff=60.0, epochs=60, seed=2)
    params1, report1 = run_elnn(slices, cfg, grid=grid, n_groups=10, group_size=1000)
    params2, report2 = run_elnn(slices, cfg, grid=grid, n_groups=10, group_size=1000)
    assert params1.s == params2.s
    np.testing.assert_array_equal(params1.wr0, params2.wr0)
    assert report1.z_table.entries == report2.z_table.entries
    assert report1.re_table.entries == report2.re_table.entries
    assert report1.sigma == params1.sigma
    assert report1.loss_trace.size == 60
    assert all(v is not None for v in report1.z_table.entries.values())


def test_spectral_target_averages_groups(merton_model):
    grid = SpectralGrid(n=2**12, dw=0.2)
    slices = generate_virtual_market(merton_model, 10, 200, T, R,
                                     noise=NoiseSpec(scale=0.0, seed=1), grid=grid)
    target = spectral_target(slices, grid, n_groups=4, group_size=500, seed=3)
    from levycal import char_fn
    truth = char_fn(grid.w - 1j, merton_model.triplet(), T)
    mask = np.abs(grid.w) <= 30
    assert np.max(np.abs(target.values - truth)[mask]) < 0.02
