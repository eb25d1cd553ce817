import math

import numpy as np
import pytest

from levycal import (MertonModel, SpectralCurve, SpectralGrid, call_price, char_fn,
                     phi_from_time_values, plancherel_gap, regrid_time_values,
                     time_value_curve, time_values_from_phi, zeta)
from levycal.errors import DivisionNearZero, InsufficientSupport, LengthMismatch, ResidueTooLarge

import oracles

T, R = 0.05, 0.02

# frozen from the forward-transform quadrature of the Poisson-mixture z oracle
ZETA_AT_5 = 0.0010989397746039083 - 9.556281257956025e-06j


def test_grid_nyquist_relation(default_grid):
    g = default_grid
    assert g.dk * g.dw * g.n == pytest.approx(2 * math.pi, rel=1e-12)
    assert not np.any(g.w == 0.0)
    np.testing.assert_allclose(g.w, -g.w[::-1], atol=0)
    assert g.k[g.n // 2] == 0.0


def test_grid_validation():
    with pytest.raises(ValueError):
        SpectralGrid(n=1000)  # not a power of two
    with pytest.raises(ValueError):
        SpectralGrid(dw=0.0)


def test_zeta_degenerate_phi_is_zero():
    w = np.array([0.5, 2.0, -3.0])
    np.testing.assert_array_equal(zeta(w, np.ones(3, dtype=complex), R, T), np.zeros(3))


def test_zeta_near_zero_bounded(merton_triplet, default_grid):
    w_min = default_grid.w[np.argmin(np.abs(default_grid.w))]
    phi = char_fn(np.array([w_min]) - 1j, merton_triplet, T)
    val = zeta(np.array([w_min]), phi, R, T)[0]
    assert np.isfinite(val.real) and np.isfinite(val.imag)
    assert abs(val) < 1.0


def test_zeta_rejects_zero_frequency():
    with pytest.raises(DivisionNearZero):
        zeta(np.array([0.0]), np.array([1.0 + 0j]), R, T)


def test_zeta_against_transform_oracle(merton_triplet):
    phi = char_fn(np.array([5.0]) - 1j, merton_triplet, T)
    val = zeta(np.array([5.0]), phi, R, T)[0]
    assert val == pytest.approx(ZETA_AT_5, abs=1e-9)


def test_call_price_arithmetic():
    assert call_price(0.0, 0.0, 0.02, T) == pytest.approx(1 - math.exp(-0.001), abs=1e-12)
    assert call_price(1.0, 0.01, 0.02, T) == pytest.approx(0.01, abs=1e-15)
    assert call_price(0.0, -0.5, 0.02, T) == 0.0  # floored


def test_call_price_monte_carlo(merton_model, merton_triplet, default_grid):
    k_nodes, z = time_value_curve(merton_triplet, T, R, default_grid)
    idx = np.argmin(np.abs(k_nodes - 0.05))
    fft_price = call_price(k_nodes[idx], z[idx], R, T)
    mc, se = oracles.mc_call_price(merton_model, k_nodes[idx], T, R)
    assert abs(fft_price - mc) < 3 * se


def test_time_value_deep_tails(merton_triplet, default_grid):
    k, z = time_value_curve(merton_triplet, T, R, default_grid)
    for k_test in (4.0, -4.0):
        idx = np.argmin(np.abs(k - k_test))
        assert abs(z[idx]) < 1e-5


def test_time_value_atm_matches_black_scholes(default_grid):
    diffusion = MertonModel(sigma=0.2, lam=1e-14, mu=-0.05, delta=0.05)
    k, z = time_value_curve(diffusion.triplet(), T, R, default_grid)
    i0 = np.argmin(np.abs(k))
    z_bs = oracles.bs_call(0.0, 0.2, T, R) - (1 - math.exp(-R * T))
    assert z[i0] == pytest.approx(z_bs, abs=1e-5)


def test_time_value_vs_series_oracle(merton_model, merton_triplet, default_grid):
    k, z = time_value_curve(merton_triplet, T, R, default_grid)
    sel = np.abs(k) <= 0.5
    np.testing.assert_allclose(z[sel], oracles.merton_series_z(k[sel], merton_model, T, R),
                               rtol=0, atol=1e-10)


def test_time_value_nonnegative(merton_triplet, kou_triplet, default_grid):
    for trip in (merton_triplet, kou_triplet):
        _, z = time_value_curve(trip, T, R, default_grid)
        assert z.min() >= -1e-6


def test_residue_check_fires(default_grid):
    # an asymmetric spectrum cannot come from a real z curve
    phi = np.ones(default_grid.n, dtype=complex)
    phi[: default_grid.n // 2] += 0.3j
    with pytest.raises(ResidueTooLarge):
        time_values_from_phi(phi, R, T, default_grid)


def test_roundtrip_merton(merton_triplet, default_grid):
    k, z = time_value_curve(merton_triplet, T, R, default_grid)
    curve = phi_from_time_values(z, R, T, default_grid)
    truth = char_fn(curve.w - 1j, merton_triplet, T)
    mask = np.abs(curve.w) <= 100.0
    assert np.max(np.abs(curve.values[mask] - truth[mask])) < 1e-3


def test_roundtrip_kou(kou_triplet, default_grid):
    k, z = time_value_curve(kou_triplet, T, R, default_grid)
    curve = phi_from_time_values(z, R, T, default_grid)
    truth = char_fn(curve.w - 1j, kou_triplet, T)
    mask = np.abs(curve.w) <= 55.0
    assert np.max(np.abs(curve.values[mask] - truth[mask])) < 1e-3


def test_phi_from_zero_time_values(default_grid):
    curve = phi_from_time_values(np.zeros(default_grid.n), R, T, default_grid,
                                 dealias_kink=False)
    np.testing.assert_array_equal(curve.values, np.ones(default_grid.n, dtype=complex))
    # with dealiasing the spurious kink term stays below its alias bound
    curve2 = phi_from_time_values(np.zeros(default_grid.n), R, T, default_grid)
    mask = np.abs(curve2.w) <= 55.0
    assert np.max(np.abs(curve2.values[mask] - 1.0)) < 0.01


def test_phi_conjugate_symmetry(merton_triplet, default_grid):
    # floating symmetry is limited by phase-argument rounding amplified by w^2
    _, z = time_value_curve(merton_triplet, T, R, default_grid)
    curve = phi_from_time_values(z, R, T, default_grid)
    np.testing.assert_allclose(curve.values[::-1], np.conj(curve.values), atol=1e-6)


def test_length_mismatch(default_grid):
    with pytest.raises(LengthMismatch):
        phi_from_time_values(np.zeros(10), R, T, default_grid)


def test_regrid_identity(small_grid):
    # amplitudes under 1e-4 sit below any meaningful time-value region, so the
    # support check stays quiet for synthetic data
    idx = np.arange(200, 260)
    k = small_grid.k[idx]
    z = 9e-5 * np.exp(-np.arange(60) / 10.0)
    out = regrid_time_values(k, z, small_grid)
    np.testing.assert_allclose(out[idx], z, atol=1e-18)
    assert out[idx[0] - 1] == 0.0 and out[idx[-1] + 1] == 0.0


def test_regrid_bin_mean(small_grid):
    node = small_grid.k[300]
    k = np.array([node - 0.2 * small_grid.dk, node + 0.2 * small_grid.dk,
                  small_grid.k[310]])
    z = np.array([1e-5, 3e-5, 5e-5])
    out = regrid_time_values(k, z, small_grid)
    assert out[300] == pytest.approx(2e-5, abs=1e-18)  # mean of the bin's two samples
    assert out[310] == pytest.approx(5e-5, abs=1e-18)


def test_regrid_interpolates_interior_holes(small_grid):
    idx = np.array([300, 302, 304])
    out = regrid_time_values(small_grid.k[idx], np.array([1e-5, 2e-5, 5e-5]), small_grid)
    assert out[301] == pytest.approx(1.5e-5, rel=1e-12)
    assert out[303] == pytest.approx(3.5e-5, rel=1e-12)


def test_regrid_insufficient_support(merton_triplet, default_grid, rng):
    k_full, z_full = time_value_curve(merton_triplet, T, R, default_grid)
    # samples only in a sliver around the money while the curve peak implies
    # a time-value region an order of magnitude wider
    sel = np.abs(k_full) < 0.01
    with pytest.raises(InsufficientSupport):
        regrid_time_values(k_full[sel], z_full[sel], default_grid)


def test_regrid_noisy_phi_within_propagated_band(merton_model, merton_triplet, default_grid, rng):
    from scipy.interpolate import CubicSpline

    k_nodes, z_nodes = time_value_curve(merton_triplet, T, R, default_grid)
    spline = CubicSpline(k_nodes, z_nodes)
    n = 10_000
    k = rng.uniform(-0.4, 0.4, n)
    z_true = np.maximum(spline(k), 0.0)
    z_noisy = np.maximum(z_true + rng.normal(0, 1, n) * 0.05 * z_true, 0.0)
    z_binned = regrid_time_values(k, z_noisy, default_grid)
    curve = phi_from_time_values(z_binned, R, T, default_grid)
    truth = char_fn(curve.w - 1j, merton_triplet, T)

    # propagate the per-bin noise variance through the forward transform;
    # each component of F[noise](w) is Gaussian with variance dk^2 sum(var)/2
    counts = np.bincount(np.floor((k - (default_grid.k[0] - default_grid.dk / 2))
                                  / default_grid.dk).astype(int), minlength=default_grid.n)
    var_bin = np.zeros(default_grid.n)
    occupied = counts > 0
    z_on_nodes = np.maximum(spline(default_grid.k), 0.0)
    var_bin[occupied] = (0.05 * z_on_nodes[occupied]) ** 2 / counts[occupied]
    sigma_f = math.sqrt(0.5 * float(np.sum(var_bin))) * default_grid.dk
    w = curve.w
    band = 3.0 * np.abs(1j * w * (1 + 1j * w)) * sigma_f + 1e-4
    mask = np.abs(w) <= 60.0
    err = curve.values - truth
    within = (np.abs(err.real) <= band) & (np.abs(err.imag) <= band)
    assert np.mean(within[mask]) >= 0.99


def test_refinement_ratio(merton_model, merton_triplet):
    errs = []
    for n, dw in [(2**12, 0.8), (2**13, 0.4)]:
        grid = SpectralGrid(n=n, dw=dw)
        k, z = time_value_curve(merton_triplet, T, R, grid)
        sel = np.abs(k) <= 0.6
        errs.append(np.max(np.abs(z[sel] - oracles.merton_series_z(k[sel], merton_model, T, R))))
    assert errs[0] / errs[1] >= 3.0


def test_plancherel_identity(merton_triplet, kou_triplet, default_grid):
    def phi_of(trip):
        return lambda u: char_fn(u, trip, T)

    lhs, rhs = plancherel_gap(phi_of(merton_triplet), phi_of(merton_triplet), default_grid)
    assert lhs == 0.0 and rhs == 0.0

    bumped = MertonModel(sigma=0.21, lam=1.0, mu=-0.05, delta=0.05).triplet()
    for a, b in [(merton_triplet, kou_triplet), (merton_triplet, bumped)]:
        lhs, rhs = plancherel_gap(phi_of(a), phi_of(b), default_grid)
        assert lhs > 0.0
        assert lhs == pytest.approx(rhs, rel=1e-3)


def test_call_price_monotone_in_k(merton_triplet, default_grid):
    k, z = time_value_curve(merton_triplet, T, R, default_grid)
    prices = call_price(k, z, R, T)
    sel = np.abs(k) <= 2.0
    assert np.all(np.diff(prices[sel]) <= 1e-10)
