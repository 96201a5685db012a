"""Spectral synthesis: exactness, statistics, and the analytic covariance."""

import math

import numpy as np
import pytest
from scipy import stats

from sedsim.field import (FieldRealization, FieldSpec, autocorrelation_check,
                          autocovariance, autocovariance_quad, cache_grid,
                          comb_cache_params, dump_field_csv, eval_field,
                          make_field, mode_table, spectral_density)

# band integral (2/(3 pi)) int w^3 cos(w lag) dw, frozen from a 30-digit
# mpmath quadrature
PHI_FULL_LAG1 = 0.0364439690931623155715
PHI_FULL_LAG0 = 0.0530516476972984452563        # = 1/(6 pi)
PHI_BAND_LAG0 = 0.0428657313394171437671        # band [0.9, 1.1]


def test_lag0_closed_form_full_band():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=64)
    assert autocovariance(spec, 0.0) == pytest.approx(PHI_FULL_LAG0, rel=1e-14)
    # and the quoted closed form: hbar omega_c^4 / (6 pi c^3)
    spec2 = FieldSpec(hbar=3.0, c=2.0, omega_cutoff=5.0, n_modes=64)
    assert autocovariance(spec2, 0.0) == pytest.approx(
        3.0 * 5.0**4 / (6.0 * math.pi * 2.0**3), rel=1e-14)


def test_lag1_two_routes_and_frozen_value():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=64)
    closed = autocovariance(spec, 1.0)
    quadr = autocovariance_quad(spec, 1.0)
    assert closed == pytest.approx(PHI_FULL_LAG1, rel=1e-12)
    assert quadr == pytest.approx(PHI_FULL_LAG1, rel=1e-12)


def test_banded_lag0_frozen_value():
    spec = FieldSpec(omega_cutoff=1.1, omega_min=0.9, n_modes=64)
    assert autocovariance(spec, 0.0) == pytest.approx(PHI_BAND_LAG0, rel=1e-14)
    assert autocovariance_quad(spec, 0.0) == pytest.approx(
        PHI_BAND_LAG0, rel=1e-12)


def test_closed_form_matches_quadrature_across_lags():
    spec = FieldSpec(omega_cutoff=2.0, omega_min=0.3, n_modes=64)
    for lag in (0.0, 0.01, 0.3, 1.0, 7.7, 40.0):
        assert autocovariance(spec, lag) == pytest.approx(
            autocovariance_quad(spec, lag), rel=1e-10, abs=1e-16)


def test_hbar_linearity_doubles_lag0():
    a = FieldSpec(hbar=1.0, omega_cutoff=1.0, n_modes=64)
    b = FieldSpec(hbar=2.0, omega_cutoff=1.0, n_modes=64)
    assert autocovariance(b, 0.0) == pytest.approx(
        2.0 * autocovariance(a, 0.0), rel=1e-15)


def test_mode_amplitudes_reproduce_lag0_variance():
    # sum of amp^2/2 is the midpoint rule for the band integral; for a
    # smooth w^3 density it converges quadratically in the cell width
    errs = []
    for n in (64, 128):
        spec = FieldSpec(omega_cutoff=1.0, n_modes=n)
        _, _, amps = mode_table(spec)
        errs.append(abs(np.sum(amps**2) / 2.0 - PHI_FULL_LAG0))
    assert errs[0] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, abs=0.3)


def test_equal_variance_spacing_sums_to_the_same_band_power():
    u = FieldSpec(omega_cutoff=1.0, omega_min=0.1, n_modes=512)
    q = FieldSpec(omega_cutoff=1.0, omega_min=0.1, n_modes=512,
                  mode_spacing="uniform-in-omega^4")
    _, _, au = mode_table(u)
    _, _, aq = mode_table(q)
    band = autocovariance(u, 0.0)
    assert np.sum(au**2) / 2.0 == pytest.approx(band, rel=1e-4)
    # midpoint amplitudes on the wide low-frequency cells are a coarser
    # quadrature, so the total carries a larger (still quadratic) bias
    assert np.sum(aq**2) / 2.0 == pytest.approx(band, rel=1e-3)
    # cells hold near-equal variance, unlike the w^3-skewed uniform comb
    pu, pq = au**2 / 2.0, aq**2 / 2.0
    assert pq.max() / pq.min() < 1.5
    assert pu.max() / pu.min() > 100.0


def test_spectral_density_zero_outside_band():
    spec = FieldSpec(omega_cutoff=1.1, omega_min=0.9, n_modes=8)
    s = spectral_density(spec, np.array([0.5, 1.0, 1.5]))
    assert s[0] == 0.0 and s[2] == 0.0 and s[1] > 0.0


def test_field_is_the_mode_sum():
    spec = FieldSpec(omega_cutoff=1.3, omega_min=0.2, n_modes=7)
    fr = make_field(spec, 42)
    ts = np.array([0.0, 0.37, 2.0, -5.5])
    direct = np.zeros((1, ts.size))
    for a, w, ph in zip(fr.amps, fr.omegas, fr.phases[0]):
        direct[0] += a * np.cos(w * ts + ph)
    assert eval_field(fr, ts) == pytest.approx(direct, rel=1e-13)


def test_same_seed_bit_identical():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=32)
    a = make_field(spec, 11)
    b = make_field(spec, 11)
    assert np.array_equal(a.phases, b.phases)
    ts = np.linspace(0.0, 9.0, 50)
    assert np.array_equal(eval_field(a, ts), eval_field(b, ts))
    c = make_field(spec, 12)
    assert not np.array_equal(a.phases, c.phases)


def test_tuple_seeds_give_distinct_streams():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=32)
    a = make_field(spec, (3, 0))
    b = make_field(spec, (3, 1))
    assert not np.array_equal(a.phases, b.phases)


def test_cached_grid_matches_direct_evaluation():
    spec = FieldSpec(omega_cutoff=1.1, omega_min=0.9, n_modes=512)
    h, n_fft = comb_cache_params(spec, h_target=0.1, min_points=4001)
    assert h <= 0.1 and n_fft >= 4001
    fr = make_field(spec, 7)
    vals = cache_grid(fr, 0.0, h, 4001)
    ts = fr.time_grid
    direct = eval_field(make_field(spec, 7), ts)
    scale = np.max(np.abs(direct))
    assert np.max(np.abs(vals - direct)) / scale < 1e-12


def test_cached_grid_nonzero_origin():
    spec = FieldSpec(omega_cutoff=2.0, omega_min=0.5, n_modes=128)
    h, _ = comb_cache_params(spec, h_target=0.05, min_points=512)
    fr = make_field(spec, 9)
    vals = cache_grid(fr, 123.456, h, 512)
    direct = eval_field(make_field(spec, 9), fr.time_grid)
    assert np.max(np.abs(vals - direct)) / np.max(np.abs(direct)) < 1e-12


def test_comb_anti_periodicity():
    # modes sit at cell midpoints, so when omega_min is a multiple of
    # dOmega every mode advances by an odd multiple of pi over 2 pi/dOmega:
    # the synthesized signal flips sign at the comb period and repeats at
    # twice that
    spec = FieldSpec(omega_cutoff=1.1, omega_min=0.9, n_modes=16)
    dw = (1.1 - 0.9) / 16
    period = 2.0 * math.pi / dw
    fr = make_field(spec, 3)
    ts = np.array([0.0, 1.0, 2.5])
    base = eval_field(fr, ts)
    assert eval_field(fr, ts + period) == pytest.approx(-base, rel=1e-9)
    assert eval_field(fr, ts + 2.0 * period) == pytest.approx(base, rel=1e-9)


def test_empirical_lag0_within_three_sigma():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=256)
    reals = [make_field(spec, (1000, i)) for i in range(400)]
    rep = autocorrelation_check(reals, [0.0, 1.0])
    assert rep["analytic"][0] == pytest.approx(PHI_FULL_LAG0, rel=1e-10)
    assert rep["analytic"][1] == pytest.approx(PHI_FULL_LAG1, rel=1e-10)
    for z in rep["z_score"]:
        assert abs(z) < 3.0


def test_stationarity_same_lag_three_offsets():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=256)
    reals = [make_field(spec, (2000, i)) for i in range(300)]
    lag = 0.8
    values = []
    for t_ref in (0.0, 13.7, 210.0):
        rep = autocorrelation_check(reals, [lag], t_ref=t_ref)
        values.append((rep["empirical"][0], rep["std_error"][0]))
        assert abs(rep["z_score"][0]) < 3.5
    for (va, sa), (vb, sb) in zip(values, values[1:]):
        assert abs(va - vb) <= 3.0 * math.hypot(sa, sb)


def test_cross_component_covariance_consistent_with_zero():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=128, components=3)
    reals = [make_field(spec, (3000, i)) for i in range(500)]
    samples = np.stack([eval_field(fr, np.array([2.0]))[:, 0] for fr in reals])
    for i in range(3):
        for j in range(i + 1, 3):
            prods = samples[:, i] * samples[:, j]
            z = np.mean(prods) / (np.std(prods, ddof=1) / math.sqrt(len(prods)))
            assert abs(z) < 3.0


def test_one_point_marginal_is_gaussian_for_many_modes():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=1024)
    draws = np.array([
        eval_field(make_field(spec, (4000, i)), np.array([0.0]))[0, 0]
        for i in range(1500)
    ])
    _, pvalue = stats.normaltest(draws)
    assert pvalue > 0.01


def test_white_surrogate_decorrelates_at_large_lags():
    # flat spectrum injected directly: delta-like correlation
    n = 4096
    omegas = np.linspace(0.01, 20.0, n)
    amp = math.sqrt(2.0 * 0.05 * (omegas[1] - omegas[0]))
    spec = FieldSpec(omega_cutoff=20.0, n_modes=n)
    rng = np.random.default_rng(8)
    var0 = None
    for lag in (37.0, 81.0):
        acc = []
        for i in range(300):
            phases = rng.uniform(0.0, 2.0 * math.pi, size=(1, n))
            fr = FieldRealization(spec=spec, omegas=omegas,
                                  amps=np.full(n, amp), phases=phases)
            v = eval_field(fr, np.array([0.0, lag]))
            acc.append(v[0, 0] * v[0, 1])
            if var0 is None:
                var0 = np.sum(np.full(n, amp)**2) / 2.0
        z = np.mean(acc) / (np.std(acc, ddof=1) / math.sqrt(len(acc)))
        assert abs(z) < 3.0


def test_insufficient_ensemble_size():
    spec = FieldSpec(omega_cutoff=1.0, n_modes=16)
    reals = [make_field(spec, i) for i in range(20)]
    with pytest.raises(ValueError, match="insufficient ensemble"):
        autocorrelation_check(reals, [0.0])


def test_csv_dump_round_trip(tmp_path):
    spec = FieldSpec(omega_cutoff=1.0, n_modes=16, components=3)
    fr = make_field(spec, 5)
    ts = np.linspace(0.0, 3.0, 7)
    path = tmp_path / "field.csv"
    dump_field_csv(fr, ts, path)
    rows = path.read_text().strip().splitlines()
    header, body = rows[0], rows[1:]
    assert header.startswith("t,")
    assert len(body) == 7
    parsed = np.array([[float(x) for x in r.split(",")] for r in body])
    assert parsed[:, 0] == pytest.approx(ts)
    assert parsed[:, 1:].T == pytest.approx(eval_field(fr, ts), rel=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        FieldSpec(omega_cutoff=-1.0)
    with pytest.raises(ValueError):
        FieldSpec(omega_cutoff=1.0, n_modes=0)
    with pytest.raises(ValueError):
        FieldSpec(omega_cutoff=1.0, omega_min=1.5)
    with pytest.raises(ValueError):
        FieldSpec(omega_cutoff=1.0, components=2)
    with pytest.raises(ValueError):
        FieldSpec(omega_cutoff=1.0, mode_spacing="log")
