"""Trajectory integrator tests.

Deterministic checks run with a zero-amplitude field (hbar=0) where the
equation of motion has closed-form solutions; the driven run is compared
against the discrete linear-response prediction frozen below.
"""

import json
import math

import numpy as np
import pytest

from sedsim.dynamics import (
    STATUS_NONFINITE,
    STATUS_OK,
    DeltaIC,
    IntegrationError,
    ParticleSpec,
    dump_ensemble,
    energy_balance,
    free_potential,
    harmonic_potential,
    integrate_ensemble,
    load_ensemble,
    quartic_potential,
    relaxation_curve,
    stationary_guess_ic,
    tabulated_potential,
)
from sedsim.field import FieldSpec

# Stationary moments of the driven harmonic oscillator for the exact comb
# below (omega in [0.02, 2], 512 modes, uniform spacing, hbar = m = c = 1,
# tau = 1e-2), summed mode by mode from the linear response amplitudes with
# mpmath at 30 digits.
X_VAR_ORACLE = 0.499860594579482048622
E_ORACLE = 0.503881299611904221101

ZERO_FIELD = FieldSpec(omega_cutoff=2.0, n_modes=4, hbar=0.0)


def harmonic_particle(tau: float = 0.0) -> ParticleSpec:
    return ParticleSpec(mass=1.0, charge=0.0, tau=tau,
                        potential=harmonic_potential(1.0, 1.0))


@pytest.fixture(scope="module")
def sed_run():
    """Driven oscillator ensemble, started near the stationary state."""
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.02, n_modes=512)
    particle = ParticleSpec.from_tau(1.0, 1e-2, harmonic_potential(1.0, 1.0))
    ic = stationary_guess_ic(1.0, 1.0, 1.0)
    ens = integrate_ensemble(particle, fspec, ic, 0.0, 0.15, 334, 1200, 2024,
                             record_stride=2)
    return ens, particle


# ---------------------------------------------------------------------------
# closed-form trajectories

def test_free_particle_moves_linearly():
    particle = ParticleSpec(mass=1.0, charge=0.0, tau=0.0,
                            potential=free_potential())
    ens = integrate_ensemble(particle, ZERO_FIELD, DeltaIC(0.5, 0.3),
                             0.0, 0.1, 40, 1, 1)
    np.testing.assert_allclose(ens.positions[0], 0.5 + 0.3 * ens.times,
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(ens.velocities[0], 0.3, rtol=0, atol=1e-12)


def test_undamped_oscillator_matches_cosine():
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.01, 1000, 1, 1)
    assert np.max(np.abs(ens.positions[0] - np.cos(ens.times))) <= 1e-8
    assert np.max(np.abs(ens.velocities[0] + np.sin(ens.times))) <= 1e-8


def test_energy_drift_shrinks_at_fourth_order():
    # classical fourth-order scheme: halving dt must cut the energy error
    # by 2^4 at least; the measured exponent on this problem is close to 5
    def drift(dt):
        ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD,
                                 DeltaIC(1.0, 0.0), 0.0, dt,
                                 int(round(10.0 / dt)), 1, 1)
        energy = 0.5 * ens.velocities[0] ** 2 + 0.5 * ens.positions[0] ** 2
        return abs(float(energy[-1]) - 0.5)

    coarse, fine = drift(0.1), drift(0.05)
    assert fine <= 1e-6
    assert 16.0 <= coarse / fine <= 64.0


def test_radiation_damping_envelope():
    # with a quiet field the reduced-order equation is the classically
    # damped oscillator x'' + gamma x' + x = 0, gamma = tau * omega0^2
    tau = 0.01
    ens = integrate_ensemble(harmonic_particle(tau), ZERO_FIELD,
                             DeltaIC(1.0, 0.0), 0.0, 0.01, 1000, 1, 1)
    gamma = tau
    omega_d = math.sqrt(1.0 - gamma * gamma / 4.0)
    t = ens.times
    exact = np.exp(-gamma * t / 2.0) * (
        np.cos(omega_d * t) + (gamma / (2.0 * omega_d)) * np.sin(omega_d * t)
    )
    assert np.max(np.abs(ens.positions[0] - exact)) <= 1e-8


# ---------------------------------------------------------------------------
# driven ensemble vs linear response

def test_driven_moments_match_linear_response(sed_run):
    ens, _ = sed_run
    window = ens.times >= 15.0
    x = ens.positions[:, window]
    v = ens.velocities[:, window]
    per_traj_var = np.mean(x ** 2, axis=1)
    per_traj_energy = np.mean(0.5 * v ** 2 + 0.5 * x ** 2, axis=1)
    for sample, oracle in ((per_traj_var, X_VAR_ORACLE),
                           (per_traj_energy, E_ORACLE)):
        se = sample.std(ddof=1) / math.sqrt(sample.size)
        assert abs(sample.mean() - oracle) <= 3.5 * se


def test_energy_balance_near_unity(sed_run):
    ens, particle = sed_run
    report = energy_balance(ens, particle, (15.0, float(ens.times[-1])))
    assert abs(report.balance_ratio - 1.0) <= 0.10
    assert report.stationary
    assert report.mean_absorbed_power > 0
    # 35 time units is under ten oscillation periods; the report says so
    assert any("10 periods" in w for w in report.warnings)


def test_relaxation_curve_rises_from_cold_start():
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.02, n_modes=128)
    particle = ParticleSpec.from_tau(1.0, 0.05, harmonic_potential(1.0, 1.0))
    ens = integrate_ensemble(particle, fspec, DeltaIC(0.0, 0.0),
                             0.0, 0.3, 200, 150, 5)
    times, energy = relaxation_curve(ens, particle)
    assert energy[0] == 0.0
    assert np.mean(energy[:10]) < np.mean(energy[-10:])
    assert np.mean(energy[-10:]) > 0.3


def test_relaxation_curve_needs_a_real_ensemble():
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 10, 3, 1)
    with pytest.raises(IntegrationError, match="100"):
        relaxation_curve(ens, harmonic_particle())


# ---------------------------------------------------------------------------
# reproducibility

def test_same_seed_reproduces_bitwise():
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.9, n_modes=16)
    ic = stationary_guess_ic(1.0, 1.0, 1.0)
    particle = ParticleSpec.from_tau(1.0, 1e-3, harmonic_potential(1.0, 1.0))
    a = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 50, 4, 123)
    b = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 50, 4, 123)
    c = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 50, 4, 124)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)
    assert np.array_equal(a.field_values, b.field_values)
    assert not np.array_equal(a.positions, c.positions)


def test_trajectory_seeding_is_independent_of_ensemble_size():
    # trajectory i is seeded by (master_seed, i), so a smaller ensemble is a
    # strict prefix of a larger one
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.9, n_modes=16)
    ic = stationary_guess_ic(1.0, 1.0, 1.0)
    particle = ParticleSpec.from_tau(1.0, 1e-3, harmonic_potential(1.0, 1.0))
    big = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 50, 5, 77)
    small = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 50, 3, 77)
    assert np.array_equal(big.positions[:3], small.positions)
    assert np.array_equal(big.velocities[:3], small.velocities)
    assert np.array_equal(big.field_values[:3], small.field_values)


def test_worker_count_does_not_change_bits():
    # more trajectories than one scheduling chunk, so threads actually split
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.9, n_modes=8)
    ic = stationary_guess_ic(1.0, 1.0, 1.0)
    particle = ParticleSpec.from_tau(1.0, 1e-3, harmonic_potential(1.0, 1.0))
    serial = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 20, 300, 9)
    threaded = integrate_ensemble(particle, fspec, ic, 0.0, 0.2, 20, 300, 9,
                                  n_workers=3)
    assert np.array_equal(serial.positions, threaded.positions)
    assert np.array_equal(serial.velocities, threaded.velocities)
    assert np.array_equal(serial.field_values, threaded.field_values)


# ---------------------------------------------------------------------------
# guards and status flags

def test_unstable_quartic_is_flagged_not_raised():
    particle = ParticleSpec(mass=1.0, charge=0.0, tau=0.0,
                            potential=quartic_potential(-1.0))
    with np.errstate(over="ignore", invalid="ignore"):
        ens = integrate_ensemble(particle, ZERO_FIELD, DeltaIC(2.0, 0.0),
                                 0.0, 0.05, 100, 1, 1)
    assert ens.status[0] == STATUS_NONFINITE
    assert not ens.ok_mask()[0]


def test_stable_run_reports_ok_status():
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 10, 2, 1)
    assert np.all(ens.status == STATUS_OK)
    assert np.all(ens.ok_mask())


def test_step_size_guard():
    with pytest.raises(IntegrationError, match="step-size"):
        integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(0.0, 0.0),
                           0.0, 0.4, 10, 1, 1)


def test_empty_ensemble_rejected():
    with pytest.raises(IntegrationError, match="at least 1"):
        integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(0.0, 0.0),
                           0.0, 0.1, 10, 0, 1)


def test_vector_field_rejected():
    fspec = FieldSpec(omega_cutoff=2.0, n_modes=4, components=3)
    with pytest.raises(IntegrationError, match="one-dimensional"):
        integrate_ensemble(harmonic_particle(), fspec, DeltaIC(0.0, 0.0),
                           0.0, 0.1, 10, 1, 1)


def test_order_reduction_warning():
    ens = integrate_ensemble(harmonic_particle(tau=0.2), ZERO_FIELD,
                             DeltaIC(0.0, 0.0), 0.0, 0.1, 10, 1, 1)
    assert any("order reduction" in w for w in ens.meta["warnings"])


def test_comb_period_warning():
    fspec = FieldSpec(omega_cutoff=1.1, omega_min=0.9, n_modes=8)
    particle = ParticleSpec.from_tau(1.0, 1e-3, harmonic_potential(1.0, 1.0))
    ens = integrate_ensemble(particle, fspec, DeltaIC(0.0, 0.0),
                             0.0, 0.5, 600, 1, 1)
    assert any("field values repeat" in w for w in ens.meta["warnings"])


# ---------------------------------------------------------------------------
# energy balance edge cases

def test_energy_balance_zero_charge():
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.9, n_modes=8)
    particle = harmonic_particle()  # charge 0, tau 0
    ens = integrate_ensemble(particle, fspec, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 100, 2, 1)
    report = energy_balance(ens, particle, (0.0, 10.0))
    assert report.mean_absorbed_power == 0.0
    assert report.mean_radiated_power == 0.0
    assert math.isinf(report.balance_ratio)


def test_energy_balance_requires_stored_field():
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 10, 2, 1, store_field=False)
    with pytest.raises(IntegrationError, match="stored field"):
        energy_balance(ens, harmonic_particle(), (0.0, 1.0))


def test_energy_balance_empty_window():
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 10, 2, 1)
    with pytest.raises(IntegrationError, match="empty window"):
        energy_balance(ens, harmonic_particle(), (5.0, 6.0))


# ---------------------------------------------------------------------------
# persistence

def test_binary_dump_round_trips(tmp_path):
    fspec = FieldSpec(omega_cutoff=2.0, omega_min=0.9, n_modes=8)
    particle = ParticleSpec.from_tau(1.0, 1e-3, harmonic_potential(1.0, 1.0))
    ens = integrate_ensemble(particle, fspec, DeltaIC(0.3, -0.1),
                             0.0, 0.2, 30, 4, 11, record_stride=3)
    dump_ensemble(ens, tmp_path / "dump")
    back = load_ensemble(tmp_path / "dump")
    assert np.array_equal(back.times, ens.times)
    assert np.array_equal(back.positions, ens.positions)
    assert np.array_equal(back.velocities, ens.velocities)
    assert np.array_equal(back.field_values, ens.field_values)
    assert np.array_equal(back.seeds, ens.seeds)
    assert np.array_equal(back.status, ens.status)
    assert back.record_stride == 3
    assert back.meta["master_seed"] == 11


def test_csv_dump_parses_back(tmp_path):
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 5, 2, 1)
    dump_ensemble(ens, tmp_path / "d", fmt="csv")
    lines = (tmp_path / "d" / "trajectories.csv").read_text().splitlines()
    assert lines[0] == "traj_id,t,x,v"
    assert len(lines) == 1 + 2 * 6
    row = lines[1].split(",")
    assert int(row[0]) == 0
    assert float(row[1]) == ens.times[0]
    assert float(row[2]) == ens.positions[0, 0]
    assert float(row[3]) == ens.velocities[0, 0]


def test_only_binary_dumps_reload(tmp_path):
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 5, 1, 1)
    dump_ensemble(ens, tmp_path / "d", fmt="csv")
    with pytest.raises(IntegrationError, match="binary"):
        load_ensemble(tmp_path / "d")
    with pytest.raises(ValueError, match="unknown dump format"):
        dump_ensemble(ens, tmp_path / "e", fmt="parquet")


def test_dump_schema_version_guard(tmp_path):
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             0.0, 0.1, 5, 1, 1)
    dump_ensemble(ens, tmp_path / "d")
    meta_path = tmp_path / "d" / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["schema_version"] = 999
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(IntegrationError, match="schema_version"):
        load_ensemble(tmp_path / "d")


# ---------------------------------------------------------------------------
# small pieces

def test_record_stride_and_time_grid():
    ens = integrate_ensemble(harmonic_particle(), ZERO_FIELD, DeltaIC(1.0, 0.0),
                             2.5, 0.1, 10, 2, 1, record_stride=3)
    assert ens.positions.shape == (2, 4)
    np.testing.assert_allclose(ens.times, 2.5 + 0.3 * np.arange(4),
                               rtol=0, atol=1e-15)
    assert ens.rec_dt == pytest.approx(0.3)


def test_stationary_guess_widths():
    ic = stationary_guess_ic(hbar=0.7, mass=1.3, omega0=2.1)
    assert ic.x_std == pytest.approx(math.sqrt(0.7 / (2 * 1.3 * 2.1)), rel=1e-15)
    assert ic.v_std == pytest.approx(math.sqrt(0.7 * 2.1 / (2 * 1.3)), rel=1e-15)


def test_charge_tau_round_trip():
    pot = harmonic_potential(1.0, 1.0)
    a = ParticleSpec.from_tau(mass=2.0, tau=3e-4, potential=pot, c=2.5)
    assert a.tau == pytest.approx(2.0 * a.charge ** 2 / (3.0 * 2.0 * 2.5 ** 3),
                                  rel=1e-15)
    b = ParticleSpec.from_charge(mass=2.0, charge=a.charge, potential=pot, c=2.5)
    assert b.tau == pytest.approx(3e-4, rel=1e-15)


def test_particle_validation():
    pot = free_potential()
    with pytest.raises(ValueError, match="mass"):
        ParticleSpec(mass=0.0, charge=0.0, tau=0.0, potential=pot)
    with pytest.raises(ValueError, match="tau"):
        ParticleSpec(mass=1.0, charge=0.0, tau=-1e-3, potential=pot)


def test_potential_evaluators():
    x = np.array([-1.5, 0.0, 0.4, 2.0])
    harm = harmonic_potential(omega0=2.0, mass=0.5)  # stiffness 2
    np.testing.assert_allclose(harm.V(x), x ** 2, rtol=1e-15)
    np.testing.assert_allclose(harm.f(x), -2.0 * x, rtol=1e-15)
    np.testing.assert_allclose(harm.fprime(x), -2.0, rtol=1e-15)
    assert harm.omega_char(0.5) == pytest.approx(2.0, rel=1e-15)

    quart = quartic_potential(3.0)
    np.testing.assert_allclose(quart.V(x), 0.75 * x ** 4, rtol=1e-15)
    np.testing.assert_allclose(quart.f(x), -3.0 * x ** 3, rtol=1e-15)
    np.testing.assert_allclose(quart.fprime(x), -9.0 * x ** 2, rtol=1e-15)

    assert free_potential().omega_char(1.0) is None


def test_tabulated_potential_reproduces_smooth_source():
    # not-a-knot cubic spline through quadratic data is the quadratic itself
    xt = np.linspace(-3.0, 3.0, 61)
    pot = tabulated_potential(xt, 0.5 * xt ** 2)
    xq = np.linspace(-2.5, 2.5, 101)
    np.testing.assert_allclose(pot.V(xq), 0.5 * xq ** 2, atol=1e-9)
    np.testing.assert_allclose(pot.f(xq), -xq, atol=1e-9)
    assert pot.omega_char(1.0) == pytest.approx(1.0, rel=1e-6)
