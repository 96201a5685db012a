"""Experiment orchestration: registered pipelines, artifacts, comparison reports.

A run takes a validated config, executes one of the registered pipelines,
persists every stage's outputs under a run directory, and produces a
ComparisonReport: one row per observable with a simulation-side value, a
reference-side value, both provenances, and a pass/fail against a tolerance
read from the config. The report's exit code is the process exit code:
0 all rows pass, 1 any tolerance failure, 2 config/IO errors (raised as
ConfigError before any output is written).

Registered pipelines:

sed_harmonic_ground
    Charged particle in a harmonic trap driven by the synthesized zero-point
    band. Stationary-window statistics are compared against the ground state
    of the corresponding wave equation (tridiagonal eigensolve) and the
    energy-balance condition is checked. Coarse-grained estimators and the
    branch classifier run on the stationary window with time derivatives
    omitted.

ou_calibration
    Overdamped Langevin (Ornstein-Uhlenbeck) ensembles sampled with the
    exact transition kernel. Equilibrium ensembles calibrate the v, u and
    diffusion estimators against closed forms; a separate cold-start
    ensemble, analyzed on an early relaxing window with measured time
    derivatives, feeds the branch classifier, which must select the
    classical branch there.
"""

from __future__ import annotations

import json
import math
import time as _time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from ._version import __version__
from .config import (ConfigError, config_hash, dumps_config, load_config,
                     validate_config)
from .dynamics import (IntegrationError, ParticleSpec, TrajectoryEnsemble,
                       DeltaIC, GaussianIC, dump_ensemble, energy_balance,
                       free_potential, harmonic_potential, integrate_ensemble,
                       load_ensemble, quartic_potential, relaxation_curve,
                       stationary_guess_ic, tabulated_potential)
from .field import FieldSpec, autocorrelation_check, comb_cache_params, make_field
from .kinematics import (CoarseGrainSpec, classify_branch, density_estimate,
                         diffusion_sweep, estimate_D, estimate_u, estimate_v,
                         estimate_va)
from .reference import (gaussian_density, ou_ensemble,
                        ou_stationary_variance, ou_u_slope_equilibrium)
from .schrodinger import GridSpec, solve_stationary, velocity_fields


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


# ---------------------------------------------------------------------------
# comparison report

@dataclass
class ReportRow:
    """One observable compared across the two routes.

    tolerance_kind semantics: rtol passes when |sed - ref| <= tol |ref|;
    pulls when |pull| <= tol; max-abs when sed_value <= tol (sed_value is
    already a normalized magnitude such as a max |z|); min-ratio when
    sed_value >= tol; exact when sed_value == ref_value.
    """

    observable: str
    sed_value: float
    sed_error: float
    ref_value: float
    pull: float
    tolerance: float
    tolerance_kind: str
    passed: bool
    sed_provenance: str
    ref_provenance: str
    note: str = ""


@dataclass
class ComparisonReport:
    pipeline: str
    config_hash: str
    code_version: str
    rows: list = dc_field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def exit_code(self) -> int:
        return 0 if self.all_pass else 1

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "rows": [vars(r).copy() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        rep = cls(pipeline=d["pipeline"], config_hash=d["config_hash"],
                  code_version=d["code_version"])
        rep.rows = [ReportRow(**r) for r in d["rows"]]
        return rep

    def to_text(self) -> str:
        head = (f"pipeline: {self.pipeline}\n"
                f"config:   sha256 {self.config_hash}\n"
                f"code:     sedsim {self.code_version}\n")
        cols = ("observable", "sim value", "sim err", "reference", "pull",
                "tol", "kind", "result")
        widths = [26, 14, 11, 14, 9, 9, 10, 6]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for r in self.rows:
            cells = [r.observable, _fmt(r.sed_value), _fmt(r.sed_error),
                     _fmt(r.ref_value), _fmt(r.pull), _fmt(r.tolerance),
                     r.tolerance_kind, "pass" if r.passed else "FAIL"]
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
            if r.note:
                lines.append(f"    note: {r.note}")
        return head + "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "-"
        return f"{x:.6g}"
    return str(x)


def _make_row(observable, kind, sed, ref, tol, err=math.nan,
              sed_prov="", ref_prov="", note="") -> ReportRow:
    pull = math.nan
    if not math.isnan(err) and err > 0:
        pull = (sed - ref) / err
    if kind == "rtol":
        passed = abs(sed - ref) <= tol * abs(ref)
    elif kind == "pulls":
        passed = not math.isnan(pull) and abs(pull) <= tol
    elif kind == "max-abs":
        passed = abs(sed) <= tol
    elif kind == "min-ratio":
        passed = sed >= tol
    elif kind == "exact":
        passed = sed == ref
    else:
        raise ValueError(f"unknown tolerance kind {kind!r}")
    return ReportRow(observable=observable, sed_value=float(sed),
                     sed_error=float(err), ref_value=float(ref), pull=float(pull),
                     tolerance=float(tol), tolerance_kind=kind, passed=bool(passed),
                     sed_provenance=sed_prov, ref_provenance=ref_prov, note=note)


# ---------------------------------------------------------------------------
# config -> domain objects

def _tol(cfg: dict, key: str, default: float) -> float:
    return float(cfg.get("tolerances", {}).get(key, default))


def _build_field_spec(cfg: dict) -> FieldSpec:
    f = cfg["field"]
    return FieldSpec(
        hbar=float(f.get("hbar", 1.0)), c=float(f.get("c", 1.0)),
        omega_cutoff=float(f["omega_cutoff"]),
        omega_min=float(f.get("omega_min", 0.0)),
        n_modes=int(f["n_modes"]),
        mode_spacing=f.get("mode_spacing", "uniform"),
        components=int(f.get("components", 1)),
    )


def _build_potential(pcfg: dict, mass: float):
    pot = pcfg["potential"]
    kind = pot["kind"]
    if kind == "harmonic":
        if "omega0" not in pot:
            raise ConfigError("harmonic potential needs particle.potential.omega0")
        return harmonic_potential(float(pot["omega0"]), mass)
    if kind == "free":
        return free_potential()
    if kind == "quartic":
        if "k4" not in pot:
            raise ConfigError("quartic potential needs particle.potential.k4")
        return quartic_potential(float(pot["k4"]))
    if kind == "tabulated":
        if "x" not in pot or "V" not in pot:
            raise ConfigError("tabulated potential needs particle.potential.x and .V")
        return tabulated_potential(pot["x"], pot["V"])
    raise ConfigError(f"unknown potential kind {kind!r}")


def _build_particle(cfg: dict, c: float = 1.0) -> ParticleSpec:
    p = cfg["particle"]
    mass = float(p["mass"])
    potential = _build_potential(p, mass)
    has_tau, has_charge = "tau" in p, "charge" in p
    if has_tau and has_charge:
        raise ConfigError("particle: give tau or charge, not both")
    if has_tau:
        return ParticleSpec.from_tau(mass, float(p["tau"]), potential, c=c)
    if has_charge:
        return ParticleSpec.from_charge(mass, float(p["charge"]), potential, c=c)
    return ParticleSpec(mass=mass, charge=0.0, tau=0.0, potential=potential, c=c)


def _build_ic(cfg: dict, particle: ParticleSpec, hbar: float):
    ic = cfg["ensemble"]["initial_conditions"]
    sampler = ic["sampler"]
    if sampler == "delta":
        return DeltaIC(float(ic.get("x0", 0.0)), float(ic.get("v0", 0.0)))
    if sampler == "gaussian":
        return GaussianIC(x_std=float(ic.get("x_std", 0.0)),
                          v_std=float(ic.get("v_std", 0.0)),
                          x_mean=float(ic.get("x0", 0.0)),
                          v_mean=float(ic.get("v0", 0.0)))
    if sampler == "stationary-guess":
        omega0 = particle.potential.params.get("omega0")
        if omega0 is None:
            raise ConfigError("stationary-guess sampler needs a harmonic potential")
        return stationary_guess_ic(hbar, particle.mass, omega0)
    raise ConfigError(f"unknown initial-condition sampler {sampler!r}")


def _resolve_time_grid(fspec: FieldSpec, t0: float, dt_cfg: float,
                       t_final: float):
    """Shrink dt so the half-step grid lands exactly on the mode-comb FFT
    grid; returns (dt, n_steps, n_fft). The resolved dt never exceeds the
    configured one, so the step-size precondition is preserved."""
    span = t_final - t0
    if span <= 0 or dt_cfg <= 0:
        raise ConfigError("time block must have t_final > t0 and dt > 0")
    h, n_fft = comb_cache_params(fspec, h_target=dt_cfg / 2.0)
    for _ in range(8):
        n_steps = max(1, int(math.ceil(span / (2.0 * h) - 1e-9)))
        if n_fft >= 2 * n_steps + 1:
            return 2.0 * h, n_steps, n_fft
        h, n_fft = comb_cache_params(fspec, h_target=dt_cfg / 2.0,
                                     min_points=2 * n_steps + 1)
    raise PipelineError("stage 'time-grid' failed: comb grid did not converge")


def _refs_in_window(ens: TrajectoryEnsemble, window, lag: float,
                    thin_steps: int):
    """Recorded times inside the window with room for +/- lag, thinned."""
    lo = max(window[0], ens.times[0] + lag)
    hi = min(window[1], ens.times[-1] - lag)
    sel = np.nonzero((ens.times >= lo - 1e-9) & (ens.times <= hi + 1e-9))[0]
    sel = sel[::max(1, thin_steps)]
    if sel.size == 0:
        raise PipelineError(
            f"no recorded times inside window {list(window)} with lag {lag:g}")
    return tuple(float(t) for t in ens.times[sel])


def _snap_lag(ens: TrajectoryEnsemble, lag) -> float:
    """Nearest positive multiple of the recorded step, as the exact float
    product so downstream multiple-of-grid checks see a zero remainder."""
    k = max(1, int(round(float(lag) / ens.rec_dt)))
    return k * ens.rec_dt


def _cg_from_config(cfg: dict, delta_t: float, reference_times,
                    x_range=None) -> CoarseGrainSpec:
    cg = cfg["coarse_grain"]
    bins = cg["x_bins"]
    return CoarseGrainSpec(
        delta_t=delta_t,
        x_bins=int(bins["n"]),
        x_range=x_range if x_range is not None
        else (float(bins["min"]), float(bins["max"])),
        reference_times=reference_times,
        min_count=int(cg.get("min_count", 25)),
    )


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, PipelineError):
        raise
    except Exception as exc:
        raise PipelineError(f"stage {name!r} failed: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_xy_csv(path: Path, header: str, columns) -> None:
    arrays = [np.asarray(c) for c in columns]
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in zip(*arrays):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# sed_harmonic_ground pipeline

def _pipeline_sed_harmonic_ground(cfg: dict, run_dir: Path) -> ComparisonReport:
    fspec = _build_field_spec(cfg)
    particle = _build_particle(cfg, c=fspec.c)
    omega0 = particle.potential.params.get("omega0")
    if omega0 is None:
        raise ConfigError("sed_harmonic_ground requires a harmonic potential")
    tcfg = cfg["time"]
    t0 = float(tcfg.get("t0", 0.0))
    dt, n_steps, _ = _stage("time-grid", _resolve_time_grid, fspec, t0,
                            float(tcfg["dt"]), float(tcfg["t_final"]))
    stride = int(tcfg.get("record_stride", 1))
    ic = _build_ic(cfg, particle, fspec.hbar)
    ecf = cfg["ensemble"]
    master_seed = int(cfg["seeds"]["master_seed"])

    ens = _stage("integrate", integrate_ensemble,
                 particle, fspec, ic, t0, dt, n_steps,
                 int(ecf["n_traj"]), master_seed, record_stride=stride,
                 n_workers=int(ecf.get("n_workers", 1)),
                 store_field=bool(ecf.get("store_field", True)))

    dump_fmt = cfg["outputs"].get("ensemble_dump", "binary")
    if dump_fmt != "none":
        _stage("dump", dump_ensemble, ens, run_dir / "ensemble", dump_fmt)

    window = tuple(float(x) for x in cfg["coarse_grain"]["t_window"])
    balance = _stage("energy-balance", energy_balance, ens, particle, window)
    _write_json(run_dir / "balance.json", balance.to_dict())

    rtimes, rcurve = _stage("relaxation", relaxation_curve, ens, particle)
    _write_xy_csv(run_dir / "relaxation.csv", "t,mean_energy", (rtimes, rcurve))

    # coarse-grained estimators on the stationary window; declared lags are
    # snapped to the recorded grid (the comb-resolved dt is not a round number)
    cg = cfg["coarse_grain"]
    delta_t = _snap_lag(ens, cg["delta_t"])
    thin_steps = max(1, int(round(float(cg.get("thin_time", 0.0)) / ens.rec_dt)))
    fields_dir = run_dir / "fields"
    fields_dir.mkdir(parents=True, exist_ok=True)

    def est_spec(lag):
        return _cg_from_config(
            cfg, lag, _refs_in_window(ens, window, lag, thin_steps))

    spec0 = est_spec(delta_t)
    v_field = _stage("estimate-v", estimate_v, ens, spec0)
    u_field = _stage("estimate-u", estimate_u, ens, spec0)
    va_est = _stage("estimate-va", estimate_va, ens, spec0)
    rho_field = _stage("density", density_estimate, ens, spec0)
    v_field.to_csv(fields_dir / "v.csv")
    u_field.to_csv(fields_dir / "u.csv")
    va_est.backward_difference.to_csv(fields_dir / "va_direct.csv")
    va_est.v_minus_u.to_csv(fields_dir / "va_combo.csv")
    rho_field.to_csv(fields_dir / "rho.csv")

    sweep_lags = cg.get("delta_t_sweep")
    if sweep_lags is None:
        sweep_lags = [ens.rec_dt * k for k in (1, 2, 3, 4, 6, 10)]
    sweep_lags = list(dict.fromkeys(_snap_lag(ens, x) for x in sweep_lags))
    max_lag = max(sweep_lags)
    sweep = _stage("diffusion-sweep", diffusion_sweep, ens,
                   est_spec(max_lag), sweep_lags)
    _write_json(run_dir / "dsweep.json", sweep.to_dict())

    branch = _stage("branch-classifier", classify_branch, ens, spec0,
                    particle.mass, particle.potential.f,
                    D=None, time_derivative="omitted")
    _write_json(run_dir / "branch.json", {
        **branch.to_dict(),
        "time_derivative": "omitted",
        "warnings": branch.reports[+1].warnings,
    })

    # field-synthesis cross-check: fresh realizations, never the driving ones
    n_ac = 200
    ac_reals = [make_field(fspec, (master_seed, i, 2)) for i in range(n_ac)]
    ac_lags = [0.0, 0.5 * math.pi / fspec.omega_cutoff,
               2.0 * math.pi / fspec.omega_cutoff]
    ac = _stage("field-autocorrelation", autocorrelation_check, ac_reals, ac_lags)
    _write_json(run_dir / "field_autocorr.json", ac)

    # quantum reference: eigensolve of the wave equation on a grid
    d_ref = fspec.hbar / (2.0 * particle.mass)
    sigma0 = math.sqrt(fspec.hbar / (2.0 * particle.mass * omega0))
    gcfg = cfg.get("grid")
    if gcfg is None:
        grid = GridSpec(-8.0 * sigma0, 8.0 * sigma0, 1001)
    else:
        grid = GridSpec(float(gcfg["x_min"]), float(gcfg["x_max"]),
                        int(gcfg["n_points"]))
    energies, states = _stage(
        "reference-eigensolve", solve_stationary, grid,
        particle.potential.V, particle.mass, d_ref, 1)
    psi0 = states[0]
    e0 = float(energies[0])
    x_var_ref = psi0.position_var()
    rho_ref = np.interp(rho_field.x_centers, grid.x, psi0.density(),
                        left=0.0, right=0.0)
    v_ref, u_ref, msk = velocity_fields(psi0)
    u_ref_bins = np.interp(rho_field.x_centers, grid.x[msk], u_ref[msk])
    _write_xy_csv(run_dir / "density_qm.csv", "x,rho_qm",
                  (rho_field.x_centers, rho_ref))
    _write_xy_csv(run_dir / "velocity_qm.csv", "x,v_qm,u_qm",
                  (rho_field.x_centers, np.zeros_like(u_ref_bins), u_ref_bins))

    # simulation-side window statistics
    sel = (ens.times >= window[0]) & (ens.times <= window[1])
    ok = ens.ok_mask()
    xw = ens.positions[ok][:, sel]
    per_traj_x2 = np.mean(xw**2, axis=1)
    xbar = float(np.mean(xw))
    x_var_sed = float(np.mean(per_traj_x2)) - xbar**2
    x_var_se = float(np.std(per_traj_x2, ddof=1) / math.sqrt(per_traj_x2.shape[0]))

    if sweep.plateau_found:
        d_sed = sweep.value
        d_err = min(e.std_error for e in sweep.estimates)
        d_note = "plateau value"
    else:
        best = int(np.argmax([e.value for e in sweep.estimates]))
        d_sed = sweep.estimates[best].value
        d_err = sweep.estimates[best].std_error
        d_note = (f"{sweep.flag}; quoting the sweep maximum at "
                  f"delta_t={sweep.estimates[best].delta_t:g}")

    imbalance = (abs(balance.mean_absorbed_power - balance.mean_radiated_power)
                 / balance.mean_radiated_power)
    max_z = max(abs(float(z)) for z in ac["z_score"])

    relax_scale = 1.0 / max(particle.tau * omega0**2, 1e-300)
    notes = []
    if float(tcfg["t_final"]) - t0 < 5.0 * relax_scale:
        notes.append("run shorter than 5 energy relaxation times")
    if not balance.stationary:
        notes.append("window not stationary by energy-trend test")
    notes.extend(balance.warnings)
    notes.extend(ens.meta.get("warnings", []))

    ens_prov = f"trajectory ensemble, window {list(window)} (ensemble/, balance.json)"
    eig_prov = "wave-equation eigensolve on grid (density_qm.csv)"
    report = ComparisonReport(pipeline="sed_harmonic_ground",
                              config_hash=config_hash(cfg),
                              code_version=__version__)
    report.rows = [
        _make_row("mean_energy", "rtol", balance.mean_energy, e0,
                  _tol(cfg, "mean_energy", 0.05), err=balance.se_energy,
                  sed_prov=ens_prov, ref_prov=eig_prov,
                  note="; ".join(notes)),
        _make_row("position_variance", "rtol", x_var_sed, x_var_ref,
                  _tol(cfg, "position_variance", 0.05), err=x_var_se,
                  sed_prov=ens_prov, ref_prov=eig_prov),
        _make_row("pooled_D", "rtol", d_sed, d_ref,
                  _tol(cfg, "pooled_D", 0.10), err=d_err,
                  sed_prov="diffusion sweep over recorded lags (dsweep.json)",
                  ref_prov="hbar / (2 m) from config constants",
                  note=d_note),
        _make_row("energy_balance", "max-abs", imbalance, 0.0,
                  _tol(cfg, "energy_balance", 0.10),
                  sed_prov="absorbed vs radiated power on window (balance.json)",
                  ref_prov="stationarity condition: means compensate exactly"),
        _make_row("branch_selected", "exact", branch.selected_lam, +1,
                  0.0,
                  sed_prov="residual classifier on window fields (branch.json)",
                  ref_prov="wave-equation branch sign"),
        _make_row("branch_margin", "min-ratio", branch.ratio,
                  math.nan, _tol(cfg, "classifier_margin", 5.0),
                  sed_prov="rejected/accepted residual ratio (branch.json)",
                  ref_prov="discrimination margin required by config"),
        _make_row("field_autocorr_max_z", "max-abs", max_z, 0.0,
                  _tol(cfg, "autocorr_z", 3.0),
                  sed_prov=f"{n_ac} fresh field realizations (field_autocorr.json)",
                  ref_prov="band-limited spectral integral, closed form"),
    ]
    return report


# ---------------------------------------------------------------------------
# ou_calibration pipeline

def _pipeline_ou_calibration(cfg: dict, run_dir: Path) -> ComparisonReport:
    particle = _build_particle(cfg)
    stiffness = particle.potential.params.get("stiffness")
    if stiffness is None:
        raise ConfigError("ou_calibration requires a harmonic potential")
    lv = cfg["langevin"]
    friction = float(lv["friction"])
    d0 = float(lv["D0"])
    if friction <= 0 or d0 <= 0:
        raise ConfigError("langevin.friction and langevin.D0 must be positive")
    theta = stiffness / (particle.mass * friction)
    tcfg = cfg["time"]
    t0 = float(tcfg.get("t0", 0.0))
    dt = float(tcfg["dt"])
    n_steps = int(round((float(tcfg["t_final"]) - t0) / dt))
    master_seed = int(cfg["seeds"]["master_seed"])
    n_traj = int(cfg["ensemble"]["n_traj"])

    eq = _stage("sample-equilibrium", ou_ensemble, theta, d0, n_traj, dt,
                n_steps, (master_seed, 0), x0="stationary", t0=t0)
    n_relax = int(lv.get("n_traj_relax", 500_000))
    relax = _stage("sample-relaxing", ou_ensemble, theta, d0, n_relax, dt,
                   n_steps, (master_seed, 1), x0=float(lv.get("x_start", 0.0)),
                   t0=t0)

    dump_fmt = cfg["outputs"].get("ensemble_dump", "binary")
    if dump_fmt != "none":
        _stage("dump", dump_ensemble, eq, run_dir / "ensemble", dump_fmt)
        _stage("dump-relaxing", dump_ensemble, relax,
               run_dir / "ensemble_relaxing", dump_fmt)

    cg = cfg["coarse_grain"]
    window = tuple(float(x) for x in cg["t_window"])
    delta_t = _snap_lag(eq, cg["delta_t"])
    thin_steps = max(1, int(round(float(cg.get("thin_time", 1e30)) / eq.rec_dt)))

    def est_spec(lag):
        return _cg_from_config(
            cfg, lag, _refs_in_window(eq, window, lag, thin_steps))

    spec0 = est_spec(delta_t)
    v_field = _stage("estimate-v", estimate_v, eq, spec0)
    u_field = _stage("estimate-u", estimate_u, eq, spec0)
    va_est = _stage("estimate-va", estimate_va, eq, spec0)
    rho_field = _stage("density", density_estimate, eq, spec0)
    fields_dir = run_dir / "fields"
    fields_dir.mkdir(parents=True, exist_ok=True)
    v_field.to_csv(fields_dir / "v.csv")
    u_field.to_csv(fields_dir / "u.csv")
    va_est.backward_difference.to_csv(fields_dir / "va_direct.csv")
    va_est.v_minus_u.to_csv(fields_dir / "va_combo.csv")
    rho_field.to_csv(fields_dir / "rho.csv")

    sweep_lags = cg.get("delta_t_sweep")
    if sweep_lags is None:
        sweep_lags = [eq.rec_dt * k for k in (1, 2, 4, 10)]
    sweep_lags = list(dict.fromkeys(_snap_lag(eq, x) for x in sweep_lags))
    max_lag = max(sweep_lags)
    sweep = _stage("diffusion-sweep", diffusion_sweep, eq, est_spec(max_lag),
                   sweep_lags)
    _write_json(run_dir / "dsweep.json", sweep.to_dict())

    # branch classification on the early relaxing window, time derivatives
    # measured across three reference times
    t_star = 2.0 / friction
    rw = lv.get("t_relax_window")
    if rw is None:
        rw = [t_star - 2.0 * delta_t, t_star + 2.0 * delta_t]
    lo = eq.rec_dt * round((float(rw[0]) - t0) / eq.rec_dt) + t0
    hi = eq.rec_dt * round((float(rw[1]) - t0) / eq.rec_dt) + t0
    refs = (lo, (lo + hi) / 2.0, hi)
    mid_idx = int(round((refs[1] - t0) / relax.rec_dt))
    s_star = float(np.var(relax.positions[:, mid_idx]))
    span = 3.2 * math.sqrt(s_star)
    # coarser bins than the estimator grid: the classifier needs smooth
    # second derivatives over the occupied span more than x resolution
    relax_spec = CoarseGrainSpec(
        delta_t=delta_t, x_bins=int(cg.get("classifier_bins", 16)),
        x_range=(-span, span), reference_times=refs,
        min_count=int(cg.get("min_count", 25)))
    branch = _stage("branch-classifier", classify_branch, relax, relax_spec,
                    particle.mass, particle.potential.f,
                    D=None, time_derivative="measured")
    _write_json(run_dir / "branch.json", {
        **branch.to_dict(),
        "time_derivative": "measured",
        "reference_times": list(refs),
        "relaxing_variance_at_mid": s_star,
        "warnings": branch.reports[+1].warnings,
    })

    # closed-form references
    sigma2 = ou_stationary_variance(theta, d0)
    u_slope_ref = -d0 / sigma2          # u(x) = -D0 x / sigma^2 = -theta x
    u_slope_finite = ou_u_slope_equilibrium(theta, delta_t)
    centers = u_field.x_centers
    _write_xy_csv(run_dir / "density_qm.csv", "x,rho_qm",
                  (centers, gaussian_density(centers, math.sqrt(sigma2))))
    _write_xy_csv(run_dir / "velocity_qm.csv", "x,v_qm,u_qm",
                  (centers, np.zeros_like(centers), u_slope_ref * centers))

    vv, uu = v_field.valid, u_field.valid
    pulls_v = np.abs(v_field.values[vv]) / v_field.std_error[vv]
    pulls_u = (np.abs(u_field.values[uu] - u_slope_ref * u_field.x_centers[uu])
               / u_field.std_error[uu])
    pulls_d = [abs(e.value - d0) / e.std_error for e in sweep.estimates]

    x_ref2 = np.square(eq.positions[:, _first_ref_index(eq, spec0)])
    var_sed = float(np.mean(x_ref2))
    var_se = float(np.std(x_ref2, ddof=1) / math.sqrt(eq.n_traj))

    eq_prov = "equilibrium-start exact sampler (ensemble/)"
    relax_prov = "cold-start exact sampler, relaxing window (ensemble_relaxing/)"
    report = ComparisonReport(pipeline="ou_calibration",
                              config_hash=config_hash(cfg),
                              code_version=__version__)
    report.rows = [
        _make_row("position_variance", "pulls", var_sed, sigma2,
                  _tol(cfg, "variance_pulls", 3.0), err=var_se,
                  sed_prov=eq_prov, ref_prov="closed form D0/theta"),
        _make_row("flow_velocity_max_pull", "max-abs", float(np.max(pulls_v)),
                  0.0, _tol(cfg, "flow_velocity_pulls", 3.0),
                  sed_prov=f"binned v estimator, {int(vv.sum())} valid bins "
                           "(fields/v.csv)",
                  ref_prov="stationary state: v = 0 exactly"),
        _make_row("osmotic_velocity_max_pull", "max-abs", float(np.max(pulls_u)),
                  0.0, _tol(cfg, "osmotic_velocity_pulls", 3.0),
                  sed_prov=f"binned u estimator, {int(uu.sum())} valid bins "
                           "(fields/u.csv)",
                  ref_prov="closed form u = -D0 x / sigma^2",
                  note=f"finite-lag expectation slope {u_slope_finite!r}"),
        _make_row("diffusion_sweep_max_pull", "max-abs", float(max(pulls_d)),
                  0.0, _tol(cfg, "diffusion_pulls", 3.0),
                  sed_prov=f"subtracted increment variance at "
                           f"{len(pulls_d)} lags (dsweep.json)",
                  ref_prov="closed form D0 at every lag"),
        _make_row("diffusion_plateau_found", "exact",
                  int(sweep.plateau_found), 1, 0.0,
                  sed_prov="plateau search over the lag ladder (dsweep.json)",
                  ref_prov="scale separation expected for an exact OU",
                  note=sweep.flag or ""),
        _make_row("va_consistent_fraction", "min-ratio",
                  va_est.consistent_fraction, math.nan,
                  _tol(cfg, "va_consistent_fraction", 0.9),
                  sed_prov="backward-difference route vs v-u route "
                           "(fields/va_direct.csv, fields/va_combo.csv)",
                  ref_prov="identity v_a = v - u, bin by bin within 2 SE"),
        _make_row("branch_selected", "exact", branch.selected_lam, -1, 0.0,
                  sed_prov=relax_prov + " (branch.json)",
                  ref_prov="classical diffusion branch sign"),
        _make_row("branch_margin", "min-ratio", branch.ratio, math.nan,
                  _tol(cfg, "classifier_margin", 5.0),
                  sed_prov="rejected/accepted residual ratio (branch.json)",
                  ref_prov="discrimination margin required by config"),
    ]
    return report


def _first_ref_index(ens: TrajectoryEnsemble, spec: CoarseGrainSpec) -> int:
    t = spec.reference_times[0]
    return int(round((t - ens.t0) / ens.rec_dt))


PIPELINES = {
    "sed_harmonic_ground": _pipeline_sed_harmonic_ground,
    "ou_calibration": _pipeline_ou_calibration,
}


# ---------------------------------------------------------------------------
# run orchestration

@dataclass
class RunResult:
    run_dir: Path
    report: ComparisonReport
    exit_code: int


def run_experiment(config, output_root=None) -> RunResult:
    """Execute a registered pipeline from a config dict or file path.

    The run directory (outputs.directory, resolved under output_root or the
    current directory) receives a verbatim copy of the config, every stage
    artifact, report.json/report.txt, and run.json. Nothing is written if
    validation fails. Exit code 0 means every report row passed.
    """
    if isinstance(config, (str, Path)):
        cfg = load_config(config)
    else:
        cfg = validate_config(config)
    pipeline = cfg["experiment"]

    root = Path(output_root) if output_root else Path.cwd()
    run_dir = root / cfg["outputs"]["directory"]
    if run_dir.exists() and any(run_dir.iterdir()):
        raise ConfigError(f"output directory {run_dir} exists and is not empty")
    run_dir.mkdir(parents=True, exist_ok=True)

    (run_dir / "config.json").write_text(dumps_config(cfg))
    start = _time.monotonic()
    report = PIPELINES[pipeline](cfg, run_dir)
    elapsed = _time.monotonic() - start

    _write_json(run_dir / "report.json", report.to_dict())
    (run_dir / "report.txt").write_text(report.to_text())
    _write_json(run_dir / "run.json", {
        "pipeline": pipeline,
        "config_hash": report.config_hash,
        "code_version": __version__,
        "exit_code": report.exit_code,
        "wall_seconds": elapsed,
    })
    return RunResult(run_dir=run_dir, report=report,
                     exit_code=report.exit_code)


def load_report(run_dir) -> ComparisonReport:
    path = Path(run_dir) / "report.json"
    if not path.exists():
        raise ConfigError(f"no report.json under {run_dir}")
    return ComparisonReport.from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# plot-data emission

def _read_csv_columns(path: Path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    return cols


_GP_TEMPLATE = """set terminal pngcairo size 900,600
set output "{name}.png"
set title "{title}"
set xlabel "{xlabel}"
set ylabel "{ylabel}"
{extra}plot {plots}
"""


def _write_figure(plot_dir: Path, name: str, title: str, xlabel: str,
                  ylabel: str, header: str, columns, plots: str,
                  extra: str = "") -> list:
    dat = plot_dir / f"{name}.dat"
    _write_xy_csv(dat, header, columns)
    # gnuplot reads whitespace-separated columns; rewrite commas
    dat.write_text(dat.read_text().replace(",", " "))
    gp = plot_dir / f"{name}.gp"
    gp.write_text(_GP_TEMPLATE.format(name=name, title=title, xlabel=xlabel,
                                      ylabel=ylabel, plots=plots, extra=extra))
    return [dat, gp]


def emit_plot_data(run_dir) -> list:
    """Write gnuplot-ready .dat + .gp pairs for a completed run.

    Figures depend on the pipeline: density overlay, velocity overlays and
    the diffusion sweep always; relaxation curve and the energy-balance
    window trace for field-driven runs. Missing inputs raise with the
    absent artifact named.
    """
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise PipelineError(f"missing artifact: {cfg_path}")
    cfg = load_config(cfg_path)
    pipeline = cfg["experiment"]
    plot_dir = run_dir / "plots"
    plot_dir.mkdir(exist_ok=True)
    written = []

    def need(rel: str) -> Path:
        p = run_dir / rel
        if not p.exists():
            raise PipelineError(f"missing artifact: {p}")
        return p

    rho = _read_csv_columns(need("fields/rho.csv"))
    rho_qm = _read_csv_columns(need("density_qm.csv"))
    written += _write_figure(
        plot_dir, "density_overlay", "Stationary density: ensemble vs reference",
        "x", "rho", "x,rho_sed,rho_sed_err,rho_qm",
        (rho["x"], rho["value"], rho["std_error"], rho_qm["rho_qm"]),
        'u 1:2:3 w yerrorbars t "ensemble", "density_overlay.dat" u 1:4 w l t "reference"',
        extra='set style data points\n')

    v = _read_csv_columns(need("fields/v.csv"))
    u = _read_csv_columns(need("fields/u.csv"))
    vqm = _read_csv_columns(need("velocity_qm.csv"))
    written += _write_figure(
        plot_dir, "velocity_overlay", "Drift fields: ensemble vs reference",
        "x", "velocity", "x,v_sed,v_err,u_sed,u_err,v_qm,u_qm",
        (v["x"], v["value"], v["std_error"], u["value"], u["std_error"],
         vqm["v_qm"], vqm["u_qm"]),
        'u 1:2:3 w yerrorbars t "v", "velocity_overlay.dat" u 1:4:5 w yerrorbars t "u", '
        '"velocity_overlay.dat" u 1:6 w l t "v ref", '
        '"velocity_overlay.dat" u 1:7 w l t "u ref"')

    dsweep = json.loads(need("dsweep.json").read_text())
    order = np.argsort(np.asarray(dsweep["delta_ts"]))
    written += _write_figure(
        plot_dir, "dsweep", "Diffusion estimate vs lag", "delta_t", "D",
        "delta_t,D,D_err",
        (np.asarray(dsweep["delta_ts"])[order],
         np.asarray(dsweep["values"])[order],
         np.asarray(dsweep["std_errors"])[order]),
        'u 1:2:3 w yerrorlines t "D(delta_t)"',
        extra="set logscale x\n")

    if pipeline == "sed_harmonic_ground":
        relax = _read_csv_columns(need("relaxation.csv"))
        written += _write_figure(
            plot_dir, "relaxation", "Ensemble mean energy", "t", "E",
            "t,mean_energy", (relax["t"], relax["mean_energy"]),
            'u 1:2 w l t "mean energy"')

        ens = load_ensemble(need("ensemble"))
        if ens.field_values is None:
            raise PipelineError(
                "missing artifact: ensemble field values "
                "(rerun with ensemble.store_field = true)")
        particle = _build_particle(cfg, c=float(cfg["field"].get("c", 1.0)))
        window = tuple(float(x) for x in cfg["coarse_grain"]["t_window"])
        sel = (ens.times >= window[0]) & (ens.times <= window[1])
        ok = ens.ok_mask()
        x = ens.positions[ok][:, sel]
        vv = ens.velocities[ok][:, sel]
        ef = ens.field_values[ok][:, sel]
        m, e, tau = particle.mass, particle.charge, particle.tau
        acc = (particle.potential.f(x) + tau * particle.potential.fprime(x) * vv
               + e * ef) / m
        absorbed = np.mean(e * ef * vv, axis=0)
        radiated = np.mean(m * tau * acc**2, axis=0)
        written += _write_figure(
            plot_dir, "balance_trace", "Energy balance across the window",
            "t", "power", "t,absorbed,radiated",
            (ens.times[sel], absorbed, radiated),
            'u 1:2 w l t "absorbed", "balance_trace.dat" u 1:3 w l t "radiated"')

    return written
