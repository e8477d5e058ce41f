"""Configuration-driven experiments that check the frame reduction numerically.

Every experiment takes a validated :class:`~dispersive_sme.config.RunConfig`
and an output directory, writes its CSV series there and returns an
:class:`ExperimentReport`. Verdicts are computed only from the tolerances in
the config, which the report echoes. CSV files never contain timings, so
re-running with the same config and seed reproduces them byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import amplitudes as am
from . import hilbert as hb
from . import models as md
from . import reconstruction as rc
from . import sme
from .config import ConfigError, RunConfig, system_state
from .noise import NoiseSource, coarsen
from .records import write_series_csv


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    metrics: dict
    tolerances: dict
    passed: bool
    csv_paths: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "experiment": self.name,
            "passed": self.passed,
            "metrics": self.metrics,
            "tolerances": self.tolerances,
            "parameters": self.parameters,
            "csv": self.csv_paths,
            "timings_s": self.timings,
            "notes": self.notes,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_short(v)}" for k, v in self.metrics.items())
        return f"{self.name}: {verdict} ({parts})"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


# --- building blocks from a config -------------------------------------------


def drive_from(cfg: RunConfig) -> am.DriveSignal:
    d = cfg["drive"]
    if d["kind"] == "constant":
        return am.DriveSignal.constant(d["u0"])
    if d["kind"] == "sinusoid":
        return am.DriveSignal.sinusoid(d["u0"], d["omega"])
    return am.DriveSignal.piecewise(d["table"])


def amplitude_params(cfg: RunConfig) -> am.AmplitudeParams:
    ph = cfg["physics"]
    if cfg.system == "qubit":
        return am.AmplitudeParams.qubit(ph["kappa"], ph["chi"])
    if cfg.system == "qudit":
        return am.AmplitudeParams.qudit(ph["kappa"], ph["chis"])
    return am.AmplitudeParams.multicavity(ph["kappas"], ph["chis"], ph["deltas"])


def kappas_of(cfg: RunConfig) -> np.ndarray:
    ph = cfg["physics"]
    return np.asarray(ph["kappas"] if cfg.system == "multicavity" else [ph["kappa"]], dtype=float)


def kappa_total(cfg: RunConfig) -> float:
    """Decay rate of the summed photon number in the single-cavity classes."""
    return float(kappas_of(cfg).sum())


def integrate_amplitudes(cfg: RunConfig, dt: float | None = None, T: float | None = None) -> am.AmplitudeTrajectory:
    num = cfg["numerics"]
    dt = num["dt"] if dt is None else dt
    T = num["T"] if T is None else T
    return am.integrate_params(amplitude_params(cfg), cfg["initial"]["alpha0"], drive_from(cfg), dt, T)


def build_model(cfg: RunConfig, frame: str, amp: am.AmplitudeTrajectory | None = None,
                efficiency: float | None = None, N: int | None = None) -> md.SMEModel:
    """``frame`` is ``"full"``, ``"displaced"`` or ``"reduced"``."""
    ph = cfg["physics"]
    eta = ph["efficiency"] if efficiency is None else efficiency
    drive = drive_from(cfg)
    Ns = cfg.truncations if N is None else (N,) * cfg.n_modes
    if frame != "full" and amp is None:
        raise ConfigError(f"the {frame} model needs an amplitude trajectory")
    if cfg.system == "qubit":
        if frame == "full":
            return md.full_qubit_cavity(ph["kappa"], ph["chi"], eta, drive, Ns[0])
        if frame == "displaced":
            return md.displaced_qubit_cavity(ph["kappa"], ph["chi"], eta, drive, amp, Ns[0])
        return md.reduced_qubit(ph["kappa"], eta, drive, amp)
    if cfg.system == "qudit":
        if frame == "full":
            return md.full_qudit(ph["kappa"], ph["chis"], eta, drive, Ns[0])
        if frame == "displaced":
            return md.displaced_qudit(ph["kappa"], ph["chis"], eta, drive, amp, Ns[0])
        return md.reduced_qudit(ph["kappa"], eta, drive, amp)
    if frame == "full":
        return md.full_multicavity(ph["kappas"], ph["chis"], ph["deltas"], eta, drive, Ns)
    if frame == "displaced":
        return md.displaced_multicavity(ph["kappas"], ph["chis"], ph["deltas"], eta, drive, amp, Ns)
    return md.reduced_multicavity(ph["kappas"], eta, drive, amp)


def displaced_initial(cfg: RunConfig, fock=None) -> np.ndarray:
    """``xi_S (x) |n_1><n_1| (x) ...`` with the configured (or given) Fock levels."""
    xi = system_state(cfg)
    levels = cfg["initial"]["cavity_fock"] if fock is None else fock
    return hb.tensor(xi, *(hb.fock_state(int(n), N) for n, N in zip(levels, cfg.truncations)))


def lab_initial(cfg: RunConfig) -> np.ndarray:
    """``rho_S (x) |alpha0><alpha0|`` on the truncated joint space."""
    xi = system_state(cfg)
    alphas = am.initial_amplitudes(cfg.n_levels, cfg["initial"]["alpha0"])
    return rc.reconstruct_joint(xi, alphas, cfg.truncations)


def _require_seed(cfg: RunConfig) -> int:
    if cfg.seed is None:
        raise ConfigError("seed is required for verification experiments (set seed or pass --seed)")
    return int(cfg.seed)


def _photons(rec: sme.TrajectoryRecord, n_modes: int) -> np.ndarray:
    return sum(rec.observables[f"n_mode{c}"] for c in range(n_modes))


def _min_eig(*records) -> float:
    vals = [np.nanmin(r.observables["min_eigenvalue"]) for r in records]
    return float(min(vals))


def _params(cfg: RunConfig, *sections) -> dict:
    js = cfg.to_jsonable()
    return {s or "top": js[s or "top"] for s in ("", "physics", "drive", "truncation", "initial", "numerics", *sections)}


def _tols(cfg: RunConfig, *keys) -> dict:
    return {k: cfg["tolerances"][k] for k in keys}


def _system_block(states: np.ndarray, dims) -> np.ndarray:
    """Vacuum block ``<0|xi|0>`` of each joint state (system factor first)."""
    n_s = dims[0]
    m = int(np.prod(dims[1:]))
    return states.reshape(len(states), n_s, m, n_s, m)[:, :, 0, :, 0]


# --- invariance ----------------------------------------------------------------


def _output_dir(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def exp_invariance(cfg: RunConfig, out_dir) -> ExperimentReport:
    """Displaced-frame run from ``xi_S (x) vacuum`` against the reduced SME under the same ``dw``."""
    out = _output_dir(out_dir)
    seed = _require_seed(cfg)
    num, tol = cfg["numerics"], cfg["tolerances"]
    dt, T = num["dt"], num["T"]
    t0 = time.perf_counter()
    amp = integrate_amplitudes(cfg)
    t_amp = time.perf_counter() - t0
    disp = build_model(cfg, "displaced", amp)
    red = build_model(cfg, "reduced", amp)
    steps, _ = am.time_grid(dt, T)
    dw = NoiseSource(seed).increments(steps, dt)
    stride = num["stride"] or None
    t0 = time.perf_counter()
    xi0 = displaced_initial(cfg, fock=[0] * cfg.n_modes)
    r_d = sme.simulate(disp, xi0, dt, T, num["scheme"], dw, stride=stride, backend=num["backend"])
    t_disp = time.perf_counter() - t0
    t0 = time.perf_counter()
    r_r = sme.simulate(red, system_state(cfg), dt, T, num["scheme"], dw, stride=stride, backend=num["backend"])
    t_red = time.perf_counter() - t0

    photons = _photons(r_d, cfg.n_modes)
    blocks = _system_block(r_d.states, disp.space.dims)
    td = np.array([hb.trace_distance(b, x) for b, x in zip(blocks, r_r.states)])
    lam = _min_eig(r_d, r_r)
    td_bound = tol["invariance_td_per_dt"] * dt
    metrics = {
        "max_photon_number": float(np.max(np.abs(photons))),
        "max_trace_distance": float(np.max(td)),
        "min_eigenvalue": lam,
        "max_dy_difference_per_dt": float(np.max(np.abs(r_d.dy - r_r.dy)) / dt),
        "steps": int(steps),
    }
    passed = (metrics["max_photon_number"] <= tol["photon_max"]
              and metrics["max_trace_distance"] <= td_bound
              and lam >= tol["min_eigenvalue"])
    idx = r_d.state_indices
    path = out / "invariance.csv"
    write_series_csv(path, {
        "time": r_d.times[idx],
        "photon_number": photons[idx],
        "trace_distance": td,
        "min_eigenvalue": r_d.observables["min_eigenvalue"][idx],
    })
    tols = _tols(cfg, "photon_max", "invariance_td_per_dt", "min_eigenvalue")
    tols["trace_distance_bound"] = td_bound
    return ExperimentReport("invariance", _params(cfg), metrics, tols, bool(passed), [path.name],
                            {"amplitudes": t_amp, "displaced": t_disp, "reduced": t_red})


# --- convergence -------------------------------------------------------------


def _output_indices(cfg: RunConfig, dt: float, T: float) -> np.ndarray:
    times = cfg["experiment"]["output_times"]
    if times is None:
        times = np.linspace(0.0, T, 13)
    idx = np.rint(np.asarray(times, dtype=float) / dt).astype(int)
    if np.any(idx < 0) or np.any(idx > round(T / dt)):
        raise ConfigError("experiment.output_times must lie in [0, numerics.T]")
    return idx


def _decay_rate(times, values) -> float:
    ok = values > 0
    if np.count_nonzero(ok) < 2:
        return math.nan
    slope = np.polyfit(times[ok], np.log(values[ok]), 1)[0]
    return float(-slope)


def exp_convergence(cfg: RunConfig, out_dir) -> ExperimentReport:
    """Photon decay from a Fock component in the displaced frame."""
    if cfg.system == "multicavity":
        return _convergence_multicavity(cfg, out_dir)
    out = _output_dir(out_dir)
    num, tol, ex = cfg["numerics"], cfg["tolerances"], cfg["experiment"]
    dt, T = num["dt"], num["T"]
    eta = cfg["physics"]["efficiency"]
    n0 = float(sum(cfg["initial"]["cavity_fock"]))
    if n0 == 0:
        raise ConfigError("initial.cavity_fock must put photons in the cavity for the convergence experiment")
    kappa = kappa_total(cfg)
    amp = integrate_amplitudes(cfg)
    model = build_model(cfg, "displaced", amp)
    xi0 = displaced_initial(cfg)
    timings = {}
    t0 = time.perf_counter()
    if eta == 0:
        rec = sme.simulate(model, xi0, dt, T, num["scheme"], None, backend=num["backend"])
        timings["trajectory"] = time.perf_counter() - t0
        n = rec.observables["n_mode0"]
        check = np.asarray(ex["check_times"], dtype=float)
        if np.any(check > T + 1e-12):
            raise ConfigError("experiment.check_times exceed numerics.T")
        k = np.rint(check / dt).astype(int)
        ref = n0 * np.exp(-kappa * rec.times[k])
        rel = np.abs(n[k] - ref) / ref
        metrics = {"max_relative_error": float(np.max(rel)),
                   "min_eigenvalue": _min_eig(rec),
                   "fitted_decay_rate": _decay_rate(rec.times[k], n[k])}
        passed = metrics["max_relative_error"] <= tol["decay_rel"] and metrics["min_eigenvalue"] >= tol["min_eigenvalue"]
        path = out / "convergence.csv"
        write_series_csv(path, {"time": rec.times[k], "photon_number": n[k], "expected": ref, "relative_error": rel})
        return ExperimentReport("convergence", _params(cfg, "experiment"), metrics,
                                _tols(cfg, "decay_rel", "min_eigenvalue"), bool(passed), [path.name], timings)

    seed = _require_seed(cfg)
    ens = sme.ensemble(model, xi0, dt, T, num["scheme"], num["n_traj"], seed,
                       observables={"n_mode0": model.observables["n_mode0"]},
                       track_min_eigenvalue=num["track_min_eigenvalue"], n_jobs=num["n_jobs"],
                       backend=num["backend"])
    timings["ensemble"] = time.perf_counter() - t0
    k = _output_indices(cfg, dt, T)
    t = ens.times[k]
    mean = ens.mean["n_mode0"][k]
    se = ens.stderr("n_mode0")[k]
    ref = n0 * np.exp(-kappa * t)
    live = se > 0
    z = np.zeros_like(mean)
    z[live] = np.abs(mean[live] - ref[live]) / se[live]
    exact_dev = np.abs(mean[~live] - ref[~live])
    metrics = {
        "max_z": float(np.max(z)),
        "max_abs_deviation": float(np.max(np.abs(mean - ref))),
        "fitted_decay_rate": _decay_rate(t, mean),
        "n_traj": int(ens.n_traj),
    }
    passed = metrics["max_z"] <= tol["n_se"] and (exact_dev.size == 0 or np.max(exact_dev) <= 1e-9)
    if num["track_min_eigenvalue"]:
        metrics["min_eigenvalue"] = float(ens.min_eigenvalue)
        passed = passed and ens.min_eigenvalue >= tol["min_eigenvalue"]
    path = out / "convergence.csv"
    write_series_csv(path, {"time": t, "mean_photon_number": mean, "stderr": se, "expected": ref, "z": z})
    return ExperimentReport("convergence", _params(cfg, "experiment"), metrics,
                            _tols(cfg, "n_se", "min_eigenvalue"), bool(passed), [path.name], timings)


def _convergence_multicavity(cfg: RunConfig, out_dir) -> ExperimentReport:
    out = _output_dir(out_dir)
    num, tol, ex = cfg["numerics"], cfg["tolerances"], cfg["experiment"]
    dt, T = num["dt"], num["T"]
    eta = cfg["physics"]["efficiency"]
    n_c = cfg.n_modes
    xi0 = displaced_initial(cfg)
    if np.sum(cfg["initial"]["cavity_fock"]) == 0:
        raise ConfigError("initial.cavity_fock must put photons in a cavity for the convergence experiment")
    timings = {}
    paths = []

    # deterministic photon balance on a refined grid
    fine = dt / ex["residual_refine"]
    t0 = time.perf_counter()
    amp_f = integrate_amplitudes(cfg, dt=fine)
    m0 = build_model(cfg, "displaced", amp_f, efficiency=0.0)
    rec = sme.simulate(m0, xi0, fine, T, num["scheme"], None, backend=num["backend"])
    timings["deterministic"] = time.perf_counter() - t0
    total = _photons(rec, n_c)
    rate = np.gradient(total, fine)
    residual = rate + rec.observables["n_out"]
    interior = residual[1:-1]
    paths.append("photon_balance.csv")
    k = np.arange(0, len(total), max(1, int(round(dt / fine))))
    write_series_csv(out / paths[-1], {"time": rec.times[k], "total_photons": total[k],
                                       "n_out": rec.observables["n_out"][k], "residual": residual[k]})
    metrics = {
        "max_residual": float(np.max(np.abs(interior))),
        "deterministic_monotone": bool(np.all(np.diff(total) <= 0)),
        "min_eigenvalue": _min_eig(rec),
    }
    passed = metrics["max_residual"] <= tol["residual"] and metrics["min_eigenvalue"] >= tol["min_eigenvalue"]

    # ensemble monotonicity at the output times
    amp = integrate_amplitudes(cfg)
    model = build_model(cfg, "displaced", amp)
    k = _output_indices(cfg, dt, T)
    if eta > 0:
        seed = _require_seed(cfg)
        t0 = time.perf_counter()
        obs = {f"n_mode{c}": model.observables[f"n_mode{c}"] for c in range(n_c)}
        ens = sme.ensemble(model, xi0, dt, T, num["scheme"], num["n_traj"], seed, observables=obs,
                           track_min_eigenvalue=num["track_min_eigenvalue"], n_jobs=num["n_jobs"],
                           backend=num["backend"])
        timings["ensemble"] = time.perf_counter() - t0
        mean = sum(ens.mean[f"n_mode{c}"] for c in range(n_c))[k]
        var = sum(ens.variance[f"n_mode{c}"] for c in range(n_c))[k]
        if num["track_min_eigenvalue"]:
            metrics["ensemble_min_eigenvalue"] = float(ens.min_eigenvalue)
            passed = passed and ens.min_eigenvalue >= tol["min_eigenvalue"]
        metrics["n_traj"] = int(ens.n_traj)
        times = ens.times[k]
    else:
        mean = total[np.rint(k * dt / fine).astype(int)]
        var = np.zeros_like(mean)
        times = k * dt
    steps_up = np.diff(mean)
    metrics["ensemble_monotone"] = bool(np.all(steps_up <= 0))
    metrics["max_increase"] = float(np.max(steps_up)) if steps_up.size else 0.0
    # reported only: the multi-mode exponential rate is conjectural
    metrics["fitted_decay_rate"] = _decay_rate(times, mean)
    passed = passed and metrics["ensemble_monotone"]
    paths.append("photon_mean.csv")
    write_series_csv(out / paths[-1], {"time": times, "mean_total_photons": mean, "variance": var})
    return ExperimentReport("convergence", _params(cfg, "experiment"), metrics,
                            _tols(cfg, "residual", "min_eigenvalue"), bool(passed), paths, timings,
                            ["fitted_decay_rate is reported only, never gated"])


# --- equivalence -------------------------------------------------------------


def _order(dts, errors) -> float:
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return math.nan
    return float(np.polyfit(np.log(dts), np.log(e), 1)[0])


def exp_equivalence(cfg: RunConfig, out_dir) -> ExperimentReport:
    """Lab-frame simulation against amplitudes + reduced SME + reconstruction, same ``dw``."""
    out = _output_dir(out_dir)
    seed = _require_seed(cfg)
    num, tol, ex = cfg["numerics"], cfg["tolerances"], cfg["experiment"]
    dt, T = num["dt"], num["T"]
    factors = sorted({int(f) for f in ex["dt_factors"]}, reverse=True)
    if any(f < 1 for f in factors) or factors[-1] != 1:
        raise ConfigError("experiment.dt_factors must be positive integers including 1")
    steps, _ = am.time_grid(dt, T)
    if any(steps % f for f in factors):
        raise ConfigError("every experiment.dt_factors entry must divide the number of steps")
    fine_dw = NoiseSource(seed).increments(steps, dt)
    rho0 = lab_initial(cfg)
    xi0 = system_state(cfg)
    # compare on a common set of times shared by every step size
    n_cmp = min(200, steps // factors[0])
    cmp_stride = (steps // factors[0]) // n_cmp if n_cmp else 1

    rows = {"dt": [], "max_trace_distance": [], "final_trace_distance": [], "max_dy_difference_per_dt": []}
    paths, timings = [], {}
    lam = math.inf
    for f in factors:
        h = dt * f
        dw = coarsen(fine_dw, f)
        t0 = time.perf_counter()
        amp = integrate_amplitudes(cfg, dt=h)
        full = build_model(cfg, "full")
        red = build_model(cfg, "reduced", amp)
        stride = cmp_stride * (factors[0] // f)
        r_f = sme.simulate(full, rho0, h, T, num["scheme"], dw, stride=stride, backend=num["backend"])
        r_r = sme.simulate(red, xi0, h, T, num["scheme"], dw, stride=stride, backend=num["backend"])
        idx = r_f.state_indices
        recon = [rc.reconstruct_joint(x, amp.alphas[i], cfg.truncations) for x, i in zip(r_r.states, idx)]
        td = np.array([hb.trace_distance(a, b) for a, b in zip(r_f.states, recon)])
        timings[f"dt_factor_{f}"] = time.perf_counter() - t0
        lam = min(lam, _min_eig(r_f, r_r))
        rows["dt"].append(h)
        rows["max_trace_distance"].append(float(np.max(td)))
        rows["final_trace_distance"].append(float(td[-1]))
        rows["max_dy_difference_per_dt"].append(float(np.max(np.abs(r_f.dy - r_r.dy)) / h))
        name = f"trace_distance_dt{f}.csv"
        write_series_csv(out / name, {"time": r_f.times[idx], "trace_distance": td})
        paths.append(name)
        if f == 1:
            name = "dy_records.csv"
            write_series_csv(out / name, {"time": r_f.times[:-1], "dw": dw, "dy_full": r_f.dy, "dy_reduced": r_r.dy})
            paths.append(name)
    write_series_csv(out / "sweep.csv", rows)
    paths.insert(0, "sweep.csv")

    finest = rows["max_trace_distance"][-1]
    order = _order(rows["dt"], rows["max_trace_distance"]) if len(factors) > 1 else math.nan
    # when both paths agree to rounding level there is no error left to fit
    negligible = max(rows["max_trace_distance"]) <= 1e-10
    metrics = {
        "max_trace_distance": finest,
        "observed_order": order if math.isfinite(order) else 0.0,
        "order_waived": bool(negligible),
        "max_dy_difference_per_dt": rows["max_dy_difference_per_dt"][-1],
        "min_eigenvalue": lam,
    }
    order_ok = negligible or (len(factors) > 1 and math.isfinite(order) and order >= tol["min_order"])
    passed = (finest <= tol["trace_distance"] and order_ok
              and metrics["max_dy_difference_per_dt"] <= tol["dy_drift"]
              and lam >= tol["min_eigenvalue"])
    return ExperimentReport("equivalence", _params(cfg, "experiment"), metrics,
                            _tols(cfg, "trace_distance", "min_order", "dy_drift", "min_eigenvalue"),
                            bool(passed), paths, timings)


# --- output statistics -------------------------------------------------------


def _bin_sums(x: np.ndarray, n_bins: int) -> np.ndarray:
    edges = np.linspace(0, len(x), n_bins + 1).astype(int)
    return np.add.reduceat(x, edges[:-1])


def exp_output_stats(cfg: RunConfig, out_dir) -> ExperimentReport:
    """Innovations of recorded ``dy`` replayed through the reduced filter."""
    out = _output_dir(out_dir)
    seed = _require_seed(cfg)
    num, tol, ex = cfg["numerics"], cfg["tolerances"], cfg["experiment"]
    dt, T = num["dt"], num["T"]
    eta = cfg["physics"]["efficiency"]
    steps, times = am.time_grid(dt, T)
    n_bins = min(ex["n_bins"], steps)
    amp = integrate_amplitudes(cfg)
    disp = build_model(cfg, "displaced", amp)
    red = build_model(cfg, "reduced", amp)
    xi0 = displaced_initial(cfg, fock=[0] * cfg.n_modes)
    xs = system_state(cfg)
    n_traj = 1 if eta == 0 else num["n_traj"]
    run = dict(stride=steps, observables={}, track_min_eigenvalue=False, backend=num["backend"])

    t0 = time.perf_counter()
    innov = np.zeros((n_traj, n_bins))
    dy_disp = np.zeros((n_traj, n_bins))
    replay_err = 0.0
    exact_err = 0.0
    for k in range(n_traj):
        r = sme.simulate(disp, xi0, dt, T, num["scheme"], NoiseSource(seed + k), **run)
        f = sme.simulate(red, xs, dt, T, num["scheme"], mode="filter", record=r.dy, **run)
        innov[k] = _bin_sums(f.dw, n_bins)
        dy_disp[k] = _bin_sums(r.dy, n_bins)
        replay_err = max(replay_err, float(np.max(np.abs(f.dw - r.dw))))
        if eta == 0:
            exact_err = max(exact_err, float(np.max(np.abs(r.dy - r.dw))), float(np.max(np.abs(f.dw - f.dy))))
    timings = {"generate_and_filter": time.perf_counter() - t0}
    bin_len = T / n_bins
    left = np.linspace(0, steps, n_bins + 1).astype(int)[:-1]
    metrics = {"n_traj": int(n_traj), "max_replay_dw_difference": replay_err}
    paths = []
    if eta == 0:
        metrics["max_exact_deviation"] = exact_err
        passed = exact_err <= tol["exact"]
        write_series_csv(out / "innovations.csv", {"bin_start": times[left], "innovation": innov[0]})
        paths.append("innovations.csv")
        return ExperimentReport("output-stats", _params(cfg, "experiment"), metrics,
                                _tols(cfg, "exact"), bool(passed), paths, timings)

    mean = innov.mean(axis=0)
    se = innov.std(axis=0, ddof=1) / math.sqrt(n_traj)
    z = np.abs(mean) / se
    metrics["max_innovation_z"] = float(np.max(z))
    metrics["max_abs_innovation_mean"] = float(np.max(np.abs(mean)))
    metrics["analytic_bound"] = 4.0 * math.sqrt(bin_len / n_traj)
    passed = metrics["max_innovation_z"] <= tol["innovation_n_se"]
    cols = {"bin_start": times[left], "innovation_mean": mean, "innovation_stderr": se, "z": z}

    if ex["compare_reduced"]:
        t0 = time.perf_counter()
        dy_red = np.zeros((n_traj, n_bins))
        for k in range(n_traj):
            # independent seeds: the comparison is between distributions
            r = sme.simulate(red, xs, dt, T, num["scheme"], NoiseSource(seed + n_traj + k), **run)
            dy_red[k] = _bin_sums(r.dy, n_bins)
        timings["reduced_ensemble"] = time.perf_counter() - t0
        m1, m2 = dy_disp.mean(axis=0), dy_red.mean(axis=0)
        s = np.sqrt(dy_disp.var(axis=0, ddof=1) / n_traj + dy_red.var(axis=0, ddof=1) / n_traj)
        z2 = np.abs(m1 - m2) / s
        metrics["max_two_sample_z"] = float(np.max(z2))
        passed = passed and metrics["max_two_sample_z"] <= tol["innovation_n_se"]
        cols.update({"dy_mean_displaced": m1, "dy_mean_reduced": m2, "two_sample_z": z2})
    write_series_csv(out / "innovations.csv", cols)
    paths.append("innovations.csv")
    return ExperimentReport("output-stats", _params(cfg, "experiment"), metrics,
                            _tols(cfg, "innovation_n_se"), bool(passed), paths, timings)


# --- scheme benchmark ----------------------------------------------------------


def _bench_model(cfg: RunConfig, eta: float, N: int | None = None):
    model = build_model(cfg, "full", efficiency=eta, N=N)
    if N is None:
        rho0 = lab_initial(cfg)
    else:
        xi = system_state(cfg)
        alphas = am.initial_amplitudes(cfg.n_levels, cfg["initial"]["alpha0"])
        rho0 = rc.reconstruct_joint(xi, alphas, (N,) * cfg.n_modes)
    return model, rho0


def exp_scheme_bench(cfg: RunConfig, out_dir) -> ExperimentReport:
    """Euler-Maruyama against the positive Kraus scheme on the lab-frame model."""
    out = _output_dir(out_dir)
    seed = _require_seed(cfg)
    num, tol, ex = cfg["numerics"], cfg["tolerances"], cfg["experiment"]
    kappa = kappa_total(cfg)
    dt = ex["bench_dt"] / kappa
    T = ex["bench_T"]
    steps = max(1, int(round(T / dt)))
    T = steps * dt
    model, rho0 = _bench_model(cfg, 1.0)
    timings = {}
    schemes = [sme.Scheme.EULER_MARUYAMA, sme.Scheme.KRAUS_POSITIVE]

    # positivity at a coarse step, strong efficiency
    t0 = time.perf_counter()
    viol = {s: 0 for s in schemes}
    bad_seeds = {s: 0 for s in schemes}
    worst = {s: math.inf for s in schemes}
    blowups = {s: 0 for s in schemes}
    cols = {"seed": [], "em_min_eigenvalue": [], "kraus_min_eigenvalue": []}
    for k in range(ex["bench_seeds"]):
        dw = NoiseSource(seed + k).increments(steps, dt)
        cols["seed"].append(seed + k)
        for s in schemes:
            try:
                r = sme.simulate(model, rho0, dt, T, s, dw, stride=steps, observables={}, backend=num["backend"])
            except sme.SMEError:
                blowups[s] += 1
                lam = -math.inf
            else:
                e = r.observables["min_eigenvalue"]
                viol[s] += int(np.count_nonzero(e < tol["min_eigenvalue"]))
                lam = float(np.nanmin(e))
            bad_seeds[s] += int(lam < tol["min_eigenvalue"])
            worst[s] = min(worst[s], lam)
            cols["em_min_eigenvalue" if s is schemes[0] else "kraus_min_eigenvalue"].append(lam)
    timings["positivity"] = time.perf_counter() - t0
    write_series_csv(out / "positivity.csv", cols)

    # strong error against a fine Kraus reference under the same Brownian path
    t0 = time.perf_counter()
    ref_f = ex["bench_ref_factor"]
    levels = [f for f in (1, 2, 4, 8) if 8 * f <= ref_f and ref_f % f == 0] or [1]
    fine_dt = dt / ref_f
    strong = {"dt": [dt / f for f in levels]}
    errs = {s: np.zeros((ex["bench_strong_seeds"], len(levels))) for s in schemes}
    for j in range(ex["bench_strong_seeds"]):
        fine_dw = NoiseSource(seed + j).increments(steps * ref_f, fine_dt)
        ref = sme.simulate(model, rho0, fine_dt, T, sme.Scheme.KRAUS_POSITIVE, fine_dw, stride=steps * ref_f,
                           observables={}, track_min_eigenvalue=False, backend=num["backend"])
        for i, f in enumerate(levels):
            h = dt / f
            dw = coarsen(fine_dw, ref_f // f)
            for s in schemes:
                try:
                    r = sme.simulate(model, rho0, h, T, s, dw, stride=steps * f, observables={},
                                     track_min_eigenvalue=False, backend=num["backend"])
                    errs[s][j, i] = hb.trace_distance(r.final_state, ref.final_state)
                except sme.SMEError:
                    errs[s][j, i] = math.inf
    for s in schemes:
        strong[s.value] = errs[s].mean(axis=0)
    timings["strong_error"] = time.perf_counter() - t0
    write_series_csv(out / "strong_error.csv", strong)

    # throughput
    thr = {"N": [], "euler-maruyama_steps_per_s": [], "kraus-positive_steps_per_s": []}
    for N in ex["bench_truncations"]:
        m, r0 = _bench_model(cfg, cfg["physics"]["efficiency"], int(N))
        n_steps = ex["bench_steps"]
        h = num["dt"]
        dw = NoiseSource(seed).increments(n_steps, h)
        thr["N"].append(int(N))
        for s in schemes:
            t1 = time.perf_counter()
            sme.simulate(m, r0, h, n_steps * h, s, dw, stride=n_steps, observables={},
                         track_min_eigenvalue=False, backend=num["backend"])
            thr[f"{s.value}_steps_per_s"].append(n_steps / (time.perf_counter() - t1))
    write_series_csv(out / "throughput.csv", thr)

    em, kp = schemes
    metrics = {
        "dt": dt,
        "em_violating_steps": viol[em],
        "em_violating_seeds": bad_seeds[em],
        "em_min_eigenvalue": worst[em] if math.isfinite(worst[em]) else -1e300,
        "em_blowups": blowups[em],
        "kraus_violating_steps": viol[kp],
        "kraus_min_eigenvalue": worst[kp] if math.isfinite(worst[kp]) else -1e300,
        "kraus_blowups": blowups[kp],
        "em_strong_error_finest": strong[em.value][-1] if math.isfinite(strong[em.value][-1]) else 1e300,
        "kraus_strong_error_finest": strong[kp.value][-1] if math.isfinite(strong[kp.value][-1]) else 1e300,
    }
    for N, a, b in zip(thr["N"], thr["euler-maruyama_steps_per_s"], thr["kraus-positive_steps_per_s"]):
        metrics[f"steps_per_s_em_N{N}"] = a
        metrics[f"steps_per_s_kraus_N{N}"] = b
    passed = viol[kp] == 0 and blowups[kp] == 0 and worst[kp] >= tol["min_eigenvalue"]
    return ExperimentReport("scheme-bench", _params(cfg, "experiment"), metrics,
                            _tols(cfg, "min_eigenvalue"), bool(passed),
                            ["positivity.csv", "strong_error.csv", "throughput.csv"], timings,
                            ["only the Kraus positivity is gated; other metrics are informational"])


EXPERIMENTS = {
    "verify-invariance": exp_invariance,
    "verify-convergence": exp_convergence,
    "verify-equivalence": exp_equivalence,
    "verify-output-stats": exp_output_stats,
    "bench-schemes": exp_scheme_bench,
}
