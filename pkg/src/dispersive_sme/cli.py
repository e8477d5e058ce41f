"""Command-line front end.

Exit codes: 0 success or PASS, 1 experiment FAIL, 2 usage or configuration
error, 3 numerical error. Every run that gets as far as an output directory
leaves a ``manifest.json`` there, whatever the exit code.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import traceback
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import amplitudes as am
from . import harness
from . import hilbert as hb
from . import reconstruction as rc
from . import sme
from .config import ConfigError, RunConfig, parse_config, schema_text, system_state
from .models import ModelError
from .noise import ALGORITHM, NoiseSource
from .records import DumpFormatError, read_state_dump, write_series_csv, write_state_dump, write_trajectory_csv

log = logging.getLogger("dispersive_sme")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

SIMULATIONS = ("simulate-full", "simulate-displaced", "simulate-reduced")
COMMANDS = (*SIMULATIONS, "amplitudes", "reconstruct", *harness.EXPERIMENTS, "print-schema")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dispersive-sme", description="Dispersive SME simulations and frame-reduction checks.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
    p.add_argument("--dt", type=float, help="override numerics.dt")
    p.add_argument("--traj", type=int, help="override numerics.n_traj")
    p.add_argument("--amplitudes", help="amplitude CSV (simulate-reduced, reconstruct)")
    p.add_argument("--states", help="binary state dump (reconstruct)")
    p.add_argument("--backend", choices=("auto", "compiled", "python"), help="override numerics.backend")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> RunConfig:
    if not args.config:
        raise UsageError(f"{args.command} needs --config")
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.override("", "seed", args.seed)
    if args.dt is not None:
        cfg = cfg.override("numerics", "dt", args.dt)
    if args.traj is not None:
        cfg = cfg.override("numerics", "n_traj", args.traj)
    if args.backend is not None:
        cfg = cfg.override("numerics", "backend", args.backend)
    return cfg


def _resolve(path, cfg: RunConfig) -> Path:
    p = Path(path)
    if not p.is_absolute() and cfg.source:
        cand = Path(cfg.source).parent / p
        if cand.exists() or not p.exists():
            return cand
    return p


def _amplitude_source(args, cfg: RunConfig) -> Path | None:
    if args.amplitudes:
        return Path(args.amplitudes)
    if cfg[""]["amplitudes_file"]:
        return _resolve(cfg[""]["amplitudes_file"], cfg)
    return None


def _load_amplitudes(path: Path, cfg: RunConfig) -> am.AmplitudeTrajectory:
    if not path.is_file():
        raise UsageError(f"amplitude file not found: {path}")
    amp = am.read_amplitudes_csv(path)
    dt, T = cfg["numerics"]["dt"], cfg["numerics"]["T"]
    if abs(amp.dt - dt) > 1e-12 * dt:
        raise UsageError(f"{path}: amplitude grid step {amp.dt} differs from numerics.dt = {dt}")
    if amp.times[-1] < T - 1e-9 * max(1.0, T):
        raise UsageError(f"{path}: amplitudes end at t = {amp.times[-1]} before numerics.T = {T}")
    if amp.n_levels != cfg.n_levels or amp.n_modes != cfg.n_modes:
        raise UsageError(f"{path}: amplitudes have shape ({amp.n_levels}, {amp.n_modes}), "
                         f"config expects ({cfg.n_levels}, {cfg.n_modes})")
    return amp


# --- commands ----------------------------------------------------------------


def run_simulation(args, cfg: RunConfig, out: Path, manifest: dict) -> int:
    frame = args.command.split("-", 1)[1]
    num = cfg["numerics"]
    if frame == "reduced":
        src = _amplitude_source(args, cfg)
        if src is None:
            raise UsageError("simulate-reduced needs an amplitude trajectory (--amplitudes or amplitudes_file)")
        amp = _load_amplitudes(src, cfg)
        rho0 = system_state(cfg)
    elif frame == "displaced":
        amp = harness.integrate_amplitudes(cfg)
        rho0 = harness.displaced_initial(cfg)
    else:
        amp = None
        rho0 = harness.lab_initial(cfg)
    model = harness.build_model(cfg, frame, amp)
    seed = 0 if cfg.seed is None else cfg.seed
    manifest["seed"] = seed
    rec = sme.simulate(model, rho0, num["dt"], num["T"], num["scheme"], NoiseSource(seed),
                       stride=num["stride"] or None, track_min_eigenvalue=num["track_min_eigenvalue"],
                       backend=num["backend"])
    manifest["backend"] = rec.backend
    write_trajectory_csv(out / "trajectory.csv", rec)
    write_state_dump(out / "states.bin", model.space.dims, rec.state_times, rec.states)
    outputs = ["trajectory.csv", "states.bin"]
    if amp is not None and frame == "displaced":
        am.write_amplitudes_csv(amp, out / "amplitudes.csv")
        outputs.append("amplitudes.csv")
    manifest["outputs"] = outputs
    log.info("%s: %d steps, final trace %.15g", args.command, rec.steps, rec.observables["trace"][-1])
    return EXIT_OK


def run_amplitudes(args, cfg: RunConfig, out: Path, manifest: dict) -> int:
    amp = harness.integrate_amplitudes(cfg)
    am.write_amplitudes_csv(amp, out / "amplitudes.csv")
    manifest["outputs"] = ["amplitudes.csv"]
    return EXIT_OK


def run_reconstruct(args, cfg: RunConfig, out: Path, manifest: dict) -> int:
    src = _amplitude_source(args, cfg)
    if src is None:
        raise UsageError("reconstruct needs an amplitude trajectory (--amplitudes or amplitudes_file)")
    amp = _load_amplitudes(src, cfg)
    dump_path = Path(args.states) if args.states else (
        _resolve(cfg[""]["state_dump"], cfg) if cfg[""]["state_dump"] else None)
    if dump_path is None or not dump_path.is_file():
        raise UsageError("reconstruct needs a state dump (--states or state_dump)")
    dump = read_state_dump(dump_path)
    n_s = cfg.n_levels
    if dump.dims[0] != n_s:
        raise UsageError(f"{dump_path}: system dimension {dump.dims[0]}, config has {n_s} levels")
    rows = []
    for t, xi in zip(dump.times, dump.states):
        alphas = amp.at(float(t))
        if len(dump.dims) == 1:
            row = rc.reduced_observables(xi, alphas)
        else:
            lab = rc.reconstruct_joint(xi, alphas, dump.dims[1:])
            rho_s = hb.partial_trace(lab, dump.dims, 0)
            row = {f"pop_level{s}": float(rho_s[s, s].real) for s in range(n_s)}
            for s in range(n_s):
                for sp in range(s + 1, n_s):
                    row[f"abs_coh_{s}{sp}"] = float(abs(rho_s[s, sp]))
            row["purity"] = hb.purity(rho_s)
        pops = np.array([row[f"pop_level{s}"] for s in range(n_s)])
        row["cavity_photons"] = float(pops @ np.sum(np.abs(alphas) ** 2, axis=1))
        rows.append(row)
    rc.write_reduced_csv(out / "reduced.csv", dump.times, rows)
    manifest["outputs"] = ["reduced.csv"]
    return EXIT_OK


def run_experiment(args, cfg: RunConfig, out: Path, manifest: dict) -> int:
    report = harness.EXPERIMENTS[args.command](cfg, out)
    report.write(out / "report.json")
    manifest["outputs"] = ["report.json", *report.csv_paths]
    manifest["passed"] = report.passed
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


HANDLERS = {
    **{c: run_simulation for c in SIMULATIONS},
    "amplitudes": run_amplitudes,
    "reconstruct": run_reconstruct,
    **{c: run_experiment for c in harness.EXPERIMENTS},
}


# --- manifest and dispatch ---------------------------------------------------


def _versions() -> dict:
    return {"dispersive_sme": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_manifest(out: Path, manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def dispatch(args) -> int:
    if args.command == "print-schema":
        print(schema_text())
        return EXIT_OK
    out = Path(args.out) if args.out else None
    manifest = {"command": args.command, "versions": _versions(), "noise_algorithm": ALGORITHM,
                "argv": sys.argv[1:]}
    code = EXIT_USAGE
    try:
        if out is None:
            raise UsageError(f"{args.command} needs --out")
        cfg = load_config(args)
        manifest.update({
            "config": cfg.source,
            "config_file_sha256": hashlib.sha256(cfg.raw_bytes).hexdigest(),
            "config_sha256": cfg.digest(),
            "seed": cfg.seed,
            "backend": sme.resolve_backend(cfg["numerics"]["backend"]),
        })
        out.mkdir(parents=True, exist_ok=True)
        code = HANDLERS[args.command](args, cfg, out, manifest)
    except (UsageError, ConfigError, ModelError, DumpFormatError, sme.GridMismatchError,
            am.AmplitudeError, hb.HilbertError) as exc:
        manifest["error"] = str(exc)
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (sme.SMEError, am.AmplitudeDivergenceError, rc.NumericalDegeneracyError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        print(f"numerical error: {exc}", file=sys.stderr)
        log.debug("%s", traceback.format_exc())
        code = EXIT_NUMERIC
    manifest["exit_code"] = code
    if out is not None:
        try:
            _write_manifest(out, manifest)
        except OSError as exc:
            print(f"error: cannot write manifest: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return dispatch(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
