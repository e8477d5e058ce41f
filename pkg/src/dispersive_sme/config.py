"""Run configuration: a TOML file validated against a fixed key schema.

Complex numbers are written either as a plain number or as ``[re, im]``.
Every key is documented in :data:`SCHEMA`; ``dispersive-sme print-schema``
prints the same table. Unknown keys are rejected with the closest known key
as a suggestion.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version dependent
    import tomli as tomllib


class ConfigError(ValueError):
    pass


SYSTEM_CLASSES = ("qubit", "qudit", "multicavity")
SCHEMES = ("kraus-positive", "euler-maruyama")
DRIVE_KINDS = ("constant", "sinusoid", "piecewise")


@dataclass(frozen=True)
class Key:
    kind: str  # float | int | str | bool | complex | list | matrix | complex-list | table | any
    default: Any
    doc: str
    check: Callable[[Any], str | None] | None = None


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _unit(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _choice(options):
    return lambda v: None if v in options else f"must be one of {', '.join(options)}"


def _all_positive(v):
    return None if all(x > 0 for x in v) else "every entry must be > 0"


def _truncations(v):
    return None if all(int(x) >= 2 for x in v) else "every truncation must be >= 2"


SCHEMA: dict[str, dict[str, Key]] = {
    "": {
        "system": Key("str", "qubit", "system class: qubit | qudit | multicavity", _choice(SYSTEM_CLASSES)),
        "seed": Key("int", None, "base seed (unsigned 64-bit); mandatory for verify-* subcommands",
                    lambda v: None if 0 <= v < 2**64 else "must be an unsigned 64-bit integer"),
        "amplitudes_file": Key("str", None, "amplitude CSV used by simulate-reduced and reconstruct"),
        "state_dump": Key("str", None, "binary state dump consumed by reconstruct"),
    },
    "physics": {
        "kappa": Key("float", 1.0, "cavity decay rate kappa (1/s), qubit and qudit", _positive),
        "kappas": Key("list", None, "per-mode decay rates kappa_c (1/s), multicavity", _all_positive),
        "chi": Key("float", 0.5, "qubit dispersive shift chi (rad/s), enters as chi sigma_z a^dag a"),
        "chis": Key("matrix", None, "qudit: list chi_s (rad/s); multicavity: matrix chi[s][c]"),
        "deltas": Key("list", None, "multicavity mode detunings Delta_c (rad/s); default zeros"),
        "efficiency": Key("float", 0.5, "detection efficiency eta in [0, 1]", _unit),
    },
    "drive": {
        "kind": Key("str", "constant", "constant | sinusoid | piecewise", _choice(DRIVE_KINDS)),
        "u0": Key("complex", 0j, "drive amplitude u0 (constant and sinusoid)"),
        "omega": Key("float", 0.0, "sinusoid angular frequency (rad/s): u(t) = u0 exp(i omega t)"),
        "table": Key("table", None, "piecewise breakpoints [[t, re, im], ...], strictly increasing t"),
    },
    "truncation": {
        "N": Key("int", 15, "Fock truncation of the single cavity (levels 0..N-1)", lambda v: None if v >= 2 else "must be >= 2"),
        "Ns": Key("list", None, "per-mode truncations, multicavity (default N for every mode)", _truncations),
    },
    "initial": {
        "system": Key("any", "plus", "system state: g | e | plus | uniform | mixed | level:<s> | "
                      "density matrix [[...]] (real) or {re = [[...]], im = [[...]]}"),
        "alpha0": Key("complex-list", [0j], "common initial cavity amplitude per mode (lab frame)"),
        "cavity_fock": Key("list", [0], "Fock level per mode of the displaced-frame cavity initial state"),
    },
    "numerics": {
        "dt": Key("float", None, "time step (s), shared by amplitude ODE and SME; "
                    "default: the largest T/n not above 1e-3/max(kappa)", _positive),
        "T": Key("float", 2.0, "final time (s)", _nonneg),
        "scheme": Key("str", "kraus-positive", "kraus-positive | euler-maruyama", _choice(SCHEMES)),
        "stride": Key("int", 0, "state decimation stride; 0 = ceil(steps/1000)", _nonneg),
        "n_traj": Key("int", 1, "trajectories in ensembles", lambda v: None if v >= 1 else "must be >= 1"),
        "backend": Key("str", "auto", "auto | compiled | python", _choice(("auto", "compiled", "python"))),
        "track_min_eigenvalue": Key("bool", True, "record the minimum eigenvalue at every step"),
        "n_jobs": Key("int", 1, "parallel workers for ensembles", lambda v: None if v >= 1 else "must be >= 1"),
    },
    "experiment": {
        "dt_factors": Key("list", [4, 2, 1], "equivalence sweep: dt multiples of numerics.dt (same Brownian path)"),
        "check_times": Key("list", [0.25, 0.5, 1.0], "convergence: times for the deterministic decay check"),
        "output_times": Key("list", None, "convergence: ensemble output times (default: 12 evenly spaced)"),
        "residual_refine": Key("int", 10, "multicavity photon balance: run the eta = 0 check at dt / refine",
                               lambda v: None if v >= 1 else "must be >= 1"),
        "n_bins": Key("int", 20, "output-stats: time bins for innovation means", lambda v: None if v >= 1 else "must be >= 1"),
        "compare_reduced": Key("bool", True, "output-stats: two-sample test of displaced vs reduced dy ensembles"),
        "bench_dt": Key("float", 0.05, "scheme bench: coarse step for the positivity regime (s)", _positive),
        "bench_T": Key("float", 5.0, "scheme bench: duration of the positivity regime (s)", _positive),
        "bench_seeds": Key("int", 100, "scheme bench: seeds in the positivity regime", lambda v: None if v >= 1 else "must be >= 1"),
        "bench_truncations": Key("list", [10, 20, 40], "scheme bench: truncations for throughput", _truncations),
        "bench_steps": Key("int", 2000, "scheme bench: steps per throughput measurement", lambda v: None if v >= 1 else "must be >= 1"),
        "bench_strong_seeds": Key("int", 20, "scheme bench: seeds averaged in the strong-error estimate",
                                  lambda v: None if v >= 1 else "must be >= 1"),
        "bench_ref_factor": Key("int", 64, "scheme bench: fine reference step = dt / factor", lambda v: None if v >= 1 else "must be >= 1"),
    },
    "tolerances": {
        "photon_max": Key("float", 1e-6, "invariance: max total photon number in the displaced frame", _nonneg),
        "invariance_td_per_dt": Key("float", 1.0, "invariance: trace-distance bound per unit dt", _nonneg),
        "min_eigenvalue": Key("float", -1e-10, "lowest admissible eigenvalue of any emitted state"),
        "decay_rel": Key("float", 1e-4, "convergence (eta = 0): relative error of the exponential decay", _nonneg),
        "n_se": Key("float", 3.0, "convergence (eta > 0): allowed standard errors", _positive),
        "residual": Key("float", 1e-3, "multicavity: photon-balance residual (eta = 0)", _nonneg),
        "trace_distance": Key("float", 5e-3, "equivalence: max trace distance at the finest dt", _nonneg),
        "min_order": Key("float", 0.5, "equivalence: minimum observed convergence order", _nonneg),
        "dy_drift": Key("float", 5e-3, "equivalence: max |dy_full - dy_reduced| / dt", _nonneg),
        "innovation_n_se": Key("float", 4.0, "output-stats: allowed standard errors per bin", _positive),
        "exact": Key("float", 1e-12, "output-stats (eta = 0): exactness of dy - dw = drift dt", _nonneg),
    },
}


@dataclass
class RunConfig:
    """Validated configuration; ``values[section][key]`` with defaults filled."""

    values: dict
    source: str | None = None
    raw_bytes: bytes = field(default=b"", repr=False)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def system(self) -> str:
        return self.values[""]["system"]

    @property
    def seed(self) -> int | None:
        return self.values[""]["seed"]

    @property
    def n_levels(self) -> int:
        if self.system == "qubit":
            return 2
        return len(self.values["physics"]["chis"])

    @property
    def n_modes(self) -> int:
        return len(self.values["physics"]["kappas"]) if self.system == "multicavity" else 1

    @property
    def truncations(self) -> tuple[int, ...]:
        t = self.values["truncation"]
        if self.system == "multicavity":
            return tuple(int(n) for n in (t["Ns"] or [t["N"]] * self.n_modes))
        return (int(t["N"]),)

    def override(self, section: str, key: str, value) -> "RunConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        vals[section][key] = _coerce(section, key, value)
        cfg = RunConfig(vals, self.source, self.raw_bytes)
        _validate_physics(cfg)
        return cfg

    def to_jsonable(self) -> dict:
        return {s or "top": {k: _jsonable(v) for k, v in sec.items()} for s, sec in self.values.items()}

    def digest(self) -> str:
        text = json.dumps(self.to_jsonable(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _where(section, key):
    return f"{section}.{key}" if section else key


def _as_complex(v, where):
    if isinstance(v, bool):
        raise ConfigError(f"{where}: expected a number or [re, im]")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{where}: expected a number or [re, im], got {v!r}")


def _coerce(section: str, key: str, v):
    spec = SCHEMA[section][key]
    where = _where(section, key)
    if v is None:
        return None
    kind = spec.kind
    try:
        if kind == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where}: expected a number, got {v!r}")
            v = float(v)
            if not math.isfinite(v):
                raise ConfigError(f"{where}: must be finite")
        elif kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{where}: expected an integer, got {v!r}")
        elif kind == "str":
            if not isinstance(v, str):
                raise ConfigError(f"{where}: expected a string, got {v!r}")
        elif kind == "bool":
            if not isinstance(v, bool):
                raise ConfigError(f"{where}: expected true or false, got {v!r}")
        elif kind == "complex":
            v = _as_complex(v, where)
        elif kind == "complex-list":
            if not isinstance(v, list) or (len(v) == 2 and all(isinstance(x, (int, float)) for x in v)):
                v = [v]
            v = [_as_complex(x, where) for x in v]
        elif kind == "list":
            if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ConfigError(f"{where}: expected a list of numbers, got {v!r}")
            v = [float(x) if isinstance(x, float) else x for x in v]
        elif kind == "matrix":
            if not isinstance(v, list) or not v:
                raise ConfigError(f"{where}: expected a non-empty list")
            if all(isinstance(x, list) for x in v):
                width = {len(x) for x in v}
                if len(width) != 1 or not all(isinstance(y, (int, float)) for x in v for y in x):
                    raise ConfigError(f"{where}: rows must be numeric and of equal length")
                v = [[float(y) for y in x] for x in v]
            elif all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                v = [float(x) for x in v]
            else:
                raise ConfigError(f"{where}: expected numbers or a matrix")
        elif kind == "table":
            if not isinstance(v, list) or not all(isinstance(r, list) and len(r) in (2, 3) for r in v):
                raise ConfigError(f"{where}: expected rows [t, re] or [t, re, im]")
            v = [(float(r[0]), complex(r[1], r[2] if len(r) == 3 else 0.0)) for r in v]
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc
    if spec.check is not None:
        msg = spec.check(v)
        if msg:
            raise ConfigError(f"{where} {msg} (got {v!r})")
    return v


def _suggest(key: str, options) -> str:
    close = difflib.get_close_matches(key, list(options), n=1, cutoff=0.5)
    return f"; did you mean {close[0]!r}?" if close else ""


def from_mapping(data: dict, source: str | None = None, raw: bytes = b"") -> RunConfig:
    values = {section: {k: spec.default for k, spec in keys.items()} for section, keys in SCHEMA.items()}
    all_keys = {k for keys in SCHEMA.values() for k in keys}
    for name, item in data.items():
        if isinstance(item, dict) and name in SCHEMA and name:
            for key, v in item.items():
                if key not in SCHEMA[name]:
                    raise ConfigError(f"unknown key {name}.{key}{_suggest(key, SCHEMA[name])}")
                values[name][key] = _coerce(name, key, v)
        elif name in SCHEMA[""]:
            values[""][name] = _coerce("", name, item)
        else:
            hint = _suggest(name, list(SCHEMA[""]) + [s for s in SCHEMA if s] + sorted(all_keys))
            raise ConfigError(f"unknown key {name!r}{hint}")
    cfg = RunConfig(values, source, raw)
    _validate_physics(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_mapping(data, str(path), raw)


def _validate_physics(cfg: RunConfig) -> None:
    v = cfg.values
    ph = v["physics"]
    system = v[""]["system"]
    if system == "qudit":
        chis = ph["chis"]
        if chis is None:
            raise ConfigError("physics.chis is required for the qudit class (one shift per level)")
        if any(isinstance(x, list) for x in chis):
            raise ConfigError("physics.chis must be a flat list for the qudit class")
    elif system == "multicavity":
        if ph["kappas"] is None:
            raise ConfigError("physics.kappas is required for the multicavity class")
        chis = ph["chis"]
        n_c = len(ph["kappas"])
        if chis is None or not all(isinstance(x, list) for x in chis):
            raise ConfigError("physics.chis must be a matrix chi[s][c] for the multicavity class")
        if len(chis[0]) != n_c:
            raise ConfigError(f"physics.chis rows have {len(chis[0])} entries for {n_c} modes")
        if ph["deltas"] is not None and len(ph["deltas"]) != n_c:
            raise ConfigError(f"physics.deltas has {len(ph['deltas'])} entries for {n_c} modes")
        Ns = v["truncation"]["Ns"]
        if Ns is not None and len(Ns) != n_c:
            raise ConfigError(f"truncation.Ns has {len(Ns)} entries for {n_c} modes")
    n_c = cfg.n_modes
    a0 = v["initial"]["alpha0"]
    if len(a0) == 1 and n_c > 1:
        v["initial"]["alpha0"] = a0 * n_c
    elif len(a0) != n_c:
        raise ConfigError(f"initial.alpha0 has {len(a0)} entries for {n_c} modes")
    fock = v["initial"]["cavity_fock"]
    if len(fock) == 1 and n_c > 1:
        v["initial"]["cavity_fock"] = list(fock) + [0] * (n_c - 1)
    elif len(fock) != n_c:
        raise ConfigError(f"initial.cavity_fock has {len(fock)} entries for {n_c} modes")
    for c, (f, N) in enumerate(zip(v["initial"]["cavity_fock"], cfg.truncations)):
        if not 0 <= int(f) < N:
            raise ConfigError(f"initial.cavity_fock[{c}] = {f} outside truncation {N}")
    if v["drive"]["kind"] == "piecewise" and not v["drive"]["table"]:
        raise ConfigError("drive.table is required for a piecewise drive")
    dt, T = v["numerics"]["dt"], v["numerics"]["T"]
    if dt is None:
        k_max = max(ph["kappas"]) if system == "multicavity" else ph["kappa"]
        dt = 1e-3 / k_max
        if T > 0:
            dt = T / math.ceil(T / dt - 1e-9)
        v["numerics"]["dt"] = dt
    if abs(round(T / dt) * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"numerics.T = {T} is not an integer multiple of numerics.dt = {dt}")
    system_state(cfg)  # validates the initial system state


def system_state(cfg: RunConfig) -> np.ndarray:
    """Initial system density matrix from a preset name or explicit entries."""
    n = cfg.n_levels
    spec = cfg.values["initial"]["system"]
    if isinstance(spec, str):
        if spec == "g" or spec == "level:0":
            psi = np.eye(n)[0]
        elif spec == "e":
            psi = np.eye(n)[1]
        elif spec.startswith("level:"):
            try:
                s = int(spec.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"initial.system: bad level preset {spec!r}") from None
            if not 0 <= s < n:
                raise ConfigError(f"initial.system: level {s} out of range for {n} levels")
            psi = np.eye(n)[s]
        elif spec == "plus":
            psi = np.zeros(n)
            psi[:2] = 1 / math.sqrt(2)
        elif spec == "uniform":
            psi = np.ones(n) / math.sqrt(n)
        elif spec == "mixed":
            return np.eye(n, dtype=complex) / n
        else:
            raise ConfigError(f"initial.system: unknown preset {spec!r}")
        return np.outer(psi, psi).astype(complex)
    if isinstance(spec, dict):
        extra = set(spec) - {"re", "im"}
        if extra or "re" not in spec:
            raise ConfigError("initial.system table needs keys re (and optionally im)")
        re = np.asarray(spec["re"], dtype=float)
        im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
        rho = re + 1j * im
    elif isinstance(spec, list):
        rho = np.asarray(spec, dtype=float).astype(complex)
    else:
        raise ConfigError(f"initial.system: unsupported value {spec!r}")
    if rho.shape != (n, n):
        raise ConfigError(f"initial.system: expected a {n}x{n} matrix, got shape {rho.shape}")
    from .hilbert import InvalidStateError, check_density

    try:
        return check_density(rho, n)
    except InvalidStateError as exc:
        raise ConfigError(f"initial.system: {exc}") from exc


def schema_text() -> str:
    lines = ["# dispersive-sme configuration keys (TOML)", ""]
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]" if section else "# top level")
        for key, spec in keys.items():
            default = {"seed": "required for verify-*", "dt": "derived"}.get(key) or repr(_jsonable(spec.default))
            lines.append(f"{key:<22} {spec.kind:<13} default {default}")
            lines.append(f"{'':<22} {spec.doc}")
        lines.append("")
    return "\n".join(lines)
