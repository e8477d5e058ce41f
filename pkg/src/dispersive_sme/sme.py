"""Diffusive SME integration: single steps, trajectories and ensembles.

All equations are Ito. Two schemes are provided:

``EULER_MARUYAMA``
    ``rho + (-i[H, rho] + D_L(rho)) dt + sqrt(eta) M_L(rho) dw``.
``KRAUS_POSITIVE``
    ``dy = sqrt(eta) Tr(L rho + rho L^dag) dt + dw``,
    ``M = I + (-i H - L^dag L / 2) dt + sqrt(eta) L dy`` and
    ``rho' = (M rho M^dag + (1 - eta) L rho L^dag dt) / Tr(.)``, which is
    positive semidefinite by construction.

Both schemes symmetrize and renormalize the trace after every step.

Trajectories run on a compiled kernel when the extension is importable and
on a NumPy loop otherwise. ``DISPERSIVE_SME_BACKEND=python`` (or
``backend="python"``) forces the fallback.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import hilbert as hb
from .amplitudes import time_grid
from .models import SMEModel
from .noise import NoiseSource

try:
    from . import _kernels
except ImportError:  # pragma: no cover - exercised when the extension is not built
    _kernels = None


class SMEError(ArithmeticError):
    pass


class StepExplosionError(SMEError):
    pass


class DegenerateStepError(SMEError):
    pass


class GridMismatchError(ValueError):
    pass


class Scheme(enum.Enum):
    EULER_MARUYAMA = "euler-maruyama"
    KRAUS_POSITIVE = "kraus-positive"


_SCHEME_CODE = {Scheme.EULER_MARUYAMA: 0, Scheme.KRAUS_POSITIVE: 1}


def available_backends() -> list[str]:
    return ["compiled", "python"] if _kernels is not None else ["python"]


def resolve_backend(backend: str | None = None) -> str:
    backend = backend or os.environ.get("DISPERSIVE_SME_BACKEND", "auto")
    if backend == "auto":
        return "compiled" if _kernels is not None else "python"
    if backend == "compiled" and _kernels is None:
        raise ValueError("compiled backend requested but the extension is not built")
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


# --- single steps ----------------------------------------------------------


def _finish(out: np.ndarray, k: int | None, positive: bool) -> np.ndarray:
    tr = np.trace(out).real
    where = "" if k is None else f" at step {k}"
    if not math.isfinite(tr):
        raise StepExplosionError(f"non-finite state{where}")
    if positive and tr < 1e-300:
        raise DegenerateStepError(f"vanishing normalization trace{where}")
    rho = 0.5 * (out + out.conj().T) / tr
    if not np.all(np.isfinite(rho)):
        raise StepExplosionError(f"non-finite state{where}")
    return rho


def _em_update(rho, H, L, eta, dt, dw, k=None):
    HR = H @ rho
    LR = L @ rho
    LdLR = (L.conj().T @ L) @ rho
    tr_lr = np.trace(LR).real
    drift = -1j * (HR - HR.conj().T) + LR @ L.conj().T - 0.5 * (LdLR + LdLR.conj().T)
    noise = LR + LR.conj().T - 2.0 * tr_lr * rho
    return _finish(rho + drift * dt + math.sqrt(eta) * dw * noise, k, positive=False)


def _kraus_update(rho, H, L, eta, dt, dy, k=None):
    n = rho.shape[0]
    LR = L @ rho
    M = (-1j * H - 0.5 * (L.conj().T @ L)) * dt + math.sqrt(eta) * dy * L
    M[np.diag_indices(n)] += 1.0
    out = M @ rho @ M.conj().T + (1.0 - eta) * dt * (LR @ L.conj().T)
    return _finish(out, k, positive=True)


def _drift(rho, L, eta) -> float:
    return 2.0 * math.sqrt(eta) * float(np.trace(L @ rho).real)


def output_increment(rho: np.ndarray, model: SMEModel, dt: float, dw: float, t: float = 0.0) -> float:
    """Homodyne increment ``dy = sqrt(eta) Tr(L rho + rho L^dag) dt + dw``."""
    L = model.measurement_op(t)
    return _drift(rho, L, model.efficiency) * dt + float(dw)


def step_euler_maruyama(rho: np.ndarray, model: SMEModel, t: float, dt: float, dw: float) -> np.ndarray:
    H, L = model.operators(t)
    return _em_update(np.asarray(rho, dtype=complex), H, L, model.efficiency, dt, float(dw))


def step_kraus_positive(rho: np.ndarray, model: SMEModel, t: float, dt: float, dw: float) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    H, L = model.operators(t)
    dy = _drift(rho, L, model.efficiency) * dt + float(dw)
    return _kraus_update(rho, H, L, model.efficiency, dt, dy)


# --- trajectories ----------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """One trajectory on the grid ``t_k = k dt``.

    ``dw`` and ``dy`` hold one entry per step; ``observables`` one entry per
    grid time (``"trace"`` and ``"min_eigenvalue"`` included, the latter NaN
    when not tracked). ``states`` is decimated; ``state_indices`` gives the
    grid index of each kept state.
    """

    times: np.ndarray
    dw: np.ndarray
    dy: np.ndarray
    states: np.ndarray
    state_indices: np.ndarray
    observables: dict
    scheme: Scheme
    backend: str
    seed: int | None = None
    final_state: np.ndarray = field(default=None, repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def steps(self) -> int:
        return len(self.dw)

    @property
    def state_times(self) -> np.ndarray:
        return self.times[self.state_indices]


def default_stride(steps: int) -> int:
    return max(1, math.ceil(steps / 1000))


def _run_python(rho0, h_ops, h_coef, l_ops, l_coef, eta, dt, noise, filter_mode, scheme,
                obs_ops, stride, track_min_eig):
    steps = len(noise)
    n = rho0.shape[0]
    rho = rho0.copy()
    dw = np.zeros(steps)
    dy = np.zeros(steps)
    obs = np.zeros((steps + 1, len(obs_ops)))
    tr = np.zeros(steps + 1)
    eig = np.full(steps + 1, np.nan)
    kept_states = [rho.copy()]
    kept_idx = [0]
    obs_t = np.ascontiguousarray(np.transpose(obs_ops, (0, 2, 1)))

    def record(k, r):
        tr[k] = np.trace(r).real
        obs[k] = np.einsum("kij,ij->k", obs_t, r).real if len(obs_ops) else obs[k]
        if track_min_eig:
            eig[k] = np.linalg.eigvalsh(r)[0]

    record(0, rho)
    for k in range(steps):
        H = np.tensordot(h_coef[k], h_ops, axes=1) if len(h_ops) else np.zeros((n, n), complex)
        L = np.tensordot(l_coef[k], l_ops, axes=1) if len(l_ops) else np.zeros((n, n), complex)
        d = _drift(rho, L, eta)
        if filter_mode:
            dy[k] = noise[k]
            dw[k] = noise[k] - d * dt
        else:
            dw[k] = noise[k]
            dy[k] = d * dt + noise[k]
        if scheme == Scheme.KRAUS_POSITIVE:
            rho = _kraus_update(rho, H, L, eta, dt, dy[k], k)
        else:
            rho = _em_update(rho, H, L, eta, dt, dw[k], k)
        record(k + 1, rho)
        if (k + 1) % stride == 0 or k + 1 == steps:
            kept_states.append(rho.copy())
            kept_idx.append(k + 1)
    return dw, dy, obs, tr, eig, np.array(kept_states), np.array(kept_idx, dtype=np.int64), rho


def _run_compiled(rho0, h_ops, h_coef, l_ops, l_coef, eta, dt, noise, filter_mode, scheme,
                  obs_ops, stride, track_min_eig):
    n = rho0.shape[0]
    c = np.ascontiguousarray
    out = _kernels.run_trajectory(
        c(rho0, dtype=complex),
        c(h_ops, dtype=complex).reshape(-1, n, n),
        c(h_coef, dtype=complex).reshape(len(noise), -1),
        c(l_ops, dtype=complex).reshape(-1, n, n),
        c(l_coef, dtype=complex).reshape(len(noise), -1),
        float(eta), float(dt), c(noise, dtype=float), bool(filter_mode), _SCHEME_CODE[scheme],
        c(obs_ops, dtype=complex).reshape(-1, n, n), int(stride), bool(track_min_eig),
    )
    status, failed, dw, dy, obs, tr, eig, states, idx, final = out
    if status == 1:
        raise StepExplosionError(f"non-finite state at step {failed}")
    if status == 2:
        raise DegenerateStepError(f"vanishing normalization trace at step {failed}")
    if status == 3:
        raise SMEError(f"eigenvalue computation failed at step {failed}")
    return dw, dy, obs, tr, eig, states, idx, final


def simulate(
    model: SMEModel,
    rho0: np.ndarray,
    dt: float,
    T: float,
    scheme: Scheme = Scheme.KRAUS_POSITIVE,
    noise: NoiseSource | np.ndarray | None = None,
    mode: str = "generate",
    record: np.ndarray | None = None,
    stride: int | None = None,
    observables: dict | None = None,
    track_min_eigenvalue: bool = True,
    backend: str | None = None,
) -> TrajectoryRecord:
    """Integrate ``model`` from ``rho0`` over ``[0, T]`` with step ``dt``.

    Parameters
    ----------
    noise : NoiseSource or array, optional
        Generate mode only. An array is used verbatim as the increments
        ``dw`` (shared-noise runs); a ``NoiseSource`` draws them. Omitted
        means ``dw = 0``.
    mode : {"generate", "filter"}
        ``"filter"`` consumes the homodyne record ``record`` (one ``dy`` per
        step) and recovers ``dw = dy - drift dt`` with this model's drift.
    stride : int, optional
        Keep every ``stride``-th state plus both endpoints; defaults to
        ``ceil(steps / 1000)``. Observables are always kept at every step.
    observables : dict, optional
        Name to operator; defaults to the model's photon numbers and level
        populations.
    """
    scheme = Scheme(scheme)
    steps, times = time_grid(dt, T)
    rho0 = hb.check_density(rho0, model.dim)
    rho0 = hb.hermitize(rho0)
    seed = None
    if mode == "generate":
        if record is not None:
            raise GridMismatchError("a dy record is only consumed in filter mode")
        if noise is None:
            inc = np.zeros(steps)
        elif isinstance(noise, NoiseSource):
            inc = noise.increments(steps, dt)
            seed = noise.seed
        else:
            inc = np.asarray(noise, dtype=float)
    elif mode == "filter":
        if record is None:
            raise GridMismatchError("filter mode needs a dy record")
        inc = np.asarray(record, dtype=float)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if inc.shape != (steps,):
        raise GridMismatchError(f"{inc.shape[0] if inc.ndim else 0} increments for {steps} steps")

    obs = model.observables if observables is None else observables
    names = list(obs)
    obs_ops = (np.stack([model.space.check_operator(obs[k]) for k in names]).astype(complex)
               if names else np.zeros((0, model.dim, model.dim), complex))
    h_coef, l_coef = model.coefficient_table(times[:-1])
    stride = default_stride(steps) if stride is None else max(1, int(stride))
    which = resolve_backend(backend)
    run = _run_compiled if which == "compiled" else _run_python
    dw, dy, ob, tr, eig, states, idx, final = run(
        rho0, model.h_ops, h_coef, model.l_ops, l_coef, model.efficiency, dt, inc,
        mode == "filter", scheme, obs_ops, stride, track_min_eigenvalue,
    )
    series = {name: ob[:, j] for j, name in enumerate(names)}
    series["trace"] = tr
    series["min_eigenvalue"] = eig
    return TrajectoryRecord(times=times, dw=dw, dy=dy, states=states, state_indices=idx,
                            observables=series, scheme=scheme, backend=which, seed=seed,
                            final_state=final)


# --- ensembles -------------------------------------------------------------


@dataclass
class EnsembleResult:
    """Sample moments of every observable series over ``n_traj`` trajectories."""

    times: np.ndarray
    n_traj: int
    mean: dict
    variance: dict
    min_eigenvalue: float
    seeds: list

    def stderr(self, name: str) -> np.ndarray:
        return np.sqrt(self.variance[name] / self.n_traj)


def _one(model, rho0, dt, T, scheme, k, seed, stride, observables, track, backend):
    try:
        rec = simulate(model, rho0, dt, T, scheme, NoiseSource(seed), stride=stride,
                       observables=observables, track_min_eigenvalue=track, backend=backend)
    except SMEError as exc:
        raise type(exc)(f"trajectory {k} (seed {seed}): {exc}") from exc
    return rec.observables


def ensemble(
    model: SMEModel,
    rho0: np.ndarray,
    dt: float,
    T: float,
    scheme: Scheme = Scheme.KRAUS_POSITIVE,
    n_traj: int = 100,
    base_seed: int = 0,
    observables: dict | None = None,
    track_min_eigenvalue: bool = True,
    n_jobs: int = 1,
    backend: str | None = None,
) -> EnsembleResult:
    """Run trajectories with seeds ``base_seed + k`` and reduce their observables.

    The reduction visits trajectories in index order (Welford updates), so the
    statistics do not depend on how the work was scheduled.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    seeds = [base_seed + k for k in range(n_traj)]
    steps, times = time_grid(dt, T)
    stride = max(1, steps)
    args = (model, rho0, dt, T, scheme)
    if n_jobs == 1:
        results = (_one(*args, k, s, stride, observables, track_min_eigenvalue, backend)
                   for k, s in enumerate(seeds))
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs, return_as="generator")(
            delayed(_one)(*args, k, s, stride, observables, track_min_eigenvalue, backend)
            for k, s in enumerate(seeds)
        )
    mean: dict = {}
    m2: dict = {}
    lam_min = math.inf
    for k, series in enumerate(results):
        for name, x in series.items():
            if name == "min_eigenvalue":
                if track_min_eigenvalue:
                    lam_min = min(lam_min, float(np.min(x)))
                continue
            if k == 0:
                mean[name] = np.array(x, dtype=float)
                m2[name] = np.zeros_like(mean[name])
            else:
                delta = x - mean[name]
                mean[name] += delta / (k + 1)
                m2[name] += delta * (x - mean[name])
    var = {name: (m2[name] / (n_traj - 1) if n_traj > 1 else np.zeros_like(m2[name])) for name in m2}
    return EnsembleResult(times=times, n_traj=n_traj, mean=mean, variance=var,
                          min_eigenvalue=lam_min if track_min_eigenvalue else math.nan, seeds=seeds)
