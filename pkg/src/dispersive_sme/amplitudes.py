"""Coherent amplitudes of the displaced frame.

Amplitudes are stored as a complex array indexed ``(s, c)``: system level
``s`` and cavity mode ``c``. The qubit equations use the convention
``sigma_z = P_e - P_g``, so that the qubit dispersive shift ``chi`` maps onto
per-level shifts ``chi_g = -chi`` and ``chi_e = +chi`` of the generic
right-hand side ``d alpha_s / dt = -i chi_s alpha_s - ...``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class AmplitudeError(ValueError):
    pass


class AmplitudeDivergenceError(ArithmeticError):
    pass


class TimeOutOfRangeError(AmplitudeError):
    pass


def time_grid(dt: float, T: float) -> tuple[int, np.ndarray]:
    """Number of steps and the grid ``t_k = k dt`` shared by ODE and SME steppers."""
    if not dt > 0:
        raise AmplitudeError(f"dt must be positive, got {dt}")
    if T < 0:
        raise AmplitudeError(f"T must be non-negative, got {T}")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise AmplitudeError(f"T={T} is not an integer multiple of dt={dt}")
    return steps, dt * np.arange(steps + 1)


@dataclass(frozen=True)
class DriveSignal:
    """Complex cavity drive ``u(t)``.

    Use the constructors :meth:`constant`, :meth:`piecewise` and
    :meth:`sinusoid`. A piecewise table holds ``(t_i, u_i)`` pairs sorted by
    time; the drive equals ``u_i`` on ``[t_i, t_{i+1})`` and is zero before
    the first breakpoint.
    """

    kind: str
    u0: complex = 0j
    omega: float = 0.0
    breakpoints: tuple[tuple[float, complex], ...] = ()

    @classmethod
    def constant(cls, u0: complex) -> "DriveSignal":
        return cls("constant", u0=complex(u0))

    @classmethod
    def sinusoid(cls, u0: complex, omega: float) -> "DriveSignal":
        return cls("sinusoid", u0=complex(u0), omega=float(omega))

    @classmethod
    def piecewise(cls, breakpoints: Sequence[tuple[float, complex]]) -> "DriveSignal":
        table = tuple((float(t), complex(u)) for t, u in breakpoints)
        if not table:
            raise AmplitudeError("piecewise drive needs at least one breakpoint")
        times = [t for t, _ in table]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise AmplitudeError("piecewise drive breakpoints must be strictly increasing in time")
        return cls("piecewise", breakpoints=table)

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid", "piecewise"):
            raise AmplitudeError(f"unknown drive kind {self.kind!r}")

    def __call__(self, t: float) -> complex:
        return complex(self.values(np.asarray([t], dtype=float))[0])

    def values(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.kind == "constant":
            return np.full(times.shape, self.u0, dtype=complex)
        if self.kind == "sinusoid":
            return self.u0 * np.exp(1j * self.omega * times)
        t_b = np.array([t for t, _ in self.breakpoints])
        u_b = np.array([u for _, u in self.breakpoints], dtype=complex)
        idx = np.searchsorted(t_b, times, side="right") - 1
        out = np.where(idx >= 0, u_b[np.clip(idx, 0, None)], 0j)
        return out.astype(complex)


@dataclass(frozen=True)
class AmplitudeParams:
    """Rates and shifts of the amplitude equations (all in 1/s or rad/s).

    ``chis`` has shape ``(n_S, n_C)``, ``kappas`` and ``deltas`` shape ``(n_C,)``.
    """

    kappas: np.ndarray
    chis: np.ndarray
    deltas: np.ndarray = field(default=None)

    def __post_init__(self):
        kappas = np.atleast_1d(np.asarray(self.kappas, dtype=float))
        chis = np.asarray(self.chis, dtype=float)
        if chis.ndim == 1:
            chis = chis[:, None]
        deltas = (
            np.zeros_like(kappas)
            if self.deltas is None
            else np.atleast_1d(np.asarray(self.deltas, dtype=float))
        )
        if chis.ndim != 2 or chis.shape[1] != kappas.size or deltas.shape != kappas.shape:
            raise AmplitudeError(
                f"inconsistent shapes: kappas {kappas.shape}, chis {chis.shape}, deltas {deltas.shape}"
            )
        if np.any(kappas <= 0):
            raise AmplitudeError("every kappa must be > 0")
        object.__setattr__(self, "kappas", kappas)
        object.__setattr__(self, "chis", chis)
        object.__setattr__(self, "deltas", deltas)

    @classmethod
    def qubit(cls, kappa: float, chi: float) -> "AmplitudeParams":
        return cls(kappas=[kappa], chis=[[-chi], [chi]])

    @classmethod
    def qudit(cls, kappa: float, chis: Sequence[float]) -> "AmplitudeParams":
        return cls(kappas=[kappa], chis=np.asarray(chis, dtype=float)[:, None])

    @classmethod
    def multicavity(cls, kappas, chis, deltas) -> "AmplitudeParams":
        return cls(kappas=kappas, chis=chis, deltas=deltas)

    @property
    def n_levels(self) -> int:
        return self.chis.shape[0]

    @property
    def n_modes(self) -> int:
        return self.kappas.size

    def rhs(self) -> Callable[[np.ndarray, complex], np.ndarray]:
        """Right-hand side ``f(alpha, u)`` of the coupled amplitude equations."""
        return lambda alpha, u: rhs_multicavity(alpha, u, self)


def rhs_qubit(alpha_g: complex, alpha_e: complex, u: complex, chi: float, kappa: float):
    """Qubit amplitudes: ``+i chi`` for ``g`` and ``-i chi`` for ``e``."""
    drive = -1j * math.sqrt(kappa) * u
    dg = 1j * chi * alpha_g + drive - 0.5 * kappa * alpha_g
    de = -1j * chi * alpha_e + drive - 0.5 * kappa * alpha_e
    return dg, de


def rhs_qudit(alphas, u: complex, chis, kappa: float) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=complex)
    chis = np.asarray(chis, dtype=float)
    if alphas.shape != chis.shape:
        raise AmplitudeError(f"{alphas.shape[0]} amplitudes for {chis.shape[0]} shifts")
    return -1j * chis * alphas - 1j * math.sqrt(kappa) * u - 0.5 * kappa * alphas


def rhs_multicavity(alphas: np.ndarray, u: complex, params: AmplitudeParams) -> np.ndarray:
    """Coupled modes: every mode of a level feels the collective decay ``sqrt(k_c k_c')/2``."""
    alphas = np.asarray(alphas, dtype=complex)
    if alphas.shape != params.chis.shape:
        raise AmplitudeError(f"amplitudes of shape {alphas.shape}, expected {params.chis.shape}")
    sk = np.sqrt(params.kappas)
    collective = alphas @ sk  # sum_c' sqrt(k_c') alpha_{s,c'}, one entry per level
    return (
        -1j * (params.deltas[None, :] + params.chis) * alphas
        - 1j * sk[None, :] * u
        - 0.5 * sk[None, :] * collective[:, None]
    )


@dataclass(frozen=True)
class AmplitudeTrajectory:
    """Amplitudes on the grid ``t_k = k dt``; ``alphas`` has shape ``(steps+1, n_S, n_C)``."""

    dt: float
    times: np.ndarray
    alphas: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def n_levels(self) -> int:
        return self.alphas.shape[1]

    @property
    def n_modes(self) -> int:
        return self.alphas.shape[2]

    def index_of(self, t) -> np.ndarray | int:
        """Nearest grid index; times outside ``[0, T]`` (beyond half a step) raise."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.rint(t_arr / self.dt).astype(np.int64)
        if np.any(idx < 0) or np.any(idx > self.steps):
            raise TimeOutOfRangeError(
                f"time outside amplitude trajectory range [0, {self.times[-1]}]"
            )
        return int(idx) if idx.ndim == 0 else idx

    def at(self, t: float) -> np.ndarray:
        return self.alphas[self.index_of(t)]

    def to_csv(self, path, stride: int = 1) -> None:
        write_amplitudes_csv(self, path, stride)


def initial_amplitudes(n_levels: int, alpha0) -> np.ndarray:
    """Common initial condition: every level starts from the same per-mode amplitude."""
    alpha0 = np.atleast_1d(np.asarray(alpha0, dtype=complex))
    return np.tile(alpha0, (n_levels, 1))


def integrate(
    rhs: Callable[[np.ndarray, complex], np.ndarray],
    alpha0,
    drive: DriveSignal,
    dt: float,
    T: float,
) -> AmplitudeTrajectory:
    """Classical RK4 on the grid ``t_k = k dt`` (both endpoints included).

    The drive is sampled at ``t``, ``t + dt/2`` and ``t + dt`` within each step.
    """
    steps, times = time_grid(dt, T)
    alpha = np.array(alpha0, dtype=complex, ndmin=2)
    out = np.empty((steps + 1, *alpha.shape), dtype=complex)
    out[0] = alpha
    u_full = drive.values(times)
    u_half = drive.values(times[:-1] + 0.5 * dt)
    for k in range(steps):
        u0, um, u1 = u_full[k], u_half[k], u_full[k + 1]
        k1 = rhs(alpha, u0)
        k2 = rhs(alpha + 0.5 * dt * k1, um)
        k3 = rhs(alpha + 0.5 * dt * k2, um)
        k4 = rhs(alpha + dt * k3, u1)
        alpha = alpha + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(alpha)):
            raise AmplitudeDivergenceError(f"non-finite amplitude at step {k + 1}")
        out[k + 1] = alpha
    return AmplitudeTrajectory(dt=float(dt), times=times, alphas=out)


def integrate_params(params: AmplitudeParams, alpha0, drive: DriveSignal, dt: float, T: float):
    """Integrate from a common per-mode initial amplitude ``alpha0``."""
    return integrate(params.rhs(), initial_amplitudes(params.n_levels, alpha0), drive, dt, T)


def qubit_rhs(chi: float, kappa: float):
    """Qubit equations as an ``(2, 1)``-shaped right-hand side for :func:`integrate`."""

    def f(alpha, u):
        dg, de = rhs_qubit(alpha[0, 0], alpha[1, 0], u, chi, kappa)
        return np.array([[dg], [de]])

    return f


def qudit_rhs(chis: Sequence[float], kappa: float):
    chis = np.asarray(chis, dtype=float)

    def f(alpha, u):
        return rhs_qudit(alpha[:, 0], u, chis, kappa)[:, None]

    return f


def aggregates(alphas: np.ndarray, kappas) -> tuple[float, np.ndarray]:
    """Collective rate and amplitudes: ``sqrt(kbar) = sum_c sqrt(k_c)``.

    ``alphas`` is indexed ``(..., s, c)``; returns ``(kbar, alpha_bar[..., s])``
    with ``sqrt(kbar) * alpha_bar_s = sum_c sqrt(k_c) alpha_{s,c}``.
    """
    sk = np.sqrt(np.atleast_1d(np.asarray(kappas, dtype=float)))
    if np.any(sk <= 0):
        raise AmplitudeError("every kappa must be > 0")
    root = float(np.sum(sk))
    alpha_bar = np.asarray(alphas, dtype=complex) @ sk / root
    return root**2, alpha_bar


def write_amplitudes_csv(traj: AmplitudeTrajectory, path, stride: int = 1) -> None:
    stride = max(1, int(stride))
    idx = list(range(0, traj.steps + 1, stride))
    if idx[-1] != traj.steps:
        idx.append(traj.steps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "s", "c", "re_alpha", "im_alpha"])
        for k in idx:
            for s in range(traj.n_levels):
                for c in range(traj.n_modes):
                    a = traj.alphas[k, s, c]
                    w.writerow([repr(float(traj.times[k])), s, c, repr(float(a.real)), repr(float(a.imag))])


def read_amplitudes_csv(path) -> AmplitudeTrajectory:
    """Read a dense (stride 1) amplitude CSV back into a trajectory."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != ["time", "s", "c", "re_alpha", "im_alpha"]:
            raise AmplitudeError(f"{path}: unexpected amplitude CSV header {r.fieldnames}")
        for row in r:
            rows.append((float(row["time"]), int(row["s"]), int(row["c"]),
                         complex(float(row["re_alpha"]), float(row["im_alpha"]))))
    if not rows:
        raise AmplitudeError(f"{path}: empty amplitude file")
    times = sorted({t for t, *_ in rows})
    n_s = max(s for _, s, _, _ in rows) + 1
    n_c = max(c for _, _, c, _ in rows) + 1
    t_index = {t: i for i, t in enumerate(times)}
    alphas = np.zeros((len(times), n_s, n_c), dtype=complex)
    for t, s, c, a in rows:
        alphas[t_index[t], s, c] = a
    times = np.asarray(times)
    if len(times) < 2:
        raise AmplitudeError(f"{path}: need at least two time samples")
    dt = float(times[1] - times[0])
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=1e-12):
        raise AmplitudeError(f"{path}: amplitude file is not on a uniform grid (was it decimated?)")
    return AmplitudeTrajectory(dt=dt, times=times, alphas=alphas)
