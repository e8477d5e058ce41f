"""SME model builders for the lab-frame, displaced-frame and reduced dynamics.

Every model has one diffusive channel. The measurement operator ``L(t)``
absorbs its rate (``L = sqrt(kappa) a`` rather than ``(a, kappa)``), so a
single stepper integrates

    d rho = (-i[H, rho] + D_L(rho)) dt + sqrt(eta) M_L(rho) dw,
    dy    = sqrt(eta) Tr(L rho + rho L^dag) dt + dw.

Time-dependent operators are stored as fixed operator terms with scalar
coefficients, ``H(t) = sum_j h_j(t) H_j`` and ``L(t) = sum_j l_j(t) L_j``.
Coefficients that depend on amplitudes are looked up by grid index in the
amplitude trajectory (no interpolation), which keeps runs that share a time
grid bit-reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import hilbert as hb
from .amplitudes import AmplitudeTrajectory, DriveSignal, aggregates


class ModelError(ValueError):
    pass


class ModelKind(enum.Enum):
    FULL_QUBIT_CAVITY = "full-qubit-cavity"
    DISPLACED_QUBIT_CAVITY = "displaced-qubit-cavity"
    REDUCED_QUBIT = "reduced-qubit"
    FULL_QUDIT = "full-qudit"
    DISPLACED_QUDIT = "displaced-qudit"
    REDUCED_QUDIT = "reduced-qudit"
    FULL_MULTICAVITY = "full-multicavity"
    DISPLACED_MULTICAVITY = "displaced-multicavity"
    REDUCED_MULTICAVITY = "reduced-multicavity"

    @property
    def frame(self) -> str:
        return self.value.split("-", 1)[0]

    @property
    def is_reduced(self) -> bool:
        return self.frame == "reduced"


CoefficientFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SMEModel:
    """One diffusive measurement channel with time-dependent ``H`` and ``L``.

    Parameters
    ----------
    kind : ModelKind
    space : SpaceSpec
    h_ops, l_ops : ndarray
        Operator terms, shapes ``(K_h, n, n)`` and ``(K_l, n, n)``.
    coefficients : callable
        Maps an array of grid times to ``(h_coef, l_coef)`` of shapes
        ``(len, K_h)`` and ``(len, K_l)``.
    efficiency : float
        Detection efficiency ``eta`` in ``[0, 1]``.
    observables : dict
        Named Hermitian operators recorded along trajectories.
    """

    kind: ModelKind
    space: hb.SpaceSpec
    h_ops: np.ndarray
    l_ops: np.ndarray
    coefficients: CoefficientFn
    efficiency: float
    observables: dict = field(default_factory=dict)
    amplitudes: AmplitudeTrajectory | None = None

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ModelError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        n = self.space.dim
        for name, ops in (("h_ops", self.h_ops), ("l_ops", self.l_ops)):
            if ops.ndim != 3 or ops.shape[1:] != (n, n):
                raise ModelError(f"{name} has shape {ops.shape}, expected (K, {n}, {n})")

    @property
    def dim(self) -> int:
        return self.space.dim

    def coefficient_table(self, times) -> tuple[np.ndarray, np.ndarray]:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        h, l = self.coefficients(times)
        return np.asarray(h, dtype=complex), np.asarray(l, dtype=complex)

    def operators(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        h, l = self.coefficient_table([t])
        H = np.tensordot(h[0], self.h_ops, axes=1)
        L = np.tensordot(l[0], self.l_ops, axes=1)
        return H, L

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.operators(t)[0]

    def measurement_op(self, t: float) -> np.ndarray:
        return self.operators(t)[1]

    def drift(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Deterministic generator ``-i[H, rho] + D_L(rho)``."""
        H, L = self.operators(t)
        return -1j * hb.commutator(H, rho) + hb.dissipator(L, rho)

    def diffusion(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Noise coefficient ``sqrt(eta) M_L(rho)`` multiplying ``dw``."""
        L = self.measurement_op(t)
        return math.sqrt(self.efficiency) * hb.innovation(L, rho)


def _stack(*ops) -> np.ndarray:
    return np.stack([np.asarray(op, dtype=complex) for op in ops])


def _check_rate(kappa: float, name: str = "kappa") -> float:
    kappa = float(kappa)
    if not kappa > 0:
        raise ModelError(f"{name} must be > 0, got {kappa}")
    return kappa


def _require_amplitudes(amp: AmplitudeTrajectory, n_levels: int, n_modes: int) -> None:
    if amp is None:
        raise ModelError("displaced and reduced models need an amplitude trajectory")
    if amp.alphas.shape[1:] != (n_levels, n_modes):
        raise ModelError(
            f"amplitude trajectory has shape {amp.alphas.shape[1:]}, expected ({n_levels}, {n_modes})"
        )


def _observables(space: hb.SpaceSpec, kappas: Sequence[float] | None = None) -> dict:
    obs = {}
    for c in range(space.n_modes):
        obs[f"n_mode{c}"] = space.number(c)
    for s in range(space.system_dim):
        obs[f"pop_level{s}"] = space.projector(s)
    if kappas is not None and space.n_modes > 1:
        a_out = sum(math.sqrt(k) * space.annihilation(c) for c, k in enumerate(kappas))
        obs["n_out"] = a_out.conj().T @ a_out
    return obs


# --- qubit / single cavity -------------------------------------------------


def full_qubit_cavity(kappa: float, chi: float, efficiency: float, drive: DriveSignal, N: int) -> SMEModel:
    """Lab frame: ``H = sqrt(k) u a^dag + sqrt(k) u^* a + chi sigma_z a^dag a``, ``L = sqrt(k) a``."""
    kappa = _check_rate(kappa)
    space = hb.SpaceSpec(2, (N,))
    a = space.annihilation(0)
    sk = math.sqrt(kappa)
    dispersive = chi * hb.tensor(hb.sigma_z(), hb.number(N))
    h_ops = _stack(sk * a.conj().T, sk * a, dispersive)
    l_ops = _stack(sk * a)

    def coefficients(times):
        u = drive.values(times)
        h = np.stack([u, u.conj(), np.ones_like(u)], axis=1)
        return h, np.ones((len(times), 1), dtype=complex)

    return SMEModel(ModelKind.FULL_QUBIT_CAVITY, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space))


def displaced_qubit_cavity(
    kappa: float, chi: float, efficiency: float, drive: DriveSignal, amplitudes: AmplitudeTrajectory, N: int
) -> SMEModel:
    """Displaced frame of the qubit/cavity SME.

    ``H = sum_s P_s (Re(alpha_s sqrt(k) u^*) -/+ chi a^dag a + (i k / 2)(alpha_s a^dag - alpha_s^* a))``
    with ``-chi`` on ``g`` and ``+chi`` on ``e``; ``L = sqrt(k)(a + alpha_g P_g + alpha_e P_e)``.
    """
    kappa = _check_rate(kappa)
    _require_amplitudes(amplitudes, 2, 1)
    space = hb.SpaceSpec(2, (N,))
    a = space.annihilation(0)
    ad = a.conj().T
    n = space.number(0)
    Pg, Pe = space.projector(0), space.projector(1)
    sk = math.sqrt(kappa)
    h_ops = _stack(
        Pg, Pe,
        -chi * Pg @ n + chi * Pe @ n,
        0.5j * kappa * Pg @ ad, -0.5j * kappa * Pg @ a,
        0.5j * kappa * Pe @ ad, -0.5j * kappa * Pe @ a,
    )
    l_ops = _stack(sk * a, sk * Pg, sk * Pe)

    def coefficients(times):
        al = amplitudes.alphas[amplitudes.index_of(times), :, 0]
        ag, ae = al[:, 0], al[:, 1]
        u = drive.values(times)
        h = np.stack([
            (ag * sk * u.conj()).real, (ae * sk * u.conj()).real, np.ones_like(u),
            ag, ag.conj(), ae, ae.conj(),
        ], axis=1).astype(complex)
        l = np.stack([np.ones_like(ag), ag, ae], axis=1)
        return h, l

    return SMEModel(ModelKind.DISPLACED_QUBIT_CAVITY, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space), amplitudes)


def reduced_qubit(kappa: float, efficiency: float, drive: DriveSignal, amplitudes: AmplitudeTrajectory) -> SMEModel:
    """Fictitious qubit: ``H = Re(alpha_g sqrt(k) u^*) P_g + Re(alpha_e sqrt(k) u^*) P_e``,
    ``L = sqrt(k)(alpha_g P_g + alpha_e P_e)``."""
    kappa = _check_rate(kappa)
    _require_amplitudes(amplitudes, 2, 1)
    space = hb.SpaceSpec(2)
    Pg, Pe = hb.projector(0, 2), hb.projector(1, 2)
    sk = math.sqrt(kappa)
    h_ops = _stack(Pg, Pe)
    l_ops = _stack(sk * Pg, sk * Pe)

    def coefficients(times):
        al = amplitudes.alphas[amplitudes.index_of(times), :, 0]
        ag, ae = al[:, 0], al[:, 1]
        u = drive.values(times)
        h = np.stack([(ag * sk * u.conj()).real, (ae * sk * u.conj()).real], axis=1).astype(complex)
        return h, np.stack([ag, ae], axis=1)

    return SMEModel(ModelKind.REDUCED_QUBIT, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space), amplitudes)


# --- qudit / single cavity -------------------------------------------------


def full_qudit(kappa: float, chis: Sequence[float], efficiency: float, drive: DriveSignal, N: int) -> SMEModel:
    """Lab frame with dispersive term ``(sum_s chi_s P_s) a^dag a``."""
    kappa = _check_rate(kappa)
    chis = np.asarray(chis, dtype=float)
    space = hb.SpaceSpec(chis.size, (N,))
    a = space.annihilation(0)
    sk = math.sqrt(kappa)
    shift = hb.tensor(np.diag(chis).astype(complex), hb.number(N))
    h_ops = _stack(sk * a.conj().T, sk * a, shift)
    l_ops = _stack(sk * a)

    def coefficients(times):
        u = drive.values(times)
        return np.stack([u, u.conj(), np.ones_like(u)], axis=1), np.ones((len(times), 1), dtype=complex)

    return SMEModel(ModelKind.FULL_QUDIT, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space))


def displaced_qudit(
    kappa: float, chis: Sequence[float], efficiency: float, drive: DriveSignal,
    amplitudes: AmplitudeTrajectory, N: int,
) -> SMEModel:
    """``H = sum_s P_s (Re(alpha_s sqrt(k) u^*) + chi_s a^dag a + (i k/2)(alpha_s a^dag - alpha_s^* a))``,
    ``L = sqrt(k)(a + sum_s alpha_s P_s)``."""
    kappa = _check_rate(kappa)
    chis = np.asarray(chis, dtype=float)
    n_s = chis.size
    _require_amplitudes(amplitudes, n_s, 1)
    space = hb.SpaceSpec(n_s, (N,))
    a = space.annihilation(0)
    ad = a.conj().T
    P = [space.projector(s) for s in range(n_s)]
    sk = math.sqrt(kappa)
    static = sum(chis[s] * P[s] @ space.number(0) for s in range(n_s))
    h_ops = _stack(*P, static, *[0.5j * kappa * Ps @ ad for Ps in P], *[-0.5j * kappa * Ps @ a for Ps in P])
    l_ops = _stack(sk * a, *[sk * Ps for Ps in P])

    def coefficients(times):
        al = amplitudes.alphas[amplitudes.index_of(times), :, 0]
        u = drive.values(times)
        shifts = (al * sk * u.conj()[:, None]).real
        h = np.concatenate([shifts, np.ones((len(times), 1)), al, al.conj()], axis=1).astype(complex)
        l = np.concatenate([np.ones((len(times), 1)), al], axis=1).astype(complex)
        return h, l

    return SMEModel(ModelKind.DISPLACED_QUDIT, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space), amplitudes)


def reduced_qudit(kappa: float, efficiency: float, drive: DriveSignal, amplitudes: AmplitudeTrajectory) -> SMEModel:
    """``H = sum_s Re(alpha_s sqrt(k) u^*) P_s``, ``L = sqrt(k) sum_s alpha_s P_s`` on the system alone."""
    kappa = _check_rate(kappa)
    if amplitudes is None:
        raise ModelError("reduced models need an amplitude trajectory")
    n_s = amplitudes.n_levels
    _require_amplitudes(amplitudes, n_s, 1)
    space = hb.SpaceSpec(n_s)
    P = [hb.projector(s, n_s) for s in range(n_s)]
    sk = math.sqrt(kappa)

    def coefficients(times):
        al = amplitudes.alphas[amplitudes.index_of(times), :, 0]
        u = drive.values(times)
        return (al * sk * u.conj()[:, None]).real.astype(complex), al.astype(complex)

    return SMEModel(ModelKind.REDUCED_QUDIT, space, _stack(*P), _stack(*[sk * Ps for Ps in P]),
                    coefficients, float(efficiency), _observables(space), amplitudes)


# --- qudit / several cavities ------------------------------------------------


def _multicavity_args(kappas, chis, deltas):
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    for c, k in enumerate(kappas):
        _check_rate(k, f"kappas[{c}]")
    chis = np.asarray(chis, dtype=float)
    if chis.ndim == 1:
        chis = chis[:, None]
    deltas = np.zeros_like(kappas) if deltas is None else np.atleast_1d(np.asarray(deltas, dtype=float))
    if chis.shape[1] != kappas.size or deltas.shape != kappas.shape:
        raise ModelError(f"shapes kappas {kappas.shape}, chis {chis.shape}, deltas {deltas.shape} disagree")
    return kappas, chis, deltas


def full_multicavity(kappas, chis, deltas, efficiency: float, drive: DriveSignal, Ns: Sequence[int]) -> SMEModel:
    """``H = sum_c (sqrt(k_c) u a_c^dag + h.c. + (Delta_c + sum_s chi_{s,c} P_s) a_c^dag a_c)``,
    collective ``L = sum_c sqrt(k_c) a_c``."""
    kappas, chis, deltas = _multicavity_args(kappas, chis, deltas)
    n_s, n_c = chis.shape
    if len(Ns) != n_c:
        raise ModelError(f"{len(Ns)} truncations for {n_c} modes")
    space = hb.SpaceSpec(n_s, tuple(Ns))
    a = [space.annihilation(c) for c in range(n_c)]
    P = [space.projector(s) for s in range(n_s)]
    a_out = sum(math.sqrt(kappas[c]) * a[c] for c in range(n_c))
    static = sum(
        (deltas[c] * space.identity() + sum(chis[s, c] * P[s] for s in range(n_s))) @ space.number(c)
        for c in range(n_c)
    )
    h_ops = _stack(a_out.conj().T, a_out, static)
    l_ops = _stack(a_out)

    def coefficients(times):
        u = drive.values(times)
        return np.stack([u, u.conj(), np.ones_like(u)], axis=1), np.ones((len(times), 1), dtype=complex)

    return SMEModel(ModelKind.FULL_MULTICAVITY, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space, kappas))


def displaced_multicavity(
    kappas, chis, deltas, efficiency: float, drive: DriveSignal,
    amplitudes: AmplitudeTrajectory, Ns: Sequence[int],
) -> SMEModel:
    """Displaced frame with collective amplitudes ``alpha_bar_s``.

    ``H = sum_s P_s (Re(sqrt(kbar) alpha_bar_s u^*) + sum_c (Delta_c + chi_{s,c}) a_c^dag a_c
    + sum_c (i sqrt(kbar k_c) / 2)(alpha_bar_s a_c^dag - alpha_bar_s^* a_c))`` and
    ``L = sum_s P_s (sqrt(kbar) alpha_bar_s + sum_c sqrt(k_c) a_c)``.
    """
    kappas, chis, deltas = _multicavity_args(kappas, chis, deltas)
    n_s, n_c = chis.shape
    _require_amplitudes(amplitudes, n_s, n_c)
    if len(Ns) != n_c:
        raise ModelError(f"{len(Ns)} truncations for {n_c} modes")
    space = hb.SpaceSpec(n_s, tuple(Ns))
    a = [space.annihilation(c) for c in range(n_c)]
    P = [space.projector(s) for s in range(n_s)]
    root_kbar = float(np.sum(np.sqrt(kappas)))
    a_out = sum(math.sqrt(kappas[c]) * a[c] for c in range(n_c))
    static = sum(P[s] @ sum((deltas[c] + chis[s, c]) * space.number(c) for c in range(n_c)) for s in range(n_s))
    raise_ops = [0.5j * root_kbar * P[s] @ a_out.conj().T for s in range(n_s)]
    lower_ops = [-0.5j * root_kbar * P[s] @ a_out for s in range(n_s)]
    h_ops = _stack(*P, static, *raise_ops, *lower_ops)
    l_ops = _stack(a_out, *[root_kbar * Ps for Ps in P])

    def coefficients(times):
        _, abar = aggregates(amplitudes.alphas[amplitudes.index_of(times)], kappas)
        u = drive.values(times)
        shifts = (root_kbar * abar * u.conj()[:, None]).real
        h = np.concatenate([shifts, np.ones((len(times), 1)), abar, abar.conj()], axis=1).astype(complex)
        l = np.concatenate([np.ones((len(times), 1)), abar], axis=1).astype(complex)
        return h, l

    return SMEModel(ModelKind.DISPLACED_MULTICAVITY, space, h_ops, l_ops, coefficients,
                    float(efficiency), _observables(space, kappas), amplitudes)


def reduced_multicavity(kappas, efficiency: float, drive: DriveSignal, amplitudes: AmplitudeTrajectory) -> SMEModel:
    """``H = sum_s Re(sqrt(kbar) alpha_bar_s u^*) P_s``, ``L = sqrt(kbar) sum_s alpha_bar_s P_s``."""
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    for c, k in enumerate(kappas):
        _check_rate(k, f"kappas[{c}]")
    if amplitudes is None:
        raise ModelError("reduced models need an amplitude trajectory")
    n_s = amplitudes.n_levels
    _require_amplitudes(amplitudes, n_s, kappas.size)
    space = hb.SpaceSpec(n_s)
    P = [hb.projector(s, n_s) for s in range(n_s)]
    root_kbar = float(np.sum(np.sqrt(kappas)))

    def coefficients(times):
        _, abar = aggregates(amplitudes.alphas[amplitudes.index_of(times)], kappas)
        u = drive.values(times)
        return (root_kbar * abar * u.conj()[:, None]).real.astype(complex), abar.astype(complex)

    return SMEModel(ModelKind.REDUCED_MULTICAVITY, space, _stack(*P), _stack(*[root_kbar * Ps for Ps in P]),
                    coefficients, float(efficiency), _observables(space), amplitudes)
