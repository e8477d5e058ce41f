"""Dense operator algebra on truncated system/cavity Hilbert spaces.

Basis convention: the system factor comes first, then the cavity modes in
order, every factor indexed by ascending level or Fock number. For a qubit
the ground state ``g`` is index 0 and ``sigma_z = P_e - P_g``.

Operators and density matrices are plain complex ``numpy`` arrays; a
:class:`SpaceSpec` carries the factor dimensions needed to embed
single-factor operators and to take partial traces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

MAX_DIMENSION = 2**20

# Amplitude guard relative to the Fock truncation N, on |alpha|^2.
WARN_FRACTION = 0.5
ERROR_FRACTION = 0.9


class HilbertError(ValueError):
    """Base class for invalid operator-algebra requests."""


class InvalidDimensionError(HilbertError):
    pass


class DimensionMismatchError(HilbertError):
    pass


class TruncationOverflowError(HilbertError):
    """Coherent amplitude too large for the Fock truncation."""


class TruncationWarning(UserWarning):
    pass


class InvalidStateError(HilbertError):
    pass


@dataclass(frozen=True)
class SpaceSpec:
    """Composite space: one ``system_dim``-level system and bosonic modes.

    Parameters
    ----------
    system_dim : int
        Number of levels of the finite-dimensional system.
    mode_truncations : tuple of int
        Fock cutoff per mode (levels ``0..N_c-1``). May be empty for the
        system-only spaces of the reduced models.
    max_dimension : int
        Refuse to build spaces larger than this.
    """

    system_dim: int
    mode_truncations: tuple[int, ...] = ()
    max_dimension: int = MAX_DIMENSION

    def __post_init__(self):
        object.__setattr__(self, "mode_truncations", tuple(int(n) for n in self.mode_truncations))
        if int(self.system_dim) < 1:
            raise InvalidDimensionError(f"system_dim must be >= 1, got {self.system_dim}")
        for n in self.mode_truncations:
            if n < 2:
                raise InvalidDimensionError(f"mode truncation must be >= 2, got {n}")
        if self.dim > self.max_dimension:
            raise InvalidDimensionError(
                f"total dimension {self.dim} exceeds the limit {self.max_dimension}"
            )

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.system_dim, *self.mode_truncations)

    @property
    def n_modes(self) -> int:
        return len(self.mode_truncations)

    @property
    def mode_dim(self) -> int:
        return int(np.prod(self.mode_truncations, dtype=np.int64)) if self.mode_truncations else 1

    @property
    def dim(self) -> int:
        return int(self.system_dim * self.mode_dim)

    def embed(self, op: np.ndarray, factor: int) -> np.ndarray:
        """Lift an operator on factor ``factor`` (0 = system) to the full space."""
        dims = self.dims
        if not 0 <= factor < len(dims):
            raise DimensionMismatchError(f"factor {factor} out of range for dims {dims}")
        op = np.asarray(op, dtype=complex)
        if op.shape != (dims[factor], dims[factor]):
            raise DimensionMismatchError(
                f"operator of shape {op.shape} does not fit factor {factor} of dimension {dims[factor]}"
            )
        factors = [np.eye(d, dtype=complex) for d in dims]
        factors[factor] = op
        return tensor(*factors)

    def annihilation(self, mode: int = 0) -> np.ndarray:
        return self.embed(annihilation(self.mode_truncations[mode]), mode + 1)

    def number(self, mode: int = 0) -> np.ndarray:
        return self.embed(number(self.mode_truncations[mode]), mode + 1)

    def projector(self, level: int) -> np.ndarray:
        return self.embed(projector(level, self.system_dim), 0)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def check_operator(self, op: np.ndarray) -> np.ndarray:
        op = np.asarray(op)
        if op.shape != (self.dim, self.dim):
            raise DimensionMismatchError(f"expected a {self.dim}x{self.dim} operator, got {op.shape}")
        return op


def annihilation(N: int) -> np.ndarray:
    """Truncated ladder operator with ``<n-1|a|n> = sqrt(n)``."""
    if int(N) < 2:
        raise InvalidDimensionError(f"truncation must be >= 2, got {N}")
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), k=1).astype(complex)


def creation(N: int) -> np.ndarray:
    return annihilation(N).conj().T


def number(N: int) -> np.ndarray:
    if int(N) < 2:
        raise InvalidDimensionError(f"truncation must be >= 2, got {N}")
    return np.diag(np.arange(N, dtype=float)).astype(complex)


def projector(s: int, n_levels: int) -> np.ndarray:
    """Rank-one projector ``|s><s|`` on an ``n_levels``-dimensional space."""
    if not 0 <= s < n_levels:
        raise InvalidDimensionError(f"level {s} out of range for {n_levels} levels")
    P = np.zeros((n_levels, n_levels), dtype=complex)
    P[s, s] = 1.0
    return P


def sigma_z() -> np.ndarray:
    """``P_e - P_g`` with ``g`` at index 0."""
    return np.diag([-1.0, 1.0]).astype(complex)


def fock_state(n: int, N: int) -> np.ndarray:
    if not 0 <= n < N:
        raise InvalidDimensionError(f"Fock level {n} out of range for truncation {N}")
    rho = np.zeros((N, N), dtype=complex)
    rho[n, n] = 1.0
    return rho


def check_amplitude(alpha: complex, N: int) -> None:
    """Raise or warn depending on ``|alpha|^2`` relative to the truncation."""
    mag2 = abs(complex(alpha)) ** 2
    if mag2 > ERROR_FRACTION * N:
        raise TruncationOverflowError(
            f"|alpha|^2 = {mag2:.4g} exceeds {ERROR_FRACTION} * N = {ERROR_FRACTION * N:.4g}"
        )
    if mag2 > WARN_FRACTION * N:
        warnings.warn(
            f"|alpha|^2 = {mag2:.4g} exceeds {WARN_FRACTION} * N; truncation error may be large",
            TruncationWarning,
            stacklevel=3,
        )


def displacement(alpha: complex, N: int) -> np.ndarray:
    """Displacement ``exp(alpha a^dag - alpha^* a)`` on the truncated space.

    The generator is anti-Hermitian, so it is exponentiated through the
    eigendecomposition of ``-i`` times it; the result is unitary to machine
    precision regardless of how well the truncation represents the
    infinite-dimensional operator.
    """
    check_amplitude(alpha, N)
    alpha = complex(alpha)
    if alpha == 0:
        return np.eye(N, dtype=complex)
    a = annihilation(N)
    K = -1j * (alpha * a.conj().T - alpha.conjugate() * a)
    K = 0.5 * (K + K.conj().T)
    w, V = np.linalg.eigh(K)
    return (V * np.exp(1j * w)) @ V.conj().T


def multimode_displacement(alphas: Sequence[complex], truncations: Sequence[int]) -> np.ndarray:
    """``exp(sum_c alpha_c a_c^dag - h.c.)`` as a Kronecker product over modes."""
    if len(alphas) != len(truncations):
        raise DimensionMismatchError(
            f"{len(alphas)} amplitudes for {len(truncations)} modes"
        )
    return tensor(*(displacement(a, n) for a, n in zip(alphas, truncations)))


def coherent_state(alpha: complex, N: int) -> np.ndarray:
    """Density matrix of the truncated coherent state ``D_alpha |0><0| D_alpha^dag``."""
    D = displacement(alpha, N)
    psi = D[:, 0]
    return np.outer(psi, psi.conj())


def coherent_ket(alpha: complex, N: int) -> np.ndarray:
    return displacement(alpha, N)[:, 0].copy()


def tensor(*ops: np.ndarray) -> np.ndarray:
    if not ops:
        raise DimensionMismatchError("tensor needs at least one operand")
    return reduce(np.kron, (np.asarray(op, dtype=complex) for op in ops))


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: int | Sequence[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    ``dims`` lists the factor dimensions in basis order; ``keep`` holds factor
    indices (an ``int`` for a single factor). The kept factors stay in their
    original order.
    """
    dims = [int(d) for d in dims]
    keep = [keep] if isinstance(keep, (int, np.integer)) else sorted(int(k) for k in keep)
    total = int(np.prod(dims))
    rho = np.asarray(rho)
    if rho.shape != (total, total):
        raise DimensionMismatchError(f"state of shape {rho.shape} does not match dims {dims}")
    if any(not 0 <= k < len(dims) for k in keep):
        raise DimensionMismatchError(f"keep={keep} out of range for dims {dims}")
    n = len(dims)
    t = rho.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # einsum with a shared index on row/column copies of each traced factor
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise DimensionMismatchError("too many factors for partial_trace")
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for i in traced:
        cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return reduced.reshape(d, d)


def _check_pair(L: np.ndarray, rho: np.ndarray) -> None:
    if L.shape != rho.shape or L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatchError(f"operator {L.shape} and state {rho.shape} do not match")


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator ``L rho L^dag - (L^dag L rho + rho L^dag L) / 2``."""
    L = np.asarray(L)
    rho = np.asarray(rho)
    _check_pair(L, rho)
    LdL = L.conj().T @ L
    return L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)


def innovation(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Measurement back-action ``L rho + rho L^dag - Tr(L rho + rho L^dag) rho``."""
    L = np.asarray(L)
    rho = np.asarray(rho)
    _check_pair(L, rho)
    out = L @ rho + rho @ L.conj().T
    return out - np.trace(out) * rho


def expectation(O: np.ndarray, rho: np.ndarray) -> complex:
    """``Tr(O rho)``."""
    O = np.asarray(O)
    rho = np.asarray(rho)
    _check_pair(O, rho)
    return complex(np.sum(O * rho.T))


def hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hermitize(rho))[0])


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.sum(rho * rho.T)))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``0.5 * ||rho - sigma||_1`` from the spectrum of the Hermitian difference."""
    diff = hermitize(np.asarray(rho) - np.asarray(sigma))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    w, V = np.linalg.eigh(hermitize(rho))
    sq = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    inner = np.linalg.eigvalsh(hermitize(sq @ sigma @ sq))
    return float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)


def check_density(
    rho: np.ndarray,
    dim: int | None = None,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-9,
    eig_tol: float = 1e-8,
) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {rho.shape[0]}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateError("density matrix has non-finite entries")
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > herm_tol:
        raise InvalidStateError(f"density matrix not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise InvalidStateError(f"density matrix trace is {tr:.12g}, expected 1")
    lam = min_eigenvalue(rho)
    if lam < -eig_tol:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lam:.3g}")
    return rho


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix from a Ginibre ensemble (test and oracle helper)."""
    rank = dim if rank is None else rank
    G = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real
