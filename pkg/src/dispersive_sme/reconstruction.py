"""Output maps from the reduced description back to physical states.

Given amplitudes ``alpha[s, c]`` and a system state ``xi`` (indexed like the
system factor), the lab-frame state is

    rho = U (xi (x) |0><0|) U^dag,   U = sum_s P_s D(alpha_s),

whose partial traces are a mixture of coherent cavity states and a
dephasing of ``xi`` by the Gram matrix of coherent-state overlaps
``C[s', s] = <alpha_s'|alpha_s>``. That dephasing is also a Kraus map whose
operators are built from the Hermitian square root of ``C``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import hilbert as hb


class NumericalDegeneracyError(ArithmeticError):
    pass


class NotPSDError(NumericalDegeneracyError):
    pass


PSD_TOL = 1e-10


def overlap(alpha: Sequence[complex], beta: Sequence[complex]) -> complex:
    """``prod_c <alpha_c|beta_c>`` in closed form.

    ``<a|b> = exp(-(|a|^2 + |b|^2) / 2 + a^* b)`` per mode.
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=complex))
    b = np.atleast_1d(np.asarray(beta, dtype=complex))
    if a.shape != b.shape:
        raise ValueError(f"mode counts differ: {a.shape} vs {b.shape}")
    return complex(np.exp(np.sum(-0.5 * (np.abs(a) ** 2 + np.abs(b) ** 2) + a.conj() * b)))


@dataclass(frozen=True)
class GramMatrix:
    """Overlaps ``entries[s', s] = <alpha_s'|alpha_s>`` of the per-level cavity states."""

    entries: np.ndarray

    @property
    def n_levels(self) -> int:
        return self.entries.shape[0]


def gram(alphas: np.ndarray) -> GramMatrix:
    """Gram matrix of the product coherent states ``(x)_c |alpha[s, c]>``.

    ``alphas`` has shape ``(n_S,)`` (single mode) or ``(n_S, n_C)``.
    """
    al = np.asarray(alphas, dtype=complex)
    if al.ndim == 1:
        al = al[:, None]
    sq = np.sum(np.abs(al) ** 2, axis=1)
    # log <alpha_s'|alpha_s> = -(|alpha_s'|^2 + |alpha_s|^2)/2 + sum_c alpha_s'c^* alpha_sc
    C = np.exp(-0.5 * (sq[:, None] + sq[None, :]) + al.conj() @ al.T)
    np.fill_diagonal(C, 1.0)
    C = 0.5 * (C + C.conj().T)
    lam = np.linalg.eigvalsh(C)[0]
    if lam < -PSD_TOL:
        raise NumericalDegeneracyError(f"Gram matrix has eigenvalue {lam:.3g}")
    return GramMatrix(C)


def psd_sqrt(C) -> np.ndarray:
    """Hermitian square root through the eigendecomposition.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero; anything below raises
    :class:`NotPSDError`. Eigenvalues under the eigensolver noise floor
    (a few ulp of the largest) are also zeroed, so rank-deficient inputs
    such as the all-ones matrix get an exact square root rather than one
    polluted by ``sqrt(eps)``.
    """
    M = np.asarray(C.entries if isinstance(C, GramMatrix) else C, dtype=complex)
    if np.max(np.abs(M - M.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise NotPSDError("matrix is not Hermitian")
    M = 0.5 * (M + M.conj().T)
    w, V = np.linalg.eigh(M)
    if w[0] < -PSD_TOL:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3g}")
    floor = 8 * M.shape[0] * np.finfo(float).eps * max(abs(w[-1]), 1.0)
    w = np.where(w < floor, 0.0, w)
    R = (V * np.sqrt(w)) @ V.conj().T
    return 0.5 * (R + R.conj().T)


@dataclass(frozen=True)
class KrausSet:
    """Diagonal Kraus operators ``K_s = sum_s' r[s, s'] P_s'``."""

    operators: np.ndarray  # (n_K, n_S, n_S)

    def apply(self, xi: np.ndarray) -> np.ndarray:
        K = self.operators
        return np.einsum("kij,jl,kml->im", K, xi, K.conj())

    def completeness(self) -> np.ndarray:
        K = self.operators
        return np.einsum("kji,kjl->il", K.conj(), K)


def kraus_set(sqrtC: np.ndarray, tol: float = 1e-10) -> KrausSet:
    R = np.asarray(sqrtC, dtype=complex)
    n = R.shape[0]
    ops = np.zeros((n, n, n), dtype=complex)
    idx = np.arange(n)
    ops[:, idx, idx] = R
    ks = KrausSet(ops)
    err = np.max(np.abs(ks.completeness() - np.eye(n)))
    if err > tol:
        raise NumericalDegeneracyError(f"Kraus completeness violated by {err:.3g}")
    return ks


def qubit_kraus_pair(c_ge: complex) -> KrausSet:
    """Two-operator form ``{P_g + c_ge P_e, sqrt(1 - |c_ge|^2) P_e}`` with ``c_ge = <alpha_g|alpha_e>``."""
    Pg, Pe = hb.projector(0, 2), hb.projector(1, 2)
    K1 = Pg + c_ge * Pe
    K2 = np.sqrt(max(0.0, 1.0 - abs(c_ge) ** 2)) * Pe
    return KrausSet(np.stack([K1, K2]))


def system_reduction(xi: np.ndarray, C) -> np.ndarray:
    """``rho_S = sum_{s,s'} C[s', s] P_s xi P_s'``: coherence ``(s, s')`` scaled by ``C[s', s]``."""
    M = C.entries if isinstance(C, GramMatrix) else np.asarray(C)
    xi = np.asarray(xi, dtype=complex)
    if xi.shape != M.shape:
        raise ValueError(f"state {xi.shape} and Gram matrix {M.shape} differ")
    out = M.T * xi
    np.fill_diagonal(out, np.diag(xi))
    return out


def _mode_alphas(alphas, n_levels: int | None = None) -> np.ndarray:
    al = np.asarray(alphas, dtype=complex)
    if al.ndim == 1:
        al = al[:, None]
    if n_levels is not None and al.shape[0] != n_levels:
        raise ValueError(f"{al.shape[0]} amplitude rows for {n_levels} system levels")
    return al


def cavity_reduction(xi: np.ndarray, alphas, truncations: Sequence[int]) -> np.ndarray:
    """``rho_C = sum_s Tr(P_s xi) (x)_c |alpha[s, c]><alpha[s, c]|`` on the truncated modes."""
    xi = np.asarray(xi, dtype=complex)
    al = _mode_alphas(alphas, xi.shape[0])
    if al.shape[1] != len(truncations):
        raise ValueError(f"{al.shape[1]} modes of amplitudes for {len(truncations)} truncations")
    dim = int(np.prod(truncations))
    rho = np.zeros((dim, dim), dtype=complex)
    for s in range(al.shape[0]):
        p = xi[s, s].real
        if p == 0.0:
            continue
        ket = hb.tensor(*(hb.coherent_ket(a, n)[:, None] for a, n in zip(al[s], truncations)))[:, 0]
        rho += p * np.outer(ket, ket.conj())
    return rho


def frame_unitary(alphas, truncations: Sequence[int]) -> np.ndarray:
    """Block-diagonal ``sum_s P_s D(alpha_s)``, one displacement block per system level."""
    al = _mode_alphas(alphas)
    n_s = al.shape[0]
    m = int(np.prod(truncations))
    U = np.zeros((n_s * m, n_s * m), dtype=complex)
    for s in range(n_s):
        U[s * m:(s + 1) * m, s * m:(s + 1) * m] = hb.multimode_displacement(al[s], truncations)
    return U


def vacuum(truncations: Sequence[int]) -> np.ndarray:
    m = int(np.prod(truncations))
    v = np.zeros((m, m), dtype=complex)
    v[0, 0] = 1.0
    return v


def reconstruct_joint(xi: np.ndarray, alphas, truncations: Sequence[int]) -> np.ndarray:
    """Lab-frame joint state from a system state (tensored with vacuum) or a displaced-frame state."""
    xi = np.asarray(xi, dtype=complex)
    al = _mode_alphas(alphas)
    n_s = al.shape[0]
    m = int(np.prod(truncations))
    if xi.shape == (n_s, n_s):
        xi = np.kron(xi, vacuum(truncations))
    elif xi.shape != (n_s * m, n_s * m):
        raise ValueError(f"state of shape {xi.shape} fits neither the system nor the joint space")
    U = frame_unitary(al, truncations)
    return U @ xi @ U.conj().T


def to_displaced_frame(rho: np.ndarray, alphas, truncations: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`reconstruct_joint` on the joint space."""
    U = frame_unitary(alphas, truncations)
    return U.conj().T @ np.asarray(rho, dtype=complex) @ U


def reduced_observables(xi: np.ndarray, alphas, reference: np.ndarray | None = None) -> dict:
    """Populations, coherence magnitudes and (optionally) fidelity of ``rho_S``."""
    C = gram(alphas)
    rho_s = system_reduction(xi, C)
    n = rho_s.shape[0]
    out = {f"pop_level{s}": float(rho_s[s, s].real) for s in range(n)}
    for s in range(n):
        for sp in range(s + 1, n):
            out[f"abs_coh_{s}{sp}"] = float(abs(rho_s[s, sp]))
    if reference is not None:
        out["fidelity"] = hb.fidelity(rho_s, reference)
    out["purity"] = hb.purity(rho_s)
    return out


def write_reduced_csv(path, times, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", *cols])
        for t, row in zip(times, rows):
            w.writerow([repr(float(t)), *(repr(float(row[c])) for c in cols)])
