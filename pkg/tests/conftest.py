import numpy as np
import pytest

from dispersive_sme import hilbert as hb
from dispersive_sme.models import ModelKind, SMEModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(n, rng, scale=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (A + A.conj().T)


def random_operator(n, rng, scale=1.0):
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def constant_model(H, L, eta, kind=ModelKind.FULL_QUDIT):
    """Time-independent single-channel model on an ``n``-level space."""
    n = H.shape[0]
    space = hb.SpaceSpec(n)

    def coefficients(times):
        return np.ones((len(times), 1), complex), np.ones((len(times), 1), complex)

    return SMEModel(kind, space, H[None].astype(complex), L[None].astype(complex), coefficients, eta,
                    {"pop_level0": space.projector(0)})


def em_superoperator_step(rho, H, L, eta, dt, dw):
    """Dense oracle for one Euler-Maruyama step.

    Row-major vectorisation: vec(A X B) = (A kron B^T) vec(X).
    """
    n = rho.shape[0]
    I = np.eye(n)
    LdL = L.conj().T @ L
    G = (-1j * (np.kron(H, I) - np.kron(I, H.T)) + np.kron(L, L.conj())
         - 0.5 * (np.kron(LdL, I) + np.kron(I, LdL.T)))
    S = np.kron(L, I) + np.kron(I, L.conj())
    v = rho.reshape(-1)
    sv = S @ v
    noise = sv - np.trace(sv.reshape(n, n)) * v
    out = (v + G @ v * dt + np.sqrt(eta) * noise * dw).reshape(n, n)
    out = 0.5 * (out + out.conj().T)
    return out / np.trace(out).real


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
