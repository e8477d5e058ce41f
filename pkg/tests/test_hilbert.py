import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersive_sme import hilbert as hb


def test_annihilation_two_levels():
    assert np.array_equal(hb.annihilation(2), np.array([[0, 1], [0, 0]], dtype=complex))


def test_annihilation_three_levels():
    a = hb.annihilation(3)
    expected = np.zeros((3, 3), complex)
    expected[0, 1] = 1.0
    expected[1, 2] = math.sqrt(2)
    assert np.array_equal(a, expected)


def test_number_operator():
    assert np.allclose(hb.number(4), np.diag([0, 1, 2, 3]))


@pytest.mark.parametrize("N", [1, 0, -3])
def test_annihilation_rejects_small_truncation(N):
    with pytest.raises(hb.InvalidDimensionError):
        hb.annihilation(N)


@pytest.mark.parametrize("N", [2, 5, 12])
def test_canonical_commutator_on_lower_block(N):
    a = hb.annihilation(N)
    c = a @ a.conj().T - a.conj().T @ a
    # sqrt(n) * sqrt(n) rounds to n only up to the last bit
    assert np.max(np.abs(c[: N - 1, : N - 1] - np.eye(N - 1))) <= 1e-14


def test_projectors():
    assert np.array_equal(hb.projector(0, 2), np.diag([1, 0]).astype(complex))
    assert np.allclose(sum(hb.projector(s, 3) for s in range(3)), np.eye(3))
    assert np.allclose(hb.projector(0, 2) @ hb.projector(1, 2), 0)
    P = hb.projector(1, 4)
    assert np.allclose(P @ P, P)
    with pytest.raises(hb.HilbertError):
        hb.projector(2, 2)


def test_sigma_z_convention():
    # g is index 0: sigma_z = P_e - P_g
    assert np.allclose(hb.sigma_z(), hb.projector(1, 2) - hb.projector(0, 2))


def test_displacement_zero_is_identity():
    assert np.allclose(hb.displacement(0.0, 10), np.eye(10), atol=1e-14)


def test_displaced_vacuum_photon_number():
    rho = hb.coherent_state(1.0, 20)
    assert abs(hb.expectation(hb.number(20), rho) - 1.0) < 1e-6


def test_displacement_inverse():
    a = 0.7 + 0.3j
    assert np.max(np.abs(hb.displacement(a, 20) @ hb.displacement(-a, 20) - np.eye(20))) < 1e-8


@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(8, 30))
@settings(max_examples=40, deadline=None)
def test_displacement_unitary(re, im, N):
    alpha = complex(re, im) * math.sqrt(0.3 * N) / math.sqrt(2)
    D = hb.displacement(alpha, N)
    assert np.max(np.abs(D @ D.conj().T - np.eye(N))) <= 1e-6


def test_displacement_truncation_guard():
    with pytest.warns(hb.TruncationWarning):
        hb.displacement(math.sqrt(0.6 * 10), 10)
    with pytest.raises(hb.TruncationOverflowError):
        hb.displacement(math.sqrt(0.95 * 10), 10)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        hb.displacement(math.sqrt(0.4 * 10), 10)


def test_coherent_state_vacuum_and_purity():
    assert np.allclose(hb.coherent_state(0.0, 6), hb.fock_state(0, 6))
    assert abs(hb.purity(hb.coherent_state(1.1 - 0.4j, 20)) - 1.0) < 1e-8


def test_coherent_state_poisson_populations():
    p = np.diag(hb.coherent_state(1.0, 20)).real
    poisson = np.array([math.exp(-1.0) / math.factorial(n) for n in range(20)])
    assert np.max(np.abs(p - poisson)) < 1e-6


def test_coherent_overlap():
    a, b = hb.coherent_ket(0.5, 25), hb.coherent_ket(-0.5, 25)
    assert abs(abs(np.vdot(a, b)) ** 2 - math.exp(-1.0)) < 1e-6


def test_tensor_identity_and_partial_trace(rng):
    assert np.array_equal(hb.tensor(np.eye(2), np.eye(3)), np.eye(6))
    ra, rb = hb.random_density(3, rng), hb.random_density(4, rng)
    joint = hb.tensor(ra, rb)
    assert np.max(np.abs(hb.partial_trace(joint, (3, 4), 0) - ra)) < 1e-12
    assert np.max(np.abs(hb.partial_trace(joint, (3, 4), 1) - rb)) < 1e-12


def test_partial_trace_bell_state():
    psi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    rho = np.outer(psi, psi).astype(complex)
    assert np.allclose(hb.partial_trace(rho, (2, 2), 0), np.eye(2) / 2, atol=1e-15)


def test_partial_trace_three_factors_preserves_trace(rng):
    rho = hb.random_density(24, rng)
    for keep in (0, 1, 2, [0, 2], [1, 2]):
        red = hb.partial_trace(rho, (2, 3, 4), keep)
        assert abs(np.trace(red) - 1.0) < 1e-12
    with pytest.raises(hb.DimensionMismatchError):
        hb.partial_trace(rho, (2, 3), 0)


@given(st.integers(2, 4), st.integers(2, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_partial_trace_inverts_tensor(da, db, seed):
    rng = np.random.default_rng(seed)
    ra, rb = hb.random_density(da, rng), hb.random_density(db, rng)
    assert np.max(np.abs(hb.partial_trace(hb.tensor(ra, rb), (da, db), 0) - ra)) <= 1e-12


def test_dissipator_examples():
    a = hb.annihilation(3)
    assert np.allclose(hb.dissipator(a, hb.fock_state(0, 3)), 0)
    expected = hb.fock_state(0, 3) - hb.fock_state(1, 3)
    assert np.allclose(hb.dissipator(a, hb.fock_state(1, 3)), expected, atol=1e-15)
    assert np.allclose(hb.innovation(a, hb.fock_state(0, 3)), 0)


def test_superoperators_traceless_and_hermitian(rng):
    for _ in range(20):
        n = int(rng.integers(2, 7))
        L = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        rho = hb.random_density(n, rng)
        for out in (hb.dissipator(L, rho), hb.innovation(L, rho)):
            assert abs(np.trace(out)) < 1e-12
            assert np.max(np.abs(out - out.conj().T)) < 1e-12
    with pytest.raises(hb.DimensionMismatchError):
        hb.dissipator(np.eye(2), np.eye(3))


def test_expectation_examples():
    rho = hb.coherent_state(1.2, 25)
    assert abs(hb.expectation(np.eye(25), rho) - 1.0) < 1e-12
    assert abs(hb.expectation(hb.number(25), rho) - 1.44) < 1e-5
    assert abs(hb.expectation(hb.sigma_z(), np.diag([0.25, 0.75])) - 0.5) < 1e-15


def test_expectation_real_for_hermitian(rng):
    O = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    O = O + O.conj().T
    assert abs(hb.expectation(O, hb.random_density(5, rng)).imag) < 1e-10


def test_space_spec():
    sp = hb.SpaceSpec(2, (3, 4))
    assert sp.dims == (2, 3, 4) and sp.dim == 24 and sp.n_modes == 2
    n1 = sp.number(1)
    assert np.allclose(n1, hb.tensor(np.eye(2), np.eye(3), hb.number(4)))
    assert np.allclose(sum(sp.projector(s) for s in range(2)), np.eye(24))
    with pytest.raises(hb.InvalidDimensionError):
        hb.SpaceSpec(0)
    with pytest.raises(hb.InvalidDimensionError):
        hb.SpaceSpec(2, (1,))
    with pytest.raises(hb.HilbertError):
        hb.SpaceSpec(2, (1024, 1024))


def test_check_density():
    hb.check_density(np.eye(3) / 3)
    with pytest.raises(hb.InvalidStateError):
        hb.check_density(np.diag([0.6, 0.6]))
    with pytest.raises(hb.InvalidStateError):
        hb.check_density(np.diag([1.1, -0.1]))
    with pytest.raises(hb.InvalidStateError):
        hb.check_density(np.array([[0.5, 0.1], [0.2, 0.5]]))


def test_state_metrics(rng):
    rho = hb.random_density(4, rng)
    assert abs(hb.trace_distance(rho, rho)) < 1e-14
    assert abs(hb.fidelity(rho, rho) - 1.0) < 1e-8
    assert abs(hb.trace_distance(hb.fock_state(0, 2), hb.fock_state(1, 2)) - 1.0) < 1e-15
