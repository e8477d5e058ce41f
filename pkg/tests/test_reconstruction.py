import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispersive_sme import hilbert as hb
from dispersive_sme import reconstruction as rc


def random_alphas(rng, n_s, n_c, scale=1.0):
    return scale * (rng.standard_normal((n_s, n_c)) + 1j * rng.standard_normal((n_s, n_c))) / math.sqrt(2)


seeds = st.integers(0, 2**32 - 1)


# --- overlap and Gram matrix -------------------------------------------------


def test_overlap_examples():
    assert rc.overlap([0.3 - 0.2j], [0.3 - 0.2j]) == pytest.approx(1.0, abs=1e-15)
    assert rc.overlap([0.0], [2.0]) == pytest.approx(math.exp(-2), rel=1e-14)
    with pytest.raises(ValueError):
        rc.overlap([0.1, 0.2], [0.1])


def test_overlap_multimode_product_matches_truncated_states():
    a, b = [0.4 + 0.1j, -0.3j], [-0.2 + 0.5j, 0.6]
    o1, o2 = rc.overlap(a[:1], b[:1]), rc.overlap(a[1:], b[1:])
    assert rc.overlap(a, b) == pytest.approx(o1 * o2, abs=1e-15)
    ka = hb.tensor(*(hb.coherent_ket(x, 30)[:, None] for x in a))[:, 0]
    kb = hb.tensor(*(hb.coherent_ket(x, 30)[:, None] for x in b))[:, 0]
    assert abs(np.vdot(ka, kb) - rc.overlap(a, b)) <= 1e-6


def test_gram_examples(rng):
    C = rc.gram(np.full((3, 1), 0.7 - 0.1j)).entries
    assert np.max(np.abs(C - np.ones((3, 3)))) <= 1e-12
    far = rc.gram(np.array([[0.0], [10.0], [-10.0], [10j]])).entries
    assert np.max(np.abs(far - np.eye(4))) <= 1e-12
    al = np.array([[0.2 + 0.3j], [-0.5 + 0.1j]])
    c = rc.overlap(al[0], al[1])
    assert np.allclose(np.linalg.eigvalsh(rc.gram(al).entries), [1 - abs(c), 1 + abs(c)], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 5), st.integers(1, 3))
def test_gram_invariants(seed, n_s, n_c):
    C = rc.gram(random_alphas(np.random.default_rng(seed), n_s, n_c)).entries
    assert np.max(np.abs(C - C.conj().T)) <= 1e-12
    assert np.max(np.abs(np.diag(C) - 1)) <= 1e-12
    assert np.linalg.eigvalsh(C)[0] >= -1e-10
    assert np.max(np.abs(C)) <= 1 + 1e-12


# --- square root and Kraus operators -----------------------------------------


def test_psd_sqrt_examples():
    assert np.allclose(rc.psd_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    for n in (2, 3, 5):
        J = np.ones((n, n))
        assert np.max(np.abs(rc.psd_sqrt(J) - J / math.sqrt(n))) <= 1e-12
    c = 0.37
    rp, rm = (math.sqrt(1 + c) + math.sqrt(1 - c)) / 2, (math.sqrt(1 + c) - math.sqrt(1 - c)) / 2
    assert np.allclose(rc.psd_sqrt(np.array([[1, c], [c, 1]])), [[rp, rm], [rm, rp]], atol=1e-14)


def test_psd_sqrt_clamps_and_rejects():
    eps = 5e-11
    R = rc.psd_sqrt(np.diag([1.0, -eps]))
    assert np.allclose(R, np.diag([1.0, 0.0]), atol=1e-15)
    with pytest.raises(rc.NotPSDError):
        rc.psd_sqrt(np.diag([1.0, -1e-6]))
    with pytest.raises(rc.NumericalDegeneracyError):
        rc.psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 5), st.integers(1, 3))
def test_sqrt_squares_back(seed, n_s, n_c):
    C = rc.gram(random_alphas(np.random.default_rng(seed), n_s, n_c)).entries
    R = rc.psd_sqrt(C)
    assert np.max(np.abs(R @ R - C)) <= 1e-9


def test_kraus_set_identity_gives_projectors():
    ks = rc.kraus_set(rc.psd_sqrt(np.eye(3)))
    for s in range(3):
        assert np.allclose(ks.operators[s], hb.projector(s, 3), atol=1e-15)


def test_kraus_set_rejects_incomplete_rows():
    with pytest.raises(rc.NumericalDegeneracyError):
        rc.kraus_set(0.5 * np.eye(2))


def test_all_equal_amplitudes_keep_coherences(rng):
    xi = hb.random_density(3, rng)
    ks = rc.kraus_set(rc.psd_sqrt(rc.gram(np.full((3, 1), 0.4))))
    assert np.max(np.abs(ks.apply(xi) - xi)) <= 1e-12


def test_qubit_pair_matches_sqrt_construction(rng):
    for _ in range(50):
        al = random_alphas(rng, 2, 1, scale=1.5)
        C = rc.gram(al)
        pair = rc.qubit_kraus_pair(C.entries[0, 1])
        ks = rc.kraus_set(rc.psd_sqrt(C))
        xi = hb.random_density(2, rng)
        assert np.max(np.abs(pair.apply(xi) - ks.apply(xi))) <= 1e-10
        assert np.max(np.abs(pair.completeness() - np.eye(2))) <= 1e-12


# --- output maps -------------------------------------------------------------


def test_system_reduction_examples(rng):
    xi = hb.random_density(3, rng)
    assert np.array_equal(rc.system_reduction(xi, np.ones((3, 3))), xi)
    assert np.array_equal(rc.system_reduction(xi, np.eye(3)), np.diag(np.diag(xi)))


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 4), st.integers(1, 2))
def test_system_reduction_is_a_kraus_channel(seed, n_s, n_c):
    rng = np.random.default_rng(seed)
    C = rc.gram(random_alphas(rng, n_s, n_c))
    xi = hb.random_density(n_s, rng)
    ks = rc.kraus_set(rc.psd_sqrt(C))
    rho = rc.system_reduction(xi, C)
    assert np.max(np.abs(ks.completeness() - np.eye(n_s))) <= 1e-10
    assert np.max(np.abs(rho - ks.apply(xi))) <= 1e-10
    assert np.array_equal(np.diag(rho), np.diag(xi))
    assert hb.purity(rho) <= hb.purity(xi) + 1e-10
    assert abs(np.trace(rho) - 1) <= 1e-9


def test_cavity_reduction_examples():
    N = 25
    al = np.array([[0.5 + 0.2j], [-0.4 + 0.3j]])
    g = hb.projector(0, 2)
    assert np.max(np.abs(rc.cavity_reduction(g, al, [N]) - hb.coherent_state(al[0, 0], N))) <= 1e-12
    same = np.array([[0.3j], [0.3j]])
    out = rc.cavity_reduction(np.eye(2) / 2, same, [N])
    assert np.max(np.abs(out - hb.coherent_state(0.3j, N))) <= 1e-12
    xi = np.array([[0.3, 0.1], [0.1, 0.7]], complex)
    rho = rc.cavity_reduction(xi, al, [N])
    assert abs(np.trace(rho) - 1) <= 1e-9
    n = np.trace(hb.number(N) @ rho).real
    assert n == pytest.approx(0.3 * abs(al[0, 0]) ** 2 + 0.7 * abs(al[1, 0]) ** 2, abs=1e-6)


def test_cavity_reduction_overflow():
    with pytest.raises(hb.TruncationOverflowError):
        rc.cavity_reduction(np.eye(2) / 2, np.array([[3.0], [0.0]]), [5])


def test_reconstruct_joint_at_zero_amplitude(rng):
    xi = hb.random_density(3, rng)
    out = rc.reconstruct_joint(xi, np.zeros((3, 2)), [3, 4])
    assert np.max(np.abs(out - np.kron(xi, rc.vacuum([3, 4])))) <= 1e-15


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 3), st.integers(1, 2))
def test_reconstruct_joint_consistency(seed, n_s, n_c):
    rng = np.random.default_rng(seed)
    truncs = [22] * n_c if n_c == 1 else [16, 16]
    al = random_alphas(rng, n_s, n_c, scale=0.8)
    xi = hb.random_density(n_s, rng)
    rho = rc.reconstruct_joint(xi, al, truncs)
    dims = [n_s, *truncs]
    assert abs(np.trace(rho) - 1) <= 1e-9
    rho_s = hb.partial_trace(rho, dims, 0)
    rho_c = hb.partial_trace(rho, dims, list(range(1, n_c + 1)))
    assert np.max(np.abs(rho_s - rc.system_reduction(xi, rc.gram(al)))) <= 1e-8
    assert np.max(np.abs(rho_c - rc.cavity_reduction(xi, al, truncs))) <= 1e-8
    back = rc.to_displaced_frame(rho, al, truncs)
    assert np.max(np.abs(back - np.kron(xi, rc.vacuum(truncs)))) <= 1e-8
    ev = np.sort(np.linalg.eigvalsh(rho))
    ev0 = np.sort(np.linalg.eigvalsh(np.kron(xi, rc.vacuum(truncs))))
    assert np.max(np.abs(ev - ev0)) <= 1e-8


def test_reconstruct_joint_accepts_displaced_state(rng):
    truncs = [6]
    al = random_alphas(rng, 2, 1, scale=0.5)
    xi = hb.random_density(12, rng)
    rho = rc.reconstruct_joint(xi, al, truncs)
    assert np.max(np.abs(rc.to_displaced_frame(rho, al, truncs) - xi)) <= 1e-12
    with pytest.raises(ValueError):
        rc.reconstruct_joint(np.eye(5) / 5, al, truncs)


def test_reduced_observables_and_csv(tmp_path, rng):
    al = np.array([[0.0], [1.0]])
    xi = np.full((2, 2), 0.5, complex)
    obs = rc.reduced_observables(xi, al, reference=xi)
    assert obs["pop_level0"] == pytest.approx(0.5)
    assert obs["abs_coh_01"] == pytest.approx(0.5 * math.exp(-0.5), rel=1e-14)
    assert obs["fidelity"] <= 1.0
    rc.write_reduced_csv(tmp_path / "r.csv", [0.0, 0.1], [obs, obs])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["time", "pop_level0", "pop_level1"]
    assert len(lines) == 3
