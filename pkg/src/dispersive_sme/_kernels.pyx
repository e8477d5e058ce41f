# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory loop for the diffusive SME steppers.

Matrices are C-contiguous (row-major). BLAS is column-major, so the product
``C = op(A) op(B)`` is computed as ``C^T = op(B)^T op(A)^T`` by swapping the
operands; the transpose flags carry over unchanged.
"""

from libc.math cimport sqrt, isfinite
from scipy.linalg.cython_blas cimport zgemm
from scipy.linalg.cython_lapack cimport zheev

import numpy as np

ctypedef double complex cplx

cdef enum:
    EM = 0
    KRAUS = 1

# status codes returned to Python
cdef enum:
    OK = 0
    NONFINITE = 1
    DEGENERATE = 2
    LAPACK_FAIL = 3


cdef inline void mm(char ta, char tb, int n, cplx* A, cplx* B, cplx* C) noexcept nogil:
    cdef cplx one = 1.0
    cdef cplx zero = 0.0
    zgemm(&tb, &ta, &n, &n, &n, &one, B, &n, A, &n, &zero, C, &n)


cdef inline cplx trace(int n, cplx* A) noexcept nogil:
    cdef cplx s = 0.0
    cdef int i
    for i in range(n):
        s = s + A[i * n + i]
    return s


cdef inline double expect(int n, cplx* O, cplx* R) noexcept nogil:
    # Re Tr(O R) = Re sum_ij O_ij R_ji
    cdef double s = 0.0
    cdef int i, j
    for i in range(n):
        for j in range(n):
            s += (O[i * n + j] * R[j * n + i]).real
    return s


cdef int min_eig(int n, cplx* R, cplx* work_mat, cplx* work, int lwork,
                 double* w, double* rwork, double* out) noexcept nogil:
    cdef int i, info = 0
    cdef char jobz = b'N'
    cdef char uplo = b'L'
    for i in range(n * n):
        work_mat[i] = R[i]
    zheev(&jobz, &uplo, &n, work_mat, &n, w, work, &lwork, rwork, &info)
    if info != 0:
        return LAPACK_FAIL
    out[0] = w[0]
    return OK


def run_trajectory(
    cplx[:, ::1] rho0,
    cplx[:, :, ::1] h_ops,
    cplx[:, ::1] h_coef,
    cplx[:, :, ::1] l_ops,
    cplx[:, ::1] l_coef,
    double eta,
    double dt,
    double[::1] noise,
    bint filter_mode,
    int scheme,
    cplx[:, :, ::1] obs_ops,
    Py_ssize_t stride,
    bint track_min_eig,
):
    """Integrate one trajectory; see ``dispersive_sme.sme.simulate`` for the contract.

    Returns ``(status, failed_step, dw, dy, obs, trace, min_eig, states)``.
    """
    cdef int n = rho0.shape[0]
    cdef Py_ssize_t steps = noise.shape[0]
    cdef int kh = h_ops.shape[0]
    cdef int kl = l_ops.shape[0]
    cdef int ko = obs_ops.shape[0]
    cdef Py_ssize_t n2 = n * n

    n_keep = (steps + stride - 1) // stride + 1
    states_np = np.zeros((n_keep, n, n), dtype=np.complex128)
    dw_np = np.zeros(steps, dtype=np.float64)
    dy_np = np.zeros(steps, dtype=np.float64)
    obs_np = np.zeros((steps + 1, ko), dtype=np.float64)
    tr_np = np.zeros(steps + 1, dtype=np.float64)
    eig_np = np.full(steps + 1, np.nan, dtype=np.float64)
    keep_idx_np = np.zeros(n_keep, dtype=np.int64)

    cdef cplx[:, :, ::1] states = states_np
    cdef double[::1] dw_out = dw_np
    cdef double[::1] dy_out = dy_np
    cdef double[:, ::1] obs = obs_np
    cdef double[::1] tr_out = tr_np
    cdef double[::1] eig_out = eig_np
    cdef long long[::1] keep_idx = keep_idx_np

    buf = np.zeros((10, n, n), dtype=np.complex128)
    cdef cplx[:, :, ::1] b = buf
    cdef cplx* R = &b[0, 0, 0]
    cdef cplx* H = &b[1, 0, 0]
    cdef cplx* L = &b[2, 0, 0]
    cdef cplx* LR = &b[3, 0, 0]
    cdef cplx* LdL = &b[4, 0, 0]
    cdef cplx* M = &b[5, 0, 0]
    cdef cplx* T1 = &b[6, 0, 0]
    cdef cplx* T2 = &b[7, 0, 0]
    cdef cplx* T3 = &b[8, 0, 0]
    cdef cplx* EW = &b[9, 0, 0]

    cdef int lwork = max(1, 4 * n)
    work_np = np.zeros(lwork, dtype=np.complex128)
    rwork_np = np.zeros(max(1, 3 * n - 2), dtype=np.float64)
    w_np = np.zeros(n, dtype=np.float64)
    cdef cplx[::1] work = work_np
    cdef double[::1] rwork = rwork_np
    cdef double[::1] w = w_np

    cdef cplx* hop = &h_ops[0, 0, 0] if kh > 0 else NULL
    cdef cplx* lop = &l_ops[0, 0, 0] if kl > 0 else NULL
    cdef cplx* oop = &obs_ops[0, 0, 0] if ko > 0 else NULL

    cdef Py_ssize_t k, i, j, idx
    cdef int status = OK
    cdef Py_ssize_t failed = -1
    cdef Py_ssize_t kept = 0
    cdef double sq_eta = sqrt(eta)
    cdef double drift, dwk, dyk, trv, lam
    cdef cplx c, x, trLR
    cdef cplx mi = -1j

    for i in range(n2):
        R[i] = rho0[i // n, i % n]

    with nogil:
        # initial records
        tr_out[0] = trace(n, R).real
        for j in range(ko):
            obs[0, j] = expect(n, oop + j * n2, R)
        if track_min_eig:
            status = min_eig(n, R, EW, &work[0], lwork, &w[0], &rwork[0], &lam)
            if status != OK:
                failed = 0
            eig_out[0] = lam
        for i in range(n2):
            states[0, i // n, i % n] = R[i]
        keep_idx[0] = 0
        kept = 1

        k = 0
        while k < steps and status == OK:
            # assemble H and L
            for i in range(n2):
                H[i] = 0.0
                L[i] = 0.0
            for j in range(kh):
                c = h_coef[k, j]
                if c != 0.0:
                    for i in range(n2):
                        H[i] = H[i] + c * hop[j * n2 + i]
            for j in range(kl):
                c = l_coef[k, j]
                if c != 0.0:
                    for i in range(n2):
                        L[i] = L[i] + c * lop[j * n2 + i]

            mm(b'N', b'N', n, L, R, LR)
            trLR = trace(n, LR)
            drift = 2.0 * sq_eta * trLR.real
            if filter_mode:
                dyk = noise[k]
                dwk = dyk - drift * dt
            else:
                dwk = noise[k]
                dyk = drift * dt + dwk
            dw_out[k] = dwk
            dy_out[k] = dyk

            mm(b'C', b'N', n, L, L, LdL)
            if scheme == KRAUS:
                # M = I + (-iH - L^dag L / 2) dt + sqrt(eta) L dy
                for i in range(n2):
                    M[i] = (mi * H[i] - 0.5 * LdL[i]) * dt + sq_eta * dyk * L[i]
                for i in range(n):
                    M[i * n + i] = M[i * n + i] + 1.0
                mm(b'N', b'N', n, M, R, T1)
                mm(b'N', b'C', n, T1, M, T2)
                mm(b'N', b'C', n, LR, L, T3)
                for i in range(n2):
                    T2[i] = T2[i] + (1.0 - eta) * dt * T3[i]
            else:
                # R + (-i[H, R] + D_L(R)) dt + sqrt(eta) M_L(R) dw, using R = R^dag
                mm(b'N', b'N', n, H, R, T1)
                mm(b'N', b'C', n, LR, L, T3)
                mm(b'N', b'N', n, LdL, R, M)
                for i in range(n):
                    for j in range(n):
                        idx = i * n + j
                        x = mi * (T1[idx] - T1[j * n + i].conjugate())
                        x = x + T3[idx] - 0.5 * (M[idx] + M[j * n + i].conjugate())
                        T2[idx] = R[idx] + x * dt + sq_eta * dwk * (
                            LR[idx] + LR[j * n + i].conjugate() - 2.0 * trLR.real * R[idx])

            trv = trace(n, T2).real
            if not isfinite(trv):
                status = NONFINITE
                failed = k
                break
            if scheme == KRAUS and trv < 1e-300:
                status = DEGENERATE
                failed = k
                break
            for i in range(n):
                for j in range(i, n):
                    x = 0.5 * (T2[i * n + j] + T2[j * n + i].conjugate()) / trv
                    R[i * n + j] = x
                    R[j * n + i] = x.conjugate()
            for i in range(n2):
                if not (isfinite(R[i].real) and isfinite(R[i].imag)):
                    status = NONFINITE
                    failed = k
                    break
            if status != OK:
                break

            tr_out[k + 1] = trace(n, R).real
            for j in range(ko):
                obs[k + 1, j] = expect(n, oop + j * n2, R)
            if track_min_eig:
                status = min_eig(n, R, EW, &work[0], lwork, &w[0], &rwork[0], &lam)
                if status != OK:
                    failed = k
                    break
                eig_out[k + 1] = lam
            if (k + 1) % stride == 0 or k + 1 == steps:
                for i in range(n2):
                    states[kept, i // n, i % n] = R[i]
                keep_idx[kept] = k + 1
                kept += 1
            k += 1

    return (status, failed, dw_np, dy_np, obs_np, tr_np, eig_np,
            states_np[:kept], keep_idx_np[:kept], buf[0].copy())
