# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled batched block kernels.

Same contracts as ``numpy_impl``; that module is the documented
reference. Products go through BLAS zgemm; the row-major stacks are
fed in transposed order so no copies are made.
"""
from scipy.linalg.cython_blas cimport zgemm

ctypedef double complex zcomplex

BACKEND = "compiled"


cdef void _gemm_batch(zcomplex[:, :, ::1] a, zcomplex[:, :, ::1] b,
                      zcomplex[:, :, ::1] out, zcomplex alpha,
                      zcomplex beta, char ta, char tb) noexcept nogil:
    # Row-major C = op(A) @ op(B) is column-major C^T = op(B)^T op(A)^T,
    # so B's data goes in the first zgemm slot. ta/tb already account
    # for the flip.
    cdef int d = <int> a.shape[1]
    cdef Py_ssize_t k
    for k in range(a.shape[0]):
        zgemm(&ta, &tb, &d, &d, &d, &alpha,
              &b[k, 0, 0], &d, &a[k, 0, 0], &d,
              &beta, &out[k, 0, 0], &d)


def batch_mul(zcomplex[:, :, ::1] a not None, zcomplex[:, :, ::1] b not None,
              zcomplex[:, :, ::1] out not None,
              zcomplex alpha=1.0 + 0.0j, bint accum=False):
    cdef zcomplex beta = 1.0 if accum else 0.0
    with nogil:
        _gemm_batch(a, b, out, alpha, beta, c'N', c'N')


def batch_mul_ha(zcomplex[:, :, ::1] a not None, zcomplex[:, :, ::1] b not None,
                 zcomplex[:, :, ::1] out not None,
                 zcomplex alpha=1.0 + 0.0j, bint accum=False):
    # out[k] = alpha * a[k]^H @ b[k]; conj(A) = (A^T)^H lets zgemm's
    # 'C' op supply the conjugate without a temporary
    cdef zcomplex beta = 1.0 if accum else 0.0
    with nogil:
        _gemm_batch(a, b, out, alpha, beta, c'N', c'C')


def batch_mul_hb(zcomplex[:, :, ::1] a not None, zcomplex[:, :, ::1] b not None,
                 zcomplex[:, :, ::1] out not None,
                 zcomplex alpha=1.0 + 0.0j, bint accum=False):
    cdef zcomplex beta = 1.0 if accum else 0.0
    with nogil:
        _gemm_batch(a, b, out, alpha, beta, c'C', c'N')


def batch_axpy(zcomplex[::1] alpha not None, zcomplex[:, :, ::1] x not None,
               zcomplex[:, :, ::1] y not None):
    cdef Py_ssize_t k, i, j
    cdef zcomplex al
    with nogil:
        for k in range(x.shape[0]):
            al = alpha[k]
            for i in range(x.shape[1]):
                for j in range(x.shape[2]):
                    y[k, i, j] = y[k, i, j] + al * x[k, i, j]


def batch_frob_sq(zcomplex[:, :, ::1] a not None, double[::1] out not None):
    cdef Py_ssize_t k, i, j
    cdef double s
    cdef zcomplex z
    with nogil:
        for k in range(a.shape[0]):
            s = 0.0
            for i in range(a.shape[1]):
                for j in range(a.shape[2]):
                    z = a[k, i, j]
                    s += z.real * z.real + z.imag * z.imag
            out[k] = s


def batch_trace(zcomplex[:, :, ::1] a not None, zcomplex[::1] out not None):
    cdef Py_ssize_t k, i
    cdef zcomplex s
    with nogil:
        for k in range(a.shape[0]):
            s = 0.0
            for i in range(a.shape[1]):
                s = s + a[k, i, i]
            out[k] = s


def batch_add_identity(zcomplex[:, :, ::1] a not None,
                       zcomplex[::1] alpha not None):
    cdef Py_ssize_t k, i
    with nogil:
        for k in range(a.shape[0]):
            for i in range(a.shape[1]):
                a[k, i, i] = a[k, i, i] + alpha[k]
