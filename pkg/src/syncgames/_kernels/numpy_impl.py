"""Pure numpy implementations of the batched block kernels.

Every function here operates on C-contiguous complex128 stacks of
square matrices, shape (batch, d, d), and mirrors the signature of
the compiled versions in ``_core``.  The engine picks one of the two
at import time; see the package ``__init__``.
"""
import numpy as np

BACKEND = "numpy"


def batch_mul(a, b, out, alpha=1.0 + 0.0j, accum=False):
    """out[k] = alpha * a[k] @ b[k], added to out when accum is set."""
    prod = np.matmul(a, b)
    if alpha != 1.0:
        prod *= alpha
    if accum:
        out += prod
    else:
        out[...] = prod


def batch_mul_ha(a, b, out, alpha=1.0 + 0.0j, accum=False):
    """out[k] = alpha * a[k]^H @ b[k] (adjoint on the left factor)."""
    prod = np.matmul(a.conj().swapaxes(-1, -2), b)
    if alpha != 1.0:
        prod *= alpha
    if accum:
        out += prod
    else:
        out[...] = prod


def batch_mul_hb(a, b, out, alpha=1.0 + 0.0j, accum=False):
    """out[k] = alpha * a[k] @ b[k]^H (adjoint on the right factor)."""
    prod = np.matmul(a, b.conj().swapaxes(-1, -2))
    if alpha != 1.0:
        prod *= alpha
    if accum:
        out += prod
    else:
        out[...] = prod


def batch_axpy(alpha, x, y):
    # per-batch complex weights, broadcast over the matrix entries
    y += alpha[:, None, None] * x


def batch_frob_sq(a, out):
    """out[k] = squared Frobenius norm of a[k] (real)."""
    np.einsum("kij,kij->k", a.real, a.real, out=out)
    out += np.einsum("kij,kij->k", a.imag, a.imag)


def batch_trace(a, out):
    """out[k] = trace of a[k] (complex)."""
    np.einsum("kii->k", a, out=out)


def batch_add_identity(a, alpha):
    """a[k] += alpha[k] * I with per-batch complex alpha."""
    d = a.shape[-1]
    idx = np.arange(d)
    a[:, idx, idx] += alpha[:, None]
