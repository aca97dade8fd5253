"""Small dense symmetric helpers.

Candidate scoring in the search procedures evaluates tr(H^-1) for tens of
thousands of q x q matrices per step, with q rarely above 20.  A
column-by-column Cholesky vectorised over the batch axis is cheaper than one
LAPACK call per matrix and lets us apply a relative pivot threshold instead
of failing the whole batch on the first singular member.  Internally the
batch axis is kept last so every elementwise operation is contiguous.
"""

import numpy as np

#: Relative pivot threshold used to call a design information matrix singular.
DESIGN_RTOL = 1e-10
#: Relative pivot threshold used for design-measure information matrices.
MEASURE_RTOL = 1e-12


def symmetrize(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _cholesky_last(a, rtol):
    # a has shape (q, q, B)
    q = a.shape[0]
    chol = np.zeros_like(a)
    scale = np.max(np.einsum("iib->ib", a), axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    singular = np.zeros(a.shape[2], dtype=bool)
    for j in range(q):
        row = chol[j, :j]
        pivot = a[j, j] - np.einsum("kb,kb->b", row, row)
        bad = pivot <= rtol * scale
        singular |= bad
        root = np.sqrt(np.where(bad, 1.0, pivot))
        chol[j, j] = root
        if j + 1 < q:
            below = a[j + 1:, j] - np.einsum("ikb,kb->ib", chol[j + 1:, :j], row)
            chol[j + 1:, j] = below / root
    return chol, singular


def _lower_inverse_last(chol):
    q = chol.shape[0]
    inv = np.zeros_like(chol)
    for i in range(q):
        diag = 1.0 / chol[i, i]
        inv[i, i] = diag
        if i:
            inv[i, :i] = -np.einsum("kb,kjb->jb", chol[i, :i], inv[:i, :i]) * diag
    return inv


def _to_last(a):
    a = np.asarray(a, dtype=float)
    q = a.shape[-1]
    return np.ascontiguousarray(a.reshape(-1, q, q).transpose(1, 2, 0))


def batched_cholesky(a, rtol=DESIGN_RTOL):
    """Cholesky factors of a stack of symmetric matrices.

    Parameters
    ----------
    a : ndarray, shape (..., q, q)
    rtol : float
        A pivot at or below ``rtol * max(diag(a))`` marks the matrix singular.

    Returns
    -------
    chol : ndarray, shape (..., q, q)
        Lower triangular factors.  Entries of singular matrices are meaningless.
    singular : ndarray of bool, shape (...)
    """
    a = np.asarray(a, dtype=float)
    chol, singular = _cholesky_last(_to_last(a), rtol)
    return chol.transpose(2, 0, 1).reshape(a.shape), singular.reshape(a.shape[:-2])


def batched_trace_inverse(a, rtol=DESIGN_RTOL):
    """Return ``(tr(a^-1), singular)`` for a stack of symmetric matrices.

    Singular members get ``inf`` in the trace array.
    """
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 0:
        raise ValueError("empty matrices")
    chol, singular = _cholesky_last(_to_last(a), rtol)
    inv = _lower_inverse_last(chol)
    tr = np.einsum("ijb,ijb->b", inv, inv)
    tr = np.where(singular, np.inf, tr)
    return tr.reshape(a.shape[:-2]), singular.reshape(a.shape[:-2])


def spd_inverse(a, rtol=DESIGN_RTOL):
    """Inverse of one symmetric positive-definite matrix, or ``None`` if singular."""
    chol, singular = _cholesky_last(_to_last(a), rtol)
    if singular[0]:
        return None
    linv = _lower_inverse_last(chol)[:, :, 0]
    return symmetrize(linv.T @ linv)


def rank(a, rtol=DESIGN_RTOL):
    """Numerical rank with a threshold relative to the largest singular value."""
    sv = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))
