"""CSR matrix utilities: canonical-form handling, products, and dense factorization.

Every operator in this library is a scipy CSR matrix kept in canonical form
(sorted column indices, no duplicates). Explicit zeros are legal stored
entries and are never silently dropped, so sparsity patterns stay
deterministic across runs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp


class SingularMatrixError(RuntimeError):
    """A factorization hit an exactly (or numerically) singular pivot."""

    def __init__(self, row, detail=""):
        self.row = int(row)
        msg = f"singular pivot encountered at row {row}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


def as_csr(A):
    """Convert ``A`` (dense array, any scipy sparse format) to canonical CSR.

    Duplicate entries are summed; explicit zeros are retained.
    """
    if sp.issparse(A):
        M = A.tocsr().copy()
    else:
        M = sp.csr_matrix(np.asarray(A, dtype=np.float64))
    M.sum_duplicates()
    M.sort_indices()
    if M.data.dtype != np.float64:
        M = M.astype(np.float64)
    return M


def require_canonical(A, name="matrix"):
    """Validate the CSR canonical-form invariants, raising ValueError on breakage."""
    if not sp.issparse(A) or A.format != "csr":
        raise ValueError(f"{name}: expected a CSR matrix, got {type(A)!r}")
    nrows, ncols = A.shape
    indptr, indices = A.indptr, A.indices
    if indptr[0] != 0 or indptr[-1] != len(indices) or len(indptr) != nrows + 1:
        raise ValueError(f"{name}: row offsets are inconsistent with nnz")
    if np.any(np.diff(indptr) < 0):
        raise ValueError(f"{name}: row offsets must be non-decreasing")
    if len(indices) and (indices.min() < 0 or indices.max() >= ncols):
        raise ValueError(f"{name}: column index out of range")
    for i in range(nrows):
        row = indices[indptr[i]:indptr[i + 1]]
        if row.size > 1 and np.any(np.diff(row) <= 0):
            raise ValueError(f"{name}: row {i} has unsorted or duplicate columns")
    return A


def spmv(A, x):
    """Sparse matrix-vector product y = A x with a deterministic reduction order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(
            f"spmv: operand length {x.shape} does not match operator columns {A.shape[1]}"
        )
    return A @ x


def _structural_pattern(R, A, P):
    # Symbolic triple product: all-ones values cannot cancel, so the result
    # pattern is the full structural union.
    Rs = sp.csr_matrix((np.ones_like(R.data), R.indices, R.indptr), shape=R.shape)
    As = sp.csr_matrix((np.ones_like(A.data), A.indices, A.indptr), shape=A.shape)
    Ps = sp.csr_matrix((np.ones_like(P.data), P.indices, P.indptr), shape=P.shape)
    S = (Rs @ As) @ Ps
    S.sort_indices()
    return S


def triple_product(R, A, P):
    """Galerkin product R A P in canonical CSR form.

    The sparsity pattern is the full structural product: entries that become
    exactly zero through cancellation are stored, keeping level shapes
    reproducible.
    """
    if R.shape[1] != A.shape[0] or A.shape[1] != P.shape[0]:
        raise ValueError(
            f"triple_product: incompatible shapes {R.shape} x {A.shape} x {P.shape}"
        )
    C = (R @ A) @ P
    C.sort_indices()
    S = _structural_pattern(R, A, P)
    if C.nnz == S.nnz:
        return C
    # scipy pruned cancellation zeros; scatter the numeric values back into
    # the structural pattern.
    ncols = np.int64(S.shape[1])
    rows_s = np.repeat(np.arange(S.shape[0], dtype=np.int64), np.diff(S.indptr))
    rows_c = np.repeat(np.arange(C.shape[0], dtype=np.int64), np.diff(C.indptr))
    keys_s = rows_s * ncols + S.indices.astype(np.int64)
    keys_c = rows_c * ncols + C.indices.astype(np.int64)
    data = np.zeros(S.nnz, dtype=np.float64)
    pos = np.searchsorted(keys_s, keys_c)
    data[pos] = C.data
    return sp.csr_matrix((data, S.indices.copy(), S.indptr.copy()), shape=S.shape)


@dataclass
class DenseFactorization:
    """Pivoted LU factors of a small dense(ified) matrix."""

    dimension: int
    factors: np.ndarray
    pivots: np.ndarray

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.dimension:
            raise ValueError(
                f"dense solve: rhs length {b.shape[0]} != dimension {self.dimension}"
            )
        return scipy.linalg.lu_solve((self.factors, self.pivots), b, check_finite=False)


def dense_factor(A):
    """LU-factor a square operator with partial pivoting.

    Raises SingularMatrixError naming the pivot row on exact singularity.
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"dense_factor: matrix is not square {A.shape}")
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(dense, check_finite=False)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0.0):
        raise SingularMatrixError(int(np.argmin(diag)), "zero pivot after partial pivoting")
    return DenseFactorization(dimension=A.shape[0], factors=lu, pivots=piv)


def dense_factor_solve(A, b):
    """Solve A x = b through a pivoted dense factorization."""
    return dense_factor(A).solve(b)
