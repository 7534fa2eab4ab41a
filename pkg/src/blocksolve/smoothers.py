"""Point smoothers and local factorizations: Jacobi, Chebyshev, and ILU(0).

These are the building blocks for multigrid levels and Schwarz subdomain
solves. ILU(0) keeps the exact sparsity pattern of its input; the Chebyshev
smoother runs on the diagonally preconditioned system over a spectral
interval derived from a power-iteration estimate of the largest eigenvalue.
"""

from dataclasses import dataclass

import numpy as np

from .sparse import SingularMatrixError

PIVOT_FLOOR = 1e-14


@dataclass
class Ilu0Factors:
    """Combined L\\U storage on the exact pattern of the factored matrix.

    The unit lower-triangular part lives strictly below the diagonal of the
    combined array; the diagonal and above belong to U.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag_pos: np.ndarray


def ilu0_factor(A):
    """Zero-fill incomplete LU factorization.

    Requires a square matrix whose every row holds a structural diagonal
    entry. Raises SingularMatrixError naming the row whose pivot vanishes
    (|u_ii| < 1e-14 * max |a_ii|).
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"ilu0_factor: matrix is not square {A.shape}")
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    data = A.data.astype(np.float64).copy()

    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        pos = lo + np.searchsorted(indices[lo:hi], i)
        if pos >= hi or indices[pos] != i:
            raise ValueError(f"ilu0_factor: row {i} lacks a structural diagonal entry")
        diag_pos[i] = pos
    pivot_floor = PIVOT_FLOOR * np.max(np.abs(data[diag_pos])) if n else 0.0

    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        row_cols = indices[lo:hi]
        dpos = diag_pos[i]
        for p in range(lo, dpos):
            k = indices[p]
            u_kk = data[diag_pos[k]]
            lik = data[p] / u_kk
            data[p] = lik
            # eliminate with row k's strictly-upper entries, pattern-restricted
            klo, khi = diag_pos[k] + 1, indptr[k + 1]
            if klo == khi:
                continue
            upper_cols = indices[klo:khi]
            targets = lo + np.searchsorted(row_cols, upper_cols)
            in_range = targets < hi
            tv = targets[in_range]
            hit = indices[tv] == upper_cols[in_range]
            tv = tv[hit]
            data[tv] -= lik * data[klo:khi][in_range][hit]
        if abs(data[dpos]) < pivot_floor or data[dpos] == 0.0:
            raise SingularMatrixError(i, "vanishing ILU(0) pivot")

    return Ilu0Factors(n=n, indptr=indptr, indices=indices, data=data, diag_pos=diag_pos)


def ilu0_apply(F, r):
    """Apply the factored inverse: z = U^{-1} L^{-1} r."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != F.n:
        raise ValueError(f"ilu0_apply: length {r.shape[0]} != dimension {F.n}")
    indptr, indices, data, diag_pos = F.indptr, F.indices, F.data, F.diag_pos
    y = np.empty(F.n)
    for i in range(F.n):
        lo = indptr[i]
        dpos = diag_pos[i]
        y[i] = r[i] - data[lo:dpos] @ y[indices[lo:dpos]]
    z = np.empty(F.n)
    for i in range(F.n - 1, -1, -1):
        dpos = diag_pos[i]
        hi = indptr[i + 1]
        z[i] = (y[i] - data[dpos + 1:hi] @ z[indices[dpos + 1:hi]]) / data[dpos]
    return z


def jacobi_apply(A, r):
    """Single Jacobi sweep z = D^{-1} r; exact solve when A is diagonal."""
    diag = A.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SingularMatrixError(int(zero[0]), "zero diagonal entry in Jacobi sweep")
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != A.shape[0]:
        raise ValueError(f"jacobi_apply: length {r.shape[0]} != dimension {A.shape[0]}")
    return r / diag


def estimate_lambda_max(A, inverse_diagonal, iterations=10, seed=0):
    """Largest-eigenvalue magnitude of D^{-1} A by seeded power iteration.

    Returns the Rayleigh-quotient magnitude after the requested number of
    iterations; deterministic for a fixed seed.
    """
    n = A.shape[0]
    inverse_diagonal = np.asarray(inverse_diagonal, dtype=np.float64)
    for attempt in range(2):
        rng = np.random.default_rng(seed + attempt)
        v = rng.standard_normal(n)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        ok = True
        for _ in range(iterations):
            w = inverse_diagonal * (A @ v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                ok = False
                break
            v = w / nw
        if ok:
            return abs(v @ (inverse_diagonal * (A @ v)))
    raise RuntimeError("power iteration collapsed to the zero vector twice")


@dataclass
class ChebyshevSmoother:
    """Degree-d Chebyshev iteration on the interval
    [lambda_max/ratio, boost * lambda_max] of D^{-1} A."""

    degree: int
    lambda_max_estimate: float
    lambda_min_fraction: float
    boost_factor: float
    inverse_diagonal: np.ndarray

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"Chebyshev degree must be >= 1, got {self.degree}")
        if self.lambda_max_estimate <= 0.0:
            raise ValueError("lambda_max estimate must be positive")
        if self.boost_factor < 1.0:
            raise ValueError("boost factor must be >= 1")


def chebyshev_setup(A, degree=2, ratio=30.0, boost=1.1, power_iterations=10, seed=0):
    """Estimate the spectral interval of D^{-1} A and build a smoother."""
    diag = A.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if zero.size:
        raise SingularMatrixError(int(zero[0]), "zero diagonal entry in Chebyshev setup")
    dinv = 1.0 / diag
    lam = estimate_lambda_max(A, dinv, iterations=power_iterations, seed=seed)
    return ChebyshevSmoother(
        degree=degree,
        lambda_max_estimate=lam,
        lambda_min_fraction=ratio,
        boost_factor=boost,
        inverse_diagonal=dinv,
    )


def chebyshev_apply(S, A, b, x):
    """Run the degree-d Chebyshev iteration from iterate ``x``; returns the
    new iterate. A solves-exactly fixed point is returned unchanged."""
    b = np.asarray(b, dtype=np.float64)
    x = np.array(x, dtype=np.float64, copy=True)
    if b.shape[0] != A.shape[0] or x.shape[0] != A.shape[0]:
        raise ValueError("chebyshev_apply: dimension mismatch")
    lam_max = S.boost_factor * S.lambda_max_estimate
    lam_min = S.lambda_max_estimate / S.lambda_min_fraction
    theta = 0.5 * (lam_max + lam_min)
    delta = 0.5 * (lam_max - lam_min)
    sigma = theta / delta
    rho = 1.0 / sigma

    r = b - A @ x
    d = (S.inverse_diagonal * r) / theta
    for k in range(S.degree):
        x += d
        if k == S.degree - 1:
            break
        r -= A @ d
        rho_next = 1.0 / (2.0 * sigma - rho)
        d = (rho_next * rho) * d + (2.0 * rho_next / delta) * (S.inverse_diagonal * r)
        rho = rho_next
    return x
