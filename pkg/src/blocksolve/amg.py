"""Smoothed-aggregation algebraic multigrid.

The setup pipeline is the classical one: a strength-of-connection graph with
a drop tolerance, greedy root-based aggregation, a tentative prolongator from
the near-nullspace, damped-Jacobi smoothing of the tentative prolongator
against a filtered operator, and Galerkin coarsening. The V-cycle applies a
Chebyshev smoother before and after each coarse-grid correction and finishes
with a pivoted dense solve on the coarsest level.

Filtering detail: entries failing the drop test are removed from the
operator used to smooth the prolongator, and their absolute values are
lumped onto the diagonal (with the diagonal's sign). That compensation rule
is the single most interpretation-sensitive choice in the setup and is kept
in one function, ``filtered_matrix``, so it can be swapped out.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .smoothers import ChebyshevSmoother, chebyshev_setup, chebyshev_apply, estimate_lambda_max
from .sparse import DenseFactorization, dense_factor, triple_product


class CoarseningError(RuntimeError):
    """Hierarchy construction could not reach a factorable coarse level."""


@dataclass
class AmgParams:
    drop_tolerance: float = 0.04
    max_coarse_size: int = 64
    max_levels: int = 20
    smoother_degree: int = 2
    prolongator_damping: float = 4.0 / 3.0
    chebyshev_ratio: float = 30.0
    chebyshev_boost: float = 1.1
    power_iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.drop_tolerance < 0.0:
            raise ValueError("drop tolerance must be >= 0")
        if self.max_coarse_size < 1 or self.max_levels < 1:
            raise ValueError("max_coarse_size and max_levels must be >= 1")


@dataclass
class AggregateMap:
    """Fine-node to aggregate-id assignment."""

    assignments: np.ndarray
    count: int


@dataclass
class Level:
    operator: sp.csr_matrix
    prolongator: sp.csr_matrix | None
    restrictor: sp.csr_matrix | None
    smoother: ChebyshevSmoother | None


@dataclass
class AmgHierarchy:
    levels: list[Level]
    coarse_solver: DenseFactorization

    @property
    def depth(self):
        return len(self.levels)

    def summary(self):
        dims = [lvl.operator.shape[0] for lvl in self.levels]
        nnz = [lvl.operator.nnz for lvl in self.levels]
        return {
            "levels": self.depth,
            "dims": dims,
            "nnz": nnz,
            "operator_complexity": float(sum(nnz)) / float(nnz[0]),
        }


def strength_graph(A, theta):
    """Strength-of-connection pattern of a square matrix.

    Off-diagonal (i, j) is strong iff |a_ij| > theta * sqrt(|a_ii a_jj|);
    the pattern is symmetrized by union and the diagonal is always present.
    Stored values are the (summed) strength ratios used for tie-breaking
    during aggregation; the pattern itself is the contract.
    """
    n = A.shape[0]
    diag = np.abs(A.diagonal())
    if np.any(diag == 0.0):
        raise ValueError("strength_graph: zero diagonal entry")
    indptr, indices, data = A.indptr, A.indices, A.data
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    cols = indices.astype(np.int64)
    scale = np.sqrt(diag[rows] * diag[cols])
    ratio = np.abs(data) / scale
    keep = (rows != cols) & (ratio > theta)
    ri, ci, rv = rows[keep], cols[keep], ratio[keep]
    # union-symmetrize; duplicate (i,j)/(j,i) strengths accumulate
    i_all = np.concatenate([ri, ci, np.arange(n, dtype=np.int64)])
    j_all = np.concatenate([ci, ri, np.arange(n, dtype=np.int64)])
    v_all = np.concatenate([rv, rv, np.zeros(n)])
    S = sp.coo_matrix((v_all, (i_all, j_all)), shape=(n, n)).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    return S


def aggregate(S, seed_order=None):
    """Greedy root-based aggregation over a strength pattern.

    Pass 1 visits nodes in order; a node whose strong neighbors are all
    unaggregated becomes a root and absorbs them. Pass 2 joins remaining
    nodes to the pass-1 aggregate behind their strongest connection, ties
    to the lowest aggregate id. Pass 3 turns leftovers into singletons.
    """
    n = S.shape[0]
    indptr, indices, data = S.indptr, S.indices, S.data
    order = np.arange(n) if seed_order is None else np.asarray(seed_order)
    owner = np.full(n, -1, dtype=np.int64)
    count = 0

    for i in order:
        if owner[i] != -1:
            continue
        nbrs = indices[indptr[i]:indptr[i + 1]]
        nbrs = nbrs[nbrs != i]
        if np.all(owner[nbrs] == -1):
            owner[i] = count
            owner[nbrs] = count
            count += 1

    # pass 2 decides against the pass-1 snapshot so joins do not chain
    snapshot = owner.copy()
    for i in order:
        if owner[i] != -1:
            continue
        lo, hi = indptr[i], indptr[i + 1]
        best_id = -1
        best_strength = -np.inf
        for p in range(lo, hi):
            j = indices[p]
            if j == i or snapshot[j] == -1:
                continue
            s = data[p]
            if s > best_strength or (s == best_strength and snapshot[j] < best_id):
                best_strength = s
                best_id = snapshot[j]
        if best_id != -1:
            owner[i] = best_id

    for i in order:
        if owner[i] == -1:
            owner[i] = count
            count += 1

    return AggregateMap(assignments=owner, count=count)


def tentative_prolongator(agg, nullspace):
    """One-nonzero-per-row prolongator: the near-nullspace restricted to each
    aggregate, normalized to unit column 2-norm."""
    nullspace = np.asarray(nullspace, dtype=np.float64)
    n = nullspace.shape[0]
    if n != agg.assignments.shape[0]:
        raise ValueError("tentative_prolongator: nullspace length != node count")
    norms_sq = np.bincount(agg.assignments, weights=nullspace**2, minlength=agg.count)
    if np.any(norms_sq == 0.0):
        bad = int(np.flatnonzero(norms_sq == 0.0)[0])
        raise ValueError(
            f"tentative_prolongator: nullspace vanishes on aggregate {bad}"
        )
    norms = np.sqrt(norms_sq)
    P = sp.csr_matrix(
        (nullspace / norms[agg.assignments], (np.arange(n), agg.assignments)),
        shape=(n, agg.count),
    )
    P.sort_indices()
    return P


def filtered_matrix(A, theta):
    """Drop entries failing the theta rule and lump their magnitudes onto the
    diagonal with the diagonal's sign (absolute-row-sum compensation)."""
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise ValueError("filtered_matrix: zero diagonal entry")
    indptr, indices, data = A.indptr, A.indices, A.data
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    cols = indices.astype(np.int64)
    absd = np.abs(diag)
    offdiag = rows != cols
    weak = offdiag & (np.abs(data) <= theta * np.sqrt(absd[rows] * absd[cols]))
    dropped = np.bincount(rows[weak], weights=np.abs(data[weak]), minlength=n)
    compensated = np.sign(diag) * (absd + dropped)

    keep = ~weak & offdiag
    i_all = np.concatenate([rows[keep], np.arange(n, dtype=np.int64)])
    j_all = np.concatenate([cols[keep], np.arange(n, dtype=np.int64)])
    v_all = np.concatenate([data[keep], compensated])
    Af = sp.coo_matrix((v_all, (i_all, j_all)), shape=(n, n)).tocsr()
    Af.sum_duplicates()
    Af.sort_indices()
    return Af


def smooth_prolongator(A, P_tent, params):
    """Damped-Jacobi smoothing of the tentative prolongator against the
    filtered operator: P = (I - omega * Dhat^{-1} A_f) P_tent with
    omega = damping / lambda_max(Dhat^{-1} A_f)."""
    Af = filtered_matrix(A, params.drop_tolerance)
    dinv = 1.0 / Af.diagonal()
    lam = estimate_lambda_max(
        Af, dinv, iterations=params.power_iterations, seed=params.seed
    )
    if lam <= 0.0:
        raise CoarseningError(f"nonpositive spectral estimate {lam} for the filtered operator")
    omega = params.prolongator_damping / lam
    P = (P_tent - sp.diags(omega * dinv) @ (Af @ P_tent)).tocsr()
    P.sum_duplicates()
    P.sort_indices()
    return P


def build_hierarchy(A, params=None):
    """Coarsen strength -> aggregate -> tentative -> smooth -> Galerkin until
    the operator fits the coarse-size target (or the level cap), then factor
    the coarsest operator densely."""
    params = params or AmgParams()
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"build_hierarchy: matrix is not square {A.shape}")
    levels = []
    Al = A
    nullspace = np.ones(A.shape[0])
    stagnant_once = False

    while Al.shape[0] > params.max_coarse_size and len(levels) + 1 < params.max_levels:
        # the drop tolerance targets coefficient jumps in the fine operator;
        # Galerkin coarse operators are already smoothed, so re-dropping there
        # only fragments aggregates
        level_params = params if not levels else replace(params, drop_tolerance=0.0)
        S = strength_graph(Al, level_params.drop_tolerance)
        agg = aggregate(S)
        P_tent = tentative_prolongator(agg, nullspace)
        coarse_nullspace = P_tent.T @ nullspace
        P = smooth_prolongator(Al, P_tent, level_params)
        R = P.T.tocsr()
        R.sort_indices()
        Ac = triple_product(R, Al, P)
        if Ac.shape[0] >= 0.9 * Al.shape[0]:
            if stagnant_once:
                if Al.shape[0] <= 4 * params.max_coarse_size:
                    break
                raise CoarseningError(
                    f"aggregation stagnated at dimension {Al.shape[0]} "
                    f"(> 4 x max_coarse_size = {4 * params.max_coarse_size})"
                )
            stagnant_once = True
        else:
            stagnant_once = False
        smoother = chebyshev_setup(
            Al,
            degree=params.smoother_degree,
            ratio=params.chebyshev_ratio,
            boost=params.chebyshev_boost,
            power_iterations=params.power_iterations,
            seed=params.seed,
        )
        levels.append(Level(operator=Al, prolongator=P, restrictor=R, smoother=smoother))
        Al = Ac
        nullspace = coarse_nullspace

    levels.append(Level(operator=Al, prolongator=None, restrictor=None, smoother=None))
    coarse = dense_factor(Al)
    return AmgHierarchy(levels=levels, coarse_solver=coarse)


def vcycle(H, b, x=None, level=0):
    """One V(pre, post) cycle; linear in the residual b - A x."""
    lvl = H.levels[level]
    b = np.asarray(b, dtype=np.float64)
    if x is None:
        x = np.zeros(b.shape[0])
    if lvl.prolongator is None:
        return H.coarse_solver.solve(b)
    A = lvl.operator
    x = chebyshev_apply(lvl.smoother, A, b, x)
    r = b - A @ x
    rc = lvl.restrictor @ r
    ec = vcycle(H, rc, None, level + 1)
    x = x + lvl.prolongator @ ec
    x = chebyshev_apply(lvl.smoother, A, b, x)
    return x


def as_preconditioner(H):
    """Wrap a hierarchy as an apply-only operator (one V-cycle per call)."""
    return lambda r: vcycle(H, r)
