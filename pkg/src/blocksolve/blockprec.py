"""Labeled block operators and the nested block Gauss-Seidel preconditioners.

The monolithic system is split into a voltage group (solid and liquid
potentials) and a non-voltage group (solid species, liquid species,
pressure). The hierarchical preconditioner inverts the block
upper-triangular part of that 2x2 splitting: an inner flexible-GMRES solve
per group, each preconditioned by its own block Gauss-Seidel sweep over
field-level solvers (AMG V-cycles, restricted additive Schwarz, diagonal
inversion). Because the inner solves are themselves iterative, the outer
Krylov method must be flexible.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .amg import AmgParams, as_preconditioner, build_hierarchy
from .krylov import SolverConfig, fgmres
from .schwarz import extend_overlap, partition_nodes, ras_apply, ras_setup
from .smoothers import jacobi_apply

FIELDS = ("phi_s", "phi_l", "s", "x", "p")
VOLTAGE_FIELDS = ("phi_s", "phi_l")
NONVOLTAGE_FIELDS = ("s", "x", "p")


@dataclass
class BlockSystem:
    """Nested 2x2 block matrix with labeled fields and a segmented RHS.

    ``blocks`` maps (row_field, col_field) to a CSR subblock; absent pairs
    are structurally zero. Fields appear in ``fields`` order in the
    monolithic numbering.
    """

    fields: tuple
    dims: dict
    blocks: dict
    rhs: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in self.fields:
            if f not in self.dims:
                raise ValueError(f"field {f!r} has no dimension")
        for (rf, cf), block in self.blocks.items():
            if rf not in self.fields or cf not in self.fields:
                raise ValueError(f"block ({rf},{cf}) references unknown field")
            expected = (self.dims[rf], self.dims[cf])
            if block.shape != expected:
                raise ValueError(
                    f"block ({rf},{cf}) has shape {block.shape}, expected {expected}"
                )
        if ("s", "s") in self.blocks:
            A_s = self.blocks[("s", "s")]
            off = A_s - sp.diags(A_s.diagonal(), shape=A_s.shape)
            if off.nnz and np.any(off.data != 0.0):
                raise ValueError("solid-species block must be diagonal")
        for f, vec in self.rhs.items():
            if vec.shape[0] != self.dims[f]:
                raise ValueError(f"rhs segment {f!r} has wrong length")
        self._monolithic = None

    @property
    def total_dim(self):
        return sum(self.dims[f] for f in self.fields)

    def offset(self, fieldname):
        off = 0
        for f in self.fields:
            if f == fieldname:
                return off
            off += self.dims[f]
        raise KeyError(fieldname)

    def segment(self, vec, fieldname):
        off = self.offset(fieldname)
        return vec[off:off + self.dims[fieldname]]

    def split(self, vec):
        return {f: self.segment(vec, f) for f in self.fields}

    def join(self, parts):
        return np.concatenate([parts[f] for f in self.fields])

    def rhs_vector(self):
        return np.concatenate([self.rhs[f] for f in self.fields])

    def submatrix(self, row_fields, col_fields=None):
        """Concatenate a group of subblocks into one CSR matrix; absent
        subblocks enter as explicit zero blocks."""
        col_fields = col_fields or row_fields
        grid = [
            [
                self.blocks.get(
                    (rf, cf), sp.csr_matrix((self.dims[rf], self.dims[cf]))
                )
                for cf in col_fields
            ]
            for rf in row_fields
        ]
        M = sp.bmat(grid, format="csr")
        M.sum_duplicates()
        M.sort_indices()
        return M

    def monolithic(self):
        if self._monolithic is None:
            self._monolithic = self.submatrix(self.fields, self.fields)
        return self._monolithic


class BlockOperator:
    """Apply-only view of the assembled monolithic matrix."""

    def __init__(self, system):
        self.system = system
        self.matrix = system.monolithic()
        self.shape = self.matrix.shape

    def matvec(self, v):
        return self.matrix @ v

    def __call__(self, v):
        return self.matrix @ v


def assemble_block_operator(system):
    """Monolithic apply for a BlockSystem; equals the segment-wise sum over
    present subblocks and matches the concatenated CSR matrix exactly."""
    return BlockOperator(system)


def voltage_bgs_apply(coupling, precon_phi_s, precon_phi_l, r_phi_s, r_phi_l):
    """Upper-triangular 2x2 sweep over the voltage pair: liquid first, then
    the solid residual corrected through the coupling block."""
    z_l = precon_phi_l(r_phi_l)
    if coupling is not None:
        z_s = precon_phi_s(r_phi_s - coupling @ z_l)
    else:
        z_s = precon_phi_s(r_phi_s)
    return z_s, z_l


def nonvoltage_bgs_apply(A_s, coupling_xp, precon_x, precon_p, r_s, r_x, r_p):
    """Upper-triangular sweep over the non-voltage trio: pressure, then
    species corrected through the species-pressure coupling, and an exact
    diagonal inversion for the solid species."""
    z_p = precon_p(r_p)
    if coupling_xp is not None:
        z_x = precon_x(r_x - coupling_xp @ z_p)
    else:
        z_x = precon_x(r_x)
    z_s = jacobi_apply(A_s, r_s)
    return z_s, z_x, z_p


class VoltageBgs:
    """Block Gauss-Seidel sweep for the coupled voltage pair, laid out over
    the (phi_s, phi_l) concatenated vector."""

    def __init__(self, system, precon_phi_s, precon_phi_l):
        self.n_s = system.dims["phi_s"]
        self.coupling = system.blocks.get(("phi_s", "phi_l"))
        self.precon_phi_s = precon_phi_s
        self.precon_phi_l = precon_phi_l

    def __call__(self, r):
        z_s, z_l = voltage_bgs_apply(
            self.coupling, self.precon_phi_s, self.precon_phi_l,
            r[:self.n_s], r[self.n_s:],
        )
        return np.concatenate([z_s, z_l])


class NonvoltageBgs:
    """Block Gauss-Seidel over the (s, x, p) concatenated vector."""

    def __init__(self, system, precon_x, precon_p):
        self.n_s = system.dims["s"]
        self.n_x = system.dims["x"]
        self.A_s = system.blocks[("s", "s")]
        self.coupling_xp = system.blocks.get(("x", "p"))
        self.precon_x = precon_x
        self.precon_p = precon_p

    def __call__(self, r):
        r_s = r[:self.n_s]
        r_x = r[self.n_s:self.n_s + self.n_x]
        r_p = r[self.n_s + self.n_x:]
        z_s, z_x, z_p = nonvoltage_bgs_apply(
            self.A_s, self.coupling_xp, self.precon_x, self.precon_p,
            r_s, r_x, r_p,
        )
        return np.concatenate([z_s, z_x, z_p])


@dataclass
class ElectrochemOptions:
    """Configuration for the hierarchical preconditioner.

    ``drop_tolerances`` may override the shared drop tolerance per field
    ("phi_s", "phi_l", "p").
    """

    inner_tol: float = 1e-6
    inner_restart: int = 30
    inner_maxiter: int = 100
    voltage_smoother_degree: int = 4
    pressure_smoother_degree: int = 2
    drop_tolerance: float = 0.04
    drop_tolerances: dict = field(default_factory=dict)
    max_coarse_size: int = 64
    ras_subdomains: int = 4
    ras_overlap: int = 0
    inner_mode: str = "iterative"  # or "direct"
    seed: int = 0

    def theta(self, fieldname):
        return self.drop_tolerances.get(fieldname, self.drop_tolerance)


class ElectrochemPreconditioner:
    """Hierarchical block Gauss-Seidel over the voltage/non-voltage split.

    One application solves the non-voltage group, substitutes through the
    voltage/non-voltage coupling, then solves the voltage group. Inner
    solves run flexible GMRES to the configured tolerance; inner
    non-convergence is recorded, not raised, since the outer flexible
    Krylov method tolerates an inexact preconditioner.
    """

    def __init__(self, system, coordinates, options=None):
        opts = options or ElectrochemOptions()
        self.system = system
        self.options = opts
        self.n_v = sum(system.dims[f] for f in VOLTAGE_FIELDS)
        self.A_vv = system.submatrix(VOLTAGE_FIELDS)
        self.A_nn = system.submatrix(NONVOLTAGE_FIELDS)
        self.A_vn = system.submatrix(VOLTAGE_FIELDS, NONVOLTAGE_FIELDS)
        self.inner_events = []

        if opts.inner_mode == "direct":
            self._solve_vv = _direct_solver(self.A_vv)
            self._solve_nn = _direct_solver(self.A_nn)
            return
        if opts.inner_mode != "iterative":
            raise ValueError(f"unknown inner mode {opts.inner_mode!r}")

        def amg_params(fieldname, degree):
            return AmgParams(
                drop_tolerance=opts.theta(fieldname),
                max_coarse_size=opts.max_coarse_size,
                smoother_degree=degree,
                seed=opts.seed,
            )

        M_phi_s = as_preconditioner(build_hierarchy(
            system.blocks[("phi_s", "phi_s")],
            amg_params("phi_s", opts.voltage_smoother_degree)))
        M_phi_l = as_preconditioner(build_hierarchy(
            system.blocks[("phi_l", "phi_l")],
            amg_params("phi_l", opts.voltage_smoother_degree)))
        M_pp = as_preconditioner(build_hierarchy(
            system.blocks[("p", "p")],
            amg_params("p", opts.pressure_smoother_degree)))

        A_xx = system.blocks[("x", "x")]
        part = partition_nodes(coordinates, opts.ras_subdomains)
        sets = extend_overlap(A_xx, part, opts.ras_overlap)
        ras = ras_setup(A_xx, sets, part)
        M_xx = lambda r: ras_apply(ras, r)

        self._voltage_bgs = VoltageBgs(system, M_phi_s, M_phi_l)
        self._nonvoltage_bgs = NonvoltageBgs(system, M_xx, M_pp)
        cfg = SolverConfig(
            restart=opts.inner_restart, tol=opts.inner_tol,
            maxiter=opts.inner_maxiter, flexible=True,
        )

        def solve_vv(r):
            z, stats = fgmres(self.A_vv, r, preconditioner=self._voltage_bgs, config=cfg)
            if not stats.converged:
                self.inner_events.append(
                    ("voltage", stats.iterations, stats.final_relative_residual))
            return z

        def solve_nn(r):
            z, stats = fgmres(self.A_nn, r, preconditioner=self._nonvoltage_bgs, config=cfg)
            if not stats.converged:
                self.inner_events.append(
                    ("nonvoltage", stats.iterations, stats.final_relative_residual))
            return z

        self._solve_vv = solve_vv
        self._solve_nn = solve_nn

    def __call__(self, r):
        r_v, r_n = r[:self.n_v], r[self.n_v:]
        z_n = self._solve_nn(r_n)
        z_v = self._solve_vv(r_v - self.A_vn @ z_n)
        return np.concatenate([z_v, z_n])


def _direct_solver(A):
    from scipy.sparse.linalg import splu

    lu = splu(A.tocsc())
    return lambda r: lu.solve(r)


def build_electrochem_preconditioner(system, coordinates, options=None):
    """Set up the full hierarchical preconditioner for a battery-style
    BlockSystem; ``coordinates`` drive the virtual-subdomain partition."""
    return ElectrochemPreconditioner(system, coordinates, options)
