"""Time-marching driver for the fully discrete scheme.

Each interval couples the r Gauss-point unknowns (U^1..U^r, Q^1..Q^r) of the
scalar and flux expansions through the block system

    sum_j alpha[i,j] M_W U^j + tau * beta[i] B Q^i = tau * beta[i] F(t_i)
                                                     - alpha[i,0] M_W U^0,
    M_D Q^i - B^T U^i = 0,            for i = 1..r,

where U^0 carries the continuity-in-time constraint from the previous
interval (projection of the initial data on the first one).  The left
endpoint flux coefficient Q^0 never enters the equations; it is carried
along purely so the flux can be reconstructed anywhere in time.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .exceptions import SolverFailureError
from .quadrature import tensor_unit
from .spaces import build_pair, l2_project_flux, l2_project_scalar
from .timebasis import TimePartition, build_basis

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class ProblemData:
    """Diffusion tensor, initial datum, source and final time.

    initial_flux should evaluate -D grad u0; when omitted it is derived from
    initial_scalar by central finite differences (adequate for diagnostics,
    exact whenever u0 = 0).
    """

    diffusion: assembly.CoefficientField
    initial_scalar: object          # callable (n, 2) -> (n,)
    source: object                  # callable ((n, 2), t) -> (n,)
    final_time: float
    initial_flux: object = None     # callable (n, 2) -> (n, 2) or None

    def flux_at_t0(self):
        if self.initial_flux is not None:
            return self.initial_flux
        u0 = self.initial_scalar
        D = self.diffusion
        h = 1e-6

        def q0(x):
            x = np.atleast_2d(x)
            ex = np.array([h, 0.0])
            ey = np.array([0.0, h])
            grad = np.column_stack([
                (u0(x + ex) - u0(x - ex)) / (2 * h),
                (u0(x + ey) - u0(x - ey)) / (2 * h),
            ])
            return -np.einsum("nab,nb->na", D.at(x), grad)

        return q0


class SystemMatrices:
    """The three time-independent matrices plus cached factorizations."""

    def __init__(self, scalar_space, flux_space, coefficient, rule=None):
        if rule is None:
            rule = tensor_unit(max(scalar_space.p, flux_space.p) + 3)
        self.scalar_space = scalar_space
        self.flux_space = flux_space
        self.coefficient = coefficient
        self.rule = rule
        self.mass_scalar = assembly.assemble_mass_scalar(scalar_space, rule)
        self.mass_flux = assembly.assemble_weighted_mass_flux(
            flux_space, coefficient, rule)
        self.div = assembly.assemble_div_coupling(flux_space, scalar_space, rule)
        self._block_mat = {}
        self._block_lu = {}
        self._block_norm = {}
        self._flux_lu = None
        self._schur_pre = {}

    @property
    def n_scalar(self):
        return self.scalar_space.n_dofs

    @property
    def n_flux(self):
        return self.flux_space.n_dofs

    def block_matrix(self, basis, tau):
        """The sparse block operator of one interval (cached per step size)."""
        key = (basis.r, float(tau))
        if key not in self._block_mat:
            r = basis.r
            alpha, beta = basis.alpha, basis.beta
            blocks = [[None] * (2 * r) for _ in range(2 * r)]
            for i in range(r):
                for j in range(r):
                    a = alpha[i, j + 1]
                    if a != 0.0:
                        blocks[i][j] = a * self.mass_scalar
                blocks[i][r + i] = (tau * beta[i]) * self.div
                blocks[r + i][i] = -self.div.T
                blocks[r + i][r + i] = self.mass_flux
            self._block_mat[key] = sp.bmat(blocks, format="csc")
        return self._block_mat[key]

    def block_lu(self, basis, tau):
        key = (basis.r, float(tau))
        if key not in self._block_lu:
            self._block_lu[key] = spla.splu(self.block_matrix(basis, tau))
        return self._block_lu[key]

    def block_norm(self, basis, tau):
        key = (basis.r, float(tau))
        if key not in self._block_norm:
            self._block_norm[key] = spla.norm(self.block_matrix(basis, tau))
        return self._block_norm[key]

    def flux_mass_lu(self):
        if self._flux_lu is None:
            self._flux_lu = spla.splu(self.mass_flux.tocsc())
        return self._flux_lu

    def schur_preconditioner(self, basis, tau):
        """Block-diagonal preconditioner for the reduced scalar system.

        Uses the diagonal of M_D as a sparse stand-in for its inverse.
        """
        key = (basis.r, float(tau))
        if key not in self._schur_pre:
            dinv = sp.diags(1.0 / self.mass_flux.diagonal())
            approx = self.div @ dinv @ self.div.T
            lus = []
            for i in range(basis.r):
                block = (basis.alpha[i, i + 1] * self.mass_scalar
                         + tau * basis.beta[i] * approx)
                lus.append(spla.splu(block.tocsc()))
            self._schur_pre[key] = lus
        return self._schur_pre[key]


@dataclass
class StepSystem:
    """The block system of one interval: operator context plus right-hand side."""

    interval: int
    tau: float
    basis: object
    matrices: SystemMatrices
    rhs: np.ndarray
    gauss_times: np.ndarray
    u_start: np.ndarray

    def full_matrix(self):
        return self.matrices.block_matrix(self.basis, self.tau)


def initial_coefficients(data, scalar_space, flux_space, rule=None):
    """Project the initial datum: (P_h u0, vec P_h(-D grad u0))."""
    u = l2_project_scalar(data.initial_scalar, scalar_space, rule)
    q = l2_project_flux(data.flux_at_t0(), flux_space, rule)
    return u.coefficients, q.coefficients


def build_step_system(interval, basis, matrices, data, u_start, partition):
    """Assemble the right-hand side of interval `interval` (0-based)."""
    r = basis.r
    t0 = partition.nodes[interval]
    tau = partition.step_size(interval)
    gauss_times = t0 + tau * basis.test_nodes
    nw, nv = matrices.n_scalar, matrices.n_flux
    rhs = np.zeros(r * (nw + nv))
    mwu = matrices.mass_scalar @ u_start
    for i in range(r):
        load = assembly.assemble_load(
            matrices.scalar_space, data.source, gauss_times[i], matrices.rule)
        rhs[i * nw:(i + 1) * nw] = tau * basis.beta[i] * load - basis.alpha[i, 0] * mwu
    return StepSystem(interval=interval, tau=tau, basis=basis,
                      matrices=matrices, rhs=rhs,
                      gauss_times=gauss_times, u_start=u_start)


def _check_residual(system, x, tol, label):
    """Backward-error check ||Ax - b|| / (||A|| ||x|| + ||b||) <= tol."""
    mat = system.full_matrix()
    res = mat @ x - system.rhs
    mat_norm = system.matrices.block_norm(system.basis, system.tau)
    scale = mat_norm * np.linalg.norm(x) + np.linalg.norm(system.rhs)
    rel = np.linalg.norm(res) / scale if scale > 0.0 else np.linalg.norm(res)
    if rel > tol:
        raise SolverFailureError(
            f"{label} solve on interval {system.interval} missed tolerance {tol}",
            residual=rel,
        )
    return rel


def _solve_direct(system, tol):
    lu = system.matrices.block_lu(system.basis, system.tau)
    x = lu.solve(system.rhs)
    # one step of iterative refinement keeps the saddle-point residual at
    # rounding level on fine meshes
    mat = system.full_matrix()
    x += lu.solve(system.rhs - mat @ x)
    _check_residual(system, x, tol, "direct")
    return x


def _solve_schur(system, tol, maxiter=5000):
    """Eliminate the fluxes, solve the coupled scalar system by GMRES."""
    m = system.matrices
    basis = system.basis
    r = basis.r
    nw, nv = m.n_scalar, m.n_flux
    tau = system.tau
    flux_lu = m.flux_mass_lu()
    B = m.div
    MW = m.mass_scalar

    def reduced_matvec(u):
        u = np.asarray(u, dtype=float).reshape(r, nw)
        out = np.zeros((r, nw))
        for i in range(r):
            qi = flux_lu.solve(B.T @ u[i])
            out[i] += tau * basis.beta[i] * (B @ qi)
            for j in range(r):
                a = basis.alpha[i, j + 1]
                if a != 0.0:
                    out[i] += a * (MW @ u[j])
        return out.ravel()

    pre = m.schur_preconditioner(basis, tau)

    def apply_pre(v):
        v = np.asarray(v, dtype=float).reshape(r, nw)
        return np.concatenate([pre[i].solve(v[i]) for i in range(r)])

    op = spla.LinearOperator((r * nw, r * nw), matvec=reduced_matvec)
    M = spla.LinearOperator((r * nw, r * nw), matvec=apply_pre)
    rhs_u = system.rhs[: r * nw]
    if np.linalg.norm(rhs_u) == 0.0:
        u = np.zeros(r * nw)
    else:
        u, info = spla.gmres(op, rhs_u, rtol=1e-13, atol=0.0,
                             restart=200, maxiter=maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(reduced_matvec(u) - rhs_u) / np.linalg.norm(rhs_u)
            raise SolverFailureError(
                f"GMRES did not converge on interval {system.interval} "
                f"(info={info})", residual=res)
    x = np.zeros(r * (nw + nv))
    x[: r * nw] = u
    u = u.reshape(r, nw)
    for i in range(r):
        x[r * nw + i * nv: r * nw + (i + 1) * nv] = flux_lu.solve(B.T @ u[i])
    _check_residual(system, x, tol, "schur")
    return x


def solve_step(system, tol=DEFAULT_TOL, strategy="direct"):
    """Solve one interval's block system.

    Returns (U, Q) with U of shape (r, n_scalar) and Q of shape (r, n_flux),
    the Gauss-point coefficients i = 1..r.
    """
    if strategy == "direct":
        x = _solve_direct(system, tol)
    elif strategy == "schur":
        x = _solve_schur(system, tol)
    else:
        raise ValueError(f"unknown solver strategy {strategy!r}")
    r = system.basis.r
    nw, nv = system.matrices.n_scalar, system.matrices.n_flux
    U = x[: r * nw].reshape(r, nw)
    Q = x[r * nw:].reshape(r, nv)
    return U, Q


def endpoint_value(basis, coeffs):
    """Evaluate a coefficient stack (r+1, n) at the interval's right endpoint."""
    return np.einsum("j,jn->n", basis.endpoint_weights, coeffs)


class SpaceTimeSolution:
    """Per-interval coefficient stacks of the scalar and flux expansions."""

    def __init__(self, partition, basis, scalar_space, flux_space):
        self.partition = partition
        self.basis = basis
        self.scalar_space = scalar_space
        self.flux_space = flux_space
        self.scalar_coeffs = []  # one (r+1, n_scalar) array per interval
        self.flux_coeffs = []    # one (r+1, n_flux) array per interval

    @property
    def n_intervals(self):
        return len(self.scalar_coeffs)

    def append_interval(self, u_stack, q_stack):
        self.scalar_coeffs.append(u_stack)
        self.flux_coeffs.append(q_stack)

    def coefficients_at(self, t):
        """Global coefficient vectors (scalar, flux) of the solution at time t."""
        n = self.partition.locate(t)
        t0 = self.partition.nodes[n]
        tau = self.partition.step_size(n)
        that = np.clip((t - t0) / tau, 0.0, 1.0)
        w = self.basis.eval_trial_all(np.array([that]))[0]
        u = np.einsum("j,jn->n", w, self.scalar_coeffs[n])
        q = np.einsum("j,jn->n", w, self.flux_coeffs[n])
        return u, q

    def dump_checkpoint(self, path):
        """Text checkpoint: one `interval j value...` record per line."""
        with open(path, "w") as fh:
            fh.write(f"# intervals {self.n_intervals} r {self.basis.r} "
                     f"nw {self.scalar_space.n_dofs} nv {self.flux_space.n_dofs}\n")
            for n in range(self.n_intervals):
                for j in range(self.basis.r + 1):
                    row = " ".join(repr(float(v)) for v in self.scalar_coeffs[n][j])
                    fh.write(f"u {n} {j} {row}\n")
                for j in range(self.basis.r + 1):
                    row = " ".join(repr(float(v)) for v in self.flux_coeffs[n][j])
                    fh.write(f"q {n} {j} {row}\n")


def load_checkpoint(path):
    """Read back a dump_checkpoint file as (scalar_stacks, flux_stacks)."""
    scalars, fluxes = {}, {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            kind, n, j, *vals = line.split()
            target = scalars if kind == "u" else fluxes
            target.setdefault(int(n), {})[int(j)] = np.array(
                [float(v) for v in vals])
    def stack(d):
        return [np.array([d[n][j] for j in sorted(d[n])]) for n in sorted(d)]
    return stack(scalars), stack(fluxes)


def run(data, mesh, p, r, n_steps, solver="direct", tol=DEFAULT_TOL,
        rule=None):
    """March the scheme over a uniform partition of (0, T] with N intervals."""
    partition = TimePartition.uniform(data.final_time, n_steps)
    basis = build_basis(r)
    scalar_space, flux_space = build_pair(mesh, p)
    matrices = SystemMatrices(scalar_space, flux_space, data.diffusion, rule)
    solution = SpaceTimeSolution(partition, basis, scalar_space, flux_space)
    u0, q0 = initial_coefficients(data, scalar_space, flux_space, matrices.rule)
    for n in range(n_steps):
        system = build_step_system(n, basis, matrices, data, u0, partition)
        U, Q = solve_step(system, tol=tol, strategy=solver)
        u_stack = np.vstack([u0[None, :], U])
        q_stack = np.vstack([q0[None, :], Q])
        solution.append_interval(u_stack, q_stack)
        u0 = endpoint_value(basis, u_stack)
        q0 = endpoint_value(basis, q_stack)
    return solution


def local_mass_balance(solution, data, matrices):
    """Max relative elementwise balance defect at the Gauss times.

    Testing the scalar equation with the indicator of each cell gives, for
    every interval and Gauss index, a per-cell balance the solver should
    satisfy to its residual tolerance.
    """
    basis = solution.basis
    part = solution.partition
    space = matrices.scalar_space
    cell_dofs = space.cell_dofs
    worst = 0.0
    for n in range(solution.n_intervals):
        tau = part.step_size(n)
        gauss_times = part.nodes[n] + tau * basis.test_nodes
        u_stack = solution.scalar_coeffs[n]
        q_stack = solution.flux_coeffs[n]
        mwu = [(matrices.mass_scalar @ u_stack[j])[cell_dofs].sum(axis=1)
               for j in range(basis.r + 1)]
        for i in range(basis.r):
            bq = (matrices.div @ q_stack[i + 1])[cell_dofs].sum(axis=1)
            load = assembly.assemble_load(space, data.source, gauss_times[i],
                                          matrices.rule)
            fk = load[cell_dofs].sum(axis=1)
            acc = sum(basis.alpha[i, j] * mwu[j] for j in range(basis.r + 1))
            lhs = acc + tau * basis.beta[i] * bq
            rhs = tau * basis.beta[i] * fk
            scale = np.maximum.reduce(
                [np.abs(acc), tau * basis.beta[i] * np.abs(bq), np.abs(rhs)])
            scale = np.maximum(scale, 1e-30)
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / scale)))
    return worst
