"""Manufactured solutions, space-time error norms, and convergence orders.

The error norms accumulate squared integrals interval by interval with an
(r+3)-point Gauss rule in time and a (p+3)^2 tensor rule per cell in space;
the time order resolves the fast sin(omega*t) factor once the partition has
ten or more intervals, and a refinement-stability check guards the choice.
"""

import math
from dataclasses import dataclass

import numpy as np

from .assembly import cell_geometry, piola_values
from .exceptions import UnsupportedConfigurationError
from .quadrature import gauss_legendre_unit, tensor_unit


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact solution bundle: scalar, flux, source, and flux divergence."""

    omega: float
    scalar: object      # u(x, t):      (n, 2), t -> (n,)
    flux: object        # q(x, t):      (n, 2), t -> (n, 2)
    source: object      # f(x, t):      (n, 2), t -> (n,)
    div_flux: object    # div q(x, t):  (n, 2), t -> (n,)

    def initial_scalar(self):
        return lambda x: self.scalar(x, 0.0)

    def initial_flux(self):
        return lambda x: self.flux(x, 0.0)


def mms_standard(coefficient, omega=10.0 * math.pi):
    """The separable sin-product solution on the unit square.

    u(x, t) = sin(omega t) sin(pi x1) sin(pi x2) with flux -D grad u; only
    constant isotropic D = d*I is supported, for which the source is
    (omega cos(omega t) + 2 pi^2 d sin(omega t)) sin(pi x1) sin(pi x2).
    """
    d = coefficient.isotropic_value
    if d is None:
        raise UnsupportedConfigurationError(
            "the manufactured solution needs a constant isotropic diffusion"
        )
    pi = math.pi

    def spatial(x):
        x = np.atleast_2d(x)
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def scalar(x, t):
        return math.sin(omega * t) * spatial(x)

    def flux(x, t):
        x = np.atleast_2d(x)
        s = math.sin(omega * t)
        return -d * pi * s * np.column_stack([
            np.cos(pi * x[:, 0]) * np.sin(pi * x[:, 1]),
            np.sin(pi * x[:, 0]) * np.cos(pi * x[:, 1]),
        ])

    def source(x, t):
        return (omega * math.cos(omega * t)
                + 2.0 * pi**2 * d * math.sin(omega * t)) * spatial(x)

    def div_flux(x, t):
        return 2.0 * pi**2 * d * math.sin(omega * t) * spatial(x)

    return ManufacturedSolution(omega=omega, scalar=scalar, flux=flux,
                                source=source, div_flux=div_flux)


class _SpatialSampler:
    """Precomputed per-cell tables for fast error quadrature."""

    def __init__(self, solution, space_rule):
        self.rule = space_rule
        scalar_space = solution.scalar_space
        flux_space = solution.flux_space
        self.phi = scalar_space.ref.tabulate(space_rule.points)
        geometry = cell_geometry(scalar_space.mesh, space_rule)
        self.phys, _, self.det = geometry
        self.wdet = space_rule.weights[None, :] * self.det
        # piola_values bakes the orientation signs into the tables, so the
        # contraction below uses the raw global coefficients
        self.flux_vals, self.flux_divs, _ = piola_values(
            flux_space, space_rule, geometry)
        self.scalar_dofs = scalar_space.cell_dofs
        self.flux_dofs = flux_space.cell_dofs

    def scalar_values(self, coef):
        local = coef[self.scalar_dofs]
        return np.einsum("qi,ci->cq", self.phi, local)

    def flux_values(self, coef):
        local = coef[self.flux_dofs]
        vals = np.einsum("cqla,cl->cqa", self.flux_vals, local)
        divs = np.einsum("cql,cl->cq", self.flux_divs, local)
        return vals, divs

    def flat_points(self):
        return self.phys.reshape(-1, 2)


def _time_weights(solution, time_order):
    part = solution.partition
    trule = gauss_legendre_unit(time_order)
    basis_vals = solution.basis.eval_trial_all(trule.points)  # (nt, r+1)
    return part, trule, basis_vals


def error_u(solution, exact, time_order=None, space_order=None):
    """|| u_exact - u_h || in L2(I; L2(Omega))."""
    r = solution.basis.r
    p = solution.scalar_space.p
    trule_order = time_order or (r + 3)
    srule = tensor_unit(space_order or (p + 3))
    sampler = _SpatialSampler(solution, srule)
    part, trule, basis_vals = _time_weights(solution, trule_order)
    pts = sampler.flat_points()
    total = 0.0
    for n in range(solution.n_intervals):
        tau = part.step_size(n)
        times = part.nodes[n] + tau * trule.points
        stack = solution.scalar_coeffs[n]
        for k, t in enumerate(times):
            coef = basis_vals[k] @ stack
            uh = sampler.scalar_values(coef)
            ue = exact.scalar(pts, t).reshape(uh.shape)
            total += tau * trule.weights[k] * float(
                np.sum(sampler.wdet * (ue - uh) ** 2))
    return math.sqrt(total)


def error_q_V(solution, exact, time_order=None, space_order=None):
    """|| q_exact - q_h || in L2(I; V), V-norm = (L2^2 + ||div||^2)^(1/2)."""
    r = solution.basis.r
    p = solution.flux_space.p
    trule_order = time_order or (r + 3)
    srule = tensor_unit(space_order or (p + 3))
    sampler = _SpatialSampler(solution, srule)
    part, trule, basis_vals = _time_weights(solution, trule_order)
    pts = sampler.flat_points()
    total = 0.0
    for n in range(solution.n_intervals):
        tau = part.step_size(n)
        times = part.nodes[n] + tau * trule.points
        stack = solution.flux_coeffs[n]
        for k, t in enumerate(times):
            coef = basis_vals[k] @ stack
            qh, div_qh = sampler.flux_values(coef)
            qe = exact.flux(pts, t).reshape(qh.shape)
            dqe = exact.div_flux(pts, t).reshape(div_qh.shape)
            sq = np.sum((qe - qh) ** 2, axis=2) + (dqe - div_qh) ** 2
            total += tau * trule.weights[k] * float(np.sum(sampler.wdet * sq))
    return math.sqrt(total)


def eoc(errors):
    """Experimental orders log2(e_{l-1} / e_l); None where undefined."""
    errors = list(errors)
    if len(errors) < 2:
        raise ValueError("need at least two levels for an EOC")
    out = []
    for prev, cur in zip(errors, errors[1:]):
        if prev <= 0.0 or cur <= 0.0:
            out.append(None)
        else:
            out.append(math.log2(prev / cur))
    return out


@dataclass
class ErrorReport:
    """One refinement sweep: per-level sizes, error norms, and orders."""

    levels: list
    n_steps: list
    tau: list
    n_cells: list
    h: list
    n_dofs: list
    err_u: list
    err_q: list
    eoc_u: list  # aligned with levels; first entry None
    eoc_q: list

    @classmethod
    def from_errors(cls, levels, n_steps, tau, n_cells, h, n_dofs, err_u, err_q):
        eu = [None] + (eoc(err_u) if len(err_u) > 1 else [])
        eq = [None] + (eoc(err_q) if len(err_q) > 1 else [])
        return cls(levels=list(levels), n_steps=list(n_steps), tau=list(tau),
                   n_cells=list(n_cells), h=list(h), n_dofs=list(n_dofs),
                   err_u=list(err_u), err_q=list(err_q), eoc_u=eu, eoc_q=eq)
