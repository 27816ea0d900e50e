"""Sparse assembly of the scheme's bilinear forms and load vectors.

Three time-independent matrices drive the whole run:

* M_W  scalar mass            <w_j, w_i>          (block diagonal, SPD)
* M_D  weighted flux mass     <D^{-1} v_j, v_i>   (SPD)
* B    divergence coupling    <div v_j, w_i>      (shared with its transpose)

All integrals use tensor Gauss rules; on bilinear cell maps the integrands
of M_W and M_D are rational, so the rule order is chosen one notch above
polynomial exactness ((p+3) points per direction by default).  The det J
factors cancel in B, which therefore only sees reference quantities and the
edge-orientation signs.
"""

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidCoefficientError, InvalidMeshError
from .quadrature import tensor_unit


class CoefficientField:
    """Symmetric positive definite diffusion tensor D(x) with ellipticity bounds."""

    def __init__(self, matrix, d_min, d_max, isotropic_value=None):
        self.matrix = matrix          # callable: (n, 2) points -> (n, 2, 2)
        self.d_min = float(d_min)
        self.d_max = float(d_max)
        self.isotropic_value = isotropic_value
        if d_min <= 0.0 or d_max < d_min:
            raise InvalidCoefficientError(
                f"ellipticity bounds must satisfy 0 < d_min <= d_max, "
                f"got ({d_min}, {d_max})"
            )

    @classmethod
    def identity(cls):
        return cls.isotropic(1.0)

    @classmethod
    def isotropic(cls, d):
        if d <= 0.0:
            raise InvalidCoefficientError(f"isotropic coefficient must be > 0, got {d}")

        def matrix(x):
            x = np.atleast_2d(x)
            out = np.zeros((len(x), 2, 2))
            out[:, 0, 0] = d
            out[:, 1, 1] = d
            return out

        return cls(matrix, d_min=d, d_max=d, isotropic_value=float(d))

    def at(self, points):
        return self.matrix(points)

    def inverse_at(self, points):
        """D(x)^{-1} at points, validating symmetry and positivity there."""
        D = self.at(points)
        if np.max(np.abs(D - np.transpose(D, (0, 2, 1)))) > 1e-12:
            raise InvalidCoefficientError("diffusion tensor is not symmetric")
        tr = D[:, 0, 0] + D[:, 1, 1]
        det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
        if np.any(det <= 0.0) or np.any(tr <= 0.0):
            raise InvalidCoefficientError(
                "diffusion tensor is not positive definite at a quadrature point"
            )
        inv = np.empty_like(D)
        inv[:, 0, 0] = D[:, 1, 1] / det
        inv[:, 1, 1] = D[:, 0, 0] / det
        inv[:, 0, 1] = -D[:, 0, 1] / det
        inv[:, 1, 0] = -D[:, 1, 0] / det
        return inv


def cell_geometry(mesh, rule):
    """Map a tensor rule through every cell at once.

    Returns (phys, J, det): physical points (nc, nq, 2), Jacobians
    (nc, nq, 2, 2) and determinants (nc, nq).  Raises if any determinant is
    not strictly positive.
    """
    pts = rule.points
    x, y = pts[:, 0], pts[:, 1]
    c = mesh.cell_corner_array()  # (nc, 4, 2)
    shp = np.column_stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y])
    phys = np.einsum("qk,nkd->nqd", shp, c)
    a = c[:, 1] - c[:, 0]
    b = c[:, 3] - c[:, 0]
    d = c[:, 0] - c[:, 1] + c[:, 2] - c[:, 3]
    nc, nq = len(c), len(pts)
    J = np.empty((nc, nq, 2, 2))
    J[:, :, :, 0] = a[:, None, :] + y[None, :, None] * d[:, None, :]
    J[:, :, :, 1] = b[:, None, :] + x[None, :, None] * d[:, None, :]
    det = J[:, :, 0, 0] * J[:, :, 1, 1] - J[:, :, 0, 1] * J[:, :, 1, 0]
    if np.any(det <= 0.0):
        bad = int(np.argwhere(np.any(det <= 0.0, axis=1))[0][0])
        raise InvalidMeshError(bad, float(det[bad].min()))
    return phys, J, det


def piola_values(space, rule, geometry=None):
    """Signed physical flux basis values per cell, plus divergence and geometry.

    Returns (values, divs, geometry): values (nc, nq, n_local, 2) carry the
    Piola weight and orientation signs; divs (nc, nq, n_local) carry the
    1/det J factor and signs.
    """
    mesh = space.mesh
    if geometry is None:
        geometry = cell_geometry(mesh, rule)
    _, J, det = geometry
    ref_vals = space.ref.tabulate(rule.points)      # (nq, nl, 2)
    ref_divs = space.ref.tabulate_div(rule.points)  # (nq, nl)
    vals = np.einsum("cqab,qlb->cqla", J, ref_vals) / det[:, :, None, None]
    vals *= space.cell_signs[:, None, :, None]
    divs = ref_divs[None, :, :] / det[:, :, None]
    divs = divs * space.cell_signs[:, None, :]
    return vals, divs, geometry


def _scatter(local, rows, cols, shape):
    """Accumulate per-cell local matrices (nc, ni, nj) into a global CSR."""
    nc, ni, nj = local.shape
    r = np.repeat(rows[:, :, None], nj, axis=2).ravel()
    c = np.repeat(cols[:, None, :], ni, axis=1).ravel()
    mat = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat


def assemble_mass_scalar(space, rule=None):
    """Scalar mass matrix <w_j, w_i>; block diagonal over cells."""
    if rule is None:
        rule = tensor_unit(space.p + 3)
    phi = space.ref.tabulate(rule.points)
    _, _, det = cell_geometry(space.mesh, rule)
    wdet = rule.weights[None, :] * det
    local = np.einsum("cq,qi,qj->cij", wdet, phi, phi)
    n = space.n_dofs
    return _scatter(local, space.cell_dofs, space.cell_dofs, (n, n))


def assemble_weighted_mass_flux(space, coefficient, rule=None):
    """Weighted flux mass matrix <D^{-1} v_j, v_i>."""
    if rule is None:
        rule = tensor_unit(space.p + 3)
    vals, _, geometry = piola_values(space, rule)
    phys, _, det = geometry
    Dinv = coefficient.inverse_at(phys.reshape(-1, 2)).reshape(det.shape + (2, 2))
    wdet = rule.weights[None, :] * det
    dv = np.einsum("cqab,cqlb->cqla", Dinv, vals)
    local = np.einsum("cq,cqja,cqia->cij", wdet, dv, vals)
    n = space.n_dofs
    return _scatter(local, space.cell_dofs, space.cell_dofs, (n, n))


def assemble_div_coupling(flux_space, scalar_space, rule=None):
    """Divergence coupling B[i, j] = <div v_j, w_i> (scalar rows, flux columns).

    The det J factors cancel against the measure, so the local block is one
    reference integral shared by every cell, modulo orientation signs.
    """
    if flux_space.mesh is not scalar_space.mesh:
        raise ValueError("flux and scalar spaces must share one mesh")
    if rule is None:
        rule = tensor_unit(max(flux_space.p, scalar_space.p) + 3)
    phi = scalar_space.ref.tabulate(rule.points)
    ref_divs = flux_space.ref.tabulate_div(rule.points)
    base = np.einsum("q,qi,qj->ij", rule.weights, phi, ref_divs)
    local = base[None, :, :] * flux_space.cell_signs[:, None, :]
    shape = (scalar_space.n_dofs, flux_space.n_dofs)
    return _scatter(local, scalar_space.cell_dofs, flux_space.cell_dofs, shape)


def assemble_load(space, f, t, rule=None):
    """Scalar load vector <f(., t), w_i> at one time t."""
    if rule is None:
        rule = tensor_unit(space.p + 3)
    phi = space.ref.tabulate(rule.points)
    phys, _, det = cell_geometry(space.mesh, rule)
    fv = f(phys.reshape(-1, 2), t).reshape(det.shape)
    wdet = rule.weights[None, :] * det
    local = np.einsum("cq,qi->ci", wdet * fv, phi)
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.cell_dofs, local)
    return out


def assemble_flux_moments(space, g, rule=None):
    """Vector of <g, v_i> for a vector-valued g; RHS of an L2 flux projection."""
    if rule is None:
        rule = tensor_unit(space.p + 3)
    vals, _, geometry = piola_values(space, rule)
    phys, _, det = geometry
    gv = g(phys.reshape(-1, 2)).reshape(phys.shape)
    wdet = rule.weights[None, :] * det
    local = np.einsum("cq,cqla,cqa->cl", wdet, vals, gv)
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.cell_dofs, local)
    return out


def dump_coo(matrix, path):
    """Write a sparse matrix as `row col value` lines (debug aid)."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
