"""Layered elastic tensor, P1 stiffness assembly and the regularized solve.

The energy density in layer coordinates ``xi = C^T eps C`` is

* 3D: ``1/2 mu_tan (xi11 + xi22)^2 + 1/2 lambda_tan (xi11^2 + xi22^2 + 2 xi12^2)
  + 1/2 lambda_tsv xi33^2 + lambda_ang (xi13^2 + xi23^2)``
* 2D: ``1/2 lambda_tan xi11^2 + 1/2 lambda_tsv xi22^2 + lambda_ang xi12^2``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .cg import conjugate_gradient
from .kernel import GramOperator
from .mesh import FoliatedMesh, LayerFrames, MeshError

_VOIGT = {
    2: [(0, 0), (1, 1), (0, 1)],
    3: [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)],
}


@dataclass(frozen=True)
class ElasticParams:
    """Layered moduli and regularization weight.

    ``mu_tan`` only exists in 3D; when left as ``None`` it defaults to
    ``lambda_tan``.
    """

    lambda_tan: float = 1.0
    lambda_tsv: float = 3.0
    lambda_ang: float = 3.0
    mu_tan: float | None = None
    delta: float = 1e-6

    def __post_init__(self):
        for name in ("lambda_tan", "lambda_tsv", "lambda_ang"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.mu_tan is not None and self.mu_tan < 0:
            raise ValueError("mu_tan must be nonnegative")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    @property
    def mu(self) -> float:
        return self.lambda_tan if self.mu_tan is None else self.mu_tan

    def moduli_matrix(self, dim: int) -> np.ndarray:
        """``D`` such that the energy density is ``1/2 z^T D z`` in Voigt order."""
        lt, ls, la = self.lambda_tan, self.lambda_tsv, self.lambda_ang
        if dim == 2:
            return np.diag([lt, ls, 2.0 * la])
        mu = self.mu
        d = np.zeros((6, 6))
        d[:2, :2] = mu
        d[0, 0] += lt
        d[1, 1] += lt
        d[2, 2] = ls
        d[3, 3] = 2.0 * lt
        d[4, 4] = d[5, 5] = 2.0 * la
        return d


def lambda_bar(xi, params: ElasticParams) -> float:
    """Energy density of a symmetric strain expressed in layer coordinates."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape == (2, 2):
        return (0.5 * params.lambda_tan * xi[0, 0] ** 2 + 0.5 * params.lambda_tsv * xi[1, 1] ** 2
                + params.lambda_ang * xi[0, 1] ** 2)
    if xi.shape != (3, 3):
        raise ValueError(f"xi must be 2x2 or 3x3, got {xi.shape}")
    return (
        0.5 * params.mu * (xi[0, 0] + xi[1, 1]) ** 2
        + 0.5 * params.lambda_tan * (xi[0, 0] ** 2 + xi[1, 1] ** 2 + 2 * xi[0, 1] ** 2)
        + 0.5 * params.lambda_tsv * xi[2, 2] ** 2
        + params.lambda_ang * (xi[0, 2] ** 2 + xi[1, 2] ** 2)
    )


def shape_gradients(points: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Gradients of the P1 basis functions, shape (C, dim + 1, dim)."""
    p = points[cells]
    edges = np.swapaxes(p[:, 1:] - p[:, :1], 1, 2)  # columns are edge vectors
    det = np.linalg.det(edges)
    scale = np.abs(edges).max(axis=(1, 2)) ** points.shape[1]
    bad = np.flatnonzero(np.abs(det) <= 1e-14 * scale)
    if bad.size:
        raise MeshError(f"degenerate cell(s): {bad[:10].tolist()}")
    inv = np.linalg.inv(edges)
    grads = np.empty((len(cells), cells.shape[1], points.shape[1]))
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    return grads


def cell_strain(cell_points: np.ndarray, displacements: np.ndarray) -> np.ndarray:
    """Constant linear strain of the P1 interpolant over one simplex.

    Parameters
    ----------
    cell_points : (dim + 1, dim)
    displacements : (dim + 1, dim)
    """
    cell_points = np.asarray(cell_points, dtype=float)
    g = shape_gradients(cell_points, np.arange(len(cell_points))[None, :])[0]
    du = np.asarray(displacements, dtype=float).T @ g
    return 0.5 * (du + du.T)


def strain_operator(points: np.ndarray, cells: np.ndarray, frames: np.ndarray) -> np.ndarray:
    """Map from cell displacements to Voigt components of ``C^T eps C``.

    Returns ``B`` of shape (C, q, (dim + 1) * dim) with local dof order
    ``vertex * dim + component``.
    """
    dim = points.shape[1]
    g = shape_gradients(points, cells)
    gc = np.einsum("cid,cdb->cib", g, frames)  # g_i . c_b
    pairs = _VOIGT[dim]
    b = np.empty((len(cells), len(pairs), cells.shape[1], dim))
    for q, (a, bb) in enumerate(pairs):
        # d xi_ab / d u_{i,m} = 1/2 (C_ma g_i.c_b + C_mb g_i.c_a)
        b[:, q] = 0.5 * (
            frames[:, None, :, a] * gc[:, :, bb, None] + frames[:, None, :, bb] * gc[:, :, a, None]
        )
    return b.reshape(len(cells), len(pairs), -1)


def assemble_stiffness(mesh: FoliatedMesh, frames: LayerFrames, params: ElasticParams) -> sp.csr_matrix:
    """Sparse ``A`` with ``1/2 u^T A u = sum_cells vol * lambda_bar(C^T eps(u) C)``."""
    dim = mesh.dim
    cells = mesh.cells
    bmat = strain_operator(mesh.vertices, cells, frames.matrices)
    vol = np.abs(mesh.cell_volumes())
    dmat = params.moduli_matrix(dim)
    ke = np.einsum("c,cqi,qr,crj->cij", vol, bmat, dmat, bmat, optimize=True)
    dofs = (cells[:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(len(cells), -1)
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = mesh.num_vertices * dim
    a = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    return a


def free_dofs(mask: np.ndarray, dim: int) -> np.ndarray:
    free = np.flatnonzero(~np.asarray(mask, dtype=bool))
    return (free[:, None] * dim + np.arange(dim)).ravel()


@dataclass
class Response:
    """Result of the regularized elastic solve.

    ``velocity`` has shape (N, dim) and is exactly zero on masked vertices;
    ``coeffs`` are the kernel coefficients on the free vertices.
    """

    velocity: np.ndarray
    coeffs: np.ndarray
    gram: GramOperator
    iterations: int
    residual: float


def solve_response(
    mesh: FoliatedMesh,
    stiffness: sp.spmatrix,
    force: np.ndarray,
    mask: np.ndarray,
    sigma_v: float,
    delta: float,
    tol: float = 1e-8,
    maxiter: int | None = None,
    preconditioner: str = "jacobi",
    gram: GramOperator | None = None,
) -> Response:
    """Minimize ``delta/2 |v|_V^2 + 1/2 v^T A v - F^T v`` over kernel fields.

    With ``v = K a`` on the free vertices this is the SPD system
    ``(delta K + K A K) a = K F``, solved by preconditioned CG.

    Parameters
    ----------
    force : (N, dim) array
        Discrete force (already multiplied by the vertex weights). Values on
        masked vertices are ignored.
    preconditioner : {"jacobi", "elastic", "none"}
        ``"jacobi"`` (default) uses the diagonal of ``delta K + K diag(A) K``;
        ``"elastic"`` applies a sparse factorization of ``A_ff + delta I``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    dim = mesh.dim
    mask = np.asarray(mask, dtype=bool)
    fdofs = free_dofs(mask, dim)
    if gram is None:
        gram = GramOperator(mesh.vertices[~mask], sigma_v)
    a_ff = stiffness[fdofs][:, fdofs].tocsr()
    f_free = np.asarray(force, dtype=float).reshape(-1)[fdofs]

    def matvec(x):
        kx = gram.matvec(x)
        return gram.matvec(delta * x + a_ff @ kx)

    precond = None
    if preconditioner == "elastic":
        lu = splu((a_ff + delta * sp.identity(a_ff.shape[0], format="csr")).tocsc())
        precond = lu.solve
    elif preconditioner == "jacobi":
        k2 = gram.scalar**2
        diag_a = a_ff.diagonal().reshape(gram.n, dim)
        diag = delta * gram.diagonal() + (k2 @ diag_a).ravel()
        precond = lambda r: r / diag  # noqa: E731
    elif preconditioner != "none":
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    rhs = gram.matvec(f_free)
    coeffs, iters, res = conjugate_gradient(matvec, rhs, precond, tol=tol, maxiter=maxiter)
    velocity = np.zeros(mesh.num_vertices * dim)
    velocity[fdofs] = gram.matvec(coeffs)
    return Response(velocity.reshape(-1, dim), coeffs, gram, iters, res)


def rigid_motions(points: np.ndarray) -> list[np.ndarray]:
    """Translations and infinitesimal rotations sampled at ``points``."""
    points = np.asarray(points, dtype=float)
    n, dim = points.shape
    fields = [np.tile(np.eye(dim)[i], (n, 1)) for i in range(dim)]
    if dim == 2:
        fields.append(np.stack([-points[:, 1], points[:, 0]], axis=1))
    else:
        for axis in np.eye(3):
            fields.append(np.cross(axis, points))
    return fields
