"""Matérn (order 3) reproducing kernel and Gram matrices on free vertices.

The vector kernel is isotropic: ``K(x, y) = k(|x - y|) * I``, so Gram
matrices are stored as the scalar ``(n, n)`` block and applied per component.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

_LOGGER = logging.getLogger(__name__)

# k(r) < 1e-15 beyond this many kernel widths
_CUTOFF_WIDTHS = 45.0


@dataclass(frozen=True)
class KernelParams:
    sigma_v: float = 0.01
    order: int = 3

    def __post_init__(self):
        if not self.sigma_v > 0:
            raise ValueError(f"kernel width must be positive, got {self.sigma_v}")
        if self.order != 3:
            raise ValueError("only the order-3 Matérn kernel is implemented")


def matern3(r, sigma_v: float = 0.01):
    r"""Matérn kernel of order three.

    .. math:: k(r) = (1 + u + \tfrac{2}{5}u^2 + \tfrac{1}{15}u^3)\,e^{-u},\quad u = r/\sigma_V
    """
    u = np.asarray(r, dtype=float) / sigma_v
    return (1.0 + u + 0.4 * u**2 + u**3 / 15.0) * np.exp(-u)


def _matern3_dk_over_r(r, sigma_v):
    """k'(r) / r, finite at r = 0."""
    u = np.asarray(r, dtype=float) / sigma_v
    # k'(r) = -(u / 15)(3 + 3u + u^2) e^{-u} / sigma_v
    return -(3.0 + 3.0 * u + u**2) * np.exp(-u) / (15.0 * sigma_v**2)


def matern3_grad(x, y, sigma_v: float = 0.01) -> np.ndarray:
    """Gradient of ``k(|x - y|)`` with respect to ``x``.

    Broadcasts over leading axes of ``x`` and ``y``.
    """
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    return _matern3_dk_over_r(r, sigma_v)[..., None] * diff


def gram_scalar(points: np.ndarray, sigma_v: float, centers: np.ndarray | None = None) -> np.ndarray:
    """Scalar Gram block ``k(|points_i - centers_j|)``."""
    centers = points if centers is None else centers
    return matern3(cdist(points, centers), sigma_v)


def kernel_matrix(points: np.ndarray, params: KernelParams, mask: np.ndarray | None = None) -> np.ndarray:
    """Full ``(dim * n_free, dim * n_free)`` Gram matrix over unmasked points.

    Degrees of freedom are ordered vertex-major (``i * dim + component``).
    Masked points are eliminated. Duplicate points make the matrix singular;
    in that case a ``1e-12`` diagonal jitter is added and a warning logged.
    """
    points = np.asarray(points, dtype=float)
    if mask is not None:
        points = points[~np.asarray(mask, dtype=bool)]
    if len(points) == 0:
        raise ValueError("kernel matrix needs at least one unmasked point")
    dim = points.shape[1]
    ks = gram_scalar(points, params.sigma_v)
    if _has_duplicates(points):
        _LOGGER.warning("duplicate points in kernel matrix; adding 1e-12 jitter")
        ks = ks + 1e-12 * np.eye(len(points))
    return np.kron(ks, np.eye(dim))


def _has_duplicates(points: np.ndarray) -> bool:
    return len(np.unique(points, axis=0)) < len(points)


class GramOperator:
    """Scalar Gram block of the free vertices, applied component-wise.

    Parameters
    ----------
    points : (n, dim) array
        Positions of the free (unmasked) vertices.
    sigma_v : float
        Kernel width.
    """

    def __init__(self, points: np.ndarray, sigma_v: float):
        self.points = np.asarray(points, dtype=float)
        self.sigma_v = sigma_v
        self.n, self.dim = self.points.shape
        self.scalar = gram_scalar(self.points, sigma_v)
        if _has_duplicates(self.points):
            _LOGGER.warning("duplicate points in Gram matrix; adding 1e-12 jitter")
            self.scalar += 1e-12 * np.eye(self.n)

    @property
    def shape(self):
        m = self.n * self.dim
        return (m, m)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to a flat vertex-major vector of length ``n * dim``."""
        return (self.scalar @ x.reshape(self.n, self.dim)).ravel()

    def dense(self) -> np.ndarray:
        return np.kron(self.scalar, np.eye(self.dim))

    def diagonal(self) -> np.ndarray:
        return np.repeat(np.diag(self.scalar), self.dim)

    def evaluate(self, x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Velocity ``v(x) = sum_j k(|x - x_j|) a_j`` at query points ``x``."""
        return gram_scalar(np.asarray(x, dtype=float), self.sigma_v, self.points) @ coeffs.reshape(
            self.n, self.dim
        )

    def jacobian(self, x: np.ndarray, coeffs: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Analytic ``Dv(x) = sum_j a_j grad_x k(x, x_j)^T``, shape (m, dim, dim)."""
        x = np.asarray(x, dtype=float)
        a = coeffs.reshape(self.n, self.dim)
        out = np.empty((len(x), self.dim, self.dim))
        for start in range(0, len(x), chunk):
            xs = x[start:start + chunk]
            diff = xs[:, None, :] - self.points[None, :, :]
            r = np.sqrt(np.sum(diff**2, axis=2))
            w = _matern3_dk_over_r(r, self.sigma_v)
            w[r > _CUTOFF_WIDTHS * self.sigma_v] = 0.0
            # Dv[m, c, d] = sum_j a[j, c] * w[m, j] * diff[m, j, d]
            out[start:start + chunk] = np.einsum("jc,mj,mjd->mcd", a, w, diff, optimize=True)
        return out
