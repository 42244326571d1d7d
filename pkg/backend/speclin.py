"""
Dense symmetric linear algebra and random-ensemble sampling.

Eigenvalues are always reported in descending order, so mode index 0 is the
largest eigenvalue. Eigenvectors are stored as the columns of a square array.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from config import EIGEN_METHOD, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE
from errors import ConvergenceError, DomainError
from utils import logger, make_rng


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense real symmetric matrix; symmetry is checked exactly."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"Matrix must be square, got shape {a.shape}")
        if a.shape[0] < 2:
            raise DomainError("Matrix dimension must be at least 2")
        if not np.all(np.isfinite(a)):
            raise DomainError("Matrix has non-finite entries")
        if not np.array_equal(a, a.T):
            raise DomainError("Matrix is not exactly symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def symmetrized(cls, a: np.ndarray) -> "SymmetricMatrix":
        """Builds from an almost-symmetric array by averaging with its transpose."""
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T))


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # column mu is u^(mu)

    @property
    def source_dim(self) -> int:
        return self.eigenvalues.shape[0]

    def vector(self, mu: int) -> np.ndarray:
        return self.eigenvectors[:, mu]


def _sorted_descending(values: np.ndarray, vectors: np.ndarray) -> SpectralDecomposition:
    order = np.argsort(values, kind="stable")[::-1]
    return SpectralDecomposition(eigenvalues=np.array(values[order]), eigenvectors=np.array(vectors[:, order]))


def jacobi_eigh(m: SymmetricMatrix, max_sweeps: int = JACOBI_MAX_SWEEPS,
                tol: float = JACOBI_TOLERANCE) -> SpectralDecomposition:
    """
    Cyclic Jacobi eigensolver.

    Sweeps over all (p, q) pairs, annihilating each off-diagonal element with
    a plane rotation, until every element satisfies
    |a_pq| <= tol * sqrt(|a_pp a_qq|) + n eps ||A||. The second term is the
    roundoff floor for pairs with a vanishing diagonal.

    Raises:
        ConvergenceError: if max_sweeps is exhausted; details carry the residual.
    """
    a = np.array(m.entries, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    floor = n * np.finfo(float).eps * max(np.linalg.norm(a), np.finfo(float).tiny)

    def off_diagonal() -> np.ndarray:
        return np.abs(a - np.diag(np.diag(a)))

    def converged() -> bool:
        d = np.abs(np.diag(a))
        return bool(np.all(off_diagonal() <= tol * np.sqrt(np.outer(d, d)) + floor))

    for sweep in range(max_sweeps):
        if converged():
            logger.debug(f"Jacobi converged after {sweep} sweeps (max off-diagonal {off_diagonal().max():.3e})")
            return _sorted_descending(np.diag(a).copy(), v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= floor:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q

                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    if converged():
        return _sorted_descending(np.diag(a).copy(), v)
    residual = float(np.linalg.norm(off_diagonal()))
    raise ConvergenceError(
        f"Jacobi eigensolver did not converge in {max_sweeps} sweeps",
        {"off_diagonal_residual": residual, "dim": n},
    )


def eigh(m: SymmetricMatrix, method: Optional[str] = None) -> SpectralDecomposition:
    """Symmetric eigendecomposition with descending eigenvalues."""
    method = (method or EIGEN_METHOD).lower()
    if method == "jacobi":
        return jacobi_eigh(m)
    if method != "lapack":
        raise DomainError(f"Unknown eigen method '{method}'")
    values, vectors = np.linalg.eigh(m.entries)
    return SpectralDecomposition(eigenvalues=values[::-1].copy(), eigenvectors=vectors[:, ::-1].copy())


def reconstruct(dec: SpectralDecomposition) -> np.ndarray:
    """Returns sum_mu x_mu u^(mu) u^(mu)^T."""
    u = dec.eigenvectors
    return (u * dec.eigenvalues) @ u.T


def reconstruction_error(dec: SpectralDecomposition, m: SymmetricMatrix) -> float:
    """Max-norm reconstruction error relative to max|C|."""
    denom = max(float(np.max(np.abs(m.entries))), np.finfo(float).tiny)
    return float(np.max(np.abs(reconstruct(dec) - m.entries))) / denom


def orthonormality_error(dec: SpectralDecomposition) -> float:
    u = dec.eigenvectors
    return float(np.max(np.abs(u.T @ u - np.eye(u.shape[1]))))


def sample_wishart(n: int, p: int, sigma: float, seed: int) -> SymmetricMatrix:
    """
    Samples Z = X^T X / p for a p x n matrix X of i.i.d. N(0, sigma^2) entries.

    The matrix has dimension n; its spectrum follows the MP law with
    aspect ratio q = n / p as n, p grow.
    """
    if n < 2 or p < 2:
        raise DomainError(f"Wishart sample needs n, p >= 2 (got n={n}, p={p})")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    rng = make_rng(seed)
    x = rng.normal(0.0, sigma, size=(p, n))
    return SymmetricMatrix.symmetrized(x.T @ x / p)


def porter_thomas_gof(components: Sequence[float], n: int) -> float:
    """
    Kolmogorov-Smirnov distance between eigenvector components and the
    Porter-Thomas law, a zero-mean Gaussian with variance 1/n.
    """
    if n < 2:
        raise DomainError(f"Porter-Thomas dimension must be at least 2, got {n}")
    x = np.asarray(components, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("No eigenvector components supplied")
    return float(stats.kstest(x, "norm", args=(0.0, 1.0 / np.sqrt(n))).statistic)
