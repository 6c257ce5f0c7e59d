"""Dense polar-factor kernels.

The orthonormalized momentum update replaces a momentum matrix M by its
polar factor: the nearest matrix with orthonormal columns, i.e. P @ Q.T
where M = P diag(sigma) Q.T is the thin SVD restricted to the nonzero
singular values.  Two routes are provided:

* :func:`svd_polar` - exact, via a dense SVD.  Serves as the oracle.
* :func:`newton_schulz_polar` - iterative and SVD-free.  The input is
  first divided by min(||M||_F, sqrt(||M||_1 * ||M||_inf)); both factors
  bound the spectral norm from above, and the second is exact for scaled
  orthonormal matrices, so those are genuine fixed points of the
  iteration.  Each sweep then applies a fixed odd polynomial in M M^T
  that pushes every singular value toward 1.  The polynomial is the
  order-5 truncation of the inverse-square-root series

      p(B) = 1 + B/2 + 3B^2/8 + 5B^3/16 + 35B^4/128,   B = I - X^T X,

  whose degree-2 truncation is the classical cubic iteration
  X <- 1.5 X - 0.5 X X^T X.  Each sweep maps a singular value t to
  t * p(1 - t^2), which satisfies t <= t*p(1-t^2) <= 1 on [0, 1]: the
  error decreases monotonically and never overshoots.  The higher order
  is needed to lift small singular values fast enough; the cubic map only
  grows them by 1.5x per sweep and cannot reach 1e-6 in 10 sweeps at
  condition number 100.
"""

from __future__ import annotations

import numpy as np

# coefficients of the order-5 truncated series of (1 - b)^(-1/2)
_INV_SQRT_COEFFS = (1.0, 1.0 / 2.0, 3.0 / 8.0, 5.0 / 16.0, 35.0 / 128.0)


class DegenerateMatrixError(ValueError):
    """Raised when a polar factor is requested for an (effectively) zero matrix."""


def _as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {np.shape(M)}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def svd_polar(M, rank_tol: float = 1e-12) -> np.ndarray:
    """Exact polar factor via SVD, truncated to the numerical rank.

    Singular values below ``rank_tol * sigma_max`` are dropped, so the
    result O satisfies O.T @ O = I on the retained rank-r subspace and
    has Frobenius norm sqrt(r).  Raises :class:`DegenerateMatrixError`
    for an all-zero matrix.
    """
    A = _as_matrix(M)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] <= 0.0:
        raise DegenerateMatrixError("cannot orthonormalize the zero matrix")
    keep = s > rank_tol * s[0]
    return U[:, keep] @ Vt[keep]


def newton_schulz_polar(M, iters: int = 10) -> np.ndarray:
    """Iterative polar factor: ``iters`` polynomial sweeps after norm pre-scaling.

    At the default ``iters=10`` the result agrees with :func:`svd_polar`
    to well below 1e-6 in Frobenius norm for desk-scale matrices (up to
    64x64) with condition number <= 100; the spectral norm of the output
    never exceeds 1 + 1e-8.  Wide matrices are handled by transposing,
    iterating, and transposing back (polar(M.T) = polar(M).T).
    """
    if int(iters) != iters or iters < 1:
        raise ValueError(f"iters must be a positive integer, got {iters}")
    A = _as_matrix(M)
    if not np.any(A):
        raise DegenerateMatrixError("cannot orthonormalize the zero matrix")
    if A.shape[0] < A.shape[1]:
        return newton_schulz_polar(A.T, iters).T
    col_sums = np.abs(A).sum(axis=0).max()
    row_sums = np.abs(A).sum(axis=1).max()
    nrm = min(np.linalg.norm(A), np.sqrt(col_sums * row_sums))
    X = A / nrm
    eye = np.eye(A.shape[1])
    for _ in range(int(iters)):
        B = eye - X.T @ X
        P = _INV_SQRT_COEFFS[-1] * eye
        for coeff in _INV_SQRT_COEFFS[-2::-1]:
            P = coeff * eye + B @ P
        X = X @ P
    return X


def orthonormality_defect(O, r: int) -> float:
    """Frobenius distance of O.T @ O from the identity on its top-r eigenspace.

    Equals sqrt(sum_i (lambda_i - 1)^2) over the r largest eigenvalues of
    O.T @ O; zero iff the corresponding columns behave orthonormally.
    """
    A = _as_matrix(O)
    if int(r) != r or r < 1 or r > min(A.shape):
        raise ValueError(f"r must lie in [1, {min(A.shape)}], got {r}")
    lam = np.linalg.eigvalsh(A.T @ A)[::-1]  # descending
    return float(np.sqrt(np.sum((lam[: int(r)] - 1.0) ** 2)))
