"""Polar orthonormalization: the iterative kernel vs the exact SVD route.

The orthonormalized momentum update needs the polar factor of a momentum
matrix: the nearest matrix with orthonormal columns.  This demo shows the
SVD-free iteration converging to the exact factor, its behavior on badly
conditioned inputs, and the degenerate cases it reduces to.
"""

import numpy as np

from fedminimax import newton_schulz_polar, orthonormality_defect, svd_polar


def matrix_with_condition(rng, m, n, cond):
    k = min(m, n)
    s = np.exp(np.linspace(0.0, -np.log(cond), k))
    U = np.linalg.qr(rng.standard_normal((m, k)))[0]
    V = np.linalg.qr(rng.standard_normal((n, k)))[0]
    return (U * s) @ V.T


def main():
    rng = np.random.default_rng(0)

    print("== Convergence of the iterative polar factor ==")
    M = matrix_with_condition(rng, 8, 5, cond=100.0)
    exact = svd_polar(M)
    print(f"input 8x5, condition number 100, |M|_F = {np.linalg.norm(M):.3f}")
    print(f"{'sweeps':>7s} {'|X - polar(M)|_F':>18s} {'defect(X)':>12s}")
    for iters in (1, 2, 3, 4, 5, 6, 8, 10):
        X = newton_schulz_polar(M, iters)
        err = np.linalg.norm(X - exact)
        print(f"{iters:7d} {err:18.3e} {orthonormality_defect(X, 5):12.3e}")
    print("error decreases monotonically; 10 sweeps land far below 1e-6\n")

    print("== The factor is orthonormal, with Frobenius norm sqrt(rank) ==")
    O = newton_schulz_polar(M, 10)
    print(f"|O^T O - I|_F     = {np.linalg.norm(O.T @ O - np.eye(5)):.2e}")
    print(f"|O|_F             = {np.linalg.norm(O):.6f}  (sqrt(5) = {np.sqrt(5):.6f})")
    print(f"spectral norm     = {np.linalg.norm(O, 2):.12f}  (never exceeds 1)\n")

    print("== A single column reduces to plain L2 normalization ==")
    u = rng.standard_normal((6, 1)) * 7.3
    print(f"|polar(u) - u/|u|| = {np.linalg.norm(newton_schulz_polar(u, 5) - u / np.linalg.norm(u)):.2e}\n")

    print("== Left-multiplying by an orthogonal matrix commutes with polar ==")
    W = np.linalg.qr(rng.standard_normal((8, 8)))[0]
    lhs = newton_schulz_polar(W @ M, 10)
    print(f"|polar(W M) - W polar(M)|_F = {np.linalg.norm(lhs - W @ newton_schulz_polar(M, 10)):.2e}")


if __name__ == "__main__":
    main()
