"""Tridiagonal and bordered-tridiagonal ("arrowhead") linear solves.

Conventions follow LAPACK: ``lower`` holds the n-1 subdiagonal entries,
``diag`` the n diagonal entries, ``upper`` the n-1 superdiagonal entries.
Extra trailing axes on the coefficient arrays or the right-hand side solve
independent systems side by side.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import NumericalFailure


def solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas algorithm, vectorised over trailing axes.

    No pivoting: intended for the diagonally dominant M-matrices produced
    by the diffusion and exchange discretisations.
    """
    diag = np.asarray(diag) * 1.0
    rhs = np.asarray(rhs)
    n = diag.shape[0]
    lower = np.asarray(lower) * 1.0
    upper = np.asarray(upper) * 1.0
    if lower.shape[0] != n - 1 or upper.shape[0] != n - 1:
        raise ValueError("off-diagonals must have length n - 1")
    extra = rhs.ndim - diag.ndim
    if extra > 0:
        pad = (Ellipsis,) + (None,) * extra
        diag, lower, upper = diag[pad], lower[pad], upper[pad]
    shape = np.broadcast_shapes(diag.shape, rhs.shape)
    dtype = np.result_type(diag, lower, upper, rhs)
    cp = np.empty(shape, dtype=dtype)
    dp = np.empty(shape, dtype=dtype)
    piv = np.broadcast_to(diag[0], shape[1:]).astype(dtype)
    if np.any(piv == 0):
        raise NumericalFailure("zero pivot in tridiagonal solve", {"row": 0})
    if n > 1:
        cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i - 1] * cp[i - 1]
        if np.any(piv == 0):
            raise NumericalFailure("zero pivot in tridiagonal solve", {"row": i})
        if i < n - 1:
            cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / piv
    x = dp
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


class TridiagonalFactor:
    """LU factorisation of one tridiagonal matrix, reused for many solves."""

    def __init__(self, lower, diag, upper):
        self.n = len(diag)
        if self.n < 3:
            # the LAPACK wrapper mis-sizes its work arrays for n < 3
            self._dense = np.diag(np.asarray(diag, dtype=float))
            if self.n == 2:
                self._dense[1, 0], self._dense[0, 1] = lower[0], upper[0]
            if np.linalg.det(self._dense) == 0:
                raise NumericalFailure("singular tridiagonal matrix", {"n": self.n})
            return
        self._dense = None
        dl, d, du, du2, ipiv, info = lapack.dgttrf(
            np.asarray(lower, dtype=float), np.asarray(diag, dtype=float),
            np.asarray(upper, dtype=float),
        )
        if info != 0:
            raise NumericalFailure("singular tridiagonal matrix", {"info": int(info)})
        self._lu = (dl, d, du, du2, ipiv)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        flat = rhs.reshape(self.n, -1)
        if self._dense is not None:
            return np.linalg.solve(self._dense, flat).reshape(rhs.shape)
        x, info = lapack.dgttrs(*self._lu, flat)
        if info != 0:
            raise NumericalFailure("tridiagonal back-substitution failed", {"info": int(info)})
        return x.reshape(rhs.shape)


class ArrowheadSolver:
    """Solve ``[[T, col], [row^T, corner]] [x; s] = [b; beta]`` repeatedly.

    T is tridiagonal. Bordered elimination: with y1 = T^-1 b and
    y2 = T^-1 col, the border unknown is
    s = (beta - row.y1) / (corner - row.y2) and x = y1 - s y2.
    y2 is computed once, so each solve costs one tridiagonal sweep.
    """

    def __init__(self, lower, diag, upper, col, row, corner):
        self._factor = TridiagonalFactor(lower, diag, upper)
        self._row = np.asarray(row, dtype=float)
        self._y2 = self._factor.solve(np.asarray(col, dtype=float))
        self._schur = float(corner) - float(self._row @ self._y2)
        if self._schur == 0 or not np.isfinite(self._schur):
            raise NumericalFailure("singular bordered system", {"schur": self._schur})

    def solve(self, rhs, rhs_last):
        """``rhs`` has shape (n,) or (n, m); ``rhs_last`` () or (m,)."""
        y1 = self._factor.solve(rhs)
        s = (np.asarray(rhs_last, dtype=float) - self._row @ y1) / self._schur
        x = y1 - np.multiply.outer(self._y2, s) if np.ndim(s) else y1 - self._y2 * s
        return x, s


def solve_arrowhead(lower, diag, upper, col, row, corner, rhs, rhs_last):
    """One-shot bordered solve with the Thomas sweep (complex-safe)."""
    col = np.asarray(col)
    rhs = np.asarray(rhs)
    both = solve_tridiagonal(lower, diag, upper, np.stack([rhs, col], axis=-1))
    y1, y2 = both[..., 0], both[..., 1]
    row = np.asarray(row)
    s = (rhs_last - row @ y1) / (corner - row @ y2)
    return y1 - s * y2, s
