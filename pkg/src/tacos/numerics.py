"""Matrix-free operators and inner linear solvers.

The analytic filter, first-order differences and the tridiagonal
per-sample covariance operators are applied without ever forming an
N x N matrix. Dense materialization is left to the test oracles.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


def _check_length(n: int) -> None:
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")


def analytic_gains(n: int) -> np.ndarray:
    """Frequency gains of the discrete analytic-signal filter.

    ``g[0] = 1``, ``g[k] = 2`` on strictly positive frequencies, ``g[n/2] = 1``
    for even ``n`` (Nyquist bin) and zero on negative frequencies.
    """
    _check_length(n)
    g = np.zeros(n)
    g[0] = 1.0
    if n % 2 == 0:
        g[1 : n // 2] = 2.0
        g[n // 2] = 1.0
    else:
        g[1 : (n + 1) // 2] = 2.0
    return g


@dataclass(frozen=True)
class AnalyticFilter:
    """Analytic-signal operator ``H`` acting along axis 0.

    ``H`` is a circulant with real gains, hence Hermitian: the adjoint
    applies the same gains.
    """

    n_samples: int

    def __post_init__(self):
        _check_length(self.n_samples)
        object.__setattr__(self, "frequency_gains", analytic_gains(self.n_samples))

    def _filter(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n_samples:
            raise ValueError(
                f"expected {self.n_samples} samples along axis 0, got {x.shape[0]}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        g = self.frequency_gains.reshape((-1,) + (1,) * (x.ndim - 1))
        return np.fft.ifft(g * np.fft.fft(x, axis=0), axis=0)

    def apply(self, x):
        return self._filter(x)

    def adjoint(self, z):
        return self._filter(z)

    def gram_real(self, x):
        """``Re{H^H H} x`` for real ``x``: gain 2 except 1 on DC and Nyquist."""
        x = np.asarray(x, dtype=float)
        g = self.frequency_gains
        w = 0.5 * (g**2 + np.roll(g[::-1], 1) ** 2)
        w = w.reshape((-1,) + (1,) * (x.ndim - 1))
        return np.fft.ifft(w * np.fft.fft(x, axis=0), axis=0).real


def analytic_transform(x) -> np.ndarray:
    """Analytic signal of ``x`` along axis 0 (negative frequencies removed)."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        raise ValueError("analytic_transform expects real input")
    _check_length(x.shape[0])
    return AnalyticFilter(x.shape[0]).apply(x)


def analytic_adjoint(z) -> np.ndarray:
    z = np.asarray(z)
    _check_length(z.shape[0])
    return AnalyticFilter(z.shape[0]).adjoint(z)


@dataclass(frozen=True)
class DifferenceOperator:
    """Forward differences, ``(N-1) x N``, non-circular."""

    n_samples: int

    def __post_init__(self):
        _check_length(self.n_samples)

    @property
    def shape(self):
        return (self.n_samples - 1, self.n_samples)

    def apply(self, x):
        return difference_apply(x)

    def adjoint(self, y):
        y = np.asarray(y)
        if y.shape[0] != self.n_samples - 1:
            raise ValueError(f"expected {self.n_samples - 1} rows, got {y.shape[0]}")
        out = np.zeros((self.n_samples,) + y.shape[1:], dtype=y.dtype)
        out[:-1] -= y
        out[1:] += y
        return out

    def gram(self, x):
        return difference_gram(x)


def difference_apply(x) -> np.ndarray:
    """Row ``i`` of the result is ``x[i+1] - x[i]``."""
    x = np.asarray(x)
    _check_length(x.shape[0])
    return np.diff(x, axis=0)


def difference_gram(x) -> np.ndarray:
    """``D^T D x``: second-difference Laplacian with free (Neumann-like) ends."""
    x = np.asarray(x)
    _check_length(x.shape[0])
    d = np.diff(x, axis=0)
    out = np.zeros_like(d, shape=x.shape)
    out[:-1] -= d
    out[1:] += d
    return out


class SingularPivotError(np.linalg.LinAlgError):
    """Raised when tridiagonal elimination meets a vanishing pivot."""


@dataclass
class TridiagonalSystem:
    """Tridiagonal matrix stored by its three bands.

    ``lower[i]`` is entry ``(i+1, i)`` and ``upper[i]`` is entry ``(i, i+1)``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag)
        self.lower = np.asarray(self.lower)
        self.upper = np.asarray(self.upper)
        n = self.diag.shape[0]
        if n < 1 or self.lower.shape != (n - 1,) or self.upper.shape != (n - 1,):
            raise ValueError("band lengths must be n-1, n, n-1")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, x):
        x = np.asarray(x)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        out = self.diag[:, None] * x
        out[:-1] += self.upper[:, None] * x[1:]
        out[1:] += self.lower[:, None] * x[:-1]
        return out[:, 0] if squeeze else out

    def todense(self):
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)


def covariance_difference_system(a, scale: float = 1.0, shift: float = 0.0):
    """Assemble ``scale * sum_n J_n a a^H J_n + shift * I`` as a tridiagonal system.

    ``J_n = e_n e_n^T - e_{n-1} e_{n-1}^T`` for ``n = 1..N-1`` (0-based), so each
    term only touches the principal 2 x 2 block ``{n-1, n}``.
    """
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[:, None]
    n = a.shape[0]
    _check_length(n)
    energy = np.sum(np.abs(a) ** 2, axis=1)
    count = np.full(n, 2.0)
    count[0] = count[-1] = 1.0
    diag = scale * count * energy + shift
    # entry (i+1, i) of a a^H is <a_{i+1}, a_i> = sum_c a_{i+1,c} conj(a_{i,c})
    lower = -scale * np.sum(a[1:] * np.conj(a[:-1]), axis=1)
    return TridiagonalSystem(lower=lower, diag=diag.astype(complex), upper=np.conj(lower))


def thomas_solve(system: TridiagonalSystem, b, pivot_tol: float = 1e-14):
    """Solve ``system @ z = b`` by Thomas elimination, one pass for all columns.

    Parameters
    ----------
    system : TridiagonalSystem
    b : array_like, shape (n,) or (n, c)
    pivot_tol : float
        Relative pivot threshold; elimination fails when a pivot magnitude
        drops below ``pivot_tol * max|diag|``.

    Raises
    ------
    SingularPivotError
        If a pivot is too small.
    """
    b = np.asarray(b)
    n = system.n
    if b.shape[0] != n:
        raise ValueError(f"rhs has {b.shape[0]} rows, system has {n}")
    squeeze = b.ndim == 1
    rhs = b[:, None] if squeeze else b
    ncol = rhs.shape[1]

    # plain Python scalars beat per-row numpy calls by an order of magnitude here
    lo = system.lower.tolist()
    di = system.diag.tolist()
    up = system.upper.tolist()
    cols = [list(map(complex, rhs[:, j])) for j in range(ncol)]
    floor = pivot_tol * float(np.max(np.abs(system.diag))) if n else 0.0
    if floor == 0.0:
        floor = pivot_tol

    cp = [0j] * n
    piv = di[0]
    if abs(piv) <= floor:
        raise SingularPivotError(f"vanishing pivot at row 0 (|p|={abs(piv):.3e})")
    inv = 1.0 / piv
    if n > 1:
        cp[0] = up[0] * inv
    for col in cols:
        col[0] *= inv
    for i in range(1, n):
        li = lo[i - 1]
        piv = di[i] - li * cp[i - 1]
        if abs(piv) <= floor:
            raise SingularPivotError(f"vanishing pivot at row {i} (|p|={abs(piv):.3e})")
        inv = 1.0 / piv
        if i < n - 1:
            cp[i] = up[i] * inv
        for col in cols:
            col[i] = (col[i] - li * col[i - 1]) * inv
    for col in cols:
        for i in range(n - 2, -1, -1):
            col[i] -= cp[i] * col[i + 1]

    out = np.array(cols).T
    if not (np.iscomplexobj(system.diag) or np.iscomplexobj(b)):
        out = out.real
    return out[:, 0] if squeeze else out


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(
    matvec: Callable[[np.ndarray], np.ndarray],
    b,
    x0=None,
    tol: float = 1e-8,
    max_iter: int = 500,
    callback: Callable[[np.ndarray], None] | None = None,
) -> CGResult:
    """Conjugate gradient for a symmetric positive (semi)definite map.

    Stops once ``||A x - b|| <= tol * ||b||``. Hitting ``max_iter`` is not an
    error: the result carries ``converged=False``.

    Raises
    ------
    FloatingPointError
        If a non-finite value shows up in the iterates.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)

    r = b - matvec(x)
    rr = float(r @ r)
    if np.sqrt(rr) <= tol * bnorm:
        return CGResult(x, 0, np.sqrt(rr) / bnorm, True)
    p = r.copy()
    for k in range(1, max_iter + 1):
        ap = matvec(p)
        pap = float(p @ ap)
        if not np.isfinite(pap):
            raise FloatingPointError("non-finite value in conjugate gradient")
        if pap <= 0.0:
            # direction in the null space of a semidefinite map: nothing left to gain
            return CGResult(x, k - 1, np.sqrt(rr) / bnorm, False)
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        if callback is not None:
            callback(x)
        if not np.isfinite(rr_new):
            raise FloatingPointError("non-finite value in conjugate gradient")
        if np.sqrt(rr_new) <= tol * bnorm:
            return CGResult(x, k, np.sqrt(rr_new) / bnorm, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(x, max_iter, np.sqrt(rr) / bnorm, False)
