"""Dense reference operators shared by the tests."""
import numpy as np

from tacos.forward import ChannelModel


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dense_analytic(n):
    """H = F^{-1} diag(g) F from an explicit DFT matrix and the textbook gain vector."""
    g = np.zeros(n)
    g[0] = 1
    for k in range(1, n):
        if 2 * k < n:
            g[k] = 2
        elif 2 * k == n:
            g[k] = 1
    f = dft_matrix(n)
    return np.linalg.inv(f) @ np.diag(g) @ f


def dense_difference(n):
    return np.eye(n)[1:] - np.eye(n)[:-1]


def dense_spectral(gains):
    f = dft_matrix(len(gains))
    return np.linalg.inv(f) @ np.diag(gains) @ f


def symmetric_gains(rng, n, lo=0.5, hi=1.5):
    """Random positive gains with g[k] = g[n-k], i.e. a real symmetric circulant."""
    half = rng.uniform(lo, hi, n // 2 + 1)
    idx = np.arange(n)
    return half[np.where(idx <= n // 2, idx, n - idx)]


def random_channels(rng, n, d=3):
    return [ChannelModel(symmetric_gains(rng, n), rng.standard_normal(2)) for _ in range(d)]


def dense_forward(channels):
    """Stacked real matrix mapping ``x.reshape(-1)`` (C order) to ``y.reshape(-1, order='F')``."""
    blocks = []
    for c in channels:
        a = np.real(dense_spectral(c.gains))
        blocks.append(np.kron(a, np.asarray(c.r)[None, :]))
    return np.vstack(blocks)


def dense_curvature(z):
    """``sum_n J_n z z^H J_n`` with ``J_n = e_n e_n^T - e_{n-1} e_{n-1}^T``."""
    n = z.shape[0]
    out = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        j = np.zeros((n, n))
        j[k, k], j[k - 1, k - 1] = 1, -1
        out += j @ z @ z.conj().T @ j
    return out


def mle_oracle(y, channels):
    phi = dense_forward(channels)
    sol, *_ = np.linalg.lstsq(phi, y.reshape(-1, order="F"), rcond=None)
    return sol.reshape(-1, 2)


def finite_difference(fun, x, direction, step=1e-6):
    return (fun(x + step * direction) - fun(x - step * direction)) / (2 * step)
