"""Multi-channel linear measurement model with spectral whitening.

Each channel observes ``y_d = T_d X r_d + noise`` where ``T_d`` is diagonal
in the DFT basis and ``r_d`` mixes the two signal components.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .signal import read_columns, write_columns


def _is_conj_symmetric(gains) -> bool:
    mirrored = np.conj(np.roll(gains[::-1], 1))
    return bool(np.allclose(gains, mirrored, rtol=1e-13, atol=0.0))


@dataclass
class ChannelModel:
    """One measurement channel.

    Parameters
    ----------
    gains : ndarray, shape (N,)
        DFT-domain multipliers of ``T_d``; all nonzero.
    r : ndarray, shape (2,)
        Mixing vector applied on the right of ``X``.
    xi : optional
        Noise covariance descriptor. Metadata only; ``None`` means identity.
    """

    gains: np.ndarray
    r: np.ndarray
    xi: object = None
    real: bool = field(init=False)

    def __post_init__(self):
        self.gains = np.asarray(self.gains)
        self.r = np.asarray(self.r, dtype=float).reshape(-1)
        if self.gains.ndim != 1 or self.gains.size < 2:
            raise ValueError("gains must be a 1-D array with at least 2 entries")
        if self.r.shape != (2,) or not np.all(np.isfinite(self.r)) or not np.any(self.r):
            raise ValueError("r must be a finite nonzero length-2 vector")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains == 0):
            raise ValueError("gains must be finite and nonzero")
        self.real = _is_conj_symmetric(self.gains)

    @property
    def n_samples(self) -> int:
        return self.gains.size

    @classmethod
    def identity(cls, n, r):
        return cls(np.ones(n), r)

    def _spectral(self, v, gains):
        out = np.fft.ifft(gains * np.fft.fft(v))
        return out.real if self.real and not np.iscomplexobj(v) else out

    def apply_t(self, v):
        return self._spectral(v, self.gains)

    def adjoint_t(self, w):
        return self._spectral(w, np.conj(self.gains))

    def gram_weights(self):
        """Symmetrized ``|gains|^2``: DFT multipliers of ``Re{T^H T}`` on real input."""
        w = np.abs(self.gains) ** 2
        return 0.5 * (w + np.roll(w[::-1], 1))


def _check_channels(channels, n):
    if len(channels) == 0:
        raise ValueError("need at least one channel")
    for c in channels:
        if c.n_samples != n:
            raise ValueError(f"channel has {c.n_samples} samples, signal has {n}")


def apply_forward(channels, x):
    """``[T_d X r_d for d]`` as an ``(N, D)`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"signal must be (N, 2), got {x.shape}")
    _check_channels(channels, x.shape[0])
    cols = [c.apply_t(x @ c.r) for c in channels]
    return np.column_stack(cols)


def apply_adjoint(channels, residuals):
    """``sum_d Re{T_d^H res_d} r_d^T`` as an ``(N, 2)`` real array."""
    residuals = np.asarray(residuals)
    if residuals.ndim != 2 or residuals.shape[1] != len(channels):
        raise ValueError(
            f"residuals must be (N, {len(channels)}), got {residuals.shape}")
    _check_channels(channels, residuals.shape[0])
    out = np.zeros((residuals.shape[0], 2))
    for d, c in enumerate(channels):
        out += np.outer(np.real(c.adjoint_t(residuals[:, d])), c.r)
    return out


@dataclass
class NoiseSpec:
    """Colored stationary noise described by per-bin amplitudes and phases.

    ``asd`` and ``phases`` have shape ``(D, N)``; ``asd`` is symmetric and
    ``phases`` antisymmetric under ``k -> N-k`` so realizations are real.
    """

    sigma: float
    asd: np.ndarray
    phases: np.ndarray

    @property
    def n_channels(self):
        return self.asd.shape[0]

    @property
    def n_samples(self):
        return self.asd.shape[1]

    @classmethod
    def draw(cls, sigma, n, n_channels, rng_seed=None):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if n < 2:
            raise ValueError("need at least 2 samples")
        rng = np.random.default_rng(rng_seed)
        half = n // 2 + 1
        alpha_half = rng.uniform(0.0, sigma, size=(n_channels, half))
        phi_half = rng.uniform(0.0, 2 * np.pi, size=(n_channels, half))
        # DC (and Nyquist for even n) must be real: phase 0 or pi
        edge = [0] + ([n // 2] if n % 2 == 0 else [])
        phi_half[:, edge] = np.where(phi_half[:, edge] < np.pi, 0.0, np.pi)
        mirror = np.arange(n)
        mirror = np.where(mirror < half, mirror, n - mirror)
        sign = np.where(np.arange(n) < half, 1.0, -1.0)
        return cls(float(sigma), alpha_half[:, mirror], sign * phi_half[:, mirror])

    def spectrum(self):
        return self.asd * np.exp(1j * self.phases)

    def realize(self):
        """Noise time series, shape ``(N, D)``: inverse DFT (with the 1/N factor) of the spectrum."""
        eps = np.fft.ifft(self.spectrum(), axis=1)
        return np.ascontiguousarray(eps.real.T)


def sample_noise(sigma, n, n_channels, rng_seed=None):
    """Draw a :class:`NoiseSpec` and its realization ``(N, D)``."""
    spec = NoiseSpec.draw(sigma, n, n_channels, rng_seed)
    return spec.realize(), spec


def whitening_channels(spec: NoiseSpec, r_vectors, floor_ratio: float = 1e-6):
    """Channels whose ``T_d`` divides each DFT bin by the noise amplitude.

    Amplitudes below ``floor_ratio * sigma`` are clamped first.

    Returns
    -------
    channels : list of ChannelModel
    n_clamped : int
        Number of clamped bins across all channels.
    """
    r_vectors = np.asarray(r_vectors, dtype=float)
    if r_vectors.shape != (spec.n_channels, 2):
        raise ValueError(f"r_vectors must be ({spec.n_channels}, 2), got {r_vectors.shape}")
    floor = floor_ratio * spec.sigma
    clamped = np.maximum(spec.asd, floor)
    n_clamped = int(np.sum(spec.asd < floor))
    channels = [ChannelModel(1.0 / clamped[d], r_vectors[d]) for d in range(spec.n_channels)]
    return channels, n_clamped


def draw_mixing(n_channels, rng_seed=None):
    """Standard-normal mixing vectors, shape ``(D, 2)``."""
    return np.random.default_rng(rng_seed).standard_normal((n_channels, 2))


def whitened_observations(channels, x, noise):
    """``T_d (X r_d + noise_d)``: raw colored measurements passed through the whitener."""
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise)
    return np.column_stack([
        c.apply_t(x @ c.r + noise[:, d]) for d, c in enumerate(channels)
    ])


# ---------------------------------------------------------------- bundle I/O

MANIFEST_NAME = "channels.json"


def write_bundle(directory, y, spec: NoiseSpec, r_vectors, seed=None,
                 floor_ratio: float = 1e-6, extra=None):
    """Write one ``y_<d>.csv`` per channel plus a JSON channel manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    y = np.asarray(y, dtype=float)
    files = []
    for d in range(y.shape[1]):
        name = f"y_{d}.csv"
        write_columns(directory / name, ["y"], [y[:, d]])
        files.append(name)
    manifest = {
        "n": int(y.shape[0]),
        "sigma": spec.sigma,
        "seed": seed,
        "floor_ratio": floor_ratio,
        "channels": [
            {"file": f, "r": [float(v) for v in np.asarray(r_vectors)[d]],
             "asd": [float(v) for v in spec.asd[d]]}
            for d, f in enumerate(files)
        ],
    }
    if extra:
        manifest.update(extra)
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return directory / MANIFEST_NAME


def read_bundle(directory):
    """Load an observation bundle.

    Returns
    -------
    y : ndarray, shape (N, D)
    channels : list of ChannelModel
    manifest : dict
    """
    directory = Path(directory)
    with open(directory / MANIFEST_NAME, encoding="utf-8") as fh:
        manifest = json.load(fh)
    floor = manifest.get("floor_ratio", 1e-6) * manifest["sigma"]
    ys, channels = [], []
    for entry in manifest["channels"]:
        ys.append(read_columns(directory / entry["file"], ["y"])[:, 0])
        asd = np.asarray(entry["asd"], dtype=float)
        channels.append(ChannelModel(1.0 / np.maximum(asd, floor), entry["r"]))
    y = np.column_stack(ys)
    _check_channels(channels, y.shape[0])
    return y, channels, manifest
