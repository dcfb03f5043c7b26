"""Bivariate signals: validation, synthesis, instantaneous covariance, metrics, CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d
from sklearn.utils import check_array

from .numerics import analytic_transform


def check_signal(x, name: str = "signal") -> np.ndarray:
    """Validate an ``(N, 2)`` real finite bivariate signal and return it as float."""
    x = check_array(x, dtype=np.float64, ensure_2d=True, ensure_min_samples=2,
                    input_name=name)
    if x.shape[1] != 2:
        raise ValueError(f"{name} must have 2 columns (u, v), got {x.shape[1]}")
    return x


@dataclass(frozen=True)
class EllipseTrack:
    """Per-sample polarization ellipse parameters.

    Attributes
    ----------
    amplitude, orientation, ellipticity : ndarray
        ``a[n] >= 0``, ``theta[n]`` in ``[-pi/2, pi/2)``, ``chi[n]`` in ``[-pi/4, pi/4]``.
    frequency : ndarray
        Instantaneous frequency in cycles per sample.
    phase : ndarray
        Cumulative phase; ``phase[n] - phase[n-1] = 2 pi frequency[n]``.
    """

    amplitude: np.ndarray
    orientation: np.ndarray
    ellipticity: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray

    def __len__(self):
        return len(self.amplitude)

    @classmethod
    def constant(cls, n, amplitude=1.0, orientation=0.0, ellipticity=0.0,
                 frequency=None, phase0=0.0):
        frequency = 30.0 / n if frequency is None else frequency
        f = np.full(n, float(frequency))
        phase = phase0 + 2 * np.pi * np.concatenate([[0.0], np.cumsum(f[1:])])
        return cls(np.full(n, float(amplitude)), np.full(n, float(orientation)),
                   np.full(n, float(ellipticity)), f, phase)

    def to_signal(self) -> np.ndarray:
        a, th, chi, ph = self.amplitude, self.orientation, self.ellipticity, self.phase
        u = a * (np.cos(th) * np.cos(chi) * np.cos(ph) - np.sin(th) * np.sin(chi) * np.sin(ph))
        v = a * (np.sin(th) * np.cos(chi) * np.cos(ph) + np.cos(th) * np.sin(chi) * np.sin(ph))
        return np.column_stack([u, v])


def _smooth_unit(rng, n, width):
    """Gaussian-smoothed white noise rescaled to span exactly [0, 1]."""
    t = gaussian_filter1d(rng.standard_normal(n), width, mode="reflect")
    lo, hi = t.min(), t.max()
    if hi - lo == 0.0:
        return np.zeros(n)
    return (t - lo) / (hi - lo)


def generate_signal(n: int, band=None, smoothness: float | None = None,
                    rng_seed=0, normalize: bool = True):
    """Draw a polarized bivariate signal with slowly varying ellipse parameters.

    Parameters
    ----------
    n : int
        Number of samples, at least 64.
    band : (float, float), optional
        Frequency range in cycles per sample; defaults to ``(25/n, 35/n)``.
    smoothness : float, optional
        Standard deviation (in samples) of the Gaussian kernel used to smooth
        the parameter tracks. Defaults to ``n / 20``.
    rng_seed : int or numpy.random.Generator
    normalize : bool
        Rescale the amplitude track so the signal has unit Frobenius norm.
        Amplitudes are drawn in ``[0.5, 1.5]`` before rescaling.

    Returns
    -------
    signal : ndarray, shape (n, 2)
    track : EllipseTrack
    """
    if n < 64:
        raise ValueError(f"n must be at least 64, got {n}")
    f_lo, f_hi = band if band is not None else (25.0 / n, 35.0 / n)
    if not (0.0 < f_lo <= f_hi < 0.5):
        raise ValueError(f"invalid band ({f_lo}, {f_hi}); need 0 < lo <= hi < 1/2")
    width = n / 20.0 if smoothness is None else float(smoothness)
    if width <= 0:
        raise ValueError("smoothness must be positive")
    rng = np.random.default_rng(rng_seed)

    amplitude = 0.5 + _smooth_unit(rng, n, width)
    theta0 = rng.uniform(-np.pi / 2, 0.0)
    orientation = theta0 + (np.pi / 2) * _smooth_unit(rng, n, width)
    # keep theta inside [-pi/2, pi/2)
    orientation = np.minimum(orientation, np.nextafter(np.pi / 2, 0.0))
    ellipticity = -np.pi / 4 + (np.pi / 2) * _smooth_unit(rng, n, width)
    frequency = f_lo + (f_hi - f_lo) * _smooth_unit(rng, n, width)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    phase = phase0 + 2 * np.pi * np.concatenate([[0.0], np.cumsum(frequency[1:])])

    track = EllipseTrack(amplitude, orientation, ellipticity, frequency, phase)
    x = track.to_signal()
    if normalize:
        scale = 1.0 / np.linalg.norm(x)
        track = EllipseTrack(amplitude * scale, orientation, ellipticity, frequency, phase)
        x = track.to_signal()
    return x, track


def instantaneous_covariance(x) -> np.ndarray:
    """Instantaneous covariance track, shape ``(N, 2, 2)``.

    ``Sigma[n] = X_a[n]^H X_a[n]`` with ``X_a`` the analytic signal of ``x``
    and ``X_a[n]`` its ``n``-th row, i.e. ``Sigma[n][i, j] = conj(xa_i) xa_j``.
    """
    xa = analytic_transform(check_signal(x))
    return covariance_from_analytic(xa)


def covariance_from_analytic(xa) -> np.ndarray:
    xa = np.asarray(xa)
    return np.conj(xa)[:, :, None] * xa[:, None, :]


def covariance_smoothness(x) -> float:
    """Sum over ``n`` of ``||Sigma[n] - Sigma[n-1]||_F^2``."""
    sigma = instantaneous_covariance(x)
    return float(np.sum(np.abs(np.diff(sigma, axis=0)) ** 2))


def r_snr(reference, estimate) -> float:
    """Reconstruction SNR in dB; ``inf`` when the estimate is exact."""
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {estimate.shape}")
    ref = np.sum(reference**2)
    if ref == 0.0:
        raise ValueError("reference signal is identically zero")
    err = np.sum((reference - estimate) ** 2)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(ref / err))


# ---------------------------------------------------------------- CSV I/O

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_columns(path, header, columns):
    """Write equal-length columns as CSV with an integer ``n`` index first."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", *header])
        for i, row in enumerate(zip(*columns)):
            w.writerow([i, *(_fmt(v) for v in row)])


def read_columns(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        got = next(r)
        if got != ["n", *header]:
            raise ValueError(f"{path}: expected header {['n', *header]}, got {got}")
        rows = [[float(v) for v in row[1:]] for row in r if row]
    return np.array(rows, dtype=float).reshape(-1, len(header))


def write_signal_csv(path, x):
    x = check_signal(x)
    write_columns(path, ["u", "v"], [x[:, 0], x[:, 1]])


def read_signal_csv(path) -> np.ndarray:
    return check_signal(read_columns(path, ["u", "v"]))


def write_track_csv(path, track: EllipseTrack):
    write_columns(path, ["a", "theta", "chi", "f"],
                  [track.amplitude, track.orientation, track.ellipticity, track.frequency])
