import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tacos.signal import (
    EllipseTrack,
    check_signal,
    covariance_smoothness,
    generate_signal,
    instantaneous_covariance,
    r_snr,
    read_signal_csv,
    write_signal_csv,
)

from .oracles import dense_analytic


def test_linear_horizontal_collapse():
    track = EllipseTrack.constant(256, frequency=30 / 256)
    x = track.to_signal()
    np.testing.assert_allclose(x[:, 0], np.cos(track.phase), atol=1e-15)
    np.testing.assert_allclose(x[:, 1], 0, atol=1e-15)


def test_circular_collapse():
    track = EllipseTrack.constant(256, ellipticity=np.pi / 4)
    x = track.to_signal()
    c = np.cos(np.pi / 4)
    np.testing.assert_allclose(x[:, 0], c * np.cos(track.phase), atol=1e-15)
    np.testing.assert_allclose(x[:, 1], c * np.sin(track.phase), atol=1e-15)
    np.testing.assert_allclose(np.hypot(x[:, 0], x[:, 1]), c, atol=1e-15)


def test_generator_deterministic_and_in_range():
    x1, t1 = generate_signal(512, rng_seed=7)
    x2, t2 = generate_signal(512, rng_seed=7)
    assert np.array_equal(x1, x2)
    assert np.array_equal(t1.phase, t2.phase)
    assert not np.array_equal(x1, generate_signal(512, rng_seed=8)[0])
    assert np.all(t1.orientation >= -np.pi / 2) and np.all(t1.orientation < np.pi / 2)
    assert np.all(np.abs(t1.ellipticity) <= np.pi / 4 + 1e-15)
    assert np.all((t1.frequency >= 25 / 512 - 1e-15) & (t1.frequency <= 35 / 512 + 1e-15))
    np.testing.assert_allclose(np.diff(t1.phase), 2 * np.pi * t1.frequency[1:], rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(x1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(t1.to_signal(), x1, atol=1e-15)


def test_generator_unnormalized_amplitude_range():
    _, track = generate_signal(256, rng_seed=1, normalize=False)
    assert track.amplitude.min() == pytest.approx(0.5)
    assert track.amplitude.max() == pytest.approx(1.5)


@pytest.mark.parametrize("kwargs", [dict(n=32), dict(n=256, band=(0.1, 0.05)),
                                    dict(n=256, band=(0.0, 0.1)), dict(n=256, band=(0.1, 0.5))])
def test_generator_rejects(kwargs):
    with pytest.raises(ValueError):
        generate_signal(**kwargs)


def test_band_peak():
    n = 1024
    x = EllipseTrack.constant(n, orientation=0.3, ellipticity=0.2).to_signal()
    mag = np.abs(np.fft.fft(x[:, 0] + 1j * x[:, 1]))
    k = int(np.argmax(mag))
    freq = min(k, n - k) / n
    assert 25 / n <= freq <= 35 / n


def test_circular_covariance():
    n, k = 64, 5
    t = np.arange(n)
    x = np.column_stack([np.cos(2 * np.pi * k * t / n), np.sin(2 * np.pi * k * t / n)])
    sigma = instantaneous_covariance(x)
    np.testing.assert_allclose(sigma, np.broadcast_to([[1, -1j], [1j, 1]], (n, 2, 2)), atol=1e-12)


def test_zero_second_component(rng):
    x = np.column_stack([rng.standard_normal(32), np.zeros(32)])
    sigma = instantaneous_covariance(x)
    ua = dense_analytic(32) @ x[:, 0]
    np.testing.assert_allclose(sigma[:, 0, 0], np.abs(ua) ** 2, atol=1e-12)
    np.testing.assert_allclose(sigma[:, [0, 1, 1], [1, 0, 1]], 0, atol=1e-15)


def test_rank_one_psd():
    x, _ = generate_signal(256, rng_seed=3)
    sigma = instantaneous_covariance(x)
    tr = np.real(np.trace(sigma, axis1=1, axis2=2))
    det = np.real(np.linalg.det(sigma))
    assert np.all(np.abs(det) <= 1e-10 * tr**2)
    eig = np.linalg.eigvalsh(sigma)
    assert np.all(eig >= -1e-10 * tr[:, None])
    np.testing.assert_allclose(sigma, np.conj(np.swapaxes(sigma, 1, 2)))


def test_covariance_smoothness_constant_ellipse():
    x = EllipseTrack.constant(512, amplitude=2.0, orientation=0.4, ellipticity=0.3).to_signal()
    energy = np.sum(x**2)
    assert covariance_smoothness(x) <= 1e-6 * energy**2
    assert covariance_smoothness(np.zeros((16, 2))) == 0


@pytest.mark.parametrize("n", [16, 32, 64])
def test_covariance_smoothness_matrix_form(rng, n):
    x = rng.standard_normal((n, 2))
    hd = dense_analytic(n)
    total = 0.0
    for k in range(1, n):
        j = np.zeros((n, n))
        j[k, k], j[k - 1, k - 1] = 1, -1
        total += np.sum(np.abs(x.T @ hd.conj().T @ j @ hd @ x) ** 2)
    assert covariance_smoothness(x) == pytest.approx(total, rel=1e-10)


def test_r_snr_examples(rng):
    x = rng.standard_normal((20, 2))
    assert r_snr(x, x) == float("inf")
    e = rng.standard_normal((20, 2))
    e *= np.linalg.norm(x) / np.linalg.norm(e)
    assert r_snr(x, x + e) == pytest.approx(0.0, abs=1e-12)
    assert r_snr(x, x + e / 10) == pytest.approx(20.0, abs=1e-12)
    with pytest.raises(ValueError):
        r_snr(x, x[:10])
    with pytest.raises(ValueError):
        r_snr(np.zeros((4, 2)), np.ones((4, 2)))


@settings(max_examples=30, deadline=None)
@given(angle=st.floats(-np.pi, np.pi), seed=st.integers(0, 2**32 - 1))
def test_r_snr_rotation_invariant(angle, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((12, 2))
    y = x + 0.3 * rng.standard_normal((12, 2))
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    assert r_snr(x @ rot, y @ rot) == pytest.approx(r_snr(x, y), abs=1e-9)


def test_check_signal():
    with pytest.raises(ValueError):
        check_signal(np.ones((4, 3)))
    with pytest.raises(ValueError):
        check_signal(np.ones((1, 2)))
    with pytest.raises(ValueError):
        check_signal(np.array([[1.0, np.inf], [0.0, 0.0]]))


def test_csv_roundtrip_lossless(tmp_path):
    x, _ = generate_signal(128, rng_seed=2)
    x[3, 1] = 1 / 3
    x[5, 0] = -2.5e-300
    path = tmp_path / "s.csv"
    write_signal_csv(path, x)
    assert path.read_text().splitlines()[0] == "n,u,v"
    assert np.array_equal(read_signal_csv(path), x)
