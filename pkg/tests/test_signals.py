import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tnqed.errors import ValidationError
from tnqed.signals import (Signal, TwoTimeKernel, aperiodic_coeffs, freq_kernel, freq_masks,
                           freq_split, kernel_apply, make_grid, odd_harmonic_tail, pair,
                           read_kernel_csv, read_signal_csv, write_kernel_csv, write_signal_csv)

finite = st.floats(-10, 10, allow_nan=False)


def test_grid_basics():
    g = make_grid(1.0, 0.25, 5)
    assert np.allclose(g.times, [1.0, 1.25, 1.5, 1.75, 2.0])
    assert g.t_end == 2.0
    assert g.index(1.5) == 2
    assert list(g.lags) == list(range(-4, 5))
    assert g.refine(2) == make_grid(1.0, 0.125, 9)


@pytest.mark.parametrize("kw", [dict(dt=0.0, n=4), dict(dt=-1.0, n=4), dict(dt=0.1, n=1)])
def test_grid_rejects(kw):
    with pytest.raises(ValidationError):
        make_grid(0.0, kw["dt"], kw["n"])


def test_index_off_grid():
    with pytest.raises(ValidationError):
        make_grid(0, 0.1, 10).index(0.15)


def test_signal_shape_and_reality():
    g = make_grid(0, 0.1, 4)
    with pytest.raises(ValidationError):
        Signal(g, np.ones(5))
    with pytest.raises(ValidationError):
        Signal(g, 1j * np.ones(4), real=True)
    s = Signal(g, np.arange(4.0))
    assert s.sites == 1 and s.values.shape == (1, 4)


def test_masks_share_zero_and_nyquist():
    plus, minus = freq_masks(8)
    assert plus[0] == minus[0] == 0.5
    assert plus[4] == minus[4] == 0.5
    # exp(-i w t) with w > 0 sits at negative fftfreq
    assert np.all(plus[5:] == 1) and np.all(plus[1:4] == 0)


def test_positive_frequency_goes_to_plus():
    g = make_grid(0, 0.1, 64)
    w = 2 * np.pi * 5 / (64 * 0.1)
    f = Signal(g, np.exp(-1j * w * g.times))
    fp, fm = freq_split(f)
    assert np.allclose(fp.values, f.values, atol=1e-13)
    assert np.allclose(fm.values, 0, atol=1e-13)


@given(arrays(complex, 32, elements=st.complex_numbers(max_magnitude=5, allow_nan=False,
                                                     allow_infinity=False)),
       st.sampled_from(["periodic", "aperiodic"]))
def test_split_complete(v, window):
    g = make_grid(0, 0.3, 32)
    f = Signal(g, v)
    fp, fm = freq_split(f, window)
    assert np.allclose(fp.values + fm.values, f.values, atol=1e-12)


@given(arrays(float, 24, elements=finite))
def test_real_signal_parts_are_conjugate(v):
    f = Signal(make_grid(0, 0.2, 24), v, real=True)
    fp, fm = freq_split(f)
    assert np.allclose(fm.values, np.conj(fp.values), atol=1e-12)


@given(arrays(complex, 32, elements=st.complex_numbers(max_magnitude=5, allow_nan=False,
                                                     allow_infinity=False)))
def test_periodic_split_is_a_projection(v):
    # idempotent away from the half-weight DC and Nyquist bins
    X = np.fft.fft(v)
    X[[0, 16]] = 0
    f = Signal(make_grid(0, 0.3, 32), np.fft.ifft(X))
    fp, fm = freq_split(f)
    assert np.allclose(freq_split(fp)[0].values, fp.values, atol=1e-12)
    assert np.allclose(freq_split(fm)[0].values, 0, atol=1e-12)
    assert np.allclose(freq_split(fp)[1].values, 0, atol=1e-12)


@pytest.mark.parametrize("window", ["periodic", "aperiodic"])
def test_kernel_symmetry(window):
    g = make_grid(0, 0.1, 17)
    kp = freq_kernel(g, +1, window=window).values[0, 0]
    km = freq_kernel(g, -1, window=window).values[0, 0]
    assert np.allclose(km, np.conj(kp), atol=1e-15)
    assert np.allclose(km, kp[::-1], atol=1e-15)


def test_periodic_kernels_sum_to_identity():
    g = make_grid(0, 0.1, 16)
    k = (freq_kernel(g, 1).values + freq_kernel(g, -1).values)[0, 0] * g.dt
    # identity on the circle: 1 at lag 0 and at lags +-n (absent on the grid)
    assert abs(k[g.n - 1] - 1) < 1e-14
    assert np.allclose(np.delete(k, g.n - 1), 0, atol=1e-14)


def test_aperiodic_coeffs_closed_form():
    m = np.arange(-5, 6)
    c = aperiodic_coeffs(m)
    assert c[5] == 0.5
    assert np.all(c[m % 2 == 0][m[m % 2 == 0] != 0] == 0)
    assert np.isclose(c[6], 1 / (1j * np.pi))


def test_odd_harmonic_tail_matches_sum():
    z = np.exp(0.7j)
    tail = odd_harmonic_tail(z, 4)[0]
    L = np.arange(1, 200001, 2)
    brute = [np.sum(z ** L[L > j] / L[L > j]) for j in range(4)]
    assert np.allclose(tail, brute, atol=1e-5)


def test_kernel_apply_matches_dense():
    rng = np.random.default_rng(3)
    g = make_grid(0, 0.2, 12)
    K = TwoTimeKernel(g, rng.normal(size=2 * g.n - 1))
    f = Signal(g, rng.normal(size=g.n))
    w = np.full(g.n, g.dt)
    w[0] /= 2
    dense = K.matrix() @ (f.values[0] * w)
    assert np.allclose(kernel_apply(K, f, rule="trapezoid").values[0], dense, atol=1e-13)
    right = (f.values[0] * np.full(g.n, g.dt)) @ K.matrix()
    assert np.allclose(kernel_apply(K, f, side="right").values[0], right, atol=1e-13)


def test_retarded_kernel_rejects_negative_lag():
    g = make_grid(0, 0.1, 4)
    with pytest.raises(ValidationError):
        TwoTimeKernel(g, np.ones(7), retarded=True)


def test_pair_is_bilinear():
    g = make_grid(0, 0.5, 3)
    f, h = Signal(g, [1, 2, 3]), Signal(g, [1j, 0, 1])
    assert pair(f, h) == pytest.approx((1j + 3) * 0.5)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    g = make_grid(0.5, 0.1, 6)
    f = Signal(g, rng.normal(size=(2, 6)) + 1j * rng.normal(size=(2, 6)))
    write_signal_csv(tmp_path / "f.csv", f)
    back = read_signal_csv(tmp_path / "f.csv")
    assert back.grid.n == 6 and np.allclose(back.values, f.values, atol=0)
    K = freq_kernel(g, +1)
    write_kernel_csv(tmp_path / "k.csv", K)
    assert np.array_equal(read_kernel_csv(tmp_path / "k.csv", g).values, K.values)
