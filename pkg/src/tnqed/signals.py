"""Uniform time grids, multi-site complex signals and stationary two-time kernels.

Conventions
-----------
A *positive-frequency* signal varies as ``exp(-i w t)`` with ``w > 0``.  In
numpy's FFT bookkeeping that is the half of the spectrum with negative
``fftfreq``.  The zero bin (and the Nyquist bin of even grids, which has no
sign) is shared half-and-half between the two parts.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# window used wherever the split acts on operator histories (moments, test functions)
CONTRACTION_WINDOW = "aperiodic"

__all__ = ["CONTRACTION_WINDOW", 
    "TimeGrid", "Signal", "TwoTimeKernel", "make_grid", "freq_masks",
    "freq_split", "freq_kernel", "aperiodic_coeffs", "odd_harmonic_tail", "identity_kernel", "pair", "pair_kernel",
    "kernel_apply", "write_signal_csv", "read_signal_csv",
    "write_kernel_csv", "read_kernel_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0) or not np.isfinite(self.dt):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.n - 1)

    @property
    def lags(self):
        """Lag values in units of dt, -(n-1) .. (n-1)."""
        return np.arange(-(self.n - 1), self.n)

    def index(self, t):
        """Sample index of time ``t``; raises if ``t`` is off the grid."""
        k = (np.asarray(t, dtype=float) - self.t0) / self.dt
        kr = np.rint(k)
        if np.any(np.abs(k - kr) > 1e-7) or np.any(kr < 0) or np.any(kr >= self.n):
            raise ValidationError(f"time {t} is not on the grid {self}")
        return kr.astype(int) if np.ndim(kr) else int(kr)

    def refine(self, k=2):
        """Grid covering the same window with dt/k."""
        return TimeGrid(self.t0, self.dt / k, (self.n - 1) * k + 1)


def make_grid(t0, dt, n):
    return TimeGrid(float(t0), float(dt), n)


@dataclass(frozen=True)
class Signal:
    """Complex samples ``values[site, k]`` on a grid."""
    grid: TimeGrid
    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] != self.grid.n or v.shape[0] < 1:
            raise ValidationError(
                f"signal values must have shape (sites, {self.grid.n}), got {np.shape(self.values)}")
        if self.real and np.max(np.abs(v.imag), initial=0.0) > 1e-12:
            raise ValidationError("signal declared real has an imaginary part")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def sites(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid, sites=1, real=True):
        return cls(grid, np.zeros((sites, grid.n)), real=real)

    @classmethod
    def from_function(cls, grid, fn, sites=1, real=False):
        """Sample ``fn(t)`` (or ``fn(t, site)`` for several sites)."""
        t = grid.times
        if sites == 1:
            vals = np.broadcast_to(fn(t), t.shape)[None, :]
        else:
            vals = np.stack([np.broadcast_to(fn(t, s), t.shape) for s in range(sites)])
        return cls(grid, vals, real=real)

    def with_values(self, values, real=None):
        return Signal(self.grid, values, self.real if real is None else real)

    def conj(self):
        return Signal(self.grid, self.values.conj(), self.real)

    def __add__(self, other):
        _check_same(self, other)
        return Signal(self.grid, self.values + other.values, self.real and other.real)

    def __sub__(self, other):
        _check_same(self, other)
        return Signal(self.grid, self.values - other.values, self.real and other.real)

    def __mul__(self, c):
        return Signal(self.grid, self.values * c, self.real and np.isrealobj(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True)
class TwoTimeKernel:
    """Stationary kernel ``K(x, x', t - t')`` stored as ``values[x, x', lag + n - 1]``."""
    grid: TimeGrid
    values: np.ndarray
    retarded: bool = False
    band: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[None, None, :]
        n = self.grid.n
        if v.ndim != 3 or v.shape[0] != v.shape[1] or v.shape[2] != 2 * n - 1:
            raise ValidationError(f"kernel values must have shape (S, S, {2 * n - 1})")
        if self.retarded and np.any(v[:, :, : n - 1] != 0):
            raise ValidationError("kernel declared retarded has entries at negative lag")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def sites(self):
        return self.values.shape[0]

    def at_lag(self, lag):
        """Slice ``K[:, :, lag]`` with lag in units of dt."""
        return self.values[:, :, np.asarray(lag) + self.grid.n - 1]

    def matrix(self, x=0, y=0):
        """Dense (n, n) Toeplitz matrix T[j, k] = K(x, y, t_j - t_k)."""
        n = self.grid.n
        idx = np.arange(n)[:, None] - np.arange(n)[None, :] + n - 1
        return self.values[x, y][idx]

    def __add__(self, other):
        if other.grid != self.grid or other.sites != self.sites:
            raise ValidationError("kernel grid/site mismatch")
        return TwoTimeKernel(self.grid, self.values + other.values,
                             self.retarded and other.retarded, self.band)


def _check_same(f, g):
    if f.grid != g.grid:
        raise ValidationError("signals live on different grids")
    if f.sites != g.sites:
        raise ValidationError(f"site count mismatch: {f.sites} vs {g.sites}")


def freq_masks(n):
    """Spectral masks (plus, minus) over ``np.fft.fftfreq(n)`` bins."""
    nu = np.fft.fftfreq(n)
    plus = (nu < 0).astype(float)
    plus[0] = 0.5
    if n % 2 == 0:
        plus[n // 2] = 0.5  # Nyquist bin has no sign either
    return plus, 1.0 - plus


def aperiodic_coeffs(lags):
    """delta^(+) on an unbounded lattice, in units of 1/dt.

    Limit of the periodic masks for an infinitely zero-padded window:
    1/2 at lag 0 and (1 - (-1)^m) / (2 pi i m) elsewhere (odd lags only).
    """
    m = np.asarray(lags)
    c = np.zeros(m.shape, complex)
    c[m == 0] = 0.5
    odd = m % 2 != 0
    c[odd] = 1.0 / (1j * np.pi * m[odd])
    return c


def odd_harmonic_tail(z, n):
    """sum_{odd L > j} z^L / L for j = 0..n-1, rows over the entries of ``z``.

    Closed form artanh(z) minus the partial sum; |z| = 1 with z != +-1.
    These are the pre-window tails of the unbounded-lattice kernels.
    """
    z = np.atleast_1d(np.asarray(z, complex))
    L = np.arange(1, n)
    terms = np.where(L % 2 == 1, z[:, None] ** L / L, 0.0)
    partial = np.concatenate([np.zeros((len(z), 1)), np.cumsum(terms, axis=1)], axis=1)
    return np.arctanh(z)[:, None] - partial


def freq_split(f, window="periodic"):
    """Return ``(f_plus, f_neg)`` with ``f_plus + f_neg == f``.

    ``window='periodic'`` masks the DFT of the samples (periodic extension).
    ``window='aperiodic'`` treats the signal as zero outside the grid and
    uses the unbounded-lattice kernel; nothing wraps around.
    """
    if window == "periodic":
        plus, minus = freq_masks(f.grid.n)
        F = np.fft.fft(f.values, axis=-1)
        fp = np.fft.ifft(F * plus, axis=-1)
    elif window == "aperiodic":
        fp = kernel_apply(freq_kernel(f.grid, +1, f.sites, window), f).values
    else:
        raise ValidationError(f"unknown window {window!r}")
    fm = f.values - fp
    return Signal(f.grid, fp), Signal(f.grid, fm)


def freq_kernel(grid, sign, sites=1, window="periodic"):
    """The grid version of delta^(+) (sign=+1) or delta^(-) (sign=-1)."""
    lags = grid.lags
    if window == "periodic":
        plus, minus = freq_masks(grid.n)
        c = np.fft.ifft(plus if sign > 0 else minus)[lags % grid.n]
    elif window == "aperiodic":
        c = aperiodic_coeffs(lags)
        if sign < 0:
            c = np.conj(c)
    else:
        raise ValidationError(f"unknown window {window!r}")
    k = c / grid.dt
    vals = np.zeros((sites, sites, 2 * grid.n - 1), dtype=complex)
    for s in range(sites):
        vals[s, s] = k
    return TwoTimeKernel(grid, vals, band="+" if sign > 0 else "-")


def identity_kernel(grid, sites=1):
    vals = np.zeros((sites, sites, 2 * grid.n - 1), dtype=complex)
    for s in range(sites):
        vals[s, s, grid.n - 1] = 1.0 / grid.dt
    return TwoTimeKernel(grid, vals)


def pair(f, g):
    """Sum over sites and samples of f*g*dt (no conjugation)."""
    _check_same(f, g)
    return complex(np.sum(f.values * g.values) * f.grid.dt)


def pair_kernel(f, K, g):
    _check_same(f, g)
    if K.grid != f.grid or K.sites != f.sites:
        raise ValidationError("kernel grid/site mismatch")
    return pair(f, kernel_apply(K, g, "left"))


def _weights(grid, rule):
    w = np.full(grid.n, grid.dt)
    if rule == "trapezoid":
        w[0] *= 0.5
    elif rule != "left":
        raise ValidationError(f"unknown quadrature rule {rule!r}")
    return w


def kernel_apply(K, g, side="left", rule="left"):
    """Discrete convolution with dt weighting.

    ``left``:  (K g)(x, t) = sum_{x', t'} K(x, x', t - t') g(x', t') dt
    ``right``: (f K)(x, t) = sum_{x', t'} f(x', t') K(x', x, t' - t) dt

    ``rule='trapezoid'`` halves the weight of the first sample.  Combined with
    the half-weight lag-0 entry of a retarded kernel this turns the left
    Riemann sum into the trapezoid rule over [t0, t].
    """
    if K.grid != g.grid or K.sites != g.sites:
        raise ValidationError("kernel/signal grid or site mismatch")
    n, S = g.grid.n, g.sites
    w = _weights(g.grid, rule)
    gw = g.values * w
    out = np.zeros((S, n), dtype=complex)
    for x in range(S):
        for y in range(S):
            if side == "left":
                kv = K.values[x, y]
                if not kv.any():
                    continue
                out[x] += _toeplitz_mul(kv, gw[y], n)
            elif side == "right":
                kv = K.values[y, x][::-1]  # K(y, x, t' - t) as a function of t - t'
                if not kv.any():
                    continue
                out[x] += _toeplitz_mul(kv, gw[y], n)
            else:
                raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return Signal(g.grid, out)


def _toeplitz_mul(kv, v, n):
    """sum_k kv[j - k + n - 1] v[k] for j in range(n), via linear convolution."""
    full = np.convolve(kv, v) if n < 512 else _fftconv(kv, v)
    return full[n - 1: 2 * n - 1]


def _fftconv(a, b):
    m = len(a) + len(b) - 1
    nfft = 1 << (m - 1).bit_length()
    return np.fft.ifft(np.fft.fft(a, nfft) * np.fft.fft(b, nfft))[:m]


# -- CSV --------------------------------------------------------------------

def write_signal_csv(path, f):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "t", "re", "im"])
        t = f.grid.times
        for s in range(f.sites):
            for k in range(f.grid.n):
                v = f.values[s, k]
                w.writerow([s, repr(float(t[k])), repr(float(v.real)), repr(float(v.imag))])


def read_signal_csv(path, real=False):
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    rows = np.atleast_1d(rows)
    sites = int(rows["site"].max()) + 1
    t = np.unique(rows["t"])
    if len(t) < 2:
        raise ValidationError("signal CSV needs at least two time samples")
    dt = t[1] - t[0]
    grid = TimeGrid(float(t[0]), float(dt), len(t))
    vals = np.zeros((sites, len(t)), dtype=complex)
    k = np.rint((rows["t"] - t[0]) / dt).astype(int)
    vals[rows["site"].astype(int), k] = rows["re"] + 1j * rows["im"]
    return Signal(grid, vals, real=real)


def write_kernel_csv(path, K):
    n = K.grid.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "site2", "lag", "re", "im"])
        for a in range(K.sites):
            for b in range(K.sites):
                for i, lag in enumerate(K.grid.lags):
                    v = K.values[a, b, i]
                    w.writerow([a, b, int(lag), repr(float(v.real)), repr(float(v.imag))])
    return n


def read_kernel_csv(path, grid, retarded=False):
    rows = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True, dtype=float))
    sites = int(max(rows["site"].max(), rows["site2"].max())) + 1
    vals = np.zeros((sites, sites, 2 * grid.n - 1), dtype=complex)
    vals[rows["site"].astype(int), rows["site2"].astype(int),
         rows["lag"].astype(int) + grid.n - 1] = rows["re"] + 1j * rows["im"]
    return TwoTimeKernel(grid, vals, retarded=retarded)
