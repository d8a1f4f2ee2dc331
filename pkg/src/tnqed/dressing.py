"""Dressing of conditional path distributions by retarded self-action.

p(J | A_ext) = p_I(J | A_ext + R J): the bare (field-decoupled) conditional
distribution evaluated at the local field, where ``R`` maps a lattice path
to the field it radiates.  ``R`` must be strictly retarded: a path variable
may only shift the field at times after its slice has started.

The toy models are the static Gaussian examples: one current with same-time
feedback (not normalizable) and two time-ordered currents (normalized).

The quantum reference for the end-to-end check is a stroboscopic oscillator:
no free Hamiltonian, so the current j x is frozen inside each window, and a
pi/2 rotation between the windows maps the momentum (which has integrated
the local field of window 1) onto the current of window 2.  The field then
depends on the lattice path only through the window-1 value, and the bare
family needs one lattice per value.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure, ValidationError
from .hilbert import (DeviceSpec, ModeSpec, SourceSet, SystemSpec, build_system, dag,
                      oscillator_device)
from .pathspace import (CharFunctional, PathDistribution, PathGrid, dist_from_char,
                        pfunctional_from_quantum)
from .response import kernel_matrix, kubo_delta_r
from .signals import Signal, TwoTimeKernel, make_grid

__all__ = [
    "ShiftKernel", "ToyParams", "ToyResult", "GaussianFamily", "QuantumFamily",
    "dress_distribution", "dress_via_shift_functional", "toy_same_time",
    "toy_two_current", "write_toy_csv", "KickedReference", "end_to_end_dressing",
]


@dataclass(frozen=True)
class ShiftKernel:
    """Linear map from path variables to conditioning-field samples.

    matrix: (F, axes); field_times: (F,) times of the field samples;
    path_times: (axes,) start times of the path variables.
    """
    matrix: np.ndarray
    field_times: np.ndarray
    path_times: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.matrix, float))
        ft = np.asarray(self.field_times, float)
        pt = np.asarray(self.path_times, float)
        if R.shape != (ft.size, pt.size):
            raise ValidationError("shift matrix shape does not match field/path times")
        object.__setattr__(self, "matrix", R)
        object.__setattr__(self, "field_times", ft)
        object.__setattr__(self, "path_times", pt)

    @classmethod
    def slice_level(cls, R):
        """Square kernel on slice times 0..L-1 (field sample t lives on slice t)."""
        R = np.atleast_2d(np.asarray(R, float))
        t = np.arange(R.shape[0], dtype=float)
        return cls(R, t, t)

    @classmethod
    def from_kernel(cls, K, x=0, y=0):
        """Slice-level kernel from a TwoTimeKernel sampled on the slice grid."""
        if not isinstance(K, TwoTimeKernel):
            raise ValidationError("expected a TwoTimeKernel")
        return cls.slice_level(K.matrix(x, y).real * K.grid.dt)

    def violations(self):
        """Entries that couple a path variable to a field at or before its start."""
        early = self.field_times[:, None] <= self.path_times[None, :]
        return np.abs(self.matrix) * early

    def check_retarded(self):
        bad = self.violations()
        if np.any(bad != 0):
            f, a = np.unravel_index(np.argmax(bad), bad.shape)
            raise ValidationError(
                f"kernel is not strictly retarded: path variable {a} shifts the field "
                f"at t={self.field_times[f]:g} (lag <= 0, value {self.matrix[f, a]:.3g})")
        return self


def _as_shift(delta_r, pathgrid):
    if delta_r is None or (np.ndim(delta_r) == 0 and delta_r == 0):
        n = pathgrid.axes
        return ShiftKernel.slice_level(np.zeros((n, n)))
    if isinstance(delta_r, ShiftKernel):
        sk = delta_r
    elif isinstance(delta_r, TwoTimeKernel):
        sk = ShiftKernel.from_kernel(delta_r)
    else:
        sk = ShiftKernel.slice_level(delta_r)
    if sk.matrix.shape[1] != pathgrid.axes:
        raise ValidationError("shift kernel does not match the number of path axes")
    return sk.check_retarded()


def dress_distribution(p_I, delta_r, pathgrid, a_ext, norm_tol=1e-6, context=None):
    """p(J | A_ext) = p_I(J | A_ext + R J) on every lattice path.

    ``p_I(paths, fields)`` takes (N, axes) paths and (N, F) fields and
    returns N densities.  ``delta_r`` is a ShiftKernel, a TwoTimeKernel on
    the slice grid or a square slice-level matrix.
    """
    sk = _as_shift(delta_r, pathgrid)
    a_ext = np.broadcast_to(np.asarray(a_ext, float), sk.field_times.shape)
    J = pathgrid.points()
    fields = a_ext[None, :] + J @ sk.matrix.T
    v = np.asarray(p_I(J, fields), float).reshape(pathgrid.shape)
    kind = "probability" if v.min() >= -1e-12 else "quasiprobability"
    return PathDistribution(pathgrid, v, context=dict(context or {}, a_ext=a_ext),
                            kind=kind, norm_tol=norm_tol)


def dress_via_shift_functional(phi_I, delta_r, pathgrid, a_ext, chunk=256):
    """Dressed characteristic functional through the shift identity.

    ``phi_I(zeta_points, field)`` returns the bare characteristic values on
    the given (M, axes) dual points for one conditioning field.  For each
    lattice path J the bare density at the shifted field is recovered by
    the inverse transform, and Phi_dev(zeta) = sum_J exp(i dt zeta J) p_I cell
    is summed directly (no FFT).
    """
    sk = _as_shift(delta_r, pathgrid)
    a_ext = np.broadcast_to(np.asarray(a_ext, float), sk.field_times.shape)
    J = pathgrid.points()
    Z = pathgrid.dual_points()
    dt = pathgrid.dt
    meas = 1.0 / (Z.shape[0] * pathgrid.cell)  # prod (dt/2 pi) dzeta
    fields = a_ext[None, :] + J @ sk.matrix.T
    uniq, inv = np.unique(fields, axis=0, return_inverse=True)
    p = np.empty(len(J))
    for u, f in enumerate(uniq):
        rows = np.flatnonzero(inv.ravel() == u)
        phi = np.asarray(phi_I(Z, f), complex)
        vals = np.exp(-1j * dt * J[rows] @ Z.T) @ phi * meas
        p[rows] = vals.real
    out = np.empty(len(Z), complex)
    for lo in range(0, len(Z), chunk):
        out[lo:lo + chunk] = np.exp(1j * dt * Z[lo:lo + chunk] @ J.T) @ p * pathgrid.cell
    return CharFunctional(pathgrid, out.reshape(pathgrid.shape))


# -- conditional families -----------------------------------------------------

@dataclass
class GaussianFamily:
    """Independent slices, p_I(J | A) = prod_t N(J_t; chi A_t, J0^2)."""
    chi: float
    J0: float

    def density(self, J, A):
        J, A = np.atleast_2d(J), np.atleast_2d(A)
        z = (J - self.chi * A) / self.J0
        return np.prod(np.exp(-0.5 * z ** 2) / (np.sqrt(2 * np.pi) * self.J0), axis=-1)

    __call__ = density

    def char(self, dt):
        def phi(Z, A):
            return np.exp(1j * dt * Z @ (self.chi * np.asarray(A))
                          - 0.5 * (self.J0 * dt) ** 2 * np.sum(Z ** 2, axis=-1))
        return phi


@dataclass
class QuantumFamily:
    """Bare P-functional of a field-free device model under a given field.

    ``make_model(field)`` builds the device-only model driven by the
    conditioning field (a real array on the model grid).  Lattices are
    cached per distinct field; paths must be lattice points.

    ``field_mask`` marks the samples on which the device statistics can
    depend at all (causal support); the field is zeroed elsewhere, which
    lets paths that differ only by later radiation share one lattice.
    """
    make_model: object
    pathgrid: object
    windows: object = None
    site: int = 0
    field_mask: object = None
    cache: dict = field(default_factory=dict)
    max_edge_mass: float = 0.0

    def lattice(self, A):
        A = np.asarray(A, float)
        if self.field_mask is not None:
            A = np.where(self.field_mask, A, 0.0)
        key = A.tobytes()
        if key not in self.cache:
            p = pfunctional_from_quantum(self.make_model(A), self.pathgrid,
                                         windows=self.windows, site=self.site)
            self.max_edge_mass = max(self.max_edge_mass, p.flags["edge_mass"])
            self.cache[key] = p.values
        return self.cache[key]

    def _index(self, J):
        pg = self.pathgrid
        k = np.rint((J - pg.offset) / pg.step).astype(int)
        if np.any(np.abs(pg.offset + k * pg.step - J) > 1e-9 * pg.step) or np.any(k < 0) \
                or np.any(k >= pg.count):
            raise ValidationError("quantum family is evaluated on lattice paths only")
        return tuple(k.T)

    def __call__(self, J, A):
        J, A = np.atleast_2d(J), np.atleast_2d(A)
        out = np.empty(len(J))
        if self.field_mask is not None:
            A = np.where(self.field_mask[None, :], A, 0.0)
        uniq, inv = np.unique(A, axis=0, return_inverse=True)
        inv = inv.ravel()
        for u, f in enumerate(uniq):
            rows = np.flatnonzero(inv == u)
            out[rows] = self.lattice(f)[self._index(J[rows])]
        return out


# -- toys -----------------------------------------------------------------------

@dataclass(frozen=True)
class ToyParams:
    chi: float
    delta_r: float
    J0: float
    A_e: float = 0.0
    A_e_prime: float = 0.0

    def __post_init__(self):
        if not self.J0 > 0:
            raise ValidationError("J0 must be positive")


@dataclass
class ToyResult:
    grid: tuple
    values: np.ndarray
    normalization: float
    expected: float
    residual: float = 0.0
    flags: dict = field(default_factory=dict)


def _gauss(x, mu, s):
    return np.exp(-0.5 * ((x - mu) / s) ** 2) / (np.sqrt(2 * np.pi) * s)


def _trap_weights(x):
    w = np.full(x.size, x[1] - x[0])
    w[0] = w[-1] = 0.5 * w[0]
    return w


def toy_same_time(params, points=4001, span=14.0):
    """Same-time feedback A_loc = A_e + Delta_R J on one slice.

    The dressed density N(J - chi Delta_R J; chi A_e, J0^2) integrates to
    1/|1 - chi Delta_R|.  chi Delta_R = 1 raises NumericalFailure.
    """
    c = params.chi * params.delta_r
    if abs(1 - c) < 1e-12:
        raise NumericalFailure("singular same-time toy: chi*Delta_R = 1")
    mu = params.chi * params.A_e / (1 - c)
    s = params.J0 / abs(1 - c)
    J = np.linspace(mu - span * s, mu + span * s, points)
    p = _gauss(J - c * J, params.chi * params.A_e, params.J0)
    norm = float(p @ _trap_weights(J))
    return ToyResult((J,), p, norm, 1 / abs(1 - c), flags={"singular": False})


def toy_two_current(params, points=801, span=14.0):
    """Earlier current J' and later current J with A_loc = A_e + Delta_R J'.

    Returns the joint density on a (J', J) lattice, its quadrature
    normalization and the pointwise residual of p(J, J') - p(J | J') p'(J').
    """
    c = params.chi * params.delta_r
    m1 = params.chi * params.A_e_prime
    m2 = params.chi * params.A_e + c * m1
    s2 = params.J0 * np.sqrt(1 + c ** 2)
    Jp = np.linspace(m1 - span * params.J0, m1 + span * params.J0, points)
    J = np.linspace(m2 - span * s2, m2 + span * s2, points)
    P, Q = np.meshgrid(Jp, J, indexing="ij")
    joint = (np.exp(-((Q - c * P - params.chi * params.A_e) ** 2 + (P - m1) ** 2)
                    / (2 * params.J0 ** 2)) / (2 * np.pi * params.J0 ** 2))
    cond = _gauss(Q, c * P + params.chi * params.A_e, params.J0)
    prime = _gauss(P, m1, params.J0)
    resid = float(np.max(np.abs(joint - cond * prime)))
    norm = float(_trap_weights(Jp) @ joint @ _trap_weights(J))
    return ToyResult((Jp, J), joint, norm, 1.0, residual=resid)


def write_toy_csv(path, rows):
    """rows: iterables of (params, ToyResult or None); singular rows get nan."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chi", "deltaR", "J0", "A_e", "normalization", "expected"])
        for prm, res in rows:
            norm, exp = (res.normalization, res.expected) if res is not None else (np.nan, np.nan)
            w.writerow([repr(float(v)) for v in (prm.chi, prm.delta_r, prm.J0, prm.A_e, norm, exp)])


# -- end-to-end quantum check ---------------------------------------------------

@dataclass(frozen=True)
class KickedReference:
    """Stroboscopic oscillator + one field mode, observed on two windows.

    Windows are [0, window) and [window + 3 dt, end]; the rotation is spread
    over the three steps in between.  Sources scale with sqrt(hbar) so that
    every dimensionless result is hbar independent.
    """
    dt: float = 0.1
    hbar: float = 1.0
    window: float = 1.0
    coupling: float = 0.3
    mode_frequency: float = 3.0
    n_th: float = 0.5
    cutoff: int = 24
    field_cutoff: int = 3
    drive: float = 0.8
    count: int = 16
    step_factor: float = 0.63

    def __post_init__(self):
        kp = self.window / self.dt
        if abs(kp - round(kp)) > 1e-9 or round(kp) < 2:
            raise ValidationError("window must be a multiple (>= 2) of dt")
        if not self.n_th > 0:
            raise ValidationError("n_th must be positive (the P-functional of a pure state is singular)")

    @property
    def kick(self):
        return int(round(self.window / self.dt))

    def grid(self):
        return make_grid(0.0, self.dt, 2 * self.kick + 4)

    def windows(self):
        t = self.grid().times
        return [(0.0, t[self.kick]), (t[self.kick + 3], t[-1])]

    def field(self):
        t = self.grid().times
        return self.drive * np.sqrt(self.hbar) * np.exp(-((t - 0.5 * self.window) / (0.25 * self.window)) ** 2)

    def _parts(self):
        g, hb, kp = self.grid(), self.hbar, self.kick
        osc = oscillator_device(1.0, self.cutoff, n_th=self.n_th, hbar=hb)
        b = osc.extras["b"]
        dev = DeviceSpec(np.zeros_like(osc.H_dev), osc.J_op, osc.rho_dev, extras=osc.extras,
                         linear=True)
        prof = np.zeros(g.n)
        prof[kp + 1:kp + 3] = np.pi / (4 * self.dt)  # area pi/2 over steps kp..kp+2
        return g, dev, ((hb * dag(b) @ b, prof),)

    def model(self, A=None, with_field=True):
        g, dev, drives = self._parts()
        A = self.field() if A is None else np.asarray(A, float)
        src = SourceSet(g, 1, A_e=Signal(g, A[None], real=True))
        modes = (ModeSpec(self.mode_frequency, (self.coupling,)),) if with_field else ()
        return build_system(SystemSpec(g, dev, modes, self.field_cutoff if with_field else 1, src,
                                       hbar=self.hbar, drives=drives))

    def delta_r(self):
        g = self.grid()
        return kubo_delta_r((ModeSpec(self.mode_frequency, (self.coupling,)),), g)


def _moments(p):
    pg = p.pathgrid
    out = []
    for a in range(pg.axes):
        m, x = p.marginal([a]), pg.values(a)
        mean = np.sum(m * x) * pg.step[a]
        out.append((mean, np.sqrt(max(np.sum(m * x * x) * pg.step[a] - mean ** 2, 0.0))))
    return np.array(out)


def end_to_end_dressing(ref=None):
    """Interacting P-functional vs the dressed bare family on the reference.

    Returns the two lattices, the bare lattice at the external field, the
    max pointwise residual, the size of the dressing effect, and both in
    hbar-free units (densities times hbar).
    """
    ref = KickedReference() if ref is None else ref
    g, windows = ref.grid(), ref.windows()
    t = g.times
    full = ref.model()
    mu = full.expect_series("J").real
    masks = np.zeros((2, g.n), bool)
    for w, (a, b) in enumerate(windows):
        masks[w] = (t >= a - 1e-9) & (t < b - 1e-9)
    masks[1, -1] = True
    means = np.array([mu[m].mean() for m in masks])
    A = ref.field()
    make = lambda field: ref.model(field, with_field=False)

    # pilot lattice for the widths
    s0 = np.full(2, 0.7 * np.sqrt(1.5 * ref.n_th * ref.hbar))
    pilot = pfunctional_from_quantum(make(A), PathGrid(2, 16, step=s0, offset=means - 8 * s0,
                                                       dt=ref.window), windows=windows)
    step = ref.step_factor * _moments(pilot)[:, 1] * 16 / ref.count
    pg = PathGrid(2, ref.count, step=step, offset=means - ref.count // 2 * step, dt=ref.window,
                  max_count=64)

    p_full = pfunctional_from_quantum(full, pg, windows=windows)
    Dm = kernel_matrix(ref.delta_r()).real
    R = np.stack([Dm @ m.astype(float) for m in masks], axis=1)
    sk = ShiftKernel(R, t, [a for a, _ in windows])
    # after window 2 opens the current is frozen, so later field is irrelevant
    fam = QuantumFamily(make, pg, windows=windows, field_mask=t <= windows[1][0] + 1e-9)
    p_dr = dress_distribution(fam, sk, pg, A)
    p_bare = fam.lattice(A)
    resid = float(np.max(np.abs(p_full.values - p_dr.values)))
    effect = float(np.max(np.abs(p_full.values - p_bare)))
    edge = max(p_full.flags["edge_mass"], fam.max_edge_mass)
    return {"full": p_full, "dressed": p_dr, "bare": p_bare, "residual": resid,
            "effect": effect, "scaled_residual": resid * ref.hbar,
            "scaled_effect": effect * ref.hbar, "edge_mass": edge,
            "norms": (p_full.norm(), p_dr.norm()), "contexts": len(fam.cache)}
