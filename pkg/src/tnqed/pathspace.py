"""Path lattices, P-functionals and their characteristic functionals.

A path lattice has ``slices`` time slices of width ``dt`` and one or more
real channels per slice ('J', or 'J', 'ReD', 'ImD' for the joint current and
dipole case).  Every axis carries ``count`` values ``offset + step*k``.

The characteristic functional pairs a path with a test function as
``exp(i dt sum_a zeta_a J_a)`` and lives on the dual lattice
``zeta = dzeta*(k - count//2)`` with ``dzeta = 2 pi/(count*step*dt)``, which
makes the pair an exact discrete Fourier transform.  The inverse carries the
measure ``prod (dt/2 pi) dzeta``.

For the dipole channels the test function is ``nu`` with the phase
``i nu^* D - i nu D^*``; writing ``D = ReD + i ImD`` this is the real pairing
above with ``zeta_ReD = 2 Im nu`` and ``zeta_ImD = -2 Re nu``.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalFailure, ValidationError
from .hilbert import BranchFunctions, TestFunctionSet, branch_functions, branch_generators
from .signals import Signal

__all__ = [
    "PathGrid", "PathDistribution", "CharFunctional", "char_from_dist",
    "dist_from_char", "slice_profiles", "pfunctional_from_quantum",
    "wiener_sample", "wiener_check", "write_distribution_csv", "write_char_csv",
    "ALIAS_TOL", "EDGE_BINS",
]

ALIAS_TOL = 1e-6
SYM_TOL = 1e-6
EDGE_BINS = 2
_CHANNELS = {("J",), ("J", "ReD", "ImD")}


@dataclass(frozen=True)
class PathGrid:
    slices: int
    count: int
    step: object = 1.0
    offset: object = None  # default: lattice centred on zero
    dt: float = 1.0
    channels: tuple = ("J",)
    max_slices: int = 6
    max_count: int = 32
    max_size: int = 2 ** 20

    def __post_init__(self):
        ch = tuple(self.channels)
        object.__setattr__(self, "channels", ch)
        if ch not in _CHANNELS:
            raise ValidationError(f"channels must be one of {sorted(_CHANNELS)}")
        L, B = int(self.slices), int(self.count)
        if not 1 <= L <= self.max_slices:
            raise ValidationError(f"slices must be in 1..{self.max_slices}")
        if B < 2 or B & (B - 1) or B > self.max_count:
            raise ValidationError(f"count must be a power of 2 in 2..{self.max_count}")
        if not self.dt > 0:
            raise ValidationError("slice width dt must be positive")
        if float(B) ** self.axes > self.max_size:
            raise ValidationError(f"lattice size {B}^{self.axes} exceeds bound {self.max_size}")
        step = np.broadcast_to(np.asarray(self.step, float), (self.axes,)).copy()
        if np.any(step <= 0):
            raise ValidationError("lattice steps must be positive")
        off = -(B // 2) * step if self.offset is None else self.offset
        off = np.broadcast_to(np.asarray(off, float), (self.axes,)).copy()
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "offset", off)

    @property
    def axes(self):
        return self.slices * len(self.channels)

    @property
    def shape(self):
        return (self.count,) * self.axes

    @property
    def cell(self):
        """Lattice volume element prod(step)."""
        return float(np.prod(self.step))

    def axis_name(self, a):
        t, c = divmod(a, len(self.channels))
        return f"{self.channels[c]}_{t}"

    def values(self, a):
        return self.offset[a] + self.step[a] * np.arange(self.count)

    def dzeta(self):
        return 2 * np.pi / (self.count * self.step * self.dt)

    def dual(self, a):
        return self.dzeta()[a] * (np.arange(self.count) - self.count // 2)

    def points(self):
        """(count**axes, axes) array of lattice paths in C order."""
        return np.stack(np.meshgrid(*[self.values(a) for a in range(self.axes)],
                                    indexing="ij"), -1).reshape(-1, self.axes)

    def dual_points(self):
        return np.stack(np.meshgrid(*[self.dual(a) for a in range(self.axes)],
                                    indexing="ij"), -1).reshape(-1, self.axes)

    def __eq__(self, other):
        return (isinstance(other, PathGrid)
                and (self.slices, self.count, self.dt, self.channels)
                == (other.slices, other.count, other.dt, other.channels)
                and np.array_equal(self.step, other.step)
                and np.array_equal(self.offset, other.offset))

    __hash__ = None


@dataclass
class PathDistribution:
    pathgrid: PathGrid
    values: np.ndarray
    context: dict = field(default_factory=dict)
    kind: str = "probability"
    flags: dict = field(default_factory=dict)
    norm_tol: float = 1e-6

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.pathgrid.shape:
            raise ValidationError(f"values have shape {v.shape}, lattice is {self.pathgrid.shape}")
        if np.iscomplexobj(v):
            if np.max(np.abs(v.imag), initial=0.0) > 1e-10:
                raise ValidationError("distribution values must be real")
            v = v.real
        v = v.astype(float)
        self.values = v
        if self.kind not in ("probability", "quasiprobability"):
            raise ValidationError(f"unknown kind {self.kind!r}")
        tol = 1e-8 if self.kind == "probability" else self.norm_tol
        if self.kind == "probability" and v.min() < -1e-12:
            raise ValidationError("probability distribution has negative values")
        if abs(self.norm() - 1) > tol:
            raise ValidationError(f"distribution normalization {self.norm():.12g} is not 1")

    def norm(self):
        return float(self.values.sum() * self.pathgrid.cell)

    def edge_mass(self, bins=EDGE_BINS):
        B = self.pathgrid.count
        inner = np.ones(self.values.shape, bool)
        for a in range(self.values.ndim):
            idx = [slice(None)] * self.values.ndim
            idx[a] = np.r_[0:bins, B - bins:B]
            inner[tuple(idx)] = False
        return float(np.abs(self.values[~inner]).sum() * self.pathgrid.cell)

    def marginal(self, keep):
        """Sum out every axis not in ``keep`` (axis indices)."""
        pg = self.pathgrid
        drop = tuple(a for a in range(pg.axes) if a not in keep)
        return self.values.sum(axis=drop) * np.prod(pg.step[list(drop)])


@dataclass
class CharFunctional:
    pathgrid: PathGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, complex)
        if v.shape != self.pathgrid.shape:
            raise ValidationError("characteristic table does not match the dual lattice")
        self.values = v
        if abs(self.at_zero() - 1) > 1e-10:
            raise ValidationError(f"Phi(0) = {self.at_zero():.12g}, expected 1")

    def at_zero(self):
        return complex(self.values[(self.pathgrid.count // 2,) * self.pathgrid.axes])


def _offset_phase(pg, sign):
    # exp(sign * i dt zeta_a offset_a), broadcast over the lattice
    out = np.ones(pg.shape, complex)
    for a in range(pg.axes):
        sh = [1] * pg.axes
        sh[a] = pg.count
        out = out * np.exp(sign * 1j * pg.dt * pg.dual(a) * pg.offset[a]).reshape(sh)
    return out


def char_from_dist(p):
    """Phi(zeta) = sum_J p(J) cell exp(i dt sum zeta_a J_a) on the dual lattice."""
    pg = p.pathgrid
    F = np.fft.fftshift(np.fft.ifftn(p.values)) * p.values.size * pg.cell
    return CharFunctional(pg, F * _offset_phase(pg, +1))


def dist_from_char(phi, kind="quasiprobability", strict=False, context=None):
    """Inverse transform with measure prod (dt/2 pi) dzeta.

    Sets ``flags['aliasing']`` when more than ALIAS_TOL of the mass sits
    within EDGE_BINS bins of the lattice edge; ``strict`` turns that into a
    NumericalFailure.
    """
    pg = phi.pathgrid
    F = np.fft.ifftshift(phi.values * _offset_phase(pg, -1))
    v = np.fft.fftn(F) / (F.size * pg.cell)
    max_imag = float(np.max(np.abs(v.imag), initial=0.0))
    if max_imag > 1e-10:
        raise NumericalFailure(f"inverse transform is not real (max imag {max_imag:.2e})")
    out = PathDistribution(pg, v.real, context=dict(context or {}), kind=kind)
    em = out.edge_mass()
    out.flags.update(aliasing=em > ALIAS_TOL, edge_mass=em, max_imag=max_imag)
    if strict and out.flags["aliasing"]:
        raise NumericalFailure(f"aliasing: edge mass {em:.2e} exceeds {ALIAS_TOL:g}")
    return out


# -- quantum P-functionals ---------------------------------------------------

def slice_profiles(grid, pathgrid, windows=None):
    """(slices, n) sample profiles phi_t with step-averaged integral pathgrid.dt.

    ``windows`` is a list of (start, stop) times; samples with
    start <= s < stop (stop included for the final sample of the grid) carry
    the profile.  The default tiles the grid from t0 in widths pathgrid.dt.
    A slice variable is then J_t = (1/dt) * integral phi_t J.
    """
    L = pathgrid.slices
    s = grid.times
    if windows is None:
        windows = [(grid.t0 + t * pathgrid.dt, grid.t0 + (t + 1) * pathgrid.dt) for t in range(L)]
    if len(windows) != L:
        raise ValidationError("need one window per slice")
    eps = 1e-9 * grid.dt
    out = np.zeros((L, grid.n))
    for t, (a, b) in enumerate(windows):
        if a < grid.t0 - eps or b > grid.t_end + eps or not b > a:
            raise ValidationError(f"window {t} = ({a}, {b}) is outside the grid")
        m = (s >= a - eps) & (s < b - eps)
        if b >= grid.t_end - eps:
            m[-1] = True
        if m.sum() < 2:
            raise ValidationError(f"window {t} covers fewer than two samples")
        out[t, m] = 1.0
        area = grid.dt * np.sum(0.5 * (out[t, 1:] + out[t, :-1]))
        out[t] *= pathgrid.dt / area
    return out


def _channels_for(ops):
    ops = {ops} if isinstance(ops, str) else set(ops)
    if ops == {"J"}:
        return ("J",)
    if ops == {"J", "D", "Ddag"}:
        return ("J", "ReD", "ImD")
    raise ValidationError("op set must be {'J'} or {'J', 'D', 'Ddag'}")


def _linear_generators(model, pathgrid, profiles, site):
    """Generators G0 and per-axis dG with G(zeta) = G0 + sum_a zeta_a dG_a."""
    g = model.grid
    C = len(pathgrid.channels)

    def tfs(axis, amp):
        zeta = np.zeros((model.sites, g.n), complex)
        # exp(i (xi^* D + xi D^dag)) with xi = (zeta_Re + i zeta_Im) / 2: D on the
        # + branch, D^dag on the - branch (whose exponent carries -i)
        xi = np.zeros((model.sites, g.n), complex)
        if axis is not None:
            t, c = divmod(axis, C)
            ch = pathgrid.channels[c]
            if ch == "J":
                zeta[site] = amp * profiles[t]
            else:
                xi[site] = (0.5 if ch == "ReD" else 0.5j) * amp * profiles[t]
        terms = dict(branch_functions(model, TestFunctionSet(zeta=Signal(g, zeta))).terms)
        if xi.any():
            z = np.zeros_like(xi)
            for op, (fp, fm) in (("D", (np.conj(xi), z)), ("Ddag", (z, -xi))):
                old = terms.get(op, (z, z))
                terms[op] = (old[0] + fp, old[1] + fm)
        return BranchFunctions(terms)

    out = {}
    for br in ("+", "-"):
        G0 = branch_generators(model, br, tfs(None, 0.0))
        if G0 is None:
            G0 = (-1j * (1 if br == "+" else -1) * g.dt / model.hbar) * model.step_hamiltonians
        dG = np.stack([branch_generators(model, br, tfs(a, 1.0)) - G0
                       for a in range(pathgrid.axes)])
        out[br] = (G0, dG)
    return out


def _generating_batch(model, gens, Z, chunk):
    vals = np.empty(len(Z), complex)
    G0p, dGp = gens["+"]
    G0m, dGm = gens["-"]
    D = model.dim
    for lo in range(0, len(Z), chunk):
        z = Z[lo:lo + chunk]
        Wp = np.broadcast_to(np.eye(D, dtype=complex), (len(z), D, D)).copy()
        Wm = Wp.copy()
        for k in range(G0p.shape[0]):
            Ep = sla.expm(G0p[k] + np.einsum("pa,aij->pij", z, dGp[:, k]))
            Em = sla.expm(G0m[k] + np.einsum("pa,aij->pij", z, dGm[:, k]))
            Wp = Ep @ Wp
            Wm = Wm @ Em
        vals[lo:lo + chunk] = np.einsum("ij,pjk,pki->p", model.rho, Wm, Wp)
    return vals


def pfunctional_from_quantum(model, pathgrid, ops=("J",), windows=None, site=0,
                             strict=False, chunk=64, return_char=False):
    """Conditional P-functional of the device current (and dipole) on a lattice.

    Phi is evaluated at every dual-lattice point with the two-branch
    propagator, using the piecewise-constant test function
    ``zeta(s) = sum_t zeta_t phi_t(s)`` (see slice_profiles), and inverted
    with dist_from_char.  The result is tagged as a quasiprobability.
    Nyquist planes are sampled at both ends with half weight.
    """
    channels = _channels_for(ops)
    if pathgrid.channels != channels:
        raise ValidationError(f"pathgrid channels {pathgrid.channels} do not match ops")
    if not 0 <= site < model.sites:
        raise ValidationError("site out of range")
    profiles = slice_profiles(model.grid, pathgrid, windows)
    gens = _linear_generators(model, pathgrid, profiles, site)
    # the Nyquist row -B/2 has no partner on the lattice; evaluate +B/2 as well
    # and give both half weight, which keeps the inverse transform real
    B, n_ax = pathgrid.count, pathgrid.axes
    k = np.arange(B + 1) - B // 2
    Z = np.stack(np.meshgrid(*[pathgrid.dzeta()[a] * k for a in range(n_ax)], indexing="ij"),
                 -1).reshape(-1, n_ax)
    F = _generating_batch(model, gens, Z, chunk).reshape((B + 1,) * n_ax)
    # Phi(-zeta) = conj Phi(zeta) for Hermitian channels; the two are
    # propagated independently, so enforce it and keep the defect as a flag
    Fr = np.conj(F[(slice(None, None, -1),) * n_ax])
    asym = float(np.max(np.abs(F - Fr)))
    if asym > SYM_TOL:
        raise NumericalFailure(f"characteristic functional is not Hermitian (defect {asym:.2e})")
    F = 0.5 * (F + Fr)
    F = F * np.exp(-1j * pathgrid.dt * (Z @ pathgrid.offset)).reshape(F.shape)
    for a in range(n_ax):
        F = np.moveaxis(F, a, 0)
        F = np.concatenate([0.5 * (F[:1] + F[-1:]), F[1:-1]])
        F = np.moveaxis(F, 0, a)
    phi = CharFunctional(pathgrid, F * _offset_phase(pathgrid, +1))
    context = {"sources": model.sources, "windows": windows, "site": site}
    p = dist_from_char(phi, kind="quasiprobability", strict=strict, context=context)
    p.flags["hermitian_defect"] = asym
    return (p, phi) if return_char else p


# -- Wiener discretization -----------------------------------------------------

def wiener_sample(pathgrid, seed, n_samples=None):
    """Wiener path J_t = sum of independent N(0, dt) increments, one per slice.

    Returns shape (slices,), or (n_samples, slices) when n_samples is given.
    """
    rng = np.random.default_rng(seed)
    size = (pathgrid.slices,) if n_samples is None else (n_samples, pathgrid.slices)
    dJ = rng.normal(0.0, np.sqrt(pathgrid.dt), size=size)
    return np.cumsum(dJ, axis=-1)


def wiener_check(n_samples=100_000, dt=0.01, slices=4, seed=0):
    """Increment statistics with standard errors, and pass flags at 3 stderr."""
    pg = PathGrid(slices, 2, dt=dt)
    J = wiener_sample(pg, seed, n_samples)
    dJ = np.diff(np.concatenate([np.zeros((n_samples, 1)), J], axis=1), axis=1)
    x = dJ.ravel()
    mean, se_mean = x.mean(), x.std(ddof=1) / np.sqrt(x.size)
    sq = x ** 2
    var, se_var = sq.mean(), sq.std(ddof=1) / np.sqrt(x.size)
    # lag-1 cross products between neighbouring slices
    cp = (dJ[:, 1:] * dJ[:, :-1]).ravel()
    cov, se_cov = cp.mean(), cp.std(ddof=1) / np.sqrt(cp.size)
    return {
        "dt": dt, "n_samples": n_samples, "slices": slices, "seed": seed,
        "mean": mean, "mean_stderr": se_mean, "mean_ok": abs(mean) <= 3 * se_mean,
        "variance": var, "variance_stderr": se_var,
        "variance_ok": abs(var - dt) <= 3 * se_var,
        "neighbour_cov": cov, "neighbour_cov_stderr": se_cov,
        "independence_ok": abs(cov) <= 3 * se_cov,
    }


# -- CSV export ----------------------------------------------------------------

def write_distribution_csv(path, p):
    pg = p.pathgrid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([pg.axis_name(a) for a in range(pg.axes)] + ["p"])
        for row, v in zip(pg.points(), p.values.ravel()):
            w.writerow([repr(float(x)) for x in row] + [repr(float(v))])


def write_char_csv(path, phi):
    pg = phi.pathgrid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"zeta_{pg.axis_name(a)}" for a in range(pg.axes)] + ["re", "im"])
        for row, v in zip(pg.dual_points(), phi.values.ravel()):
            w.writerow([repr(float(x)) for x in row] + [repr(float(v.real)), repr(float(v.imag))])
