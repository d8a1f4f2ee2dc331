"""Finite quantum model: Fock-truncated field modes coupled to a small device.

Everything is done in the Schrodinger picture with static operators.  A
nonresonant mode contributes ``hbar*w*a^dag a`` and enters the broad-band
field ``A``; a resonant mode contributes ``hbar*(w - w0)*a^dag a`` (frame
rotating at the carrier ``w0``) and enters the narrow-band field ``E``.

Coupling::

    H_I = -sum_x [ J A + J A_e + J_e A ]
          -sum_x [ D E^dag + D E_e^* + D_e E^dag + h.c. ]

Drives add c(t) O_dev terms to the device Hamiltonian (kicks, pulses).

Time stepping: step k runs from t_k to t_{k+1} with the sources (and test
functions) frozen at the average of their two endpoint samples, and is
exponentiated exactly.  The local error is O(dt^3), so global errors are
second order in dt.

Closed-time-loop averages are computed with two forward chains,

    <T_C ...> = Tr[ rho * B^dag * K ],

where ``K`` carries the + branch insertions and ``B`` carries the daggered
- branch insertions.  The - branch therefore stands to the left.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import ValidationError
from .signals import CONTRACTION_WINDOW, Signal, TimeGrid, freq_split

__all__ = [
    "ModeSpec", "DeviceSpec", "SourceSet", "SystemSpec", "SystemModel",
    "BranchInsertion", "TestFunctionSet", "BranchFunctions", "PropagatorChain",
    "build_system", "propagate_branch", "branch_generators", "branch_functions", "tc_moment",
    "tc_generating", "heisenberg_op", "trivial_device", "two_level_device",
    "oscillator_device", "composite_dipole_device", "dag",
]

_HERM_TOL = 1e-12


def dag(m):
    return np.conj(np.swapaxes(m, -1, -2))


def _destroy(n):
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


def _check_herm(m, name):
    if np.max(np.abs(m - dag(m)), initial=0.0) > _HERM_TOL * max(1.0, np.max(np.abs(m))):
        raise ValidationError(f"{name} is not Hermitian")


# -- specs ----------------------------------------------------------------

@dataclass(frozen=True)
class ModeSpec:
    frequency: float
    mode_vector: tuple = (1.0,)
    band: str = "nonresonant"
    carrier: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValidationError("mode frequency must be positive")
        if self.band not in ("resonant", "nonresonant"):
            raise ValidationError(f"unknown band {self.band!r}")
        u = np.atleast_1d(np.asarray(self.mode_vector, dtype=complex))
        object.__setattr__(self, "mode_vector", tuple(u))

    @property
    def u(self):
        return np.asarray(self.mode_vector, dtype=complex)


@dataclass(frozen=True)
class DeviceSpec:
    """Device matrices.  ``J_op`` and ``D_op`` are stacked per site."""
    H_dev: np.ndarray
    J_op: np.ndarray
    rho_dev: np.ndarray
    D_op: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict, compare=False)
    linear: bool = False  # harmonic device with bilinear coupling

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H_dev, dtype=complex))
        d = H.shape[0]
        J = np.asarray(self.J_op, dtype=complex)
        if J.ndim == 2:
            J = J[None]
        D = np.zeros_like(J) if self.D_op is None else np.asarray(self.D_op, dtype=complex)
        if D.ndim == 2:
            D = D[None]
        rho = np.atleast_2d(np.asarray(self.rho_dev, dtype=complex))
        if H.shape != (d, d) or J.shape[1:] != (d, d) or D.shape != J.shape or rho.shape != (d, d):
            raise ValidationError("device matrices have inconsistent shapes")
        _check_herm(H, "H_dev")
        for s in range(J.shape[0]):
            _check_herm(J[s], f"J_op[{s}]")
        _check_herm(rho, "rho_dev")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ValidationError(f"rho_dev has trace {np.trace(rho).real:.6g}, expected 1")
        if np.linalg.eigvalsh(rho).min() < -1e-12:
            raise ValidationError("rho_dev is not positive semidefinite")
        for name, val in (("H_dev", H), ("J_op", J), ("D_op", D), ("rho_dev", rho)):
            object.__setattr__(self, name, val)

    @property
    def dim(self):
        return self.H_dev.shape[0]

    @property
    def sites(self):
        return self.J_op.shape[0]


@dataclass(frozen=True)
class SourceSet:
    """Physical sources A_e, J_e, E_e, D_e and auxiliary a_e, j_e, e_e, d_e."""
    grid: TimeGrid
    sites: int = 1
    A_e: Optional[Signal] = None
    J_e: Optional[Signal] = None
    E_e: Optional[Signal] = None
    D_e: Optional[Signal] = None
    a_e: Optional[Signal] = None
    j_e: Optional[Signal] = None
    e_e: Optional[Signal] = None
    d_e: Optional[Signal] = None

    _REAL = ("A_e", "J_e", "a_e", "j_e")
    _NAMES = ("A_e", "J_e", "E_e", "D_e", "a_e", "j_e", "e_e", "d_e")

    def __post_init__(self):
        for name in self._NAMES:
            s = getattr(self, name)
            real = name in self._REAL
            if s is None:
                s = Signal.zeros(self.grid, self.sites, real=real)
            elif not isinstance(s, Signal):
                s = Signal(self.grid, np.asarray(s), real=real)
            if s.grid != self.grid or s.sites != self.sites:
                raise ValidationError(f"source {name} is on a different grid or site count")
            if real and np.max(np.abs(s.values.imag), initial=0.0) > 1e-12:
                raise ValidationError(f"source {name} must be real")
            object.__setattr__(self, name, s)

    def replace(self, **kw):
        cur = {k: getattr(self, k) for k in self._NAMES}
        cur.update(kw)
        return SourceSet(self.grid, self.sites, **cur)

    def scaled(self, c):
        return SourceSet(self.grid, self.sites, **{k: getattr(self, k) * c for k in self._NAMES})


@dataclass(frozen=True)
class SystemSpec:
    grid: TimeGrid
    device: DeviceSpec
    modes: tuple = ()
    fock_cutoff: int = 3
    sources: Optional[SourceSet] = None
    hbar: float = 1.0
    max_dim: int = 4096
    drives: tuple = ()  # (Hermitian device matrix, real profile) pairs added to H

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        drives = []
        for op, prof in self.drives:
            op = np.asarray(op, dtype=complex)
            if op.shape != (self.device.dim,) * 2:
                raise ValidationError("drive operator must act on the device space")
            _check_herm(op, "drive operator")
            if not isinstance(prof, Signal):
                prof = Signal(self.grid, np.asarray(prof, float), real=True)
            if prof.grid != self.grid or np.max(np.abs(prof.values.imag), initial=0.0) > 1e-12:
                raise ValidationError("drive profile must be a real signal on the model grid")
            drives.append((op, prof))
        object.__setattr__(self, "drives", tuple(drives))
        if not self.hbar > 0:
            raise ValidationError("hbar must be positive")
        if self.fock_cutoff < 1:
            raise ValidationError("fock_cutoff must be >= 1")
        S = self.device.sites
        for m in self.modes:
            if len(m.mode_vector) != S:
                raise ValidationError("mode_vector length must equal the device site count")
        carriers = {m.carrier for m in self.modes if m.band == "resonant"}
        if len(carriers) > 1:
            raise ValidationError("all resonant modes must share one carrier frequency")
        if self.sources is None:
            object.__setattr__(self, "sources", SourceSet(self.grid, S))
        elif self.sources.grid != self.grid or self.sources.sites != S:
            raise ValidationError("sources do not match grid/sites")
        if self.dim > self.max_dim:
            raise ValidationError(f"Hilbert dimension {self.dim} exceeds bound {self.max_dim}")

    @property
    def dim(self):
        return self.device.dim * (self.fock_cutoff + 1) ** len(self.modes)

    def replace(self, **kw):
        cur = dict(grid=self.grid, device=self.device, modes=self.modes,
                   fock_cutoff=self.fock_cutoff, sources=self.sources,
                   hbar=self.hbar, max_dim=self.max_dim,
                   drives=self.drives)
        cur.update(kw)
        if "grid" in kw and "sources" not in kw:
            cur["sources"] = None
            if "drives" not in kw:
                cur["drives"] = ()
        return SystemSpec(**cur)


@dataclass(frozen=True)
class BranchInsertion:
    op: object
    time: float
    branch: str = "+"

    def __post_init__(self):
        if self.branch not in ("+", "-"):
            raise ValidationError("branch must be '+' or '-'")


@dataclass(frozen=True)
class TestFunctionSet:
    """Test functions eta (for A), zeta (for J), mu (for E), nu (for D)."""
    eta: Optional[Signal] = None
    zeta: Optional[Signal] = None
    mu: Optional[Signal] = None
    nu: Optional[Signal] = None


@dataclass(frozen=True)
class BranchFunctions:
    """Branch-resolved coefficients: exponent ``i f_+ O_+ - i f_- O_-``.

    ``terms`` maps an operator id to a pair of (sites, n) arrays.
    """
    terms: dict

    @classmethod
    def empty(cls):
        return cls({})


# -- model ----------------------------------------------------------------

class SystemModel:
    """Assembled operators and cached propagators.  Treat as immutable."""

    def __init__(self, spec):
        self.spec = spec
        self.grid = spec.grid
        self.hbar = spec.hbar
        self.sources = spec.sources
        dev = spec.device
        self.d_dev = dev.dim
        self.sites = dev.sites
        nm = len(spec.modes)
        nf = spec.fock_cutoff + 1
        self.dim = spec.dim
        hb = spec.hbar

        field_dim = nf ** nm
        eye_f = np.eye(field_dim)
        lift = lambda m: np.kron(m, eye_f)
        self.a = []
        for k in range(nm):
            parts = [np.eye(self.d_dev)] + [np.eye(nf)] * nm
            parts[k + 1] = _destroy(nf)
            m = parts[0]
            for p in parts[1:]:
                m = np.kron(m, p)
            self.a.append(m)

        S = self.sites
        D = self.dim
        self.A = np.zeros((S, D, D), complex)
        self.E = np.zeros((S, D, D), complex)
        H0 = lift(dev.H_dev)
        self.carrier = 0.0
        for mode, a in zip(spec.modes, self.a):
            w, u = mode.frequency, mode.u
            ad = dag(a)
            if mode.band == "nonresonant":
                H0 = H0 + hb * w * ad @ a
                for x in range(S):
                    self.A[x] += np.sqrt(hb / (2 * w)) * (u[x] * a + np.conj(u[x]) * ad)
            else:
                self.carrier = mode.carrier
                H0 = H0 + hb * (w - mode.carrier) * ad @ a
                for x in range(S):
                    self.E[x] += 1j * np.sqrt(hb * w / 2) * u[x] * a
        self.J = np.stack([lift(j) for j in dev.J_op])
        self.D = np.stack([lift(d) for d in dev.D_op])
        self.H_free = 0.5 * (H0 + dag(H0))
        for x in range(S):
            H0 = H0 - self.J[x] @ self.A[x]
            de = self.D[x] @ dag(self.E[x])
            H0 = H0 - de - dag(de)
        self.H0 = 0.5 * (H0 + dag(H0))
        self.extras = {k: lift(np.asarray(v, complex)) for k, v in dev.extras.items()}
        self.drives = [(lift(op), prof.values[0].real) for op, prof in spec.drives]

        vac = np.zeros((field_dim, field_dim))
        vac[0, 0] = 1.0
        self.rho = np.kron(dev.rho_dev, vac)

    # operator lookup ------------------------------------------------------
    def operator(self, op):
        """Matrix for an operator id: name, (name, site) or an explicit matrix."""
        if isinstance(op, np.ndarray):
            return op
        name, site = (op, 0) if isinstance(op, str) else op
        table = {
            "J": lambda s: self.J[s], "D": lambda s: self.D[s],
            "Ddag": lambda s: dag(self.D[s]), "A": lambda s: self.A[s],
            "E": lambda s: self.E[s], "Edag": lambda s: dag(self.E[s]),
            "a": lambda s: self.a[s], "adag": lambda s: dag(self.a[s]),
        }
        try:
            if name in table:
                return table[name](site)
            return self.extras[name]
        except (IndexError, KeyError):
            raise ValidationError(f"unknown operator {op!r}") from None

    # sources and step Hamiltonians -------------------------------------------
    def _source_terms(self):
        """List of (operator, per-sample coefficient) whose sum is added to H0."""
        src = self.sources
        out = [(op, c) for op, c in self.drives if c.any()]
        for x in range(self.sites):
            A_e, J_e = src.A_e.values[x].real, src.J_e.values[x].real
            E_e, D_e = src.E_e.values[x], src.D_e.values[x]
            if A_e.any():
                out.append((self.J[x], -A_e))
            if J_e.any():
                out.append((self.A[x], -J_e))
            if E_e.any():
                out.append((self.D[x], -np.conj(E_e)))
                out.append((dag(self.D[x]), -E_e))
            if D_e.any():
                out.append((dag(self.E[x]), -D_e))
                out.append((self.E[x], -np.conj(D_e)))
        return out

    @cached_property
    def step_hamiltonians(self):
        """(n-1, D, D) Hamiltonians, sources averaged over each step."""
        n = self.grid.n
        H = np.broadcast_to(self.H0, (n - 1, self.dim, self.dim)).copy()
        for op, c in self._source_terms():
            cm = 0.5 * (c[1:] + c[:-1])
            H += cm[:, None, None] * op[None]
        return H

    @cached_property
    def static(self):
        return not self._source_terms()

    @cached_property
    def step_propagators(self):
        """(n-1, D, D) exact step propagators exp(-i H_k dt / hbar)."""
        dt, hb = self.grid.dt, self.hbar
        if self.static:
            P = _herm_expm(self.H0[None], -dt / hb)
            P = np.broadcast_to(P[0], (self.grid.n - 1, self.dim, self.dim))
            return P
        return _herm_expm(self.step_hamiltonians, -dt / hb)

    @cached_property
    def forward(self):
        """(n, D, D) cumulative U(t_k, t_0)."""
        P = self.step_propagators
        U = np.empty((self.grid.n, self.dim, self.dim), complex)
        U[0] = np.eye(self.dim)
        for k in range(self.grid.n - 1):
            U[k + 1] = P[k] @ U[k]
        return U

    def heisenberg(self, op):
        """(n, D, D) Heisenberg series U^dag O U on every grid sample."""
        U = self.forward
        O = self.operator(op)
        return dag(U) @ O @ U

    def expect_series(self, op):
        """<O_H(t_k)> for all k."""
        OH = self.heisenberg(op)
        return np.einsum("ij,kji->k", self.rho, OH)

    @cached_property
    def free_eig(self):
        """Eigen-decomposition (E, V) of the uncoupled Hamiltonian."""
        return np.linalg.eigh(self.H_free)

    def bohr(self, op):
        """(components, frequencies): O in the free eigenbasis and Omega_ij = (E_i - E_j)/hbar.

        The free Heisenberg operator is V (O_ij e^{i Omega_ij (t - t0)}) V^dag.
        """
        E, V = self.free_eig
        return dag(V) @ self.operator(op) @ V, (E[:, None] - E[None, :]) / self.hbar

    def free_heisenberg(self, op):
        """(n, D, D) Heisenberg series under the uncoupled, source-free dynamics."""
        E, V = self.free_eig
        Oe, Om = self.bohr(op)
        t = self.grid.times - self.grid.t0
        return V[None] @ (Oe[None] * np.exp(1j * Om[None] * t[:, None, None])) @ dag(V)[None]

    def with_sources(self, sources):
        return build_system(self.spec.replace(sources=sources))

    def with_spec(self, **kw):
        return build_system(self.spec.replace(**kw))


def _herm_expm(H, scale):
    """exp(1j * scale * H) for a stack of Hermitian matrices."""
    w, V = np.linalg.eigh(H)
    return (V * np.exp(1j * scale * w)[..., None, :]) @ dag(V)


def build_system(spec):
    return SystemModel(spec)


# -- branch propagation ----------------------------------------------------

@dataclass(frozen=True)
class PropagatorChain:
    branch: str
    steps: np.ndarray

    def product(self):
        """+ chain: later steps to the left.  - chain: earlier steps to the left."""
        M = np.eye(self.steps.shape[-1], dtype=complex)
        if self.branch == "+":
            for P in self.steps:
                M = P @ M
        else:
            for P in self.steps:
                M = M @ P
        return M


def _coerce_branch_functions(model, test_fns):
    if test_fns is None:
        return BranchFunctions.empty()
    if isinstance(test_fns, TestFunctionSet):
        return branch_functions(model, test_fns)
    if isinstance(test_fns, BranchFunctions):
        return test_fns
    raise ValidationError("test_fns must be a TestFunctionSet or BranchFunctions")


def branch_generators(model, branch, test_fns=None):
    """(n-1, D, D) step generators G_k with step propagator expm(G_k).

    Returns None when no test-function term is present (plain unitary steps).
    """
    if branch not in ("+", "-"):
        raise ValidationError("branch must be '+' or '-'")
    bf = _coerce_branch_functions(model, test_fns)
    dt, hb = model.grid.dt, model.hbar
    terms = []
    for op, (fp, fm) in bf.terms.items():
        f = np.asarray(fp if branch == "+" else fm, complex)
        if f.ndim == 1:
            f = f[None]
        for x in range(f.shape[0]):
            if f[x].any():
                name, _ = (op, 0) if isinstance(op, str) else op
                terms.append((model.operator((name, x)), 0.5 * (f[x, 1:] + f[x, :-1])))
    if not terms:
        return None
    sign = 1.0 if branch == "+" else -1.0
    G = (-1j * sign * dt / hb) * model.step_hamiltonians
    for O, c in terms:
        G = G + (1j * sign * dt) * c[:, None, None] * O[None]
    return G


def propagate_branch(model, branch, test_fns=None):
    """Ordered step propagators for one branch.

    + : exp(-i H_k dt/hbar + i dt sum f_+ O)
    - : exp(+i H_k dt/hbar - i dt sum f_- O), i.e. the conjugate transpose
        of the forward step generated by H - hbar * sum conj(f_-) O^dag.
    """
    G = branch_generators(model, branch, test_fns)
    if G is None:
        P = model.step_propagators
        return PropagatorChain(branch, P if branch == "+" else dag(P))
    return PropagatorChain(branch, _expm_stack(G))


def _expm_stack(G):
    # identical rows are common (piecewise-constant test functions); exponentiate once each
    flat = G.reshape(G.shape[0], -1)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    if len(uniq) < G.shape[0]:
        E = sla.expm(uniq.reshape(-1, *G.shape[1:]))
        return E[inv.ravel()]
    return sla.expm(G)


def branch_functions(model, tf):
    """Apply the response substitutions to physical test functions.

    eta_pm = j_e/hbar +- eta^(-+),  zeta_pm = a_e/hbar +- zeta^(-+);
    mu_+ = d_e/hbar, mubar_+ = mu^* + d_e^*/hbar, mubar_- = d_e^*/hbar,
    mu_- = mu + d_e/hbar, and the same pattern for nu with e_e.
    """
    g, S, hb = model.grid, model.sites, model.hbar
    src = model.sources
    zero = np.zeros((S, g.n), complex)

    def vals(sig):
        if sig is None:
            return zero
        if sig.grid != g or sig.sites != S:
            raise ValidationError("test function does not match model grid/sites")
        return sig.values

    def split(sig):
        if sig is None:
            return zero, zero
        p, m = freq_split(sig, window=CONTRACTION_WINDOW)
        return p.values, m.values

    terms = {}
    eta_p, eta_m = split(tf.eta)
    je = src.j_e.values / hb
    terms["A"] = (je + eta_m, je - eta_p)
    z_p, z_m = split(tf.zeta)
    ae = src.a_e.values / hb
    terms["J"] = (ae + z_m, ae - z_p)
    mu, de = vals(tf.mu), src.d_e.values / hb
    terms["E"] = (np.conj(mu) + np.conj(de), np.conj(de))
    terms["Edag"] = (de, mu + de)
    nu, ee = vals(tf.nu), src.e_e.values / hb
    terms["D"] = (np.conj(nu) + np.conj(ee), np.conj(ee))
    terms["Ddag"] = (ee, nu + ee)
    # drop identically-zero entries so the static fast path is kept
    terms = {k: v for k, v in terms.items() if np.any(v[0]) or np.any(v[1])}
    return BranchFunctions(terms)


def tc_generating(model, test_fns=None):
    """Closed-loop generating value Tr[rho W_-^dag W_+]."""
    bf = _coerce_branch_functions(model, test_fns)
    Wp = propagate_branch(model, "+", bf).product()
    Wm = propagate_branch(model, "-", bf).product()
    return complex(np.trace(model.rho @ Wm @ Wp))


def tc_moment(model, insertions):
    """<T_C prod O_branch(t)> by direct chain propagation with insertions."""
    g = model.grid
    plus = {}
    minus = {}
    for ins in insertions:
        k = g.index(ins.time)
        O = model.operator(ins.op)
        (plus if ins.branch == "+" else minus).setdefault(k, []).append(O)
    P = model.step_propagators
    K = np.eye(model.dim, dtype=complex)
    B = np.eye(model.dim, dtype=complex)
    last = max(list(plus) + list(minus) + [0])
    for k in range(last + 1):
        for O in reversed(plus.get(k, [])):
            K = O @ K
        for O in minus.get(k, []):
            B = dag(O) @ B
        if k < last:
            K = P[k] @ K
            B = P[k] @ B
    return complex(np.vdot(B, K @ model.rho))


def heisenberg_op(model, op, t):
    k = model.grid.index(t)
    U = model.forward[k]
    return dag(U) @ model.operator(op) @ U


# -- device presets -----------------------------------------------------------

def trivial_device(sites=1):
    """One-dimensional device with zero current."""
    z = np.zeros((sites, 1, 1))
    return DeviceSpec(np.zeros((1, 1)), z, np.ones((1, 1)), z)


def two_level_device(omega, j=1.0, d=0.0, state="ground", hbar=1.0, sites=1):
    """Two-level atom, basis (g, e): H = hbar*omega*|e><e|.

    Current ``sqrt(hbar)*j*sigma_x`` and dipole ``sqrt(hbar)*d*|g><e|``.
    ``state`` may be 'ground', 'excited' or a 2-vector.
    """
    sx = np.array([[0, 1], [1, 0]], complex)
    lower = np.array([[0, 1], [0, 0]], complex)
    H = hbar * omega * np.diag([0.0, 1.0])
    if isinstance(state, str):
        psi = np.array([1, 0], complex) if state == "ground" else np.array([0, 1], complex)
    else:
        psi = np.asarray(state, complex)
        psi = psi / np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    J = np.stack([np.sqrt(hbar) * j * sx] * sites)
    D = np.stack([np.sqrt(hbar) * d * lower] * sites)
    return DeviceSpec(H, J, rho, D)


def oscillator_device(omega, cutoff, n_th=0.0, alpha=0.0, hbar=1.0, j=1.0):
    """Harmonic device, current ``j*x`` with ``x = sqrt(hbar/2w)(b + b^dag)``.

    Initial state is a displaced thermal state (mean occupation ``n_th``,
    coherent amplitude ``alpha``) truncated at ``cutoff`` quanta.
    """
    n = cutoff + 1
    b = _destroy(n)
    H = hbar * omega * dag(b) @ b
    x = np.sqrt(hbar / (2 * omega)) * (b + dag(b))
    if n_th > 0:
        p = (n_th / (1 + n_th)) ** np.arange(n)
        rho = np.diag(p / p.sum()).astype(complex)
    else:
        rho = np.zeros((n, n), complex)
        rho[0, 0] = 1.0
    if alpha:
        Dop = sla.expm(alpha * dag(b) - np.conj(alpha) * b)
        rho = Dop @ rho @ dag(Dop)
        rho = rho / np.trace(rho)
    rho = 0.5 * (rho + dag(rho))
    return DeviceSpec(H, (j * x)[None], rho, None,
                      extras={"b": b, "x": x}, linear=True)


def composite_dipole_device(omega, coupling_j=0.0, cutoff=1, state=None, hbar=1.0):
    """Atom written with bosonic factor modes psi_g, psi_e (cutoff quanta each).

    The dipole is the composite ``D = psi_g^dag psi_e``; the factor operators
    are exposed as extras 'psi_g' and 'psi_e'.  Default state: one atom in
    an equal superposition of g and e.
    """
    n = cutoff + 1
    a = _destroy(n)
    I = np.eye(n)
    pg, pe = np.kron(a, I), np.kron(I, a)
    H = hbar * omega * dag(pe) @ pe
    Dop = np.sqrt(hbar) * dag(pg) @ pe
    J = coupling_j * (Dop + dag(Dop))
    if state is None:
        psi = np.zeros(n * n, complex)
        psi[1 * n + 0] = 1 / np.sqrt(2)  # |n_g=1, n_e=0>
        psi[0 * n + 1] = 1 / np.sqrt(2)  # |n_g=0, n_e=1>
    else:
        psi = np.asarray(state, complex)
        psi = psi / np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    return DeviceSpec(H, J[None], rho, Dop[None], extras={"psi_g": pg, "psi_e": pe})
