"""Time-normal averages: narrow-band, broad-band (contraction form) and GKK.

Broad band.  Each external time t_l is attached to an internal time s_l on
either branch of the closed loop and weighted by delta^(-)(t_l - s_l) on the
- branch or delta^(+)(t_l - s_l) on the + branch; the closed-loop ordered
function of the internal times is summed over the grid.

GKK.  The operators themselves are split first (J^(-) on the - branch, J^(+)
on the + branch) and the closed-loop ordering is done on the external
times.  This is only legitimate under the rotating-wave approximation.

Both use the unbounded-lattice kernels of :func:`signals.freq_kernel`
(the history is taken as zero before the window, so nothing wraps around).

``past="free"`` instead continues every operator into the past with the
uncoupled, source-free dynamics (the coupling switches on at t0) and adds
the pre-window part of the contraction in closed form.  A free operator is
a sum of Bohr components e^{i Omega (s - t0)}; the lattice tail of each is

    sum_{odd m > k} z^m / (i pi m) = (artanh z - partial sum) / (i pi),  z = e^{-i Omega dt},

and the fully free pre-window quadrant is recovered from the infinite-lattice
value Tr rho [X^- Y^+ + Y X^+ + Y^- X^-] of the free problem.  This removes
the slowly decaying edge term of the plain window.  On the
grid the broad-band form is exactly causal: if s_l is the latest internal
time, moving its operator between branches leaves the ordered product
unchanged, and delta^(+) + delta^(-) = identity collapses the sum.
"""
import csv
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .hilbert import dag
from .signals import CONTRACTION_WINDOW, freq_kernel, odd_harmonic_tail

__all__ = [
    "MomentTensor", "split_matrices", "wightman", "tn_narrow", "tn_broad",
    "tn_gkk", "tn_broad_matrix", "tn_gkk_matrix", "causality_probe",
    "ordering_family_contrast", "write_moments_csv", "MAX_ORDER", "PASTS",
    "past_tail", "contract_pair", "comm_table",
]

MAX_ORDER = 3
PASTS = ("window", "free")


@dataclass
class MomentTensor:
    definition: str
    order: int
    entries: list = field(default_factory=list)  # (times, ops, value)

    def add(self, times, ops, value):
        self.entries.append((tuple(float(t) for t in times), tuple(map(str, ops)), complex(value)))


def write_moments_csv(path, tensors):
    m_max = max((t.order for t in tensors), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["definition", "m"] + [f"t{i + 1}" for i in range(m_max)] + ["re", "im"])
        for mt in tensors:
            for times, _, v in mt.entries:
                pad = [""] * (m_max - len(times))
                w.writerow([mt.definition, mt.order, *map(repr, times), *pad,
                            repr(v.real), repr(v.imag)])


@lru_cache(maxsize=16)
def split_matrices(grid, window=CONTRACTION_WINDOW):
    """(Kp, Km) with (Kp @ f)[j] = f^(+)(t_j), i.e. delta^(+)(t_j - s) dt."""
    Kp = freq_kernel(grid, +1, window=window).matrix() * grid.dt
    Km = freq_kernel(grid, -1, window=window).matrix() * grid.dt
    Kp.setflags(write=False)
    Km.setflags(write=False)
    return Kp, Km


def _ops_list(op, m):
    """A list gives one operator per slot; anything else is used for every slot."""
    if isinstance(op, list):
        if len(op) != m:
            raise ValidationError("operator list length must equal the moment order")
        return op
    return [op] * m


def wightman(model, X, Y):
    """W[s1, s2] = Tr[rho X_H(s1) Y_H(s2)] over the whole grid."""
    return _wightman_series(model.rho, model.heisenberg(X), model.heisenberg(Y))


def _wightman3(model, ops, perm):
    """W[s_0, s_1, s_2] = Tr[rho O_{p0}(s_{p0}) O_{p1}(s_{p1}) O_{p2}(s_{p2})] in slot order."""
    H = [model.heisenberg(o) for o in ops]
    a, b, c = perm
    Ha = model.rho[None] @ H[a]
    T = np.einsum("iab,jbc,kca->ijk", Ha, H[b], H[c], optimize=True)
    # axes are (s_a, s_b, s_c); reorder to slot order
    return np.moveaxis(T, [0, 1, 2], [a, b, c])


def _left_of(bi, bj, si, sj, i, j):
    """Boolean: slot i stands left of slot j in the closed-loop product."""
    if bi == "-" and bj == "+":
        return np.ones(np.broadcast(si, sj).shape, bool)
    if bi == "+" and bj == "-":
        return np.zeros(np.broadcast(si, sj).shape, bool)
    tie = i < j
    if bi == "-":
        return (si < sj) | ((si == sj) & tie)
    return (si > sj) | ((si == sj) & tie)


def _check_order(m):
    if m < 1 or m > MAX_ORDER:
        raise ValidationError(f"moment order {m} outside 1..{MAX_ORDER}")


def _check_past(past, m=2, model=None):
    if past not in PASTS:
        raise ValidationError(f"past must be one of {PASTS}")
    if past == "free" and m > 2:
        raise ValidationError("the free-past extension is implemented for m <= 2")
    if past == "free" and model is not None and model.drives:
        raise ValidationError("the free-past extension assumes a static device Hamiltonian")


def tn_broad(model, times, op="J", past="window"):
    """Broad-band time-normal average <T: O(t_1) ... O(t_m) :>."""
    times = list(times)
    m = len(times)
    _check_order(m)
    _check_past(past, m, model)
    ops = _ops_list(op, m)
    g = model.grid
    idx = [g.index(t) for t in times]
    Kp, Km = split_matrices(g)
    if m == 1:
        ex = model.expect_series(ops[0])
        return complex((Kp[idx[0]] + Km[idx[0]]) @ ex)
    if m == 2:
        R = _broad2(model, ops[0], ops[1], rows=(idx[0], idx[1]), past=past)
        return complex(R)
    return complex(_broad3(model, ops, idx))


def _branch_tensors2(rho, XH, YH):
    W12 = _wightman_series(rho, XH, YH)
    W21 = _wightman_series(rho, YH, XH).T  # Tr[rho Y(s2) X(s1)] indexed [s1, s2]
    n = W12.shape[0]
    up = np.arange(n)[:, None] >= np.arange(n)[None, :]   # s1 >= s2
    lo = np.arange(n)[:, None] <= np.arange(n)[None, :]   # s1 <= s2
    Fpp = np.where(up, W12, W21)
    Fmm = np.where(lo, W12, W21)
    return W12, W21, Fpp, Fmm


def _contract2(Kp, Km, rho, XH, YH, rows=None):
    if rows is not None:
        i, j = rows
        return contract_pair(rho, XH, YH, (Kp[i], Km[i]), (Kp[j], Km[j]))
    return contract_pair(rho, XH, YH, (Kp, Km), (Kp, Km))


def contract_pair(rho, XH, YH, K1, K2):
    """Closed-loop contraction of two operator series with per-slot branch weights.

    ``K1 = (P, M)`` weights slot 1 on the + and - branch, rows indexed by the
    external time (1-d for a single row); likewise ``K2``.
    """
    W12, W21, Fpp, Fmm = _branch_tensors2(rho, XH, YH)
    (P1, M1), (P2, M2) = K1, K2
    return (M1 @ W12 @ P2.T + P1 @ W21 @ M2.T
            + P1 @ Fpp @ P2.T + M1 @ Fmm @ M2.T)


def _broad2(model, X, Y, rows=None, past="window"):
    Kp, Km = split_matrices(model.grid)
    XH, YH = model.heisenberg(X), model.heisenberg(Y)
    R = _contract2(Kp, Km, model.rho, XH, YH, rows)
    if past == "window":
        return R
    XF, YF = model.free_heisenberg(X), model.free_heisenberg(Y)
    R = R - _contract2(Kp, Km, model.rho, XF, YF, rows)
    i, j = (slice(None), slice(None)) if rows is None else rows
    Xt, Yt = past_tail(model, X)[i], past_tail(model, Y)[j]
    dX, dY = (XH - XF)[i], (YH - YF)[j]
    return R + comm_table(model.rho, dY, Xt).T + comm_table(model.rho, dX, Yt) \
        + _free_value(model, X, Y, rows)


def _wightman_series(rho, XH, YH):
    """W[a, b] = Tr[rho X[a] Y[b]] for stacks (or single matrices) X and Y."""
    XH, YH = np.asarray(XH), np.asarray(YH)
    single = XH.ndim == 2 and YH.ndim == 2
    XH = XH if XH.ndim == 3 else XH[None]
    YH = YH if YH.ndim == 3 else YH[None]
    RX = rho[None] @ XH
    n = RX.shape[0]
    W = RX.reshape(n, -1) @ np.swapaxes(YH, 1, 2).reshape(YH.shape[0], -1).T
    return W[0, 0] if single else W


def comm_table(rho, P, Q):
    """C[a, b] = Tr[rho (P[a] Q[b] - Q[b] P[a])]."""
    return _wightman_series(rho, P, Q) - _wightman_series(rho, Q, P).T


def past_tail(model, op):
    """(n, D, D) pre-window tail sum_{s < t0} delta^(+)(t_k - s) dt O_free(s).

    The delta^(-) tail is its negative.  Raises when a component has zero
    Bohr frequency (the tail diverges logarithmically) or aliases.
    """
    g = model.grid
    Oe, Om = model.bohr(op)
    big = np.abs(Oe) > 1e-12 * max(np.abs(Oe).max(), 1e-300)
    w_abs = np.abs(Om[big]) * g.dt
    if np.any(w_abs < 1e-9):
        raise ValidationError("operator has a static Bohr component; free past diverges")
    if np.any(w_abs >= np.pi):
        raise ValidationError("Bohr frequency beyond the grid Nyquist limit")
    w, inv = np.unique(Om[big], return_inverse=True)
    k = np.arange(g.n)
    tail = (np.exp(1j * w[:, None] * k * g.dt)
            * odd_harmonic_tail(np.exp(-1j * w * g.dt), g.n) / (1j * np.pi))
    coef = np.zeros((g.n,) + Oe.shape, complex)
    coef[:, big] = (Oe[big][:, None] * tail[inv]).T
    E, V = model.free_eig
    return V[None] @ coef @ dag(V)[None]


def _free_split(model, op, sign):
    """Frequency part of the free Heisenberg series (exact masks, half weight at 0)."""
    E, V = model.free_eig
    Oe, Om = model.bohr(op)
    mask = np.where(sign * Om < 0, 1.0, np.where(Om == 0, 0.5, 0.0))
    t = model.grid.times - model.grid.t0
    return V[None] @ ((Oe * mask)[None] * np.exp(1j * Om[None] * t[:, None, None])) @ dag(V)[None]


def _free_value(model, X, Y, rows=None):
    """Infinite-lattice broad-band value for the free problem."""
    i, j = (slice(None), slice(None)) if rows is None else rows
    rho = model.rho
    Xp, Xm = _free_split(model, X, +1)[i], _free_split(model, X, -1)[i]
    Yp, Ym = _free_split(model, Y, +1)[j], _free_split(model, Y, -1)[j]
    Yf = model.free_heisenberg(Y)[j]
    return (_wightman_series(rho, Xm, Yp) + _wightman_series(rho, Yf, Xp).T
            + _wightman_series(rho, Ym, Xm).T)


def tn_broad_matrix(model, X="J", Y=None, past="window"):
    """Full (n, n) table of <T: X(t_i) Y(t_j) :>."""
    _check_past(past, 2, model)
    return _broad2(model, X, X if Y is None else Y, past=past)


def _broad3(model, ops, idx):
    Kp, Km = split_matrices(model.grid)
    n = model.grid.n
    s = [np.arange(n).reshape([-1 if a == b else 1 for b in range(3)]) for a in range(3)]
    perms = list(itertools.permutations(range(3)))
    W = {p: _wightman3(model, ops, p) for p in perms}
    total = 0.0
    for br in itertools.product("+-", repeat=3):
        vecs = [(Kp if b == "+" else Km)[idx[l]] for l, b in enumerate(br)]
        F = np.zeros((n, n, n), complex)
        for p in perms:
            mask = np.ones((n, n, n), bool)
            for u in range(3):
                for v in range(u + 1, 3):
                    i, j = p[u], p[v]
                    mask &= _left_of(br[i], br[j], s[i], s[j], i, j)
            F += np.where(mask, W[p], 0.0)
        total += np.einsum("ijk,i,j,k->", F, *vecs, optimize=True)
    return total


def tn_gkk(model, times, op="J"):
    """GKK time-normal average (RWA only)."""
    times = list(times)
    m = len(times)
    _check_order(m)
    ops = _ops_list(op, m)
    g = model.grid
    idx = [g.index(t) for t in times]
    Kp, Km = split_matrices(g)
    if m == 1:
        ex = model.expect_series(ops[0])
        return complex((Kp[idx[0]] + Km[idx[0]]) @ ex)
    W = {}
    perms = list(itertools.permutations(range(m)))
    for p in perms:
        if m == 2:
            W[p] = wightman(model, ops[p[0]], ops[p[1]])
            if p == (1, 0):
                W[p] = W[p].T
        else:
            W[p] = _wightman3(model, ops, p)
    total = 0.0
    for br in itertools.product("+-", repeat=m):
        vecs = [(Kp if b == "+" else Km)[idx[l]] for l, b in enumerate(br)]
        # ordering decided by the external times
        order = sorted(range(m), key=lambda l: _ext_key(br[l], times[l], l))
        p = tuple(order)
        sub = "ijk"[:m]
        total += np.einsum(f"{sub}," + ",".join(sub) + "->", W[p], *vecs, optimize=True)
    return complex(total)


def _ext_key(branch, t, l):
    # - branch first (increasing time), then + branch (decreasing time); ties by slot
    return (0, t, l) if branch == "-" else (1, -t, l)


def tn_gkk_matrix(model, X="J", Y=None):
    """Full (n, n) table of GKK <T: X(t_i) Y(t_j) :>."""
    Y = X if Y is None else Y
    Kp, Km = split_matrices(model.grid)
    W12 = wightman(model, X, Y)
    W21 = wightman(model, Y, X).T
    n = W12.shape[0]
    up = np.arange(n)[:, None] >= np.arange(n)[None, :]
    lo = np.arange(n)[:, None] <= np.arange(n)[None, :]
    pp = np.where(up, Kp @ W12 @ Kp.T, Kp @ W21 @ Kp.T)
    mm = np.where(lo, Km @ W12 @ Km.T, Km @ W21 @ Km.T)
    return Km @ W12 @ Kp.T + Kp @ W21 @ Km.T + pp + mm


def tn_narrow(model, dag_times, nodag_times, family=("D", "Ddag")):
    """<T_- O^dag(t_1)...O^dag(t_m) T_+ O(t'_1)...O(t'_n)> by explicit sorting.

    ``family`` is the pair (O, O^dag) of operator ids; the ordering never
    looks inside composite operators.
    """
    O, Od = family
    g = model.grid
    left = sorted(((g.index(t), i) for i, t in enumerate(dag_times)))
    right = sorted(((g.index(t), i) for i, t in enumerate(nodag_times)), key=lambda p: (-p[0], p[1]))
    U = model.forward
    Om, Odm = model.operator(O), model.operator(Od)
    M = np.eye(model.dim, dtype=complex)
    for k, _ in left:
        M = M @ dag(U[k]) @ Odm @ U[k]
    for k, _ in right:
        M = M @ dag(U[k]) @ Om @ U[k]
    return complex(np.trace(model.rho @ M))


def _product(model, factors):
    U = model.forward
    g = model.grid
    M = np.eye(model.dim, dtype=complex)
    for op, t in factors:
        k = g.index(t)
        M = M @ dag(U[k]) @ model.operator(op) @ U[k]
    return complex(np.trace(model.rho @ M))


def ordering_family_contrast(model, t, t2):
    """Compare the two orderings of psi_g^dag(t) psi_e(t) psi_g^dag(t') psi_e(t').

    D family: the composite is the ordered unit, so the string is left as is.
    psi family: factors are ordered individually, daggered ones anti-time-
    ordered on the left and the others time-ordered on the right.
    """
    pg_d = dag(model.operator("psi_g"))
    pe = model.operator("psi_e")
    value_D = _product(model, [(pg_d, t), (pe, t), (pg_d, t2), (pe, t2)])
    dag_part = sorted([(t, 0), (t2, 1)])
    nodag_part = sorted([(t, 0), (t2, 1)], key=lambda p: (-p[0], p[1]))
    value_psi = _product(model, [(pg_d, s) for s, _ in dag_part] + [(pe, s) for s, _ in nodag_part])
    return value_D, value_psi


def causality_probe(model, times, op="J", t_p=None, amplitude=1.0, source="J_e", site=0,
                    allow_past=False):
    """Change of the broad-band and GKK moments under a source bump at ``t_p``.

    The bump adds ``amplitude`` to one sample of the source.  Because step
    sources are endpoint averages, the bump acts on [t_p - dt, t_p + dt],
    so any t_p strictly after all the times leaves them in its past.
    ``allow_past=True`` lifts that restriction for sanity runs.
    """
    g = model.grid
    if t_p is None:
        raise ValidationError("bump time t_p is required")
    kp = g.index(t_p)
    ks = [g.index(t) for t in times]
    if amplitude == 0:
        return 0.0, 0.0
    if kp <= max(ks) and not allow_past:
        raise ValidationError("bump must lie strictly after every moment time")
    vals = getattr(model.sources, source).values.copy()
    vals[site, kp] += amplitude
    bumped = model.with_sources(model.sources.replace(**{source: vals}))
    d_broad = abs(tn_broad(bumped, times, op) - tn_broad(model, times, op))
    d_gkk = abs(tn_gkk(bumped, times, op) - tn_gkk(model, times, op))
    return d_broad, d_gkk
