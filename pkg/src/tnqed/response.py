"""Kubo response kernels and numerical checks of the radiated-field identities.

Kernels are closed-form mode sums on the grid lags, with theta(0) = 1/2:

    Delta_R(x, x', tau) = theta(tau) sum_k (1/w_k) Im[u_k^*(x) u_k(x') e^{i w_k tau}]
    G_R(x, x', tau)     = theta(tau) sum_k (i w_k / 2) u_k(x) u_k^*(x') e^{-i (w_k - w_0) tau}

Convolutions over [t0, t] use ``rule='trapezoid'``: the lag-0 half weight and
the halved first sample together give the trapezoid rule.  So the
quadrature error is O(dt^2), matching the propagator.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .hilbert import TestFunctionSet, tc_generating
from .signals import Signal, TwoTimeKernel, kernel_apply, odd_harmonic_tail
from .timenormal import (comm_table, contract_pair, past_tail, split_matrices,
                         tn_broad_matrix, wightman)

__all__ = [
    "kubo_delta_r", "kubo_g_r", "model_kernels", "external_fields",
    "kernel_matrix", "radiated_weights", "free_field_leakage", "Report", "radiated_identity_check",
    "refinement_study", "consistency_probe", "write_report_csv",
]


def _theta(lags):
    th = (lags > 0).astype(float)
    th[lags == 0] = 0.5
    return th


def kubo_delta_r(modes, grid, sites=None):
    modes = list(modes)
    if any(m.band != "nonresonant" for m in modes):
        raise ValidationError("Delta_R takes nonresonant modes only")
    S = sites if sites is not None else (len(modes[0].mode_vector) if modes else 1)
    tau = grid.lags * grid.dt
    th = _theta(grid.lags)
    vals = np.zeros((S, S, 2 * grid.n - 1))
    for m in modes:
        u = m.u
        if len(u) != S:
            raise ValidationError("mode_vector length does not match the site count")
        uu = np.conj(u)[:, None, None] * u[None, :, None]
        vals += np.imag(uu * np.exp(1j * m.frequency * tau)) / m.frequency
    return TwoTimeKernel(grid, vals * th, retarded=True, band="nonresonant")


def kubo_g_r(modes, grid, sites=None):
    modes = list(modes)
    if any(m.band != "resonant" for m in modes):
        raise ValidationError("G_R takes resonant modes only")
    S = sites if sites is not None else (len(modes[0].mode_vector) if modes else 1)
    tau = grid.lags * grid.dt
    th = _theta(grid.lags)
    vals = np.zeros((S, S, 2 * grid.n - 1), complex)
    for m in modes:
        u = m.u
        if len(u) != S:
            raise ValidationError("mode_vector length does not match the site count")
        uu = u[:, None, None] * np.conj(u)[None, :, None]
        vals += 0.5j * m.frequency * uu * np.exp(-1j * (m.frequency - m.carrier) * tau)
    return TwoTimeKernel(grid, vals * th, retarded=True, band="resonant")


def model_kernels(model):
    """(Delta_R, G_R) for the modes of a built model."""
    modes = model.spec.modes
    dR = kubo_delta_r([m for m in modes if m.band == "nonresonant"], model.grid, model.sites)
    gR = kubo_g_r([m for m in modes if m.band == "resonant"], model.grid, model.sites)
    return dR, gR


def external_fields(sources, dR, gR, rule="left"):
    """A_ext = A_e + Delta_R J_e,  E_ext = E_e + G_R D_e."""
    A = sources.A_e + kernel_apply(dR, sources.J_e, "left", rule)
    E = sources.E_e + kernel_apply(gR, sources.D_e, "left", rule)
    return A.with_values(A.values.real, real=True), E


def kernel_matrix(K, x=0, y=0, rule="trapezoid"):
    """Dense quadrature matrix M[j, k] = K(t_j - t_k) w_k."""
    M = K.matrix(x, y) * K.grid.dt
    if rule == "trapezoid":
        M[:, 0] *= 0.5
    return M


def radiated_weights(model, x=0, y=None, past="free"):
    """Branch weights (L_plus, L_minus) of the radiated field Delta_R J.

    A test function eta on the field acts on the current through
    (Delta_R^T eta)(s'), and it is this function, over every s' including the
    time before the coupling starts, whose frequency parts weight J(s) on
    the two branches.  L[t, s] is that weight for eta concentrated at t,
    times the trapezoid weight of s.  L_plus + L_minus = kernel_matrix(Delta_R).
    With ``past="window"`` the s' < t0 part is dropped.
    """
    y = x if y is None else y
    g = model.grid
    dR, _ = model_kernels(model)
    D0 = dR.matrix(x, y)
    Kp, Km = split_matrices(g)
    Lp = D0 @ Kp
    if past == "free":
        # s' = t0 - m dt, m >= 1, against delta^(+)(s' - s_j): lag -(m + j)
        k = np.arange(g.n)
        tail = np.zeros((g.n, g.n), complex)
        for mode in model.spec.modes:
            if mode.band != "nonresonant":
                continue
            w, c = mode.frequency, np.conj(mode.u[x]) * mode.u[y]
            for amp, sgn in ((c, 1), (-np.conj(c), -1)):
                S = np.exp(-1j * sgn * w * k * g.dt) * odd_harmonic_tail(np.exp(1j * sgn * w * g.dt), g.n)[0]
                tail += amp / (2j * w) * np.exp(1j * sgn * w * k * g.dt)[:, None] * S[None, :]
        Lp = Lp - tail / (1j * np.pi)
    Lm = D0 - Lp
    wts = np.full(g.n, g.dt)
    wts[0] *= 0.5
    return Lp * wts, Lm * wts


def free_field_leakage(modes, grid, hbar=1.0, site=0):
    """Broad-band <T: A A :> of the free vacuum field from its closed form.

    Independent of any Hilbert-space propagation.  In the continuum this is
    identically zero; on a finite periodic grid the residual measures the
    window leakage of delta^(+-).  Returns the (n, n) table.
    """
    n = grid.n
    s = grid.times
    tau = s[:, None] - s[None, :]
    g12 = np.zeros((n, n), complex)
    for m in modes:
        if m.band != "nonresonant":
            continue
        u = m.u[site]
        g12 += hbar / (2 * m.frequency) * abs(u) ** 2 * np.exp(-1j * m.frequency * tau)
    g21 = g12.T
    up = tau >= 0
    lo = tau <= 0
    Kp, Km = split_matrices(grid)
    Fpp = np.where(up, g12, g21)
    Fmm = np.where(lo, g12, g21)
    return Km @ g12 @ Kp.T + Kp @ g21 @ Km.T + Kp @ Fpp @ Kp.T + Km @ Fmm @ Km.T


@dataclass
class Report:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, check, moment, lhs, rhs, dt):
        lhs, rhs = complex(lhs), complex(rhs)
        self.rows.append(dict(check=check, moment=moment, lhs=lhs, rhs=rhs,
                              abs_diff=abs(lhs - rhs), dt=dt))

    def max_diff(self, check=None):
        d = [r["abs_diff"] for r in self.rows if check is None or r["check"] == check]
        return max(d, default=0.0)


def write_report_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "moment", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "abs_diff", "dt"])
        for r in report.rows:
            w.writerow([r["check"], r["moment"], repr(r["lhs"].real), repr(r["lhs"].imag),
                        repr(r["rhs"].real), repr(r["rhs"].imag), repr(r["abs_diff"]),
                        repr(r["dt"])])


def radiated_identity_check(model, times, orders=(1, 2), band="broad", site=0, scale=1.0,
                            past="free"):
    """LHS field moments vs the same moments built from the radiated field.

    broad:  <T: A :> vs Delta_R (<J> + J_e);  <T: A A :> vs Delta_R Delta_R <T:(J+J_e)(J+J_e):>
            and the mixed <T: A J :>.
    narrow: <E> vs G_R (<D> + D_e);  <E^dag E> vs G_R^* G_R <(D+D_e)^dag (D+D_e)>.

    Also records the unordered Hilbert-space two-point function against the
    radiated-only formula; these differ by the free contraction.  ``scale``
    divides every value (used for hbar-scaled comparisons).  ``past`` picks
    the broad-band contraction (see :mod:`tnqed.timenormal`).
    """
    g = model.grid
    idx = [g.index(t) for t in times]
    dR, gR = model_kernels(model)
    rep = Report(meta=dict(band=band, dt=g.dt))
    x = site
    if band in ("broad", "both"):
        Dm = kernel_matrix(dR, x, x)
        Je = model.sources.J_e.values[x].real
        j1 = model.expect_series(("J", x))
        a1 = model.expect_series(("A", x))
        src = j1 + Je
        rhs1 = Dm @ src
        if 1 in orders:
            for k in idx:
                rep.add("broad", f"A(t={g.times[k]:.6g})", a1[k] / scale, rhs1[k] / scale, g.dt)
        if 2 in orders:
            Jop = ("J", x)
            JH = model.heisenberg(Jop)
            Kp, Km = split_matrices(g)
            Lw = radiated_weights(model, x, past=past)
            AA = tn_broad_matrix(model, ("A", x), past=past)
            AJ = tn_broad_matrix(model, ("A", x), Jop, past=past)
            # Delta_R J_e is a c-number; only J itself carries branch weights
            de, dj = Dm @ Je, Dm @ j1
            rhsAA = (contract_pair(model.rho, JH, JH, Lw, Lw)
                     + np.outer(de, dj) + np.outer(dj, de) + np.outer(de, de))
            rhsAJ = contract_pair(model.rho, JH, JH, Lw, (Kp, Km)) + np.outer(de, j1)
            if past == "free":
                # J at the observed slot still has a free history before t0
                rhsAJ = rhsAJ + Dm @ comm_table(model.rho, JH, past_tail(model, Jop))
            s2 = scale ** 2
            for a in idx:
                for b in idx:
                    if b > a:
                        continue
                    ta, tb = g.times[a], g.times[b]
                    rep.add("broad", f"AA(t={ta:.6g},{tb:.6g})", AA[a, b] / s2, rhsAA[a, b] / s2, g.dt)
                    rep.add("broad", f"AJ(t={ta:.6g},{tb:.6g})", AJ[a, b] / s2, rhsAJ[a, b] / s2, g.dt)
            # the contrast: plain Hilbert-space products keep the in-field
            W = wightman(model, ("A", x), ("A", x))
            Wj = wightman(model, ("J", x), ("J", x))
            Mw = Wj + np.outer(Je, j1) + np.outer(j1, Je) + np.outer(Je, Je)
            rhsW = Dm @ Mw @ Dm.T
            for a in idx[:1]:
                for b in idx[-1:]:
                    rep.add("contrast", f"AA_plain(t={g.times[a]:.6g},{g.times[b]:.6g})",
                            W[a, b] / s2, rhsW[a, b] / s2, g.dt)
    if band in ("narrow", "both"):
        Gm = kernel_matrix(gR, x, x)
        De = model.sources.D_e.values[x]
        d1 = model.expect_series(("D", x))
        e1 = model.expect_series(("E", x))
        src = d1 + De
        rhs1 = Gm @ src
        if 1 in orders:
            for k in idx:
                rep.add("narrow", f"E(t={g.times[k]:.6g})", e1[k] / scale, rhs1[k] / scale, g.dt)
        if 2 in orders:
            We = wightman(model, ("Edag", x), ("E", x))
            Wd = wightman(model, ("Ddag", x), ("D", x))
            dd = np.conj(d1)
            M = Wd + np.outer(np.conj(De), d1) + np.outer(dd, De) + np.outer(np.conj(De), De)
            rhs = np.conj(Gm) @ M @ Gm.T
            s2 = scale ** 2
            for a in idx:
                for b in idx:
                    if b > a:
                        continue
                    rep.add("narrow", f"EdagE(t={g.times[a]:.6g},{g.times[b]:.6g})",
                            We[a, b] / s2, rhs[a, b] / s2, g.dt)
    return rep


def refinement_study(make_model, dts, times, orders=(1, 2), band="broad", scale=1.0,
                     past="free"):
    """Run the identity check on successively refined grids.

    ``make_model(dt)`` must return a model whose sources are sampled from
    the same continuous-time functions.  Returns (reports, ratios) where
    ratios[i] = residual(dts[i]) / residual(dts[i+1]).
    """
    reps = [radiated_identity_check(make_model(dt), times, orders, band, scale=scale, past=past)
            for dt in dts]
    res = [r.max_diff(band) if band != "both" else max(r.max_diff("broad"), r.max_diff("narrow"))
           for r in reps]
    ratios = [res[i] / res[i + 1] if res[i + 1] > 0 else np.inf for i in range(len(res) - 1)]
    return reps, res, ratios


def _fd_moments(model, op_key, times, eps=1e-4, order=2, scale=1.0):
    """First and second moments from central differences of the generating value.

    ``op_key`` picks the test function slot: 'zeta' (J, broad), 'eta' (A,
    broad), 'nu' (D, narrow; derivative in the real direction gives <D>).
    """
    g, S = model.grid, model.sites
    w = np.full(g.n, g.dt)
    w[0] = w[-1] = 0.5 * g.dt   # weights carried by the step-averaged pairing

    def unit(k, amp):
        v = np.zeros((S, g.n))
        v[0, k] = amp / w[k]
        return Signal(g, v, real=(op_key != "nu"))

    def phi(vals):
        kw = {op_key: Signal(g, vals, real=not np.iscomplexobj(vals) or not np.any(vals.imag))}
        return tc_generating(model, TestFunctionSet(**kw))

    out = {}
    idx = [g.index(t) for t in times]
    for k in idx:
        e = unit(k, eps).values
        d1 = (phi(e) - phi(-e)) / (2j * eps)
        if op_key == "nu":
            # real nu probes <D> - <D^dag>, imaginary nu probes <D> + <D^dag>
            d2 = (phi(1j * e) - phi(-1j * e)) / (2 * eps)
            out[(k,)] = 0.5 * (d1 + d2)
        else:
            out[(k,)] = d1
    if order >= 2 and op_key != "nu":
        for a in idx:
            for b in idx:
                if b > a:
                    continue
                ea, eb = unit(a, eps).values, unit(b, eps).values
                f = (phi(ea + eb) - phi(ea - eb) - phi(-ea + eb) + phi(-ea - eb)) / (4 * eps ** 2)
                out[(a, b)] = -f
    return {k: v / scale ** len(k) for k, v in out.items()}


def consistency_probe(model, shift, times, eps=1e-4, order=2, primed_model=None, scale=1.0):
    """Routing checks for the auxiliary sources.

    (a) moments from the generating value with (a_e = s, A_e = A_e) vs
        (a_e = 0, A_e = A_e + s): only the sum should matter.
    (b) device-only generating value with a_e = s (substitution route) vs the
        broad-band time-normal moments of the device evolved under A_e = s
        (primed-operator route).  Needs ``primed_model``: the device alone.
    """
    g = model.grid
    rep = Report(meta=dict(dt=g.dt))
    shift = shift if isinstance(shift, Signal) else Signal(g, np.asarray(shift), real=True)
    src = model.sources
    ma = model.with_sources(src.replace(a_e=src.a_e + shift))
    mb = model.with_sources(src.replace(A_e=src.A_e + shift))
    fa = _fd_moments(ma, "zeta", times, eps, order, scale)
    fb = _fd_moments(mb, "zeta", times, eps, order, scale)
    for key in fa:
        rep.add("a_e_vs_A_e", "J" * len(key) + str(tuple(round(float(g.times[k]), 6) for k in key)),
                fa[key], fb[key], g.dt)
    if primed_model is not None:
        psrc = primed_model.sources
        pa = primed_model.with_sources(psrc.replace(a_e=psrc.a_e + shift))
        pb = primed_model.with_sources(psrc.replace(A_e=psrc.A_e + shift))
        fs = _fd_moments(pa, "zeta", times, eps, order, scale)
        Jb = pb.expect_series("J")
        JJ = tn_broad_matrix(pb, "J") if order >= 2 else None
        for key, v in fs.items():
            ref = Jb[key[0]] if len(key) == 1 else JJ[key[0], key[1]]
            rep.add("substitution_vs_primed", "J" * len(key) + str(tuple(round(float(g.times[k]), 6) for k in key)),
                    v, ref / scale ** len(key), g.dt)
        if np.any(primed_model.D):
            dsub = _fd_moments(primed_model.with_sources(psrc.replace(e_e=psrc.e_e + shift)),
                               "nu", times, eps, 1, scale)
            Dref = primed_model.with_sources(psrc.replace(E_e=psrc.E_e + shift)).expect_series("D")
            for key, v in dsub.items():
                rep.add("substitution_vs_primed", f"D({g.times[key[0]]:.6g})", v,
                        Dref[key[0]] / scale, g.dt)
    return rep
