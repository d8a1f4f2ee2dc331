"""Classical Monte Carlo twin of the scattering picture.

A classical device draws current paths J given the external field A_ext;
the detected field is A_tot = A_ext + Delta_R J per draw.  For a harmonic
device with bilinear coupling the time-normal moments of the quantum model
coincide with these stochastic averages under Â + A_e <-> A_tot, Ĵ <-> J.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .response import external_fields, kernel_matrix, model_kernels
from .timenormal import tn_broad_matrix

__all__ = [
    "ClassicalDevice", "Ensemble", "deterministic_device", "gaussian_device",
    "oscillator_twin", "classical_twin", "simulate_scattering",
    "conditional_char_estimate", "jackknife", "quantum_classical_compare",
    "write_ensemble_csv",
]


@dataclass
class ClassicalDevice:
    """``sampler(A_ext, n_samples, rng)`` returns (n_samples, n) current paths."""
    sampler: object
    descriptor: dict = field(default_factory=dict)

    def sample(self, A_ext, n_samples, seed):
        rng = np.random.default_rng(seed)
        J = np.asarray(self.sampler(np.asarray(A_ext, float), n_samples, rng), float)
        if J.shape != (n_samples, np.size(A_ext)):
            raise ValidationError("sampler returned paths of the wrong shape")
        return J


@dataclass
class Ensemble:
    grid: object
    A_ext: np.ndarray
    J: np.ndarray
    A_tot: np.ndarray
    seed: int

    @property
    def n_samples(self):
        return self.J.shape[0]


def deterministic_device(J):
    J = np.asarray(J, float)
    return ClassicalDevice(lambda A, n, rng: np.broadcast_to(J, (n, J.size)).copy(),
                           {"kind": "deterministic", "mean": J, "cov": np.zeros((J.size, J.size))})


def gaussian_device(mean, cov, response=None):
    """J = mean + response @ A_ext + chol(cov) xi."""
    mean = np.asarray(mean, float)
    cov = np.asarray(cov, float)
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise ValidationError("covariance is not positive semidefinite")
    L = V * np.sqrt(np.clip(w, 0, None))
    Rm = None if response is None else np.asarray(response, float)

    def sampler(A, n, rng):
        m = mean if Rm is None else mean + Rm @ A
        return m + rng.standard_normal((n, mean.size)) @ L.T

    return ClassicalDevice(sampler, {"kind": "gaussian", "mean": mean, "cov": cov,
                                     "response": Rm})


def oscillator_twin(grid, omega, j, alpha=0.0, n_th=0.0, hbar=1.0, delta_r=None):
    """Classical oscillator b' = -i w b + i j A_loc / sqrt(2 hbar w), J = j sqrt(2 hbar/w) Re b.

    The initial amplitude is complex Gaussian around ``alpha`` with
    <|b - alpha|^2> = n_th (the P function of a displaced thermal state).
    ``delta_r`` is the (n, n) trapezoid matrix of the self-radiation kernel;
    since its lag-0 entry vanishes the local field at t_{k+1} only needs the
    currents up to t_k.  Each step integrates the forcing exactly for a
    field linear between samples.
    """
    n, h = grid.n, grid.dt
    D = np.zeros((n, n)) if delta_r is None else np.asarray(delta_r, float)
    if np.any(np.diag(D) != 0) or np.any(np.triu(D, 1) != 0):
        raise ValidationError("self-radiation matrix must be strictly lower triangular")
    kap = j / np.sqrt(2 * hbar * omega)
    cJ = j * np.sqrt(2 * hbar / omega)
    z = np.exp(-1j * omega * h)
    wh = omega * h
    # int_0^h exp(-i w (h - s)) (1 - s/h) ds  and  ... (s/h) ds
    c1 = (1 - (1 - z) / (1j * wh)) / (1j * omega) if wh else h / 2
    c0 = ((1 - z) / (1j * omega) - c1) if wh else h / 2

    def sampler(A, N, rng):
        b = np.full(N, complex(alpha))
        if n_th > 0:
            b = b + np.sqrt(n_th / 2) * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
        J = np.empty((N, n))
        J[:, 0] = cJ * b.real
        a_prev = np.full(N, A[0]) + 0.0
        for k in range(n - 1):
            a_next = A[k + 1] + J[:, :k + 1] @ D[k + 1, :k + 1]
            b = z * b + 1j * kap * (c0 * a_prev + c1 * a_next)
            J[:, k + 1] = cJ * b.real
            a_prev = a_next
        return J

    return ClassicalDevice(sampler, {"kind": "oscillator", "omega": omega, "j": j,
                                     "alpha": complex(alpha), "n_th": n_th, "hbar": hbar})


def classical_twin(model):
    """Classical twin of a linear quantum model (harmonic device, bilinear coupling)."""
    spec = model.spec
    dev = spec.device
    hb = spec.hbar
    if not dev.linear or dev.sites != 1 or spec.drives:
        raise ValidationError("no classical twin: the model is not a linear single-site device")
    if any(m.band != "nonresonant" for m in spec.modes):
        raise ValidationError("no classical twin: resonant modes are not supported")
    src = model.sources
    if any(np.any(getattr(src, k).values) for k in ("E_e", "D_e", "a_e", "j_e", "e_e", "d_e")):
        raise ValidationError("no classical twin: only A_e and J_e sources are allowed")
    H, J = dev.H_dev, dev.J_op[0]
    d = H.shape[0]
    if d < 2:
        raise ValidationError("no classical twin: device too small")
    omega = (H[1, 1] - H[0, 0]).real / hb
    b = np.diag(np.sqrt(np.arange(1, d)), 1)
    x = np.sqrt(hb / (2 * omega)) * (b + b.T)
    j = (J[0, 1] / x[0, 1]).real
    if (np.max(np.abs(H - hb * omega * b.T @ b)) > 1e-9 * hb * omega
            or np.max(np.abs(J - j * x)) > 1e-9 * max(1.0, abs(j))):
        raise ValidationError("no classical twin: device is not a harmonic oscillator with J = j x")
    rho = dev.rho_dev
    alpha = np.trace(rho @ b)
    n_th = max(np.trace(rho @ b.T @ b).real - abs(alpha) ** 2, 0.0)
    dR, _ = model_kernels(model)
    Dm = kernel_matrix(dR).real
    return oscillator_twin(model.grid, omega, j, alpha, n_th, hb, Dm)


def simulate_scattering(device, A_ext, delta_r, n_samples, seed, grid=None):
    """Draw J paths and return A_tot = A_ext + Delta_R J per draw.

    ``delta_r`` is a TwoTimeKernel or an (n, n) quadrature matrix.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    A = np.asarray(getattr(A_ext, "values", A_ext), float).reshape(-1)
    grid = grid if grid is not None else getattr(A_ext, "grid", None)
    M = kernel_matrix(delta_r).real if hasattr(delta_r, "matrix") else np.asarray(delta_r, float)
    if M.shape != (A.size, A.size):
        raise ValidationError("Delta_R matrix does not match the field length")
    J = device.sample(A, n_samples, seed)
    return Ensemble(grid, A, J, A[None, :] + J @ M.T, seed)


def jackknife(values, batch=100):
    """Mean and jackknife standard error over leave-one-batch-out means.

    With fewer than two full batches the batch size drops to 1.
    """
    v = np.asarray(values)
    if v.size == 0:
        raise ValidationError("empty sample")
    if v.size < 2 * batch:
        batch = 1
    nb = v.size // batch
    if nb < 2:
        return v.mean(), 0.0
    v = v[:nb * batch].reshape(nb, batch, *v.shape[1:])
    sums = v.sum(axis=1)
    tot = sums.sum(axis=0)
    theta = (tot[None] - sums) / ((nb - 1) * batch)
    mean = tot / (nb * batch)
    se = np.sqrt((nb - 1) / nb * np.sum(np.abs(theta - theta.mean(axis=0)) ** 2, axis=0))
    return mean, se


def _trap(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def conditional_char_estimate(ensemble, eta, zeta, batch=100):
    """Mean of exp(i pair(eta, A_tot) + i pair(zeta, J)) with jackknife stderr."""
    if ensemble.n_samples < 1:
        raise ValidationError("empty ensemble")
    n = ensemble.J.shape[1]
    h = ensemble.grid.dt if ensemble.grid is not None else 1.0
    w = _trap(n, h)
    e = np.asarray(getattr(eta, "values", eta), float).reshape(-1) * w
    z = np.asarray(getattr(zeta, "values", zeta), float).reshape(-1) * w
    ph = np.exp(1j * (ensemble.A_tot @ e + ensemble.J @ z))
    return jackknife(ph, batch)


def quantum_classical_compare(model, device=None, n_samples=20000, seed=0, times=None,
                              tol=1e-3, detect_external=True, batch=100):
    """Orders 1 and 2 of (Â + A_e, Ĵ) against (A_tot, J) from the classical twin.

    Quantum moments are broad-band time-normal with the free past.  A check
    passes when |quantum - classical| <= 3 stderr + tol.  With
    ``detect_external=False`` A_e is left out of both detected fields.
    """
    twin = classical_twin(model)
    device = twin if device is None else device
    g = model.grid
    times = [g.t_end] if times is None else list(times)
    idx = [g.index(t) for t in times]
    dR, gR = model_kernels(model)
    A_ext = external_fields(model.sources, dR, gR, rule="trapezoid")[0].values[0].real
    A_e = model.sources.A_e.values[0].real
    ens = simulate_scattering(device, A_ext, kernel_matrix(dR).real, n_samples, seed, grid=g)

    shift = A_e if detect_external else np.zeros_like(A_e)
    mA = model.expect_series("A").real
    mJ = model.expect_series("J").real
    AA = tn_broad_matrix(model, "A", "A", past="free").real
    AJ = tn_broad_matrix(model, "A", "J", past="free").real
    JJ = tn_broad_matrix(model, "J", "J", past="free").real
    qA = mA + shift
    q = {"A": qA, "J": mJ,
         "AA": AA + np.outer(shift, mA) + np.outer(mA, shift) + np.outer(shift, shift),
         "AJ": AJ + np.outer(shift, mJ), "JJ": JJ}
    Xc = {"A": ens.A_tot - (A_e - shift)[None, :], "J": ens.J}

    rows = []
    for name in ("A", "J"):
        for t, k in zip(times, idx):
            m, se = jackknife(Xc[name][:, k], batch)
            rows.append(_row(name, (t,), q[name][k], m, se, tol))
    for name in ("AA", "AJ", "JJ"):
        X, Y = Xc[name[0]], Xc[name[1]]
        for t1, k1 in zip(times, idx):
            for t2, k2 in zip(times, idx):
                m, se = jackknife(X[:, k1] * Y[:, k2], batch)
                rows.append(_row(name, (t1, t2), q[name][k1, k2], m, se, tol))
    return {"rows": rows, "pass": all(r["pass"] for r in rows), "n_samples": n_samples,
            "seed": seed, "ensemble": ens}


def _row(name, times, qv, cv, se, tol):
    diff = abs(qv - cv)
    return {"moment": name, "times": times, "quantum": float(qv), "classical": float(cv),
            "stderr": float(se), "diff": float(diff), "bound": float(3 * se + tol),
            "pass": bool(diff <= 3 * se + tol)}


def write_ensemble_csv(path, ens, max_samples=None):
    """Long format: sample, t, J, A_tot."""
    N = ens.n_samples if max_samples is None else min(max_samples, ens.n_samples)
    t = ens.grid.times if ens.grid is not None else np.arange(ens.J.shape[1], dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "t", "J", "A_tot"])
        for s in range(N):
            for k in range(t.size):
                w.writerow([s, repr(float(t[k])), repr(float(ens.J[s, k])),
                            repr(float(ens.A_tot[s, k]))])
