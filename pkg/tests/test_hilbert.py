import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from tnqed.errors import ValidationError
from tnqed.hilbert import (BranchInsertion, DeviceSpec, ModeSpec, SourceSet, SystemSpec,
                           TestFunctionSet as Tfs, build_system, dag, oscillator_device,
                           tc_generating, tc_moment, trivial_device, two_level_device)
from tnqed.signals import Signal, make_grid


def _model(dev, modes=(), cutoff=1, dt=0.05, n=41, A_e=None, hbar=1.0):
    g = make_grid(0, dt, n)
    src = SourceSet(g, 1, A_e=None if A_e is None else Signal(g, A_e(g.times)[None], real=True))
    return build_system(SystemSpec(g, dev, modes, cutoff, src, hbar=hbar))


def test_device_validation():
    with pytest.raises(ValidationError):
        DeviceSpec([[0, 1], [0, 0]], np.eye(2), np.eye(2) / 2)  # H not Hermitian
    with pytest.raises(ValidationError):
        DeviceSpec(np.eye(2), np.eye(2), np.eye(2))  # trace 2
    with pytest.raises(ValidationError):
        DeviceSpec(np.eye(2), np.eye(3), np.eye(2) / 2)
    with pytest.raises(ValidationError):
        DeviceSpec(np.eye(2), np.eye(2), np.diag([1.5, -0.5]))


def test_spec_validation():
    g = make_grid(0, 0.1, 5)
    with pytest.raises(ValidationError):
        ModeSpec(-1.0)
    with pytest.raises(ValidationError):
        SystemSpec(g, two_level_device(1.0), (ModeSpec(1.0, (1, 1)),))
    with pytest.raises(ValidationError):
        SystemSpec(g, two_level_device(1.0), hbar=0.0)
    with pytest.raises(ValidationError):
        SystemSpec(g, two_level_device(1.0), (ModeSpec(1.0),) * 3, fock_cutoff=20, max_dim=100)


def test_free_precession():
    # (|g> + |e>)/sqrt 2 under H = hbar w |e><e|: <sigma_x>(t) = cos(w t)
    m = _model(two_level_device(1.7, j=1.0, state=[1, 1]))
    assert np.allclose(m.expect_series("J").real, np.cos(1.7 * m.grid.times), atol=1e-12)


def test_forward_is_unitary():
    m = _model(two_level_device(1.0), (ModeSpec(2.0, (0.4,)),), cutoff=3,
               A_e=lambda t: np.sin(3 * t))
    U = m.forward
    assert np.allclose(dag(U) @ U, np.eye(m.dim), atol=1e-12)


def test_thermal_oscillator_variance():
    hb, w, n_th = 0.7, 1.3, 0.4
    dev = oscillator_device(w, 40, n_th=n_th, hbar=hb)
    x = dev.extras["x"]
    var = np.trace(dev.rho_dev @ x @ x).real
    assert var == pytest.approx(hb / (2 * w) * (2 * n_th + 1), rel=1e-9)


def test_driven_two_level_against_ode():
    # [ORACLE] independent ODE integration of the Schrodinger equation
    w, j = 1.0, 0.8
    A = lambda t: 0.9 * np.exp(-((t - 1.0) / 0.4) ** 2)
    m = _model(two_level_device(w, j=j), dt=0.01, n=201, A_e=A)
    H0 = np.diag([0.0, w]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], complex)

    def rhs(t, psi):
        return -1j * (H0 - A(t) * j * sx) @ psi

    sol = solve_ivp(rhs, (0, 2), np.array([1, 0], complex), t_eval=m.grid.times,
                    rtol=1e-11, atol=1e-12)
    ex = np.einsum("ik,ij,jk->k", sol.y.conj(), j * sx, sol.y).real
    assert np.abs(m.expect_series("J").real - ex).max() < 1e-4


@given(st.floats(0.3, 3.0))
def test_hbar_scaling_of_dynamics(hb):
    # sources in units of sqrt(hbar): J / sqrt(hbar) is hbar independent
    A = lambda t: 0.5 * np.exp(-(t - 1) ** 2)
    ref = _model(two_level_device(1.0, j=0.6, state=[1, 1]), (ModeSpec(2.0, (0.5,)),), 2,
                 A_e=A)
    m = _model(two_level_device(1.0, j=0.6, state=[1, 1], hbar=hb), (ModeSpec(2.0, (0.5,)),), 2,
               A_e=lambda t: np.sqrt(hb) * A(t), hbar=hb)
    assert np.allclose(m.expect_series("J") / np.sqrt(hb), ref.expect_series("J"), atol=1e-10)


def test_generating_value_without_test_functions_is_one():
    m = _model(two_level_device(1.0, state=[1, 1j]), (ModeSpec(3.0, (0.5,)),), 3,
               A_e=lambda t: np.cos(t))
    assert abs(tc_generating(m) - 1) < 1e-12
    assert abs(tc_generating(m, Tfs()) - 1) < 1e-12


def test_tc_moment_single_insertion_is_expectation():
    m = _model(two_level_device(1.0, state=[1, 1j]), (ModeSpec(3.0, (0.5,)),), 3,
               A_e=lambda t: np.cos(t))
    ex = m.expect_series("J")
    for br in "+-":
        assert abs(tc_moment(m, [BranchInsertion("J", 1.0, br)]) - ex[20]) < 1e-12


def test_tc_moment_two_point_ordering():
    m = _model(two_level_device(1.0, state=[1, 1j]), (ModeSpec(3.0, (0.5,)),), 3)
    JH = m.heisenberg("J")
    a, b = 10, 30
    later_first = np.trace(m.rho @ JH[b] @ JH[a])
    v = tc_moment(m, [BranchInsertion("J", 0.5, "+"), BranchInsertion("J", 1.5, "+")])
    assert abs(v - later_first) < 1e-12
    # - branch factors stand to the left
    v = tc_moment(m, [BranchInsertion("J", 1.5, "-"), BranchInsertion("J", 0.5, "+")])
    assert abs(v - np.trace(m.rho @ JH[b] @ JH[a])) < 1e-12
    v = tc_moment(m, [BranchInsertion("J", 0.5, "-"), BranchInsertion("J", 1.5, "+")])
    assert abs(v - np.trace(m.rho @ JH[a] @ JH[b])) < 1e-12


def test_unknown_operator():
    m = _model(trivial_device())
    with pytest.raises(ValidationError):
        m.operator("nope")
