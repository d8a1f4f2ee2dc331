import numpy as np
import pytest
from hypothesis import given, strategies as st

from tnqed.errors import ValidationError
from tnqed.hilbert import (ModeSpec, SourceSet, SystemSpec, build_system,
                           composite_dipole_device, trivial_device, two_level_device)
from tnqed.response import free_field_leakage
from tnqed.signals import Signal, make_grid
from tnqed.timenormal import (MomentTensor, causality_probe, ordering_family_contrast, tn_broad,
                              tn_broad_matrix, tn_gkk, tn_narrow, wightman, write_moments_csv)


def _probe(state=(1, 1j), d=0.6, n=81):
    g = make_grid(0, 0.05, n)
    A = 0.7 * np.exp(-((g.times - 2) / 0.5) ** 2)
    dev = two_level_device(1.0, j=1.0, d=d, state=list(state))
    return build_system(SystemSpec(g, dev, (ModeSpec(3.0, (0.5,)),), 4,
                                   SourceSet(g, 1, A_e=Signal(g, A[None], real=True))))


@pytest.fixture(scope="module")
def probe():
    return _probe()


@given(st.integers(0, 80), st.sampled_from(["window", "free"]))
def test_first_moment_collapses(probe, k, past):
    t = probe.grid.times[k]
    assert abs(tn_broad(probe, [t], "J", past=past) - probe.expect_series("J")[k]) < 1e-12


@pytest.mark.parametrize("past", ["window", "free"])
def test_second_moments_real_and_symmetric(probe, past):
    JJ = tn_broad_matrix(probe, "J", past=past)
    assert np.abs(JJ.imag).max() < 1e-12
    assert np.allclose(JJ, JJ.T, atol=1e-12)
    assert abs(tn_broad(probe, [1.0, 3.0], "J", past=past) - JJ[20, 60]) < 1e-12


def test_third_moment_real():
    assert abs(tn_broad(_probe(n=31), [0.5, 1.0, 1.5], "J").imag) < 1e-12


def test_order_above_max_rejected(probe):
    with pytest.raises(ValidationError):
        tn_broad(probe, [1.0, 1.5, 2.0, 2.5], "J")


def test_narrow_conjugation_identity(probe):
    # conj <T: D^dag(t1) D(t1'):> = <T: D^dag(t1') D(t1):>, with d != 0
    for left, right in (([1.0], [2.5]), ([0.5, 3.0], [1.5, 2.0]), ([2.0, 2.0], [1.0, 3.5])):
        a = np.conj(tn_narrow(probe, left, right))
        b = tn_narrow(probe, right, left)
        assert abs(a - b) < 1e-13
    # D^2 = 0 for one atom, so only the single pair is far from zero
    assert abs(tn_narrow(probe, [1.0], [2.5])) > 1e-3


def test_narrow_ordering_places_daggers_left(probe):
    Dd, D = probe.heisenberg("Ddag"), probe.heisenberg("D")
    # dagged factors anti-time-ordered (earliest left), others time-ordered (latest left)
    ex = np.trace(probe.rho @ Dd[20] @ Dd[60] @ D[40] @ D[10])
    assert abs(tn_narrow(probe, [3.0, 1.0], [0.5, 2.0]) - ex) < 1e-13


def test_free_vacuum_in_field_cancels():
    g = make_grid(0, 0.05, 61)
    mode = ModeSpec(3.0, (0.8,))
    m = build_system(SystemSpec(g, trivial_device(), (mode,), 5))
    assert np.abs(tn_broad_matrix(m, "A", past="free")).max() < 1e-12
    # the plain window keeps exactly the closed-form grid leakage
    L = free_field_leakage((mode,), g)
    assert np.allclose(tn_broad_matrix(m, "A", past="window"), L, atol=1e-13)
    tau = g.times[:, None] - g.times[None, :]
    W = wightman(m, "A", "A")
    assert np.allclose(W, 0.64 / 6.0 * np.exp(-3j * tau), atol=1e-13)


def _device_only(t_start, w=1.3, dt=0.05):
    g = make_grid(t_start, dt, int(round((4.0 - t_start) / dt)) + 1)
    A = 0.6 * np.exp(-((g.times - 2) / 0.5) ** 2)
    # the state at t_start is the t = 0 state evolved backwards freely
    psi = [1, 1j * np.exp(-1j * w * t_start)]
    return build_system(SystemSpec(g, two_level_device(w, state=psi), (), 1,
                                   SourceSet(g, 1, A_e=Signal(g, A[None], real=True))))


def test_free_past_matches_long_prehistory():
    # [ORACLE] brute force: start the lattice P earlier, propagate freely, plain window
    w, P = 1.3, 40.0
    F = tn_broad_matrix(_device_only(0.0), "J", past="free")
    k = int(round(P / 0.05))
    W = tn_broad_matrix(_device_only(-P), "J", past="window")[k:, k:]
    short = tn_broad_matrix(_device_only(0.0), "J", past="window")
    # residual edge term of the long window ~ 1/(pi w P)
    assert np.abs(W - F).max() < 2 / (np.pi * w * P)
    assert np.abs(W - F).max() < 0.02 * np.abs(short - F).max()


def test_broad_band_is_causal_gkk_is_not():
    m = _probe(state=(1, 1), n=81)
    db, dg = causality_probe(m, [1.5, 2.0], t_p=3.5, amplitude=5.0, source="A_e")
    assert db < 1e-12
    assert dg > 1e-3
    db1, dg1 = causality_probe(m, [2.0], t_p=3.0, amplitude=5.0, source="A_e")
    assert db1 < 1e-12


def test_bump_must_be_in_the_future(probe):
    with pytest.raises(ValidationError):
        causality_probe(probe, [2.0], t_p=1.0)


def test_gkk_first_moment_is_expectation(probe):
    assert abs(tn_gkk(probe, [2.0], "J") - probe.expect_series("J")[40]) < 1e-12


def test_ordering_families_differ():
    g = make_grid(0, 0.05, 21)
    dev = composite_dipole_device(1.0, coupling_j=0.3)
    m = build_system(SystemSpec(g, dev, (ModeSpec(2.0),), 1,
                                SourceSet(g, 1, A_e=Signal(g, 0.5 * np.ones((1, 21)), real=True))))
    vD, vpsi = ordering_family_contrast(m, 0.5, 1.0)
    assert abs(vD - vpsi) > 1e-6


def test_moments_csv(tmp_path):
    t = MomentTensor("broad", 2)
    t.add([1.0, 2.0], ["J", "J"], 0.5 + 0.25j)
    write_moments_csv(tmp_path / "m.csv", [t])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "definition,m,t1,t2,re,im"
    assert lines[1].startswith("broad,2,1.0,2.0,0.5,0.25")
