import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from tnqed.dressing import (GaussianFamily, KickedReference, QuantumFamily, ShiftKernel,
                            ToyParams, dress_distribution, dress_via_shift_functional,
                            toy_same_time, toy_two_current, write_toy_csv)
from tnqed.errors import NumericalFailure, ValidationError
from tnqed.pathspace import PathGrid, dist_from_char, pfunctional_from_quantum


@given(st.floats(-2.0, 0.97), st.floats(0.3, 3.0), st.floats(-1, 1))
def test_same_time_normalization(c, J0, A):
    assume(abs(1 - c) > 0.05)
    r = toy_same_time(ToyParams(c, 1.0, J0, A))
    assert abs(r.normalization - 1 / abs(1 - c)) < 1e-8


def test_same_time_value_at_one_half():
    # [CLOSED FORM] chi Delta_R = 1/2 doubles the normalization
    assert toy_same_time(ToyParams(0.5, 1.0, 1.0)).normalization == pytest.approx(2.0, abs=1e-8)


def test_same_time_singular():
    with pytest.raises(NumericalFailure):
        toy_same_time(ToyParams(2.0, 0.5, 1.0))


@given(st.floats(-3, 3), st.floats(0.3, 2.0), st.floats(-1, 1), st.floats(-1, 1))
def test_two_current_normalized_and_factorized(c, J0, A, Ap):
    r = toy_two_current(ToyParams(c, 1.0, J0, A, Ap))
    assert abs(r.normalization - 1) < 1e-8
    assert r.residual < 1e-12 / J0 ** 2


def test_toy_params_validation():
    with pytest.raises(ValidationError):
        ToyParams(0.5, 1.0, 0.0)


def test_toy_csv(tmp_path):
    prm = ToyParams(0.5, 1.0, 1.0)
    write_toy_csv(tmp_path / "t.csv", [(prm, toy_same_time(prm)), (ToyParams(1.0, 1.0, 1.0), None)])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "chi,deltaR,J0,A_e,normalization,expected"
    assert lines[2].endswith("nan,nan")


def test_shift_kernel_must_be_retarded():
    with pytest.raises(ValidationError):
        ShiftKernel.slice_level([[0.0, 0.0], [0.5, 0.1]]).check_retarded()
    ShiftKernel.slice_level([[0.0, 0.0], [0.5, 0.0]]).check_retarded()


def _lattice(L=2, B=32):
    return PathGrid(L, B, step=0.4, dt=1.0)


@given(st.floats(-0.5, 0.5), st.floats(-1, 1))
def test_retarded_dressing_keeps_normalization(r, a):
    pg = _lattice()
    fam = GaussianFamily(chi=1.0, J0=0.6)
    p = dress_distribution(fam, [[0.0, 0.0], [r, 0.0]], pg, [a, 0.0])
    assert abs(p.norm() - 1) < 1e-6


def test_dressing_routes_agree():
    pg = PathGrid(2, 32, step=0.3, dt=1.0)  # fine enough that Phi is not truncated
    fam = GaussianFamily(chi=0.7, J0=0.6)
    R = [[0.0, 0.0], [0.4, 0.0]]
    p = dress_distribution(fam, R, pg, [0.2, -0.1])
    phi = dress_via_shift_functional(fam.char(pg.dt), R, pg, [0.2, -0.1])
    assert np.abs(dist_from_char(phi).values - p.values).max() < 1e-8


def test_gaussian_dressing_matches_closed_form():
    # J1 ~ N(chi a1, J0^2), J2 | J1 ~ N(chi (a2 + r J1), J0^2)
    pg = _lattice()
    chi, J0, r, a = 0.7, 0.6, 0.4, (0.2, -0.1)
    p = dress_distribution(GaussianFamily(chi, J0), [[0.0, 0.0], [r, 0.0]], pg, a)
    X, Y = np.meshgrid(pg.values(0), pg.values(1), indexing="ij")
    n = lambda x, m: np.exp(-0.5 * ((x - m) / J0) ** 2) / (np.sqrt(2 * np.pi) * J0)
    assert np.allclose(p.values, n(X, chi * a[0]) * n(Y, chi * (a[1] + r * X)), atol=1e-14)


def test_kicked_reference_validation():
    with pytest.raises(ValidationError):
        KickedReference(dt=0.3)
    with pytest.raises(ValidationError):
        KickedReference(n_th=0.0)


def test_later_field_does_not_reach_the_bare_lattice():
    # the reason a field mask is allowed: after window 2 opens, the current is frozen
    ref = KickedReference(cutoff=12, dt=0.25)
    t = ref.grid().times
    start = ref.windows()[1][0]
    pg = PathGrid(2, 8, step=0.6, offset=[-2.4, -2.4], dt=ref.window)
    A = ref.field()
    late = A + 0.7 * (t > start + 1e-9) * np.cos(3 * t)
    p1 = pfunctional_from_quantum(ref.model(A, with_field=False), pg, windows=ref.windows())
    p2 = pfunctional_from_quantum(ref.model(late, with_field=False), pg, windows=ref.windows())
    # equal up to the roundoff of the two-branch propagation
    assert np.abs(p1.values - p2.values).max() < 1e-8
    fam = QuantumFamily(lambda f: ref.model(f, with_field=False), pg, windows=ref.windows(),
                        field_mask=t <= start + 1e-9)
    assert np.array_equal(fam.lattice(A), fam.lattice(late))
    assert len(fam.cache) == 1
