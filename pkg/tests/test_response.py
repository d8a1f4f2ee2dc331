import numpy as np
import pytest
from hypothesis import given, strategies as st

from tnqed.errors import ValidationError
from tnqed.hilbert import ModeSpec, SourceSet, SystemSpec, build_system, two_level_device
from tnqed.response import (external_fields, free_field_leakage, kernel_matrix, kubo_delta_r,
                            kubo_g_r, model_kernels, radiated_identity_check, radiated_weights,
                            refinement_study, write_report_csv)
from tnqed.signals import Signal, kernel_apply, make_grid


@given(st.floats(0.2, 8.0), st.floats(0.1, 2.0), st.floats(0.01, 0.1))
def test_delta_r_closed_form(w, u, dt):
    g = make_grid(0, dt, 50)
    tau = g.lags * dt
    K = kubo_delta_r([ModeSpec(w, (u,))], g).values[0, 0].real
    assert np.allclose(K, np.where(tau > 0, u * u * np.sin(w * tau) / w, 0.0), atol=1e-12)


def test_g_r_closed_form_with_half_theta():
    g = make_grid(0, 0.05, 30)
    tau = g.lags * g.dt
    K = kubo_g_r([ModeSpec(2.0, band="resonant", carrier=1.8)], g).values[0, 0]
    th = np.where(tau > 0, 1.0, np.where(tau == 0, 0.5, 0.0))
    assert np.allclose(K, th * 1j * np.exp(-0.2j * tau), atol=1e-14)
    assert K[g.n - 1] == pytest.approx(0.5j)


def test_modes_add_and_sites_couple():
    g = make_grid(0, 0.1, 8)
    m1, m2 = ModeSpec(1.0, (1.0, 0.5)), ModeSpec(2.0, (0.3, -1.0))
    K = kubo_delta_r([m1, m2], g).values
    K1, K2 = kubo_delta_r([m1], g).values, kubo_delta_r([m2], g).values
    assert np.allclose(K, K1 + K2)
    # real mode vectors: Delta_R(x, x') is symmetric in the sites
    assert np.allclose(K[0, 1], K[1, 0])


def test_band_mismatch():
    g = make_grid(0, 0.1, 8)
    with pytest.raises(ValidationError):
        kubo_delta_r([ModeSpec(1.0, band="resonant")], g)
    with pytest.raises(ValidationError):
        kubo_g_r([ModeSpec(1.0)], g)


def test_kernels_do_not_see_the_device():
    g = make_grid(0, 0.1, 20)
    ks = [model_kernels(build_system(SystemSpec(g, two_level_device(1.0, state=s),
                                                (ModeSpec(3.0, (0.4,)),), 2)))
          for s in ("ground", "excited", [1, 1j])]
    for k in ks[1:]:
        assert np.array_equal(k[0].values, ks[0][0].values)


def test_external_field_trapezoid():
    # Delta_R J_e for a constant J_e = 1: integral of sin(w s)/w = (1 - cos w t)/w^2
    w, errs = 2.0, []
    for dt in (0.01, 0.005):
        g = make_grid(0, dt, int(round(3 / dt)) + 1)
        dR = kubo_delta_r([ModeSpec(w)], g)
        src = SourceSet(g, 1, J_e=Signal(g, np.ones((1, g.n)), real=True))
        A, _ = external_fields(src, dR, kubo_g_r([], g), rule="trapezoid")
        errs.append(np.abs(A.values[0] - (1 - np.cos(w * g.times)) / w ** 2).max())
        assert np.allclose(kernel_matrix(dR) @ np.ones(g.n), A.values[0], atol=1e-14)
    assert errs[0] < 3e-5
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_radiated_weights_sum_to_kernel():
    g = make_grid(0, 0.05, 40)
    m = build_system(SystemSpec(g, two_level_device(1.0), (ModeSpec(3.0, (0.5,)),), 2))
    for past in ("free", "window"):
        Lp, Lm = radiated_weights(m, past=past)
        assert np.allclose(Lp + Lm, kernel_matrix(model_kernels(m)[0]), atol=1e-13)


def test_leakage_is_hbar_linear():
    g = make_grid(0, 0.05, 30)
    modes = (ModeSpec(3.0, (0.8,)),)
    assert np.allclose(free_field_leakage(modes, g, 2.0), 2 * free_field_leakage(modes, g, 1.0))


def _atom(dt, T=6.0):
    g = make_grid(0, dt, int(round(T / dt)) + 1)
    t = g.times
    src = SourceSet(g, 1,
                    A_e=Signal(g, (1.2 * np.exp(-((t - 2) / 0.6) ** 2) * np.cos(3 * t))[None], real=True),
                    J_e=Signal(g, (0.8 * np.exp(-((t - 3) / 0.6) ** 2) * np.cos(5 * t))[None], real=True))
    return build_system(SystemSpec(g, two_level_device(3.0, j=0.5), (ModeSpec(5.0, (0.5,)),), 4, src))


def test_radiated_identity_converges(tmp_path):
    reps, res, ratios = refinement_study(_atom, [0.04, 0.02], [4.0, 6.0])
    assert res[0] < 2e-3 and ratios[0] > 3.0
    write_report_csv(tmp_path / "r.csv", reps[1])
    assert (tmp_path / "r.csv").read_text().startswith("check,moment")


def test_plain_products_keep_the_in_field():
    rep = radiated_identity_check(_atom(0.04), [4.0, 6.0])
    # the unordered two-point function misses the free contraction by O(hbar/2w)
    assert rep.max_diff("contrast") > 10 * rep.max_diff("broad")
