import json
import os
import pathlib

import numpy as np
import pytest

from xrk import ConfigurationError, ExpCache, expm, integrate_fixed, method_spec
from xrk.problems import (
    AllenCahnConfig,
    NLSConfig,
    WindConfig,
    build_allen_cahn,
    build_nls,
    build_system,
    build_wind,
    cheb,
    nls_d2,
    reference_solution,
)


def fd_jvp_gap(sys, y, v, eps=1e-5):
    fd = (sys.f(y + eps * v) - sys.f(y - eps * v)) / (2 * eps)
    return np.max(np.abs(fd - sys.jvp(y, v))) / np.linalg.norm(v, np.inf)


# --- Chebyshev grid -----------------------------------------------------------


def test_cheb_annihilates_constants():
    D, x = cheb(16)
    assert np.max(np.abs(D @ np.ones(17))) <= 1e-12


def test_cheb_differentiates_polynomials_exactly():
    D, x = cheb(12)
    assert np.max(np.abs(D @ x**2 - 2 * x)) <= 1e-12
    assert np.max(np.abs(D @ x**5 - 5 * x**4)) <= 1e-10


def test_cheb_shape_and_nodes():
    D, x = cheb(32)
    assert D.shape == (33, 33)
    assert x[0] == 1.0 and x[-1] == -1.0
    assert np.allclose(x, np.cos(np.pi * np.arange(33) / 32))


def test_cheb_rejects_zero():
    with pytest.raises(ConfigurationError):
        cheb(0)


# --- Allen-Cahn ----------------------------------------------------------------


def test_allen_cahn_dimensions_and_profile():
    sys = build_allen_cahn()
    assert sys.dim == 31
    # the initial profile matches the clamped boundary values at x = +-1
    assert 0.53 * 1 + 0.47 * np.sin(-1.5 * np.pi) == pytest.approx(1.0)
    assert 0.53 * (-1) + 0.47 * np.sin(1.5 * np.pi) == pytest.approx(-1.0)
    # ... so the substituted state v = u - x vanishes there, and the
    # interior profile is the familiar hump
    D, x = cheb(32)
    xi = x[1:-1]
    assert np.allclose(sys.y0, 0.53 * xi + 0.47 * np.sin(-1.5 * np.pi * xi) - xi)


def test_allen_cahn_rhs_matches_full_operator():
    # M v + f(v) == eps D^2 [0; v; 0] |interior + (u - u^3) |interior
    cfg = AllenCahnConfig()
    sys = build_allen_cahn(cfg)
    D, x = cheb(cfg.N)
    D2 = D @ D
    rng = np.random.default_rng(7)
    v = rng.standard_normal(31)
    u_int = v + x[1:-1]
    v_full = np.concatenate([[0.0], v, [0.0]])
    want = (cfg.eps * (D2 @ v_full))[1:-1] + (u_int - u_int**3)
    got = sys.M @ v + sys.f(v)
    assert np.max(np.abs(want - got)) <= 1e-10


def test_allen_cahn_linear_part_is_dissipative():
    sys = build_allen_cahn()
    eig = np.linalg.eigvals(sys.M)
    assert np.max(eig.real) < 0


def test_allen_cahn_jvp_consistency(rng):
    sys = build_allen_cahn()
    for _ in range(3):
        v = rng.standard_normal(sys.dim)
        assert fd_jvp_gap(sys, sys.y0, v) <= 1e-6


# --- wind ------------------------------------------------------------------------


def test_wind_nonlinearity_equilibrium():
    sys = build_wind()
    assert np.array_equal(sys.f(np.zeros(2)), np.zeros(2))


def test_wind_jacobian_symmetric_tracefree(rng):
    sys = build_wind()
    for _ in range(5):
        y = rng.standard_normal(2)
        J = np.column_stack([sys.jvp(y, e) for e in np.eye(2)])
        assert J[0, 1] == pytest.approx(J[1, 0])
        assert J[0, 0] + J[1, 1] == pytest.approx(0.0)


def test_wind_eigenvalues():
    sys = build_wind(WindConfig(zeta=0.2, lam=2.0))
    eig = np.sort_complex(np.linalg.eigvals(sys.M))
    want = np.sort_complex(np.array([-0.2 + 2j, -0.2 - 2j]))
    assert np.max(np.abs(eig - want)) <= 1e-12


def test_wind_undamped_rotation_preserves_norm():
    sys = build_wind(WindConfig(zeta=0.0))
    E = expm(0.7 * sys.M)
    assert np.linalg.norm(E, 2) == pytest.approx(1.0, abs=1e-12)


def test_wind_rejects_negative_damping():
    with pytest.raises(ConfigurationError):
        build_wind(WindConfig(zeta=-0.1))


# --- NLS -------------------------------------------------------------------------


def test_nls_d2_diagonal_value():
    cfg = NLSConfig()
    D2 = nls_d2(cfg.N, cfg.L)
    want = -cfg.mu**2 * (2 * (cfg.N / 2) ** 2 + 1) / 6.0
    assert np.all(np.diag(D2) == want)


def test_nls_d2_exactly_symmetric():
    D2 = nls_d2(64, 4 * np.sqrt(2) * np.pi)
    assert np.array_equal(D2, D2.T)


def test_nls_d2_differentiates_lowest_mode():
    cfg = NLSConfig()
    x = np.arange(cfg.N) * (cfg.L / cfg.N)
    u = np.cos(cfg.mu * x)
    D2 = nls_d2(cfg.N, cfg.L)
    assert np.max(np.abs(D2 @ u + cfg.mu**2 * u)) <= 1e-9


def test_nls_m_skew_and_exp_orthogonal():
    sys = build_nls()
    assert np.array_equal(sys.M.T, -sys.M)
    E = expm(0.25 * sys.M)
    assert np.max(np.abs(E.T @ E - np.eye(sys.dim))) <= 1e-11


def test_nls_rejects_odd_grid():
    with pytest.raises(ConfigurationError):
        build_nls(NLSConfig(N=63))


def test_nls_jvp_consistency(rng):
    sys = build_nls()
    for _ in range(3):
        v = rng.standard_normal(sys.dim)
        assert fd_jvp_gap(sys, sys.y0, v) <= 1e-6


# --- reference oracle ---------------------------------------------------------


def test_reference_homogeneous_test_mode(zero_f_system):
    # with f suppressed the certified reference equals expm(T M) y0
    wind = build_wind()
    sys = zero_f_system(wind.M, np.array([0.5, 0.5]), tend=10.0)
    ref = reference_solution("wind", system=sys, h_min=2.0**-8)
    assert np.max(np.abs(ref - expm(10.0 * wind.M) @ sys.y0)) <= 1e-11


def test_reference_wind_certifies_and_caches(tmp_path):
    cfg = WindConfig()
    ref1 = reference_solution("wind", cfg, cache_dir=str(tmp_path))
    files = sorted(os.listdir(tmp_path))
    assert len(files) == 2  # .json sidecar + .npy state
    side = json.loads((tmp_path / files[0]).read_text())
    assert side["cert_gap"] <= 1e-10
    # second call is a pure cache hit returning the stored state
    (tmp_path / files[0]).write_text(json.dumps({**side, "marker": True}))
    ref2 = reference_solution("wind", cfg, cache_dir=str(tmp_path))
    assert np.array_equal(ref1, ref2)
    assert json.loads((tmp_path / files[0]).read_text()).get("marker") is True


def test_reference_richardson_self_consistency(tmp_path):
    # the certification gap is the Richardson check: rerun at h_ref/2
    cfg = WindConfig()
    ref = reference_solution("wind", cfg, cache_dir=str(tmp_path))
    sys = build_wind(cfg)
    h_ref = 2.0**-8 / 16.0
    again = integrate_fixed(method_spec("MVERK3_2"), sys, h_ref / 2).y
    assert np.max(np.abs(ref - again)) <= 1e-10


@pytest.mark.slow
def test_reference_nls_method_independence(tmp_path):
    cfg = NLSConfig()
    a = reference_solution("nls", cfg, cache_dir=str(tmp_path))
    b = reference_solution("nls", cfg, cache_dir=str(tmp_path), method="SVERK3_1")
    assert np.max(np.abs(a - b)) <= 1e-8


def test_refcache_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("XRK_REFCACHE", str(tmp_path / "alt"))
    reference_solution("wind", WindConfig())
    assert (tmp_path / "alt").is_dir()
    assert len(list((tmp_path / "alt").glob("wind-*.npy"))) == 1


def test_build_system_rejects_unknown():
    with pytest.raises(ConfigurationError):
        build_system("heat")


@pytest.mark.parametrize("pid", ["allen_cahn", "wind", "nls"])
def test_jvp_linear_in_direction(pid, rng):
    sys = build_system(pid)
    y = sys.y0
    u, v = rng.standard_normal((2, sys.dim))
    a, b = 0.7, -1.3
    lhs = sys.jvp(y, a * u + b * v)
    rhs = a * sys.jvp(y, u) + b * sys.jvp(y, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(np.max(np.abs(rhs)), 1.0)
