import numpy as np
import pytest

from kinlub.collision import (CollisionModel, apply_Gamma, apply_K, apply_L,
                              bgk_kernel_matrix, check_frequency_bounds,
                              collision_frequency, L_matrix,
                              load_plugin_kernel, spectral_gap)
from kinlub.errors import ModelViolationError
from kinlub.velocity import inner_product, kernel_basis, project_kernel

# golden values, frozen from the first measured run on these grids
GAP_ORDER8 = 1.933713622595
GAP_ORDER6 = 2.068167147576
GAMMA_BOUND_ORDER6 = 0.6837   # max over 200 seeded random pairs
L_CONTINUITY_ORDER6 = 0.6234


def test_collision_frequency_values(model):
    assert collision_frequency(np.zeros(3), model) == 1.0
    assert collision_frequency(np.array([1.0, 0.0, 0.0]), model) == 2.0


def test_frequency_bounds(model, grid6):
    # nu_m = nu_M = 1 makes the two-sided bound an equality by construction
    assert check_frequency_bounds(model, grid6)


def test_kernel_annihilation(model, grid6):
    basis = kernel_basis(grid6)
    for j in range(5):
        out = apply_L(basis[:, j], model, grid6)
        assert np.linalg.norm(out) <= 1e-12


def test_self_adjointness(model, grid6, rng):
    worst = 0.0
    for _ in range(100):
        f, g = rng.normal(size=(2, grid6.size))
        lf = apply_L(f, model, grid6)
        lg = apply_L(g, model, grid6)
        defect = abs(inner_product(lf, g, grid6) - inner_product(lg, f, grid6))
        nf = np.sqrt(inner_product(f, f, grid6))
        ng = np.sqrt(inner_product(g, g, grid6))
        worst = max(worst, defect / (nf * ng))
    assert worst <= 1e-12


def test_conservation(model, grid6, rng):
    basis = kernel_basis(grid6)
    for _ in range(20):
        lg = apply_L(rng.normal(size=grid6.size), model, grid6)
        for j in range(5):
            assert abs(inner_product(lg, basis[:, j], grid6)) <= 1e-12


def test_dirichlet_form_positive(model, grid6, rng):
    for _ in range(20):
        g = rng.normal(size=grid6.size)
        val = inner_product(g, apply_L(g, model, grid6), grid6)
        assert val >= -1e-13
    for j in range(5):
        g = kernel_basis(grid6)[:, j]
        assert abs(inner_product(g, apply_L(g, model, grid6), grid6)) <= 1e-12


def test_coercivity_with_measured_gap(model, grid6, rng):
    # (g, Lg) >= gap * ||g_perp||_nu^2 with the gap measured in the nu-norm
    nu = model.frequencies(grid6)
    ratios = []
    for _ in range(50):
        g = rng.normal(size=grid6.size)
        perp = g - project_kernel(g, grid6).evaluate(grid6)
        nperp = np.dot(grid6.weights * nu, perp * perp)
        if nperp < 1e-14:
            continue
        val = inner_product(g, apply_L(g, model, grid6), grid6)
        ratios.append(val / nperp)
    gap = min(ratios)
    assert gap > 0


def test_spectral_gap_order8(model, grid8):
    gap, kdim = spectral_gap(model, grid8)
    assert kdim == 5
    assert gap > 0
    assert abs(gap - GAP_ORDER8) <= 1e-6


def test_spectral_gap_order6(model, grid6):
    gap, kdim = spectral_gap(model, grid6)
    assert kdim == 5
    assert abs(gap - GAP_ORDER6) <= 1e-6


def test_L_continuity_constant(model, grid6, rng):
    nu = model.frequencies(grid6)
    worst = 0.0
    for _ in range(200):
        f, g = rng.normal(size=(2, grid6.size))
        lf = apply_L(f, model, grid6)
        num = abs(inner_product(lf, g, grid6))
        den = (np.sqrt(np.dot(grid6.weights * nu, f * f))
               * np.sqrt(inner_product(g, g, grid6)))
        worst = max(worst, num / den)
    assert worst <= 1.2 * L_CONTINUITY_ORDER6


def test_gamma_symmetry(model, grid6, rng):
    for _ in range(20):
        f, g = rng.normal(size=(2, grid6.size))
        d = apply_Gamma(f, g, model, grid6) - apply_Gamma(g, f, model, grid6)
        assert np.abs(d).max() <= 1e-13


def test_gamma_kernel_orthogonal(model, grid6, rng):
    for _ in range(20):
        f, g = rng.normal(size=(2, grid6.size))
        out = apply_Gamma(f, g, model, grid6)
        m = project_kernel(out, grid6)
        assert max(abs(m.a), np.abs(m.b).max(), abs(m.c)) <= 1e-10


def test_gamma_bound_constant(model, grid6):
    rng = np.random.default_rng(2024)
    nu = model.frequencies(grid6)
    worst = 0.0
    for _ in range(200):
        f, g = rng.normal(size=(2, grid6.size))
        gam = apply_Gamma(f, g, model, grid6)
        num = np.sqrt(inner_product(gam, gam, grid6))
        den = (np.sqrt(np.dot(grid6.weights * nu, f * f))
               * np.sqrt(np.dot(grid6.weights * nu, g * g)))
        worst = max(worst, num / den)
    assert abs(worst - GAMMA_BOUND_ORDER6) <= 5e-4
    assert worst <= 1.2 * GAMMA_BOUND_ORDER6


def test_k0_scales_L_and_Gamma_jointly(grid4, rng):
    m1 = CollisionModel(k0=1.0)
    m2 = CollisionModel(k0=2.0)
    f, g = rng.normal(size=(2, grid4.size))
    assert np.allclose(apply_L(f, m2, grid4), 0.5 * apply_L(f, m1, grid4))
    assert np.allclose(apply_Gamma(f, g, m2, grid4),
                       0.5 * apply_Gamma(f, g, m1, grid4))


def test_L_matrix_matches_apply(model, grid4, rng):
    lmat = L_matrix(model, grid4)
    f = rng.normal(size=grid4.size)
    assert np.allclose(lmat @ f, apply_L(f, model, grid4), atol=1e-12)


def test_K_decomposition(model, grid4, rng):
    nu = model.frequencies(grid4)
    f = rng.normal(size=grid4.size)
    recomposed = nu * f + apply_K(f, model, grid4)
    assert np.allclose(recomposed, apply_L(f, model, grid4), atol=1e-12)


# -- plugin kernel interface -------------------------------------------------

def test_plugin_roundtrip(tmp_path, model, grid4, rng):
    kmat = bgk_kernel_matrix(model, grid4)
    path = tmp_path / "kernel.npy"
    np.save(path, kmat)
    plugin = load_plugin_kernel(path, grid4)
    f = rng.normal(size=grid4.size)
    assert np.allclose(apply_L(f, plugin, grid4), apply_L(f, model, grid4),
                       atol=1e-10)


def test_plugin_csv_roundtrip(tmp_path, model, grid4):
    kmat = bgk_kernel_matrix(model, grid4)
    path = tmp_path / "kernel.csv"
    np.savetxt(path, kmat, delimiter=",")
    plugin = load_plugin_kernel(path, grid4)
    assert plugin.kind == "plugin"


def test_plugin_rejects_asymmetric(tmp_path, grid4, rng):
    bad = rng.normal(size=(grid4.size, grid4.size))
    path = tmp_path / "bad.npy"
    np.save(path, bad)
    with pytest.raises(ModelViolationError):
        load_plugin_kernel(path, grid4)


def test_plugin_rejects_kernel_violation(tmp_path, model, grid4):
    # self-adjoint in L2(M dv) but does not annihilate the invariants
    w = grid4.weights
    sym = np.diag(1.0 / w) * 1e-3
    path = tmp_path / "noann.npy"
    np.save(path, sym)
    with pytest.raises(ModelViolationError):
        load_plugin_kernel(path, grid4)


def test_plugin_rejects_bad_shape(tmp_path, grid4):
    path = tmp_path / "shape.npy"
    np.save(path, np.eye(7))
    with pytest.raises(ModelViolationError):
        load_plugin_kernel(path, grid4)
