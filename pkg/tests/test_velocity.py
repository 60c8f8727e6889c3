import numpy as np
import pytest

from kinlub.velocity import (FluidMoments, build_velocity_grid, inner_product,
                             kernel_basis, orthogonal_part, project_kernel,
                             project_kernel_batch)

from oracles import gauss_moment_3d


def test_grid_rejects_tiny_order():
    with pytest.raises(ValueError):
        build_velocity_grid(1)


def test_weight_normalization(grid4):
    assert grid4.size == 64
    assert abs(grid4.weights.sum() - 1.0) <= 1e-12
    assert np.all(grid4.weights > 0)


def test_low_moments(grid4):
    assert abs(grid4.moment((0, 0, 2)) - 1.0) <= 1e-12
    assert abs(grid4.moment((0, 0, 4)) - 3.0) <= 1e-12


def test_node_antisymmetry(grid6):
    # v -> -v maps the node set onto itself exactly, so odd moments cancel
    # to zero rather than to rounding level
    flipped = np.sort(-grid6.nodes[:, 0])
    assert np.array_equal(np.sort(grid6.nodes[:, 0]), flipped)
    assert grid6.moment((1, 0, 0)) == 0.0
    assert grid6.moment((1, 0, 2)) == 0.0


@pytest.mark.parametrize("powers", [(2, 0, 0), (0, 4, 0), (2, 2, 0),
                                    (2, 2, 2), (4, 2, 0), (6, 0, 0),
                                    (1, 1, 1), (3, 2, 1), (0, 0, 6)])
def test_moment_oracle_degree6(grid4, powers):
    exact = gauss_moment_3d(*powers)
    assert abs(grid4.moment(powers) - exact) <= 1e-12


def test_inner_product_normalization(grid4):
    one = np.ones(grid4.size)
    assert abs(inner_product(one, one, grid4) - 1.0) <= 1e-12


def test_inner_product_critical_cancellation(grid4):
    f = grid4.vz * (grid4.speed**2 - 5.0)
    assert abs(inner_product(f, grid4.vz, grid4)) <= 1e-12


def test_inner_product_vxvz(grid4):
    # product of second moments; the quadrature must reproduce it exactly
    f = grid4.vx * grid4.vz
    exact = gauss_moment_3d(2, 0, 2)
    assert abs(inner_product(f, f, grid4) - exact) <= 1e-12


def test_inner_product_shape_mismatch(grid4):
    with pytest.raises(ValueError):
        inner_product(np.ones(3), np.ones(grid4.size), grid4)


def test_project_constant(grid4):
    m = project_kernel(np.ones(grid4.size), grid4)
    assert abs(m.a - 1.0) <= 1e-12
    assert np.abs(m.b).max() <= 1e-12
    assert abs(m.c) <= 1e-12


def test_project_vx(grid4):
    m = project_kernel(grid4.vx, grid4)
    assert abs(m.a) <= 1e-12
    assert np.allclose(m.b, [1.0, 0.0, 0.0], atol=1e-12)
    assert abs(m.c) <= 1e-12


def test_project_speed_squared(grid4):
    # frozen from the 5x5 Gram system with exact Gaussian moments:
    # |v|^2 = 3 * 1 + 2 * (|v|^2 - 3)/2
    m = project_kernel(grid4.speed**2, grid4)
    assert abs(m.a - 3.0) <= 1e-12
    assert np.abs(m.b).max() <= 1e-12
    assert abs(m.c - 2.0) <= 1e-12


def test_projection_requires_order3():
    g2 = build_velocity_grid(2)
    with pytest.raises(ValueError):
        project_kernel(np.ones(g2.size), g2)


def test_orthogonal_part_of_kernel_functions(grid4):
    for j in range(5):
        f = kernel_basis(grid4)[:, j]
        assert np.abs(orthogonal_part(f, grid4)).max() <= 1e-12


def test_orthogonal_part_vxvz_unchanged(grid4):
    # all five Gram pairings vanish by the odd-moment oracle
    f = grid4.vx * grid4.vz
    basis = kernel_basis(grid4)
    for j in range(5):
        assert abs(inner_product(f, basis[:, j], grid4)) <= 1e-13
    assert np.abs(orthogonal_part(f, grid4) - f).max() <= 1e-12


def test_projection_idempotent(grid4, rng):
    for _ in range(5):
        f = rng.normal(size=grid4.size)
        pf = project_kernel(f, grid4).evaluate(grid4)
        ppf = project_kernel(pf, grid4).evaluate(grid4)
        assert np.abs(ppf - pf).max() <= 1e-12
        assert np.abs(project_kernel(orthogonal_part(f, grid4), grid4)
                      .evaluate(grid4)).max() <= 1e-10


def test_pythagoras(grid6, rng):
    for _ in range(10):
        f = rng.normal(size=grid6.size)
        pf = project_kernel(f, grid6).evaluate(grid6)
        perp = f - pf
        total = inner_product(f, f, grid6)
        split = inner_product(pf, pf, grid6) + inner_product(perp, perp, grid6)
        assert abs(total - split) <= 1e-10 * max(1.0, total)


def test_orthogonality_against_grid_functions(grid6, rng):
    basis = kernel_basis(grid6)
    for _ in range(5):
        f = orthogonal_part(rng.normal(size=grid6.size), grid6)
        for j in range(5):
            assert abs(inner_product(f, basis[:, j], grid6)) <= 1e-10


def test_batch_projection_matches_single(grid4, rng):
    fields = rng.normal(size=(7, grid4.size))
    coef = project_kernel_batch(fields, grid4)
    for i in range(7):
        m = project_kernel(fields[i], grid4)
        assert abs(coef[i, 0] - m.a) <= 1e-13
        assert np.abs(coef[i, 1:4] - m.b).max() <= 1e-13
        assert abs(coef[i, 4] - m.c) <= 1e-13


def test_axis_swap_permutation(grid4):
    perm = grid4.axis_swap_permutation(0, 1)
    assert np.array_equal(grid4.vx[perm], grid4.vy)
    assert np.array_equal(grid4.vy[perm], grid4.vx)
    assert np.array_equal(grid4.vz[perm], grid4.vz)


def test_fluid_moments_evaluate(grid4):
    m = FluidMoments(a=0.5, b=np.array([1.0, -2.0, 0.25]), c=0.75)
    vals = m.evaluate(grid4)
    expect = (0.5 + grid4.nodes @ m.b + 0.375 * (grid4.speed**2 - 3.0))
    assert np.allclose(vals, expect, atol=1e-14)


def test_summary_json(grid4):
    import json
    payload = json.loads(grid4.summary_json())
    assert payload["order"] == 4
    assert payload["node_count"] == 64
    assert payload["max_moment_error_deg6"] <= 1e-12
