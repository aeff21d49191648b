"""Tests for the Gaussian kernel, local Gram systems and collocation rows."""

import numpy as np
import pytest

from richards_lrbf.domain_discretization import axis_stencils, build_grid, influence_domains
from richards_lrbf.exceptions import ConfigurationError, DomainError, IllConditionedError
from richards_lrbf.lrbf_operators import (
    HeadLinearization,
    KernelConfig,
    OperatorAssembler,
    OperatorRow,
    advective_z_operator,
    boundary_row,
    gravity_source,
    half_node_flux,
    half_node_operator,
    interior_row,
    kernel,
    kernel_gradient,
    local_gram,
    outward_normal,
    stencil_coefficients,
)


def basis_function(cloud, centre, c):
    """Kernel centred on one node, sampled on the whole cloud."""
    r = np.linalg.norm(cloud.nodes - cloud.nodes[centre], axis=1)
    return kernel(r, c)


def test_kernel_values():
    assert kernel(0.0, 0.6) == 1.0
    assert kernel(1.0, 0.6) == pytest.approx(0.697676, abs=1e-6)
    with pytest.raises(DomainError):
        kernel(-1.0, 0.6)


def test_kernel_gradient_matches_finite_difference():
    x = np.array([0.3, 0.1, 0.7])
    centres = np.array([[0.0, 0.0, 0.0], [0.5, 0.2, 0.4]])
    grad = kernel_gradient(x, centres, 1.3)
    eps = 1e-6
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = eps
        plus = kernel(np.linalg.norm(x + step - centres, axis=1), 1.3)
        minus = kernel(np.linalg.norm(x - step - centres, axis=1), 1.3)
        np.testing.assert_allclose(grad[:, axis], (plus - minus) / (2 * eps), rtol=1e-6)


def test_kernel_config():
    assert KernelConfig(shape=0.8, scaling='spacing').effective_shape((0.1, 0.0, 0.05)) == 16.0
    assert KernelConfig(shape=0.6).effective_shape((0.1, 0.0, 0.05)) == 0.6
    with pytest.raises(ConfigurationError):
        KernelConfig(shape=0.0)
    with pytest.raises(ConfigurationError):
        KernelConfig(scaling='relative')


def test_gram_conditioning():
    points = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.001], [0.0, 0.0, 0.002]])
    system = local_gram(points, 0.6)
    assert 1e12 < system.condition < 1e14
    np.testing.assert_allclose(np.diag(system.gram), 1.0)
    with pytest.raises(IllConditionedError) as excinfo:
        local_gram(points / 10.0, 0.6, node=4)
    assert excinfo.value.node == 4
    assert "larger than 0.6" in str(excinfo.value)


def test_stencil_coefficients_on_three_nodes():
    cloud = build_grid((0.0, 0.0, 2.0), (1, 1, 3), dims=1)
    stencil = axis_stencils(cloud, np.array([1]))
    values = np.array([0.0, 1.0, 2.0])[stencil[0]]
    zeros = np.zeros(3)

    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing,
                                np.array([1.0, 2.0, 3.0]), zeros, zeros, 1.0)[0]
    assert coef @ values == pytest.approx(-1.0)
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing,
                                np.ones(3), zeros, np.ones(3), 1.0)[0]
    assert coef @ values == pytest.approx(-1.0)
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing,
                                np.ones(3), np.full(3, 0.3), zeros, 0.1)[0]
    assert coef[0] == pytest.approx(3.0 + 2.0)

    # a coupled side drops out of the stencil
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing, np.ones(3), zeros,
                                np.ones(3), 1.0, coupled=np.array([[False, True]]))
    assert coef[0] @ values == pytest.approx(1.5)
    assert coef[0, 2] == 0.0


def test_half_node_operator():
    z = np.array([0.4, 0.5, 0.6])
    assert half_node_operator(2.0 * z + 1.0, np.ones(3), 0.1) == pytest.approx(0.0, abs=1e-12)
    assert half_node_operator(z ** 2, np.ones(3), 0.1) == pytest.approx(2.0)
    assert half_node_operator([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], 1.0) == pytest.approx(1.0)


def test_advective_z_operator():
    assert advective_z_operator([0.0, 1.0, 2.0], np.ones(3), np.zeros(3), 1.0) == 0.0
    assert advective_z_operator([0.0, 1.0, 2.0], np.ones(3), np.ones(3), 1.0) == pytest.approx(1.0)
    assert advective_z_operator(np.full(3, 0.7), np.full(3, 2.0), np.full(3, 0.5), 0.1) == (
        pytest.approx(0.0, abs=1e-12)
    )


def test_stencil_coefficients_match_the_half_node_operators():
    cloud = build_grid((0.0, 0.0, 1.0), (1, 1, 11), dims=1)
    stencil = axis_stencils(cloud, np.arange(1, 10))
    rng = np.random.default_rng(7)
    chi, f, v = 1.0 + rng.random(11), rng.random(11), rng.random(11)
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing, chi, np.zeros(11), f, 1.0)
    trio = stencil[:, [1, 0, 2]]
    expected = -half_node_operator(v[trio], chi[trio], 0.1) - advective_z_operator(
        v[trio], chi[trio], f[trio], 0.1
    )
    np.testing.assert_allclose(np.sum(coef * v[stencil], axis=1), expected, rtol=1e-10)


def test_half_node_flux_and_gravity_source():
    assert half_node_flux([0.0, 1.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0], 1.0) == pytest.approx(1.5)
    assert half_node_flux([1.0, 1.0], [2.0, 2.0], [0.0, 0.0], [0.0, 0.4], 0.5) == pytest.approx(0.2)
    assert gravity_source(np.array([0.0, 0.0, 0.5]), 1.0) == pytest.approx(0.25)


def test_operator_row():
    row = OperatorRow(columns=np.array([2, 0]), weights=np.array([1.0, -2.0]), kind='interior')
    assert row.apply(np.array([3.0, 5.0, 7.0])) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        OperatorRow(columns=np.array([1, 1]), weights=np.ones(2), kind='interior')
    with pytest.raises(ConfigurationError):
        OperatorRow(columns=np.array([1]), weights=np.ones(1), kind='robin')


def test_one_dimensional_interior_row_is_the_stencil():
    cloud = build_grid((0.0, 0.0, 1.0), (1, 1, 11), dims=1)
    rng = np.random.default_rng(3)
    chi, e, f = 1.0 + rng.random(11), rng.random(11), rng.random(11)
    domain = influence_domains(cloud, 3)[4]
    row = interior_row(cloud, domain, e, f, chi, 0.01, KernelConfig())
    stencil = axis_stencils(cloud, np.array([4]))
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing, chi, e, f, 0.01)[0]
    v = rng.random(11)
    assert row.apply(v) == pytest.approx(coef @ v[stencil[0]], rel=1e-12)


def test_interior_row_reproduces_kernel_basis():
    # dz < dx with three members: the x neighbours join the row as extra columns
    cloud = build_grid((1.0, 0.0, 1.0), (5, 1, 21), dims=2)
    s = cloud.node_index(2, 0, 10)
    domain = influence_domains(cloud, 3)[s]
    np.testing.assert_array_equal(domain.members, [s, s - 1, s + 1])

    chi = 1.0 + cloud.nodes[:, 2]
    e = np.full(cloud.size, 0.5)
    f = np.full(cloud.size, 0.3)
    config = KernelConfig(shape=0.6, n_s=3)
    row = interior_row(cloud, domain, e, f, chi, 0.01, config)

    stencil = axis_stencils(cloud, np.array([s]))
    assert set(stencil[0]) <= set(row.columns)
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing, chi, e, f, 0.01)[0]
    for member in domain.members:
        v = basis_function(cloud, member, 0.6)
        assert row.apply(v) == pytest.approx(coef @ v[stencil[0]], rel=1e-7)


def test_assembler_matches_single_rows():
    cloud = build_grid((1.0, 0.0, 1.0), (5, 1, 21), dims=2)
    rng = np.random.default_rng(5)
    chi = 1.0 + rng.random(cloud.size)
    e, f = rng.random(cloud.size), rng.random(cloud.size)
    config = KernelConfig(shape=0.6, n_s=3)
    assembler = OperatorAssembler(cloud=cloud, chi=chi, kernel_config=config)
    matrix = assembler.assemble(e, f, 0.01)
    domains = influence_domains(cloud, 3)
    for k in (0, 7, len(assembler.interior) - 1):
        s = assembler.interior[k]
        row = interior_row(cloud, domains[s], e, f, chi, 0.01, config)
        expected = np.zeros(cloud.size)
        expected[row.columns] = row.weights
        np.testing.assert_allclose(matrix.getrow(s).toarray().ravel(), expected,
                                   rtol=1e-10, atol=1e-12)


def test_anisotropic_grid_extends_the_influence_domains():
    cloud = build_grid((1.0, 0.0, 1.0), (11, 1, 101), dims=2)
    config = KernelConfig(shape=0.8, n_s=5, scaling='spacing')
    assembler = OperatorAssembler(cloud=cloud, chi=np.ones(cloud.size), kernel_config=config)
    interior = assembler.interior
    assert assembler.stats.extended_domains == len(interior)
    assert assembler.stats.to_dict()['extended_domains'] == len(interior)

    zeros = np.zeros(cloud.size)
    matrix = assembler.assemble(zeros, zeros, 0.1)
    x, z = cloud.nodes[:, 0], cloud.nodes[:, 2]
    np.testing.assert_allclose((matrix @ x ** 2)[interior], -2.0, rtol=1e-9)
    np.testing.assert_allclose((matrix @ z ** 2)[interior], -2.0, rtol=1e-9)


def test_interface_rows_difference_the_half_node_fluxes():
    cloud = build_grid((0.0, 0.0, 1.0), (1, 1, 11), dims=1)
    z = cloud.nodes[:, 2]
    rng = np.random.default_rng(11)
    chi = 1.0 + rng.random(11)
    f, g = rng.random(11), rng.random(11)
    lagged = HeadLinearization(u=0.5 + rng.random(11), h=-1.0 - rng.random(11),
                               conductivity=0.1 + rng.random(11))
    assembler = OperatorAssembler(cloud=cloud, chi=chi, kernel_config=KernelConfig(),
                                  region=(z > 0.55).astype(int))
    assert assembler.stats.interface_sides == 2

    e = np.zeros(11)
    u = 0.5 + rng.random(11)
    matrix = assembler.assemble(e, f, 0.1, lagged=lagged)
    rhs = assembler.interior_rhs(e, g, u, 0.1, lagged=lagged)
    q = assembler.vertical_flux(np.arange(10), np.arange(1, 11), u, f, g, lagged=lagged)
    residual = (matrix @ u)[assembler.interior] - rhs
    np.testing.assert_allclose(residual, (q[1:] - q[:-1]) / 0.1, rtol=1e-10, atol=1e-10)

    q = assembler.vertical_flux(np.arange(10), np.arange(1, 11), lagged.u, f, g, lagged=lagged)
    k, h = lagged.conductivity, lagged.h
    assert q[5] == pytest.approx(-0.5 * (k[5] + k[6]) * ((h[6] - h[5]) / 0.1 + 1.0))
    # away from the interface the flux stays in Kirchhoff form
    expected = -half_node_flux(lagged.u[[2, 3]], chi[[2, 3]], f[[2, 3]], g[[2, 3]], 0.1)
    assert q[2] == pytest.approx(expected)


def test_dirichlet_and_neumann_rows():
    cloud = build_grid((1.0, 0.0, 1.0), (5, 1, 5), dims=2)
    config = KernelConfig(shape=0.6, n_s=5)
    domains = influence_domains(cloud, 5)

    bottom = cloud.node_index(2, 0, 0)
    row = boundary_row(cloud, domains[bottom], 'dirichlet', 1.0, config)
    np.testing.assert_array_equal(row.columns, [bottom])
    np.testing.assert_array_equal(row.weights, [1.0])

    lateral = cloud.node_index(0, 0, 2)
    np.testing.assert_array_equal(outward_normal(cloud, lateral), [-1.0, 0.0, 0.0])
    row = boundary_row(cloud, domains[lateral], 'neumann', 2.0, config)
    assert row.kind == 'neumann'
    for member in domains[lateral].members:
        v = basis_function(cloud, member, 0.6)
        exact = kernel_gradient(cloud.nodes[lateral], cloud.nodes[[member]], 0.6)[0] @ [-1.0, 0.0, 0.0]
        assert row.apply(v) == pytest.approx(-2.0 * exact, rel=1e-6, abs=1e-7)

    with pytest.raises(DomainError):
        boundary_row(cloud, domains[lateral], 'dirichlet', 1.0, config)
    with pytest.raises(DomainError):
        outward_normal(cloud, bottom)


def test_assembled_matrix_on_constants():
    cloud = build_grid((0.0, 0.0, 1.0), (1, 1, 11), dims=1)
    chi = np.linspace(1.0, 2.0, 11)
    assembler = OperatorAssembler(cloud=cloud, chi=chi, kernel_config=KernelConfig())
    e = np.full(11, 0.4)
    f = np.zeros(11)
    matrix = assembler.assemble(e, f, 0.1)
    assert matrix.shape == (11, 11)
    row_sums = matrix @ np.ones(11)
    np.testing.assert_allclose(row_sums[assembler.interior], 4.0, rtol=1e-12)
    np.testing.assert_allclose(row_sums[assembler.dirichlet], 1.0)
    assert assembler.stats.interior_signatures == 1


def test_gravity_source_at_a_saturation_front():
    cloud = build_grid((0.0, 0.0, 1.0), (1, 1, 11), dims=1)
    assembler = OperatorAssembler(cloud=cloud, chi=np.ones(11), kernel_config=KernelConfig())
    g = np.where(cloud.nodes[:, 2] > 0.75, 0.2, 0.0)
    rhs = assembler.interior_rhs(np.zeros(11), g, np.ones(11), 0.1)
    front = np.flatnonzero(assembler.interior == 7)[0]
    assert rhs[front] == pytest.approx(0.2 / (2 * 0.1))
    assert rhs[0] == 0.0


def test_neumann_setup_in_two_dimensions():
    cloud = build_grid((1.0, 0.0, 1.0), (5, 1, 5), dims=2)
    assembler = OperatorAssembler(cloud=cloud, chi=np.ones(cloud.size),
                                  kernel_config=KernelConfig(shape=0.6, n_s=5))
    assert len(assembler.neumann) == 6
    assert len(assembler.dirichlet) == 10
    assert assembler.stats.interior_signatures == 1
    assert assembler.stats.neumann_signatures >= 2
    matrix = assembler.assemble(np.zeros(cloud.size), np.zeros(cloud.size), 0.1)
    assert matrix[assembler.dirichlet[0], assembler.dirichlet[0]] == 1.0


def test_condition_limit_is_enforced():
    cloud = build_grid((1.0, 0.0, 1.0), (5, 1, 21), dims=2)
    config = KernelConfig(shape=0.6, n_s=3, condition_limit=10.0)
    with pytest.raises(IllConditionedError):
        OperatorAssembler(cloud=cloud, chi=np.ones(cloud.size), kernel_config=config)
