import numpy as np
import pytest

from picbench import fem, particles, pcg
from picbench.mesh import ScalarGrid, UniformMesh, integrate


def _grid(mesh, owned):
  return ScalarGrid.from_owned(mesh, owned)


def _assembled(operator):
  """Explicit global matrix from the element matrix and the DOF map."""
  size = operator.dofmap.dof_count
  matrix = np.zeros((size, size))
  for dofs in operator.dofmap.connectivity:
    matrix[np.ix_(dofs, dofs)] += operator.element_matrix
  return matrix


@pytest.fixture
def operator(cube8):
  return fem.FemOperator(cube8)


def test_basis_partition_of_unity():
  element = fem.ReferenceHexElement()
  values = element.basis(element.points)
  np.testing.assert_allclose(values.sum(axis=1), 1., rtol=0., atol=1e-14)


def test_basis_is_nodal():
  element = fem.ReferenceHexElement()
  values = element.basis(element.vertex_offsets.astype(float))
  np.testing.assert_array_equal(values, np.eye(8))


def test_element_stiffness_row_sums_vanish():
  stiffness = fem.compute_element_stiffness((0.3, 1.7, 0.05))
  np.testing.assert_allclose(stiffness.sum(axis=1), 0., rtol=0.,
                             atol=1e-14 * np.abs(stiffness).max())


def test_element_stiffness_is_symmetric():
  stiffness = fem.compute_element_stiffness((0.3, 1.7, 0.05))
  np.testing.assert_array_equal(stiffness, stiffness.T)


def test_element_stiffness_matches_high_order_quadrature():
  h = (0.4, 0.9, 1.3)
  np.testing.assert_allclose(fem.compute_element_stiffness(h),
                             fem.compute_element_stiffness(h, quad_order=5),
                             rtol=1e-13, atol=1e-15)


def test_element_stiffness_of_unit_cube():
  stiffness = fem.compute_element_stiffness(1.)
  np.testing.assert_allclose(np.diag(stiffness), 1. / 3., rtol=1e-14)
  # Vertices 0 and 7 are opposite corners.
  assert np.isclose(stiffness[0, 7], -1. / 12., rtol=1e-14)


def test_element_stiffness_rejects_bad_spacing():
  with pytest.raises(ValueError):
    fem.compute_element_stiffness((1., 0., 1.))


def test_every_dof_belongs_to_eight_elements(cube8):
  dofmap = fem.PeriodicDofMap(cube8)
  assert dofmap.connectivity.shape == (cube8.node_count, 8)
  np.testing.assert_array_equal(dofmap.incidence(), 8)


def test_connectivity_wraps_each_axis_separately():
  mesh = UniformMesh((4, 5, 6), (1., 2., 3.))
  dofmap = fem.PeriodicDofMap(mesh)
  element = np.array(np.unravel_index(np.arange(mesh.node_count), mesh.cells))
  for v, offset in enumerate(fem.ReferenceHexElement().vertex_offsets):
    expected = np.ravel_multi_index(element + offset[:, None], mesh.cells,
                                    mode='wrap')
    np.testing.assert_array_equal(dofmap.connectivity[:, v], expected)
  # Last element along x wraps its +x vertices back to i = 0.
  last = np.ravel_multi_index((3, 0, 0), mesh.cells)
  assert dofmap.connectivity[last, 1] == 0


def test_operator_annihilates_constants(operator, cube8):
  x = np.full(cube8.cells, 2.5)
  y = operator.evaluate_Ax(x)
  np.testing.assert_allclose(y, 0., atol=1e-12 * np.linalg.norm(x))


def test_operator_is_symmetric(operator, cube8, rng):
  for _ in range(20):
    x = rng.normal(size=cube8.cells)
    y = rng.normal(size=cube8.cells)
    assert np.isclose(np.vdot(operator.evaluate_Ax(x), y),
                      np.vdot(x, operator.evaluate_Ax(y)), rtol=1e-12)


def test_operator_matches_assembled_matrix(operator, cube8, rng):
  x = rng.normal(size=cube8.cells)
  expected = _assembled(operator) @ x.ravel()
  np.testing.assert_allclose(operator.evaluate_Ax(x).ravel(), expected,
                             rtol=1e-12, atol=1e-12 * np.abs(expected).max())


def test_operator_is_reproducible(operator, cube8, rng):
  x = rng.normal(size=cube8.cells)
  np.testing.assert_array_equal(operator.evaluate_Ax(x),
                                operator.evaluate_Ax(x))


def test_lumped_load_of_constant(operator, cube8):
  load = operator.assemble_load(_grid(cube8, np.full(cube8.cells, 3.)))
  np.testing.assert_allclose(load, 3. * cube8.cell_volume, rtol=1e-15)


def test_lumped_load_sums_to_integral(rng):
  mesh = UniformMesh(8, 4.)
  rho = _grid(mesh, rng.normal(size=mesh.cells))
  load = fem.FemOperator(mesh).assemble_load(rho)
  assert np.sum(load) == integrate(rho)


def test_lumped_and_consistent_loads_differ_at_second_order():
  differences = []
  for n in (16, 32):
    mesh = UniformMesh(n, 4. * np.pi)
    X, _, _ = mesh.node_mesh()
    operator = fem.FemOperator(mesh)
    rho = _grid(mesh, np.cos(0.5 * X))
    consistent = operator.assemble_consistent_load(rho)
    lumped = operator.assemble_load(rho)
    assert np.isclose(
        np.sum(operator.assemble_consistent_load(_grid(mesh, np.ones(
            mesh.cells)))), mesh.volume, rtol=1e-12)
    differences.append(np.max(np.abs(consistent - lumped)) /
                       mesh.cell_volume)
  assert abs(np.log2(differences[0] / differences[1]) - 2.) < 0.2


def test_diagonal_is_eight_element_diagonals(operator):
  expected = np.diag(_assembled(operator)).reshape(operator.mesh.cells)
  np.testing.assert_allclose(operator.diagonal, expected, rtol=1e-14)
  np.testing.assert_allclose(operator.diagonal,
                             8. * operator.element_matrix[0, 0], rtol=1e-14)


def test_jacobi_precondition_fem(operator, cube8):
  r = _grid(cube8, operator.diagonal.copy())
  np.testing.assert_allclose(fem.jacobi_precond_fem(r, operator).owned, 1.,
                             rtol=1e-15)


def test_solve_zero_density(cube8):
  phi, _, iterations = fem.solve_poisson_fem(ScalarGrid(cube8),
                                             pcg.CgConfig())
  assert iterations == 0
  assert np.all(phi.owned == 0.)


def test_solve_matches_dense_pseudo_inverse(operator, cube8, rng):
  rho = rng.uniform(-0.5, 0.5, size=cube8.cells)
  phi, _, _ = fem.solve_poisson_fem(_grid(cube8, rho),
                                    pcg.CgConfig(tolerance=1e-8))
  load = operator.assemble_load(_grid(cube8, rho))
  load -= load.mean()
  expected = np.linalg.pinv(_assembled(operator)) @ load.ravel()
  np.testing.assert_allclose(phi.owned.ravel(), expected, rtol=0., atol=1e-6)


def test_solve_converges_second_order():
  errors = []
  for n in (16, 32):
    mesh = UniformMesh(n, 4. * np.pi)
    X, _, _ = mesh.node_mesh()
    phi, _, _ = fem.solve_poisson_fem(_grid(mesh, np.cos(0.5 * X)),
                                      pcg.CgConfig(tolerance=1e-8))
    errors.append(np.max(np.abs(phi.owned - np.cos(0.5 * X) / 0.25)))
  assert abs(np.log2(errors[0] / errors[1]) - 2.) < 0.15


def test_fem_and_fd_operators_agree_to_second_order():
  differences = []
  for n in (16, 32):
    mesh = UniformMesh(n, 4. * np.pi)
    X, Y, _ = mesh.node_mesh()
    x = np.cos(0.5 * X) * np.cos(0.5 * Y)
    fe = fem.FemOperator(mesh).evaluate_Ax(x) / mesh.cell_volume
    fd = pcg.StencilOperator(mesh).apply_owned(x)
    differences.append(np.max(np.abs(fe - fd)) / np.max(np.abs(fd)))
  assert abs(np.log2(differences[0] / differences[1]) - 2.) < 0.3


def test_solver_rejects_ssor(cube8):
  with pytest.raises(ValueError):
    fem.solve_poisson_fem(ScalarGrid(cube8),
                          pcg.CgConfig(preconditioner='ssor'))


def test_jacobi_does_not_add_iterations_on_landau_density(landau_mesh):
  ensemble = particles.sample_landau(landau_mesh, 8, 0.05, 0.5, seed=1)
  rho = particles.scatter_cic(ensemble, landau_mesh)
  _, _, plain = fem.solve_poisson_fem(rho, pcg.CgConfig())
  _, _, jacobi = fem.solve_poisson_fem(rho,
                                       pcg.CgConfig(preconditioner='jacobi'))
  assert jacobi <= plain
