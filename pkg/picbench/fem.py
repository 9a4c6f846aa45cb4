"""Matrix-free trilinear (Q1) finite element Poisson solve.

The element matrix is computed once on the reference hexahedron; the global
operator is applied element by element, gathering the 8 vertex values through
a periodic DOF map and accumulating the products back onto the owned nodes.
Periodicity lives entirely in the DOF map, so there are no boundary branches.
"""

import functools
import logging

import numpy as np

from picbench import pcg
from picbench.mesh import ScalarGrid, gradient_central

VERTICES_PER_ELEMENT = 8


class ReferenceHexElement(object):
  """Trilinear basis on [0, 1]^3 with tensor Gauss-Legendre quadrature.

  Vertex i sits at offsets (a, b, c) with i = a + 2 b + 4 c.
  """

  def __init__(self, quad_order=2):
    if quad_order < 1:
      raise ValueError('quad_order must be >= 1, got %r' % quad_order)
    self.quad_order = quad_order
    i = np.arange(VERTICES_PER_ELEMENT)
    self.vertex_offsets = np.stack([i & 1, (i >> 1) & 1, (i >> 2) & 1],
                                   axis=1)
    points, weights = np.polynomial.legendre.leggauss(quad_order)
    points = 0.5 * (points + 1.)
    weights = 0.5 * weights
    grid = np.meshgrid(points, points, points, indexing='ij')
    self.points = np.stack([g.ravel() for g in grid], axis=1)
    wgrid = np.meshgrid(weights, weights, weights, indexing='ij')
    self.weights = (wgrid[0] * wgrid[1] * wgrid[2]).ravel()

  def _factors(self, xi):
    # (Q, 8, 3): the 1D factor of vertex i along dimension d at each point.
    xi = np.atleast_2d(xi)[:, None, :]
    return np.where(self.vertex_offsets[None, :, :] == 1, xi, 1. - xi)

  def basis(self, xi):
    """Values of the 8 basis functions at points xi of shape (Q, 3)."""
    return np.prod(self._factors(xi), axis=2)

  def basis_gradients(self, xi):
    """Reference gradients, shape (Q, 8, 3)."""
    factors = self._factors(xi)
    slopes = np.where(self.vertex_offsets == 1, 1., -1.)
    grads = np.empty(factors.shape)
    for d in range(3):
      others = [e for e in range(3) if e != d]
      grads[:, :, d] = (slopes[None, :, d] * factors[:, :, others[0]] *
                        factors[:, :, others[1]])
    return grads


def _check_spacing(h):
  h = tuple(float(v) for v in np.broadcast_to(h, (3,)))
  for v in h:
    if not v > 0.:
      raise ValueError('element spacing must be positive, got %s' % (h,))
  return h


def compute_element_stiffness(h, quad_order=2):
  """A^e_ij = integral over the element of grad b_i . grad b_j.

  Args:
    h: spacing triple (hx, hy, hz) or a scalar.
    quad_order: Gauss points per dimension; 2 is exact for Q1 gradients.
  Returns:
    (8, 8) symmetric matrix with zero row sums.
  """
  h = _check_spacing(h)
  element = ReferenceHexElement(quad_order)
  grads = element.basis_gradients(element.points) / np.array(h)
  jacobian = h[0] * h[1] * h[2]
  stiffness = np.einsum('q,qid,qjd->ij', element.weights * jacobian, grads,
                        grads)
  return 0.5 * (stiffness + stiffness.T)


def compute_element_mass(h, quad_order=2):
  """M^e_ij = integral over the element of b_i b_j (consistent mass)."""
  h = _check_spacing(h)
  element = ReferenceHexElement(quad_order)
  values = element.basis(element.points)
  jacobian = h[0] * h[1] * h[2]
  mass = np.einsum('q,qi,qj->ij', element.weights * jacobian, values, values)
  return 0.5 * (mass + mass.T)


class PeriodicDofMap(object):
  """Element-local vertex -> global owned node, wrapped periodically.

  Element (i, j, k) spans nodes (i + a, j + b, k + c) mod N. There are as
  many elements as DOFs and every DOF is touched by exactly 8 elements.
  """

  def __init__(self, mesh):
    self.mesh = mesh
    nx, ny, nz = mesh.cells
    self.dof_count = mesh.node_count
    self.element_count = mesh.node_count
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                          indexing='ij')
    offsets = ReferenceHexElement(1).vertex_offsets
    self.connectivity = np.empty((self.element_count, VERTICES_PER_ELEMENT),
                                 dtype=np.int64)
    for v, (a, b, c) in enumerate(offsets):
      self.connectivity[:, v] = ((((i + a) % nx) * ny + (j + b) % ny) * nz +
                                 (k + c) % nz).ravel()

  def incidence(self):
    """Number of elements referencing each DOF."""
    return np.bincount(self.connectivity.ravel(), minlength=self.dof_count)


class FemOperator(object):
  """Global Q1 stiffness operator on a periodic mesh, never assembled."""

  def __init__(self, mesh, quad_order=2):
    self.mesh = mesh
    self.dofmap = PeriodicDofMap(mesh)
    self.element_matrix = compute_element_stiffness(mesh.spacing, quad_order)
    self.diagonal = np.bincount(
        self.dofmap.connectivity.ravel(),
        weights=np.tile(np.diag(self.element_matrix),
                        self.dofmap.element_count),
        minlength=self.dofmap.dof_count).reshape(mesh.cells)

  def _element_loop(self, element_matrix, x):
    x = np.asarray(x, dtype=float)
    conn = self.dofmap.connectivity
    local = x.ravel()[conn] @ element_matrix.T
    y = np.bincount(conn.ravel(), weights=local.ravel(),
                    minlength=self.dofmap.dof_count)
    return y.reshape(x.shape)

  def evaluate_Ax(self, x):
    """y = sum_e scatter_e(A^e gather_e(x)); x is flat or mesh-shaped."""
    return self._element_loop(self.element_matrix, x)

  def assemble_load(self, rho):
    """Lumped load b_j = rho_j * hx * hy * hz, shaped like the mesh."""
    return rho.owned * self.mesh.cell_volume

  def assemble_consistent_load(self, rho):
    """b_j = integral of the trilinear interpolant of rho times b_j."""
    return self._element_loop(compute_element_mass(self.mesh.spacing),
                              rho.owned)

  def jacobi(self, r):
    return r / self.diagonal


@functools.lru_cache(maxsize=8)
def operator_for(mesh):
  """FemOperator for `mesh`, built once per mesh."""
  return FemOperator(mesh)


def jacobi_precond_fem(r, operator=None):
  """z = r / diag(A_global) for a ScalarGrid r."""
  operator = operator or operator_for(r.mesh)
  return ScalarGrid.from_owned(r.mesh, operator.jacobi(r.owned))


def solve_poisson_fem(rho, config, previous_phi=None):
  """Solves the Q1 weak Poisson problem with (Jacobi-)CG.

  Args:
    rho: ScalarGrid nodal charge density.
    config: pcg.CgConfig; its preconditioner must be 'none' or 'jacobi'.
    previous_phi: ScalarGrid starting guess used when config.warm_start.
  Returns:
    (phi, E, iterations).
  """
  if config.preconditioner not in ('none', 'jacobi'):
    raise ValueError('the FEM solver supports preconditioner none or jacobi, '
                     'got %r' % config.preconditioner)
  mesh = rho.mesh
  operator = operator_for(mesh)
  load = operator.assemble_load(rho)
  b = load - np.mean(load)
  x0 = None
  if config.warm_start and previous_phi is not None:
    x0 = previous_phi.owned
  limited = pcg.CgConfig(config.tolerance, config.iteration_limit(mesh),
                         config.preconditioner, warm_start=config.warm_start)
  precondition = operator.jacobi if config.preconditioner == 'jacobi' else None
  x, iterations, residual = pcg.cg_solve(operator.evaluate_Ax, b, limited, x0,
                                         precondition)
  logging.debug('FEM CG (%s): %d iterations, relative residual %.3e',
                config.preconditioner, iterations, residual)
  phi = ScalarGrid.from_owned(mesh, x)
  return phi, gradient_central(phi), iterations
