"""Periodic uniform mesh and node-centered fields with one ghost layer.

Every grid solver in this package stores its fields here. Values sit at the
cell corners x_i = i * h, i = 0 .. N-1 per dimension; the ghost shell holds
the periodic images so stencils never branch on the boundary.
"""

import numpy as np

GHOST_WIDTH = 1
MIN_CELLS = 4


class UniformMesh(object):
  """Periodic box [0, L_x) x [0, L_y) x [0, L_z) with N_d cells per dimension."""

  def __init__(self, cells, extent):
    cells = tuple(int(n) for n in np.broadcast_to(cells, (3,)))
    extent = tuple(float(l) for l in np.broadcast_to(extent, (3,)))
    for n in cells:
      if n < MIN_CELLS:
        raise ValueError('cells per dimension must be >= %d, got %s' %
                         (MIN_CELLS, cells))
    for l in extent:
      if not np.isfinite(l) or l <= 0.:
        raise ValueError('extent must be positive and finite, got %s' %
                         (extent,))
    self.cells = cells
    self.extent = extent
    self.spacing = tuple(l / n for l, n in zip(extent, cells))
    self.origin = (0., 0., 0.)

  @property
  def node_count(self):
    return self.cells[0] * self.cells[1] * self.cells[2]

  @property
  def cell_volume(self):
    hx, hy, hz = self.spacing
    return hx * hy * hz

  @property
  def volume(self):
    lx, ly, lz = self.extent
    return lx * ly * lz

  def node_coordinates(self):
    """Returns the three 1D arrays of owned node coordinates."""
    return tuple(np.arange(n) * h for n, h in zip(self.cells, self.spacing))

  def node_mesh(self):
    """Returns X, Y, Z broadcast over the owned nodes (ij indexing)."""
    return np.meshgrid(*self.node_coordinates(), indexing='ij')

  def __eq__(self, other):
    return (isinstance(other, UniformMesh) and self.cells == other.cells and
            self.extent == other.extent)

  def __ne__(self, other):
    return not self == other

  def __hash__(self):
    return hash((self.cells, self.extent))

  def __repr__(self):
    return 'UniformMesh(cells=%s, extent=%s)' % (self.cells, self.extent)


class ScalarGrid(object):
  """Real nodal field over a mesh, stored with a ghost shell of width 1."""

  def __init__(self, mesh, values=None):
    self.mesh = mesh
    self.ghost_width = GHOST_WIDTH
    shape = tuple(n + 2 * GHOST_WIDTH for n in mesh.cells)
    if values is None:
      values = np.zeros(shape)
    elif values.shape != shape:
      raise ValueError('values shape %s does not match padded mesh shape %s' %
                       (values.shape, shape))
    self.values = values

  @classmethod
  def from_owned(cls, mesh, owned):
    """Builds a grid from owned node values and fills its ghosts."""
    owned = np.asarray(owned, dtype=float)
    if owned.shape != mesh.cells:
      raise ValueError('owned shape %s does not match mesh cells %s' %
                       (owned.shape, mesh.cells))
    return cls(mesh, np.pad(owned, GHOST_WIDTH, mode='wrap'))

  @property
  def owned(self):
    """View of the owned nodes; writes go through to the grid."""
    g = self.ghost_width
    return self.values[g:-g, g:-g, g:-g]

  def copy(self):
    return ScalarGrid(self.mesh, self.values.copy())


class VectorGrid(object):
  """Three ScalarGrid components on one mesh."""

  def __init__(self, mesh, components=None):
    if components is None:
      components = [ScalarGrid(mesh) for _ in range(3)]
    if len(components) != 3:
      raise ValueError('a VectorGrid needs 3 components, got %d' %
                       len(components))
    for c in components:
      if c.mesh != mesh:
        raise ValueError('component mesh %r differs from %r' % (c.mesh, mesh))
    self.mesh = mesh
    self.components = list(components)

  def __getitem__(self, d):
    return self.components[d]

  def __iter__(self):
    return iter(self.components)

  def owned(self):
    """Returns the (3, Nx, Ny, Nz) stack of owned values."""
    return np.stack([c.owned for c in self.components])


def sync_ghosts(grid):
  """Fills the ghost shell of `grid` with the periodic images of owned nodes.

  Corners and edges are wrapped as well. Works in place and returns the grid.
  """
  if grid.ghost_width != GHOST_WIDTH:
    raise ValueError('only ghost width %d is supported' % GHOST_WIDTH)
  v = grid.values
  # Axis by axis; each pass copies already-wrapped faces into the edges.
  v[0, :, :] = v[-2, :, :]
  v[-1, :, :] = v[1, :, :]
  v[:, 0, :] = v[:, -2, :]
  v[:, -1, :] = v[:, 1, :]
  v[:, :, 0] = v[:, :, -2]
  v[:, :, -1] = v[:, :, 1]
  return grid


def gradient_central(phi):
  """E = -grad(phi) by second-order central differences.

  Args:
    phi: ScalarGrid with synchronized ghosts.
  Returns:
    VectorGrid with synchronized ghosts.
  """
  mesh = phi.mesh
  v = phi.values
  components = []
  for d, h in enumerate(mesh.spacing):
    plus = [slice(1, -1)] * 3
    minus = [slice(1, -1)] * 3
    plus[d] = slice(2, None)
    minus[d] = slice(None, -2)
    owned = -(v[tuple(plus)] - v[tuple(minus)]) / (2. * h)
    components.append(ScalarGrid.from_owned(mesh, owned))
  return VectorGrid(mesh, components)


def integrate(grid):
  """Returns (sum of owned values) * hx * hy * hz."""
  # Contiguous copy: summation order then matches any other owned-array sum.
  total = float(np.sum(np.ascontiguousarray(grid.owned)))
  return total * grid.mesh.cell_volume


def field_energy_component(E, d):
  """Returns 1/2 * integral of E_d^2 (eps_0 = 1)."""
  if d not in (0, 1, 2):
    raise ValueError('dimension must be 0, 1 or 2, got %r' % (d,))
  owned = E[d].owned
  return 0.5 * float(np.sum(owned * owned)) * E.mesh.cell_volume


def field_energy(E):
  """Total electrostatic energy, summed over the three components."""
  return sum(field_energy_component(E, d) for d in range(3))
