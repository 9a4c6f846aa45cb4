"""Macro-particle ensemble, Landau initial loading, CIC scatter/gather, push.

Normalized plasma units throughout: eps_0 = 1, electron charge -1, electron
mass 1, mean electron density 1. A macro-particle therefore carries charge
-V/N_p and mass V/N_p, and q/m = -1 for every particle.
"""

import logging

import numpy as np
from scipy import special
from scipy.stats import qmc

from picbench.mesh import ScalarGrid

ELECTRON_CHARGE = -1.
ELECTRON_MASS = 1.

NEWTON_TOLERANCE = 1e-12
NEWTON_MAX_ITERATIONS = 50

LOADINGS = ('random', 'quiet')


class ParticleEnsemble(object):
  """Structure-of-arrays particle storage with uniform macro charge and mass."""

  def __init__(self, positions, velocities, macro_charge, macro_mass):
    positions = np.ascontiguousarray(positions, dtype=float)
    velocities = np.ascontiguousarray(velocities, dtype=float)
    if positions.ndim != 2 or positions.shape[1] != 3:
      raise ValueError('positions must have shape (N_p, 3), got %s' %
                       (positions.shape,))
    if velocities.shape != positions.shape:
      raise ValueError('velocities shape %s differs from positions shape %s' %
                       (velocities.shape, positions.shape))
    if macro_mass <= 0.:
      raise ValueError('macro_mass must be positive, got %r' % macro_mass)
    self.positions = positions
    self.velocities = velocities
    self.macro_charge = float(macro_charge)
    self.macro_mass = float(macro_mass)

  @property
  def count(self):
    return self.positions.shape[0]

  @property
  def charge_to_mass(self):
    return self.macro_charge / self.macro_mass

  @property
  def charges(self):
    return np.full(self.count, self.macro_charge)

  def total_charge(self):
    return self.macro_charge * self.count

  def copy(self):
    return ParticleEnsemble(self.positions.copy(), self.velocities.copy(),
                            self.macro_charge, self.macro_mass)


def _inverse_cdf(u, alpha, kmode, length):
  """Solves (x + (alpha/k) sin(k x)) / L = u for x in [0, L) by Newton."""
  target = u * length
  x = target.copy()
  amplitude = alpha / kmode
  for _ in range(NEWTON_MAX_ITERATIONS):
    step = (x + amplitude * np.sin(kmode * x) - target) / (
        1. + alpha * np.cos(kmode * x))
    x -= step
    if np.max(np.abs(step), initial=0.) <= NEWTON_TOLERANCE * length:
      break
  else:
    logging.warning('inverse CDF Newton stopped after %d iterations',
                    NEWTON_MAX_ITERATIONS)
  return np.clip(x, 0., np.nextafter(length, 0.))


def _box_muller(u1, u2):
  # 1 - u1 lies in (0, 1], so the log is finite.
  return np.sqrt(-2. * np.log1p(-u1)) * np.cos(2. * np.pi * u2)


def sample_landau(mesh, particles_per_cell, alpha, kmode, seed,
                  loading='random'):
  """Samples the weak Landau damping initial ensemble.

  Positions follow (1 + alpha cos(k x_d)) / L_d independently per dimension,
  velocities a unit Maxwellian.

  Args:
    mesh: UniformMesh with kmode * L_d = 2 pi in every dimension.
    particles_per_cell: macro-particles per mesh cell.
    alpha: perturbation amplitude, 0 <= alpha < 1.
    kmode: perturbation wave number.
    seed: unsigned 64-bit seed; the same seed gives the same ensemble.
    loading: 'random' draws pseudo-random uniforms and Box-Muller normals;
      'quiet' uses scrambled Sobol points and inverse-CDF normals.
  Returns:
    ParticleEnsemble.
  """
  if not 0. <= alpha < 1.:
    raise ValueError('alpha must satisfy 0 <= alpha < 1, got %r' % alpha)
  if particles_per_cell <= 0:
    raise ValueError('particles_per_cell must be positive, got %r' %
                     particles_per_cell)
  if kmode <= 0.:
    raise ValueError('kmode must be positive, got %r' % kmode)
  for length in mesh.extent:
    if not np.isclose(kmode * length, 2. * np.pi, rtol=1e-12, atol=0.):
      raise ValueError('kmode * L must equal 2 pi, got L=%r for k=%r' %
                       (length, kmode))
  if loading not in LOADINGS:
    raise ValueError('unknown loading %r, expected one of %s' %
                     (loading, LOADINGS))

  count = int(particles_per_cell) * mesh.node_count
  if loading == 'random':
    rng = np.random.default_rng(np.uint64(seed))
    position_u = rng.random((count, 3))
    velocities = _box_muller(rng.random((count, 3)), rng.random((count, 3)))
  else:
    sobol = qmc.Sobol(d=6, scramble=True, seed=np.random.default_rng(
        np.uint64(seed)))
    u = sobol.random(count)
    position_u = u[:, :3]
    tiny = np.finfo(float).eps
    velocities = special.ndtri(np.clip(u[:, 3:], tiny, 1. - tiny))

  positions = np.empty((count, 3))
  for d, length in enumerate(mesh.extent):
    positions[:, d] = _inverse_cdf(position_u[:, d], alpha, kmode, length)

  weight = mesh.volume / count
  return ParticleEnsemble(positions, np.ascontiguousarray(velocities),
                          ELECTRON_CHARGE * weight, ELECTRON_MASS * weight)


def _cell_corners(positions, mesh):
  """Lower and upper node index and fractional offset per point and axis."""
  cells = np.array(mesh.cells)
  s = positions / np.array(mesh.spacing)
  lower = np.floor(s).astype(np.int64)
  # x / h can round up to N for x just below L; that is node 0 with weight 1.
  lower = np.minimum(lower, cells - 1)
  frac = s - lower
  upper = (lower + 1) % cells
  return lower % cells, upper, frac


def cic_stencil(positions, mesh):
  """Flat node indices and trilinear weights of the 8 nodes around each point.

  Returns:
    (indices, weights), both of shape (8, N_p); indices address the owned
    nodes in C order.
  """
  lower, upper, frac = _cell_corners(positions, mesh)
  nx, ny, nz = mesh.cells
  indices = np.empty((8, positions.shape[0]), dtype=np.int64)
  weights = np.empty((8, positions.shape[0]))
  corner = 0
  for a in (0, 1):
    ix = upper[:, 0] if a else lower[:, 0]
    wx = frac[:, 0] if a else 1. - frac[:, 0]
    for b in (0, 1):
      iy = upper[:, 1] if b else lower[:, 1]
      wy = frac[:, 1] if b else 1. - frac[:, 1]
      for c in (0, 1):
        iz = upper[:, 2] if c else lower[:, 2]
        wz = frac[:, 2] if c else 1. - frac[:, 2]
        indices[corner] = (ix * ny + iy) * nz + iz
        weights[corner] = wx * wy * wz
        corner += 1
  return indices, weights


def scatter_cic(ensemble, mesh, charges=None):
  """Deposits charge density rho onto the mesh nodes (cloud-in-cell).

  Args:
    ensemble: ParticleEnsemble with in-domain positions.
    mesh: UniformMesh.
    charges: optional per-particle charges overriding the uniform macro charge.
  Returns:
    ScalarGrid of rho with synchronized ghosts.
  """
  indices, weights = cic_stencil(ensemble.positions, mesh)
  if charges is None:
    weights = weights * (ensemble.macro_charge / mesh.cell_volume)
  else:
    weights = weights * (np.asarray(charges, dtype=float) / mesh.cell_volume)
  # bincount reduces sequentially, so the deposit is reproducible.
  rho = np.bincount(indices.ravel(), weights=weights.ravel(),
                    minlength=mesh.node_count)
  return ScalarGrid.from_owned(mesh, rho.reshape(mesh.cells))


def gather_cic(field, positions):
  """Trilinear interpolation of each VectorGrid component at `positions`.

  Returns:
    Array of shape (N_p, 3).
  """
  lower, upper, frac = _cell_corners(positions, field.mesh)
  corners = tuple((lower[:, d], upper[:, d]) for d in range(3))
  fx, fy, fz = frac.T
  out = np.empty((positions.shape[0], 3))
  for d, component in enumerate(field):
    owned = component.owned
    # Nested linear interpolation, z then y then x; a constant field comes
    # back bit for bit.
    values = [[[owned[ix, iy, iz] for iz in corners[2]] for iy in corners[1]]
              for ix in corners[0]]
    planes = [[v0 + fz * (v1 - v0) for v0, v1 in row] for row in values]
    lines = [p0 + fy * (p1 - p0) for p0, p1 in planes]
    out[:, d] = lines[0] + fx * (lines[1] - lines[0])
  return out


def kick_velocities(velocities, E, dt, charge_to_mass, B_ext=None):
  """Velocity update over dt; Boris rotation when B_ext is nonzero."""
  if B_ext is None or not np.any(B_ext):
    return velocities + (charge_to_mass * dt) * E
  B = np.asarray(B_ext, dtype=float)
  half = 0.5 * charge_to_mass * dt
  v_minus = velocities + half * E
  t = half * B
  s = 2. * t / (1. + np.dot(t, t))
  v_prime = v_minus + np.cross(v_minus, t)
  v_plus = v_minus + np.cross(v_prime, s)
  return v_plus + half * E


def push(ensemble, E_at_particles, dt, B_ext=None):
  """Leapfrog kick then drift; the kick is a Boris step when B_ext != 0."""
  if dt <= 0.:
    raise ValueError('dt must be positive, got %r' % dt)
  E = np.asarray(E_at_particles, dtype=float)
  if E.shape != ensemble.positions.shape:
    raise ValueError('field shape %s does not match %d particles' %
                     (E.shape, ensemble.count))
  ensemble.velocities = kick_velocities(ensemble.velocities, E, dt,
                                        ensemble.charge_to_mass, B_ext)
  ensemble.positions += ensemble.velocities * dt
  return ensemble


def apply_periodic(ensemble, mesh):
  """Wraps every coordinate into [0, L_d)."""
  x = ensemble.positions
  if not np.all(np.isfinite(x)):
    raise ValueError('non-finite particle positions')
  L = np.array(mesh.extent)
  wrapped = np.mod(x, L)
  # np.mod can return L itself for tiny negative inputs.
  wrapped = np.where(wrapped >= L, wrapped - L, wrapped)
  ensemble.positions = wrapped
  return ensemble
