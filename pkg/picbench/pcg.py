"""Matrix-free finite-difference Poisson solve by preconditioned CG.

The operator is A = -Laplace_h with the 7-point stencil and periodic wrap. It
is singular (constants are in its nullspace), so right-hand sides are made
mean-free and every CG iterate is projected back onto the mean-zero subspace.
"""

import logging
import math

import numba
import numpy as np

from picbench.mesh import ScalarGrid, gradient_central

PRECONDITIONERS = ('none', 'jacobi', 'ssor')


class NonConvergenceError(RuntimeError):
  """CG hit its iteration limit before reaching the requested tolerance."""

  def __init__(self, iterations, residual, solution):
    super(NonConvergenceError, self).__init__(
        'CG did not converge in %d iterations (relative residual %.3e)' %
        (iterations, residual))
    self.iterations = iterations
    self.residual = residual
    self.solution = solution
    self.step = None


class IndefinitePreconditionerError(ArithmeticError):
  """<r, M^-1 r> came out negative."""


class CgConfig(object):
  """Tolerance, iteration limit, preconditioner and warm-start settings."""

  def __init__(self, tolerance=1e-4, max_iterations=None, preconditioner='none',
               omega=math.pi / 2., inner_iterations=4, outer_iterations=2,
               warm_start=True):
    self.tolerance = tolerance
    self.max_iterations = max_iterations
    self.preconditioner = preconditioner
    self.omega = omega
    self.inner_iterations = inner_iterations
    self.outer_iterations = outer_iterations
    self.warm_start = warm_start
    self.validate()

  def validate(self):
    if not self.tolerance > 0.:
      raise ValueError('tolerance must be positive, got %r' % self.tolerance)
    if self.preconditioner not in PRECONDITIONERS:
      raise ValueError('unknown preconditioner %r, expected one of %s' %
                       (self.preconditioner, PRECONDITIONERS))
    if not 0. < self.omega < 2.:
      raise ValueError('omega must lie in (0, 2), got %r' % self.omega)
    if self.inner_iterations < 1 or self.outer_iterations < 1:
      raise ValueError('SSOR sweep counts must be >= 1, got %d/%d' %
                       (self.inner_iterations, self.outer_iterations))
    if self.max_iterations is not None and self.max_iterations < 1:
      raise ValueError('max_iterations must be >= 1, got %r' %
                       self.max_iterations)

  def iteration_limit(self, mesh):
    if self.max_iterations is not None:
      return self.max_iterations
    return 10 * max(mesh.cells)


class StencilOperator(object):
  """A = -Laplace_h: diagonal sum_d 2/h_d^2, neighbour coupling 1/h_d^2."""

  def __init__(self, mesh):
    self.mesh = mesh
    self.coupling = tuple(1. / (h * h) for h in mesh.spacing)
    self.diagonal = 2. * sum(self.coupling)

  def apply_owned(self, owned):
    return apply_laplacian_fd(ScalarGrid.from_owned(self.mesh, owned)).owned


def apply_laplacian_fd(x):
  """y(i) = sum_d (2 x(i) - x(i+e_d) - x(i-e_d)) / h_d^2.

  Args:
    x: ScalarGrid with synchronized ghosts.
  Returns:
    ScalarGrid with synchronized ghosts.
  """
  v = x.values
  center = v[1:-1, 1:-1, 1:-1]
  y = np.zeros_like(center)
  for d, h in enumerate(x.mesh.spacing):
    plus = [slice(1, -1)] * 3
    minus = [slice(1, -1)] * 3
    plus[d] = slice(2, None)
    minus[d] = slice(None, -2)
    y += (2. * center - v[tuple(plus)] - v[tuple(minus)]) / (h * h)
  return ScalarGrid.from_owned(x.mesh, y)


def apply_jacobi(r, operator=None):
  """z = r / diag(A)."""
  operator = operator or StencilOperator(r.mesh)
  return ScalarGrid.from_owned(r.mesh, r.owned / operator.diagonal)


@numba.njit(cache=True)
def _ssor_sweeps(r, diagonal, cx, cy, cz, omega, inner, outer):
  nx, ny, nz = r.shape
  z = np.zeros_like(r)
  for _ in range(outer):
    for _ in range(inner):
      for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        ip = i + 1 if i < nx - 1 else 0
        for j in range(ny):
          jm = j - 1 if j > 0 else ny - 1
          jp = j + 1 if j < ny - 1 else 0
          for k in range(nz):
            km = k - 1 if k > 0 else nz - 1
            kp = k + 1 if k < nz - 1 else 0
            off = (cx * (z[ip, j, k] + z[im, j, k]) +
                   cy * (z[i, jp, k] + z[i, jm, k]) +
                   cz * (z[i, j, kp] + z[i, j, km]))
            z[i, j, k] = ((1. - omega) * z[i, j, k] +
                          omega * (r[i, j, k] + off) / diagonal)
    for _ in range(inner):
      for i in range(nx - 1, -1, -1):
        im = i - 1 if i > 0 else nx - 1
        ip = i + 1 if i < nx - 1 else 0
        for j in range(ny - 1, -1, -1):
          jm = j - 1 if j > 0 else ny - 1
          jp = j + 1 if j < ny - 1 else 0
          for k in range(nz - 1, -1, -1):
            km = k - 1 if k > 0 else nz - 1
            kp = k + 1 if k < nz - 1 else 0
            off = (cx * (z[ip, j, k] + z[im, j, k]) +
                   cy * (z[i, jp, k] + z[i, jm, k]) +
                   cz * (z[i, j, kp] + z[i, j, km]))
            z[i, j, k] = ((1. - omega) * z[i, j, k] +
                          omega * (r[i, j, k] + off) / diagonal)
  return z


def ssor_owned(r, operator, omega, inner, outer):
  """SSOR applied to a bare (Nx, Ny, Nz) array; see apply_ssor."""
  cx, cy, cz = operator.coupling
  return _ssor_sweeps(np.ascontiguousarray(r, dtype=np.float64),
                      float(operator.diagonal), float(cx), float(cy),
                      float(cz), float(omega), int(inner), int(outer))


def apply_ssor(r, omega=math.pi / 2., inner=4, outer=2, operator=None):
  """Approximates A^-1 r with symmetric SOR sweeps from a zero guess.

  Each of the `outer` sweeps runs `inner` lexicographic forward passes, then
  `inner` backward passes. Starting from zero every call makes the result a
  fixed symmetric linear map of r, which CG requires of a preconditioner.
  The sweeps are sequential, so the result is reproducible bitwise.

  Args:
    r: ScalarGrid residual.
    omega: relaxation factor in (0, 2).
    inner: passes per direction.
    outer: forward/backward sweep pairs.
    operator: object with `diagonal` and `coupling`; defaults to the
      stencil operator of r's mesh.
  Returns:
    ScalarGrid.
  """
  if not 0. < omega < 2.:
    raise ValueError('omega must lie in (0, 2), got %r' % omega)
  operator = operator or StencilOperator(r.mesh)
  return ScalarGrid.from_owned(
      r.mesh, ssor_owned(r.owned, operator, omega, inner, outer))


def _project(a):
  a -= np.mean(a)
  return a


def cg_solve(apply_A, b, config, x0=None, precondition=None, history=None):
  """Preconditioned CG on the mean-zero subspace.

  Args:
    apply_A: callable array -> array, symmetric positive semi-definite with
      the constants as nullspace.
    b: mean-zero right-hand side array.
    config: CgConfig (tolerance and max_iterations are used here).
    x0: optional starting guess; its mean is removed.
    precondition: optional callable r -> z approximating A^-1 r.
    history: optional list receiving the relative residual of every iterate,
      the starting guess included.
  Returns:
    (x, iterations, final_relative_residual).
  Raises:
    NonConvergenceError: the iteration limit was hit.
    IndefinitePreconditionerError: <r, M^-1 r> < 0.
  """
  b = np.asarray(b, dtype=float)
  b_norm = np.linalg.norm(b)
  if b_norm == 0.:
    if history is not None:
      history.append(0.)
    return np.zeros_like(b), 0, 0.

  if x0 is None:
    x = np.zeros_like(b)
    r = b.copy()
  else:
    x = _project(np.array(x0, dtype=float))
    r = _project(b - apply_A(x))

  def preconditioned(r):
    if precondition is None:
      return r.copy()
    z = _project(np.asarray(precondition(r), dtype=float))
    return z

  residual = np.linalg.norm(r) / b_norm
  if history is not None:
    history.append(residual)
  if residual == 0.:
    return x, 0, residual

  z = preconditioned(r)
  rz = np.vdot(r, z)
  if rz < 0.:
    raise IndefinitePreconditionerError('<r, M^-1 r> = %.3e < 0' % rz)
  p = z.copy()

  limit = config.max_iterations or 10 * max(b.shape)
  iterations = 0
  while iterations < limit:
    iterations += 1
    Ap = apply_A(p)
    alpha = rz / np.vdot(p, Ap)
    x += alpha * p
    r -= alpha * Ap
    _project(x)
    _project(r)
    residual = np.linalg.norm(r) / b_norm
    if history is not None:
      history.append(residual)
    if residual <= config.tolerance:
      return x, iterations, residual
    z = preconditioned(r)
    rz_next = np.vdot(r, z)
    if rz_next < 0.:
      raise IndefinitePreconditionerError(
          '<r, M^-1 r> = %.3e < 0 at iteration %d' % (rz_next, iterations))
    p = z + (rz_next / rz) * p
    rz = rz_next
  raise NonConvergenceError(iterations, residual, x)


def make_preconditioner(config, operator):
  """Returns the array -> array preconditioner named by config, or None."""
  if config.preconditioner == 'jacobi':
    return lambda r: r / operator.diagonal
  if config.preconditioner == 'ssor':
    return lambda r: ssor_owned(r, operator, config.omega,
                                config.inner_iterations,
                                config.outer_iterations)
  return None


def solve_poisson_pcg(rho, config, previous_phi=None):
  """Solves -Laplace_h phi = rho - mean(rho) matrix-free with PCG.

  Args:
    rho: ScalarGrid charge density.
    config: CgConfig.
    previous_phi: ScalarGrid used as the starting guess when
      config.warm_start is set.
  Returns:
    (phi, E, iterations).
  """
  mesh = rho.mesh
  operator = StencilOperator(mesh)
  b = rho.owned - np.mean(rho.owned)
  x0 = None
  if config.warm_start and previous_phi is not None:
    x0 = previous_phi.owned
  limited = CgConfig(config.tolerance, config.iteration_limit(mesh),
                     config.preconditioner, config.omega,
                     config.inner_iterations, config.outer_iterations,
                     config.warm_start)
  x, iterations, residual = cg_solve(operator.apply_owned, b, limited, x0,
                                     make_preconditioner(config, operator))
  logging.debug('PCG (%s): %d iterations, relative residual %.3e',
                config.preconditioner, iterations, residual)
  phi = ScalarGrid.from_owned(mesh, x)
  return phi, gradient_central(phi), iterations
