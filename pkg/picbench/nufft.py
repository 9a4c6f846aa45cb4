"""Type-1 and type-2 3D non-uniform FFTs by Gaussian gridding.

Coordinates are scaled to s = 2 pi x / L in [0, 2 pi). The type-1 transform

  f_hat(n) = sum_j w_j exp(-i n . s_j)

is computed by spreading the weights with a periodized Gaussian onto a grid
oversampled by sigma, taking an FFT, keeping the wanted modes and dividing
out the Gaussian's Fourier coefficients. The type-2 transform runs the same
linear steps backwards and is the exact adjoint of type-1.

Coefficient arrays are indexed in centered order: array index i holds mode
n = i - N // 2, so n runs over [-N/2, N/2 - 1] for even N.
"""

import logging
import math

import numba
import numpy as np

MIN_EPSILON = 1e-12
DEFAULT_SIGMA = 2.
# Decay of the Gaussian gridding error per fine-grid point of support.
_DECAY_PER_POINT = 2.09


class WindowAccuracyUnreachable(ValueError):
  """The requested accuracy needs a wider window than the fine grid allows."""


class ModeSet(object):
  """Fourier modes k_d = 2 pi n_d / L_d, n_d in [-N_d/2, N_d/2 - 1]."""

  def __init__(self, cells, extent):
    cells = tuple(int(n) for n in np.broadcast_to(cells, (3,)))
    extent = tuple(float(l) for l in np.broadcast_to(extent, (3,)))
    if min(cells) < 2:
      raise ValueError('a ModeSet needs at least 2 modes per dimension, got %s'
                       % (cells,))
    if not all(np.isfinite(l) and l > 0. for l in extent):
      raise ValueError('extent must be positive and finite, got %s' %
                       (extent,))
    self.cells = cells
    self.extent = extent

  @classmethod
  def from_mesh(cls, mesh):
    return cls(mesh.cells, mesh.extent)

  @property
  def count(self):
    return self.cells[0] * self.cells[1] * self.cells[2]

  def integer_modes(self):
    """Per-dimension arrays of n in centered order."""
    return tuple(np.arange(n) - n // 2 for n in self.cells)

  def wavenumbers(self):
    """Per-dimension arrays of k = 2 pi n / L in centered order."""
    return tuple(2. * np.pi * n / l
                 for n, l in zip(self.integer_modes(), self.extent))

  def scaled_points(self, points):
    """Maps physical points in [0, L) to s in [0, 2 pi) per dimension."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
      raise ValueError('points must have shape (N_p, 3), got %s' %
                       (points.shape,))
    if not np.all(np.isfinite(points)):
      raise ValueError('non-finite point coordinates')
    scaled = np.mod(points * (2. * np.pi / np.array(self.extent)), 2. * np.pi)
    return np.ascontiguousarray(scaled)

  def __eq__(self, other):
    return (isinstance(other, ModeSet) and self.cells == other.cells and
            self.extent == other.extent)

  def __ne__(self, other):
    return not self == other

  def __hash__(self):
    return hash((self.cells, self.extent))

  def __repr__(self):
    return 'ModeSet(cells=%s, extent=%s)' % (self.cells, self.extent)


class WindowSpec(object):
  """Gaussian spreading window on a fine grid of at least sigma * N cells."""

  def __init__(self, modes, sigma, fine_cells, half_width, tau, epsilon):
    self.modes = modes
    self.sigma = float(sigma)
    self.fine_cells = tuple(int(m) for m in fine_cells)
    self.half_width = int(half_width)
    self.tau = tuple(float(t) for t in tau)
    self.epsilon = float(epsilon)
    self.validate()

  def validate(self):
    if not self.sigma > 1.:
      raise ValueError('oversampling sigma must exceed 1, got %r' % self.sigma)
    if self.half_width < 1:
      raise ValueError('half_width must be >= 1, got %r' % self.half_width)
    for m in self.fine_cells:
      if 2 * self.half_width + 1 > m:
        raise WindowAccuracyUnreachable(
            'window support 2*%d+1 exceeds fine grid size %d; use more modes, '
            'a larger sigma or a looser epsilon' % (self.half_width, m))
    if not all(t > 0. for t in self.tau):
      raise ValueError('tau must be positive, got %s' % (self.tau,))

  def deconvolution(self):
    """Per-dimension factors 1 / G(n) = sqrt(pi / tau) exp(n^2 tau)."""
    return tuple(np.sqrt(np.pi / t) * np.exp(n.astype(float)**2 * t)
                 for n, t in zip(self.modes.integer_modes(), self.tau))

  def fine_indices(self):
    """Per-dimension positions of the centered modes in the fine FFT grid."""
    return tuple(n % m
                 for n, m in zip(self.modes.integer_modes(), self.fine_cells))


def select_window_parameters(epsilon, sigma=DEFAULT_SIGMA, modes=None):
  """Picks the Gaussian window for a requested accuracy.

  The fine grid is sigma * N per dimension, grown to 2 * half_width + 1
  where the window support would not fit; tau follows the effective ratio.

  Args:
    epsilon: target accuracy relative to sum |w| (type-1) or sum |f_hat|
      (type-2), 1e-12 <= epsilon < 1.
    sigma: oversampling factor, > 1.
    modes: ModeSet to transform to and from.
  Returns:
    WindowSpec.
  Raises:
    WindowAccuracyUnreachable: epsilon below 1e-12.
  """
  if modes is None:
    raise ValueError('modes must be specified')
  if not 0. < epsilon < 1.:
    raise ValueError('epsilon must lie in (0, 1), got %r' % epsilon)
  if epsilon < MIN_EPSILON:
    raise WindowAccuracyUnreachable(
        'epsilon %.1e is below the %.0e double-precision limit' %
        (epsilon, MIN_EPSILON))
  if not sigma > 1.:
    raise ValueError('oversampling sigma must exceed 1, got %r' % sigma)
  half_width = int(math.ceil(math.log(10. / epsilon) / _DECAY_PER_POINT))
  support = 2 * half_width + 1
  fine_cells = tuple(max(int(math.ceil(sigma * n)), support)
                     for n in modes.cells)
  if any(m > math.ceil(sigma * n) for n, m in zip(modes.cells, fine_cells)):
    logging.info('NUFFT fine grid grown to %s to hold a %d-point window',
                 fine_cells, support)
  tau = []
  for n, m in zip(modes.cells, fine_cells):
    ratio = float(m) / n
    tau.append(np.pi * half_width / (n * n * ratio * (ratio - 0.5)))
  window = WindowSpec(modes, sigma, fine_cells, half_width, tau, epsilon)
  logging.debug('NUFFT window: eps=%.1e half_width=%d fine=%s tau=%s',
                epsilon, half_width, fine_cells, window.tau)
  return window


@numba.njit(cache=True)
def _kernel_1d(s, size, tau, half_width, index, value):
  h = 2. * np.pi / size
  base = int(np.floor(s / h)) - half_width + 1
  for l in range(2 * half_width):
    node = base + l
    delta = node * h - s
    value[l] = np.exp(-delta * delta / (4. * tau))
    index[l] = node % size


@numba.njit(parallel=True, cache=True)
def _spread(scaled, weights, mx, my, mz, tau, half_width, chunks):
  count = scaled.shape[0]
  width = 2 * half_width
  grids = np.zeros((chunks, mx, my, mz))
  per_chunk = (count + chunks - 1) // chunks
  for c in numba.prange(chunks):  # pylint: disable=not-an-iterable
    ix = np.empty(width, dtype=np.int64)
    iy = np.empty(width, dtype=np.int64)
    iz = np.empty(width, dtype=np.int64)
    kx = np.empty(width)
    ky = np.empty(width)
    kz = np.empty(width)
    stop = min(count, (c + 1) * per_chunk)
    for j in range(c * per_chunk, stop):
      _kernel_1d(scaled[j, 0], mx, tau[0], half_width, ix, kx)
      _kernel_1d(scaled[j, 1], my, tau[1], half_width, iy, ky)
      _kernel_1d(scaled[j, 2], mz, tau[2], half_width, iz, kz)
      w = weights[j]
      for a in range(width):
        wa = w * kx[a]
        for b in range(width):
          wab = wa * ky[b]
          for e in range(width):
            grids[c, ix[a], iy[b], iz[e]] += wab * kz[e]
  return grids


@numba.njit(parallel=True, cache=True)
def _interpolate(scaled, grids, tau, half_width, chunks):
  count = scaled.shape[0]
  batch = grids.shape[0]
  mx, my, mz = grids.shape[1], grids.shape[2], grids.shape[3]
  width = 2 * half_width
  out = np.zeros((batch, count), dtype=np.complex128)
  per_chunk = (count + chunks - 1) // chunks
  for c in numba.prange(chunks):  # pylint: disable=not-an-iterable
    ix = np.empty(width, dtype=np.int64)
    iy = np.empty(width, dtype=np.int64)
    iz = np.empty(width, dtype=np.int64)
    kx = np.empty(width)
    ky = np.empty(width)
    kz = np.empty(width)
    stop = min(count, (c + 1) * per_chunk)
    for j in range(c * per_chunk, stop):
      _kernel_1d(scaled[j, 0], mx, tau[0], half_width, ix, kx)
      _kernel_1d(scaled[j, 1], my, tau[1], half_width, iy, ky)
      _kernel_1d(scaled[j, 2], mz, tau[2], half_width, iz, kz)
      for q in range(batch):
        acc = 0j
        for a in range(width):
          for b in range(width):
            kab = kx[a] * ky[b]
            for e in range(width):
              acc += grids[q, ix[a], iy[b], iz[e]] * (kab * kz[e])
        out[q, j] = acc
  return out


def _chunk_count(count, deterministic):
  if deterministic or count == 0:
    return 1
  return max(1, min(numba.get_num_threads(), count))


def _deconvolution_grid(window):
  dx, dy, dz = window.deconvolution()
  return dx[:, None, None] * dy[None, :, None] * dz[None, None, :]


def spread(points, weights, window, deterministic=True):
  """Real weights convolved with the periodized Gaussian on the fine grid."""
  scaled = window.modes.scaled_points(points)
  weights = np.ascontiguousarray(weights, dtype=float)
  chunks = _chunk_count(scaled.shape[0], deterministic)
  mx, my, mz = window.fine_cells
  grids = _spread(scaled, weights, mx, my, mz, np.array(window.tau),
                  window.half_width, chunks)
  # Fixed chunk order keeps the reduction reproducible.
  return grids.sum(axis=0)


def nufft_type1(points, weights, modes, window, deterministic=True):
  """f_hat(k) = sum_j w_j exp(-i k . x_j) over `modes`, to window accuracy.

  Args:
    points: (N_p, 3) positions in [0, L).
    weights: (N_p,) real or complex weights.
    modes: ModeSet; must be the one the window was selected for.
    window: WindowSpec from select_window_parameters.
    deterministic: spread into a single buffer for bitwise reproducibility.
  Returns:
    Complex array of shape modes.cells, centered order.
  """
  if modes != window.modes:
    raise ValueError('window was selected for %r, not %r' %
                     (window.modes, modes))
  weights = np.asarray(weights)
  if weights.shape != (np.shape(points)[0],):
    raise ValueError('weights shape %s does not match %d points' %
                     (weights.shape, np.shape(points)[0]))
  if np.iscomplexobj(weights):
    fine = (spread(points, weights.real, window, deterministic) +
            1j * spread(points, weights.imag, window, deterministic))
  else:
    fine = spread(points, weights, window, deterministic)
  fine_hat = np.fft.fftn(fine) / np.prod(window.fine_cells)
  selected = fine_hat[np.ix_(*window.fine_indices())]
  return selected * _deconvolution_grid(window)


def nufft_type2(coeffs, points, window, deterministic=True):
  """f(x_j) = sum_k f_hat(k) exp(i k . x_j), the adjoint of nufft_type1.

  Args:
    coeffs: complex array of shape modes.cells, or (B,) + modes.cells for a
      batch of B coefficient sets sharing one interpolation pass.
    points: (N_p, 3) positions.
    window: WindowSpec.
    deterministic: kept for symmetry with nufft_type1; interpolation has no
      reduction across particles.
  Returns:
    Complex values of shape (N_p,) or (B, N_p).
  """
  coeffs = np.asarray(coeffs)
  cells = window.modes.cells
  batched = coeffs.ndim == 4
  if coeffs.shape[-3:] != cells or coeffs.ndim not in (3, 4):
    raise ValueError('coefficient shape %s does not match modes %s' %
                     (coeffs.shape, cells))
  stack = coeffs if batched else coeffs[None]
  scaled = window.modes.scaled_points(points)
  fine = np.zeros((stack.shape[0],) + window.fine_cells, dtype=complex)
  index = np.ix_(*window.fine_indices())
  deconvolution = _deconvolution_grid(window)
  for q in range(stack.shape[0]):
    padded = np.zeros(window.fine_cells, dtype=complex)
    padded[index] = stack[q] * deconvolution
    fine[q] = np.fft.ifftn(padded)
  chunks = _chunk_count(scaled.shape[0], deterministic)
  values = _interpolate(scaled, fine, np.array(window.tau), window.half_width,
                        chunks)
  return values if batched else values[0]


def _phase_factors(points, modes, sign):
  points = np.asarray(points, dtype=float)
  return [np.exp(sign * 1j * np.outer(points[:, d], k))
          for d, k in enumerate(modes.wavenumbers())]


def nudft_type1_bruteforce(points, weights, modes):
  """Direct O(N_p N_m) evaluation of sum_j w_j exp(-i k . x_j)."""
  ex, ey, ez = _phase_factors(points, modes, -1.)
  return np.einsum('j,ja,jb,jc->abc', np.asarray(weights), ex, ey, ez,
                   optimize=True)


def nudft_type2_bruteforce(coeffs, points, modes):
  """Direct O(N_p N_m) evaluation of sum_k f_hat(k) exp(i k . x_j)."""
  ex, ey, ez = _phase_factors(points, modes, 1.)
  return np.einsum('...abc,ja,jb,jc->...j', np.asarray(coeffs), ex, ey, ez,
                   optimize=True)
