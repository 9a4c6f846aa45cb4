"""Pseudo-spectral Poisson solve on the periodic mesh.

Forward transform sums node values times exp(-i k.x); the inverse divides by
the node count (numpy.fft conventions). With eps_0 = 1,

  phi_hat(k) = rho_hat(k) / |k|^2,   E_hat(k) = -i k phi_hat(k),

and the k = 0 mode is dropped, which is the neutralizing ion background.
"""

import numpy as np

from picbench.mesh import ScalarGrid, VectorGrid

IMAGINARY_TOLERANCE = 1e-8


class SpectralSymmetryError(ArithmeticError):
  """An inverse transform of a real field came back with imaginary content."""


def wavenumbers(mesh):
  """Physical wave numbers k_d = 2 pi n_d / L_d in numpy FFT order."""
  return tuple(2. * np.pi * np.fft.fftfreq(n, d=h)
               for n, h in zip(mesh.cells, mesh.spacing))


def derivative_wavenumbers(mesh):
  """Like wavenumbers(), with the unpaired Nyquist mode n_d = -N_d/2 zeroed.

  A real field's derivative has no consistent value at that mode, so keeping
  it would leave an imaginary residue after the inverse transform.
  """
  ks = []
  for k, n in zip(wavenumbers(mesh), mesh.cells):
    k = k.copy()
    if n % 2 == 0:
      k[n // 2] = 0.
    ks.append(k)
  return tuple(ks)


def inverse_laplacian_symbol(mesh):
  """1 / |k|^2 on the FFT mode grid with the k = 0 entry set to 0."""
  kx, ky, kz = wavenumbers(mesh)
  k2 = kx[:, None, None]**2 + ky[None, :, None]**2 + kz[None, None, :]**2
  k2[0, 0, 0] = 1.
  inverse = 1. / k2
  inverse[0, 0, 0] = 0.
  return inverse


def _real_part(values, what, floor=0.):
  # floor is an input-derived magnitude, for fields that are pure round-off.
  scale = max(np.max(np.abs(values.real), initial=0.), floor)
  residue = np.max(np.abs(values.imag), initial=0.)
  if residue > IMAGINARY_TOLERANCE * max(scale, np.finfo(float).tiny):
    raise SpectralSymmetryError(
        '%s: imaginary residue %.3e exceeds %.0e of %.3e' %
        (what, residue, IMAGINARY_TOLERANCE, scale))
  return values.real.copy()


def electric_field_from_potential_hat(phi_hat, mesh, potential_scale=0.):
  """Inverse transforms of -i k phi_hat, one real array per component.

  potential_scale is a bound on |phi| used to judge the imaginary residue.
  """
  kx, ky, kz = derivative_wavenumbers(mesh)
  broadcast = (kx[:, None, None], ky[None, :, None], kz[None, None, :])
  return [_real_part(np.fft.ifftn(-1j * k * phi_hat), 'E_%s' % axis,
                     potential_scale * np.max(np.abs(k)))
          for k, axis in zip(broadcast, 'xyz')]


def solve_poisson_fft(rho):
  """Solves -Laplace(phi) = rho - mean(rho) spectrally.

  Args:
    rho: ScalarGrid charge density.
  Returns:
    (phi, E): ScalarGrid and VectorGrid, ghosts synchronized.
  Raises:
    SpectralSymmetryError: if an inverse transform is not real to 1e-8.
  """
  mesh = rho.mesh
  rho_hat = np.fft.fftn(rho.owned)
  inverse = inverse_laplacian_symbol(mesh)
  phi_hat = rho_hat * inverse
  potential_scale = np.max(np.abs(rho.owned)) * np.max(inverse)
  phi = _real_part(np.fft.ifftn(phi_hat), 'phi', potential_scale)
  E = electric_field_from_potential_hat(phi_hat, mesh, potential_scale)
  return (ScalarGrid.from_owned(mesh, phi),
          VectorGrid(mesh, [ScalarGrid.from_owned(mesh, e) for e in E]))
