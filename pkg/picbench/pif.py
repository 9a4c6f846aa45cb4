"""Particle-in-Fourier field solve: particles couple to Fourier modes directly.

  rho_hat(k) = sum_j q_j exp(-i k . x_j)               (type-1 NUFFT)
  E_hat(k)   = -i k rho_hat(k) / (|k|^2 V),  E_hat(0) = E_hat(-N/2) = 0
  E(x_j)     = Re sum_k E_hat(k) exp(i k . x_j)        (type-2 NUFFT)

With this scaling E(x) is the same periodic field the grid solvers compute
from the charge density, so energies are directly comparable.
"""

import numpy as np

from picbench import nufft
from picbench.mesh import (ScalarGrid, VectorGrid, field_energy,
                           field_energy_component)


def electric_field_coefficients(rho_hat, modes):
  """E_hat components, shape (3,) + modes.cells, from centered rho_hat.

  Every mode with an unpaired n_d = -N_d/2 index is dropped from all three
  components. The kept set is closed under k -> -k, so E_hat of a real
  charge distribution is conjugate symmetric and |E_hat| is unchanged by a
  rigid shift of the particles.
  """
  rho_hat = np.asarray(rho_hat)
  if rho_hat.shape != modes.cells:
    raise ValueError('rho_hat shape %s does not match modes %s' %
                     (rho_hat.shape, modes.cells))
  kx, ky, kz = modes.wavenumbers()
  k2 = kx[:, None, None]**2 + ky[None, :, None]**2 + kz[None, None, :]**2
  zero = tuple(n // 2 for n in modes.cells)
  k2[zero] = 1.
  potential = rho_hat / (k2 * np.prod(modes.extent))
  potential[zero] = 0.
  potential[unpaired_modes(modes)] = 0.
  E_hat = np.empty((3,) + modes.cells, dtype=complex)
  for d, k in enumerate((kx, ky, kz)):
    shape = [1, 1, 1]
    shape[d] = k.size
    E_hat[d] = -1j * k.reshape(shape) * potential
  return E_hat


def unpaired_modes(modes):
  """Boolean mask of modes with n_d = -N_d/2 along some even dimension."""
  mask = np.zeros(modes.cells, dtype=bool)
  for d, n in enumerate(modes.cells):
    if n % 2 == 0:
      # Centered order puts n = -N/2 first.
      index = [slice(None)] * 3
      index[d] = 0
      mask[tuple(index)] = True
  return mask


def pif_field_solve(ensemble, modes, window, exact=False, deterministic=True):
  """Electric field at every particle through the PIF pipeline.

  Args:
    ensemble: ParticleEnsemble with in-domain positions.
    modes: ModeSet of the truncated Fourier representation.
    window: WindowSpec selected for `modes`.
    exact: evaluate both transforms by brute-force NUDFT (testing hook).
    deterministic: passed to the NUFFT spreading.
  Returns:
    (E_at_particles of shape (N_p, 3), E_hat of shape (3,) + modes.cells).
  """
  charges = ensemble.charges
  if exact:
    rho_hat = nufft.nudft_type1_bruteforce(ensemble.positions, charges, modes)
  else:
    rho_hat = nufft.nufft_type1(ensemble.positions, charges, modes, window,
                                deterministic)
  E_hat = electric_field_coefficients(rho_hat, modes)
  if exact:
    values = nufft.nudft_type2_bruteforce(E_hat, ensemble.positions, modes)
  else:
    values = nufft.nufft_type2(E_hat, ensemble.positions, window,
                               deterministic)
  return np.ascontiguousarray(values.real.T), E_hat


def field_on_mesh(E_hat, mesh):
  """Evaluates the Fourier series of each E component at the mesh nodes."""
  E_hat = np.asarray(E_hat)
  if E_hat.shape != (3,) + mesh.cells:
    raise ValueError('E_hat shape %s does not match mesh cells %s' %
                     (E_hat.shape, mesh.cells))
  components = []
  for d in range(3):
    values = np.fft.ifftn(np.fft.ifftshift(E_hat[d])) * mesh.node_count
    components.append(ScalarGrid.from_owned(mesh, values.real))
  return VectorGrid(mesh, components)


def pif_field_energy(E_hat, mesh, component=0):
  """Grid energy of the PIF field, 1/2 integral E_d^2; total if component=None.

  Uses the same quadrature as the grid solvers' diagnostics.
  """
  E = field_on_mesh(E_hat, mesh)
  if component is None:
    return field_energy(E)
  return field_energy_component(E, component)
