import numpy as np
import pytest

from picbench import spectral
from picbench.mesh import ScalarGrid, UniformMesh


@pytest.fixture
def mesh():
  return UniformMesh(16, 4. * np.pi)


def _rho(mesh, owned):
  return ScalarGrid.from_owned(mesh, owned)


def test_single_mode_solution_is_exact(mesh):
  k = 0.5
  X, _, _ = mesh.node_mesh()
  phi, E = spectral.solve_poisson_fft(_rho(mesh, np.cos(k * X)))
  np.testing.assert_allclose(phi.owned, np.cos(k * X) / k**2, rtol=0.,
                             atol=1e-12)
  np.testing.assert_allclose(E[0].owned, np.sin(k * X) / k, rtol=0.,
                             atol=1e-12)
  np.testing.assert_allclose(E[1].owned, 0., atol=1e-12)
  np.testing.assert_allclose(E[2].owned, 0., atol=1e-12)


def test_constant_density_gives_no_field(mesh):
  phi, E = spectral.solve_poisson_fft(_rho(mesh, np.full(mesh.cells, -3.)))
  np.testing.assert_allclose(phi.owned, 0., atol=1e-13)
  for component in E:
    np.testing.assert_allclose(component.owned, 0., atol=1e-13)


def test_spectral_laplacian_round_trip(mesh, rng):
  rho = rng.normal(size=mesh.cells)
  phi, _ = spectral.solve_poisson_fft(_rho(mesh, rho))
  kx, ky, kz = spectral.wavenumbers(mesh)
  k2 = kx[:, None, None]**2 + ky[None, :, None]**2 + kz[None, None, :]**2
  recovered = np.fft.ifftn(k2 * np.fft.fftn(phi.owned)).real
  np.testing.assert_allclose(recovered, rho - rho.mean(), rtol=0., atol=1e-11)


def test_solve_is_linear(mesh, rng):
  a = rng.normal(size=mesh.cells)
  b = rng.normal(size=mesh.cells)
  phi_a, E_a = spectral.solve_poisson_fft(_rho(mesh, a))
  phi_b, E_b = spectral.solve_poisson_fft(_rho(mesh, b))
  phi_ab, E_ab = spectral.solve_poisson_fft(_rho(mesh, 2. * a - 0.5 * b))
  np.testing.assert_allclose(phi_ab.owned, 2. * phi_a.owned - 0.5 * phi_b.owned,
                             rtol=0., atol=1e-11)
  np.testing.assert_allclose(E_ab[1].owned, 2. * E_a[1].owned -
                             0.5 * E_b[1].owned, rtol=0., atol=1e-11)


def test_field_has_zero_mean(mesh, rng):
  _, E = spectral.solve_poisson_fft(_rho(mesh, rng.normal(size=mesh.cells)))
  for component in E:
    assert abs(np.mean(component.owned)) < 1e-13


def test_translation_equivariance(mesh, rng):
  rho = rng.normal(size=mesh.cells)
  phi, _ = spectral.solve_poisson_fft(_rho(mesh, rho))
  shifted, _ = spectral.solve_poisson_fft(
      _rho(mesh, np.roll(rho, (3, -2, 5), axis=(0, 1, 2))))
  np.testing.assert_allclose(shifted.owned,
                             np.roll(phi.owned, (3, -2, 5), axis=(0, 1, 2)),
                             rtol=0., atol=1e-11)


def test_random_density_passes_symmetry_check(mesh, rng):
  # The unpaired Nyquist row would otherwise leave an imaginary residue in E.
  _, E = spectral.solve_poisson_fft(_rho(mesh, rng.normal(size=mesh.cells)))
  assert all(np.all(np.isfinite(component.owned)) for component in E)


def test_imaginary_residue_is_reported(mesh):
  k = spectral.derivative_wavenumbers(mesh)[0]
  phi_hat = np.zeros(mesh.cells, dtype=complex)
  # A lone +k mode without its conjugate partner is not a real field.
  phi_hat[1, 0, 0] = 1.
  with pytest.raises(spectral.SpectralSymmetryError):
    spectral.electric_field_from_potential_hat(phi_hat, mesh)
  assert k[mesh.cells[0] // 2] == 0.


def test_coefficients_of_real_field_are_conjugate_symmetric(mesh, rng):
  values = np.fft.fftn(rng.normal(size=mesh.cells))
  mirrored = np.conj(np.roll(values[::-1, ::-1, ::-1], 1, axis=(0, 1, 2)))
  np.testing.assert_allclose(values, mirrored, rtol=0., atol=1e-10)
