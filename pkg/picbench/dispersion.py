"""Linear Langmuir-wave dispersion for a Maxwellian electron plasma.

In normalized units (plasma frequency 1, thermal velocity 1) the dielectric
function is

  eps(omega, k) = 1 + (1 + zeta Z(zeta)) / k^2,   zeta = omega / (sqrt(2) k),

and its least damped root gives the Landau damping rate the field energy
should follow: energy ~ exp(2 Im(omega) t).
"""

import numpy as np
from scipy import optimize, special


def plasma_dispersion_z(zeta):
  """Z(zeta) = i sqrt(pi) w(zeta), w the Faddeeva function."""
  return 1j * np.sqrt(np.pi) * special.wofz(zeta)


def plasma_dispersion_z_prime(zeta):
  return -2. * (1. + zeta * plasma_dispersion_z(zeta))


def dielectric(omega, kmode):
  zeta = omega / (np.sqrt(2.) * kmode)
  return 1. + (1. + zeta * plasma_dispersion_z(zeta)) / kmode**2


def _dielectric_derivative(omega, kmode):
  scale = np.sqrt(2.) * kmode
  zeta = omega / scale
  z = plasma_dispersion_z(zeta)
  return (z + zeta * plasma_dispersion_z_prime(zeta)) / (scale * kmode**2)


def langmuir_root(kmode, guess=None):
  """Complex frequency omega_r + i gamma of the Langmuir wave at `kmode`.

  Args:
    kmode: wave number, > 0.
    guess: starting frequency; defaults to the Bohm-Gross estimate
      sqrt(1 + 3 k^2) - 0.1i.
  Returns:
    complex omega, Im(omega) < 0 for a damped wave.
  Raises:
    RuntimeError: Newton's method did not converge.
  """
  if not kmode > 0.:
    raise ValueError('kmode must be positive, got %r' % kmode)
  if guess is None:
    guess = np.sqrt(1. + 3. * kmode**2) - 0.1j
  return complex(optimize.newton(dielectric, complex(guess),
                                 fprime=_dielectric_derivative,
                                 args=(kmode,), tol=1e-12, maxiter=100))


def energy_decay_slope(kmode):
  """Slope of log(field energy) versus time: 2 Im(omega)."""
  return 2. * langmuir_root(kmode).imag
