"""Landau damping driver: configuration, PIC/PIF time loop and diagnostics.

Each step runs scatter -> field solve -> gather -> push -> periodic update
(PIF folds the first three into one Fourier-space solve) and records one
DiagnosticsRow. Usage:

  python -m picbench.task --solver pcg --precond ssor --grid 32 --steps 1250 \
      --out landau_pcg.csv --fit-damping
"""

import argparse
import collections
import logging
import math
import sys
import time

import numpy as np
from scipy import signal

from picbench import dispersion
from picbench import fem
from picbench import nufft
from picbench import particles
from picbench import pcg
from picbench import pif
from picbench import spectral
from picbench import util
from picbench.mesh import UniformMesh, field_energy, field_energy_component

SOLVERS = ('fft', 'pcg', 'fem', 'pif')
MODES = ('correctness', 'benchmark')
DEFAULT_STEPS = 1250
BENCHMARK_STEPS = 10
NOISE_FLOOR = 1e-12
MIN_PEAKS = 3
SWITCHES = ('deterministic', 'fit-damping', 'no-warm-start')

DiagnosticsRow = collections.namedtuple('DiagnosticsRow', util.CSV_COLUMNS)


class InsufficientPeaksError(ValueError):
  """Fewer than three usable energy maxima to fit a damping rate to."""


class SimConfig(object):
  """All settings of one run; the box length is derived as 2 pi / kmode."""

  def __init__(self, solver='fft', cells=32, particles_per_cell=8, alpha=0.05,
               kmode=0.5, dt=0.05, steps=DEFAULT_STEPS, tolerance=1e-4,
               preconditioner='none', omega=math.pi / 2., inner_iterations=4,
               outer_iterations=2, max_iterations=None, warm_start=True,
               B_ext=(0., 0., 0.), seed=0, deterministic=False,
               output_path=None, loading='random', mode='correctness',
               nufft_sigma=nufft.DEFAULT_SIGMA, log_interval_secs=10.,
               fit_damping=False):
    self.solver = solver
    self.cells = tuple(int(n) for n in np.broadcast_to(cells, (3,)))
    self.particles_per_cell = particles_per_cell
    self.alpha = alpha
    self.kmode = kmode
    self.dt = dt
    self.steps = steps
    self.tolerance = tolerance
    self.preconditioner = preconditioner
    self.omega = omega
    self.inner_iterations = inner_iterations
    self.outer_iterations = outer_iterations
    self.max_iterations = max_iterations
    self.warm_start = warm_start
    self.B_ext = tuple(float(b) for b in B_ext)
    self.seed = seed
    self.deterministic = deterministic
    self.output_path = output_path
    self.loading = loading
    self.mode = mode
    self.nufft_sigma = nufft_sigma
    self.log_interval_secs = log_interval_secs
    self.fit_damping = fit_damping
    self.validate()

  def validate(self):
    if self.solver not in SOLVERS:
      raise ValueError('unknown solver %r, expected one of %s' %
                       (self.solver, SOLVERS))
    if self.preconditioner != 'none' and self.solver in ('fft', 'pif'):
      raise ValueError('the %s solver takes no preconditioner, got %r' %
                       (self.solver, self.preconditioner))
    if self.solver == 'fem' and self.preconditioner == 'ssor':
      raise ValueError('the fem solver supports preconditioner none or jacobi')
    if self.particles_per_cell < 1:
      raise ValueError('particles_per_cell must be >= 1, got %r' %
                       self.particles_per_cell)
    if not 0. <= self.alpha < 1.:
      raise ValueError('alpha must satisfy 0 <= alpha < 1, got %r' % self.alpha)
    if not self.kmode > 0.:
      raise ValueError('kmode must be positive, got %r' % self.kmode)
    if not self.dt > 0.:
      raise ValueError('dt must be positive, got %r' % self.dt)
    if self.steps < 0:
      raise ValueError('steps must be >= 0, got %r' % self.steps)
    if len(self.B_ext) != 3 or not all(np.isfinite(self.B_ext)):
      raise ValueError('B_ext must be 3 finite numbers, got %s' % (self.B_ext,))
    if not 0 <= self.seed < 2**64:
      raise ValueError('seed must be an unsigned 64-bit integer, got %r' %
                       self.seed)
    if self.loading not in particles.LOADINGS:
      raise ValueError('unknown loading %r, expected one of %s' %
                       (self.loading, particles.LOADINGS))
    if self.mode not in MODES:
      raise ValueError('unknown mode %r, expected one of %s' %
                       (self.mode, MODES))
    if not self.nufft_sigma > 1.:
      raise ValueError('nufft_sigma must exceed 1, got %r' % self.nufft_sigma)
    if not self.log_interval_secs > 0.:
      raise ValueError('log_interval_secs must be positive, got %r' %
                       self.log_interval_secs)
    # Constructing these checks the mesh and the CG settings.
    self.mesh()
    self.cg_config()

  @property
  def extent(self):
    return (2. * math.pi / self.kmode,) * 3

  @property
  def step_count(self):
    return BENCHMARK_STEPS if self.mode == 'benchmark' else self.steps

  def mesh(self):
    return UniformMesh(self.cells, self.extent)

  def cg_config(self, preconditioner=None):
    return pcg.CgConfig(self.tolerance, self.max_iterations,
                        preconditioner or self.preconditioner, self.omega,
                        self.inner_iterations, self.outer_iterations,
                        self.warm_start)

  def __repr__(self):
    return 'SimConfig(%s)' % ', '.join(
        '%s=%r' % item for item in sorted(vars(self).items()))


class Simulation(object):
  """Owns the particle state and runs the PIC or PIF loop."""

  def __init__(self, config):
    self.config = config
    self.mesh = config.mesh()
    self.timer = util.PhaseTimer()
    self.cg = config.cg_config()
    self.B_ext = np.array(config.B_ext)
    if config.solver == 'pif':
      self.modes = nufft.ModeSet.from_mesh(self.mesh)
      self.window = nufft.select_window_parameters(
          config.tolerance, config.nufft_sigma, self.modes)
    self.ensemble = None
    self.previous_phi = None
    self.init_time = 0.
    self.rows = []

  def initialize(self):
    """Samples the ensemble and staggers velocities back by dt / 2."""
    start = time.time()
    config = self.config
    self.ensemble = particles.sample_landau(
        self.mesh, config.particles_per_cell, config.alpha, config.kmode,
        config.seed, config.loading)
    self.initial_count = self.ensemble.count
    self.initial_charge = float(np.sum(self.ensemble.charges))
    E, _, _, _ = self.solve_field(remember=False)
    self.ensemble.velocities = particles.kick_velocities(
        self.ensemble.velocities, E, -0.5 * config.dt,
        self.ensemble.charge_to_mass, self.B_ext)
    self.timer = util.PhaseTimer()
    self.init_time = time.time() - start
    logging.info('Initialized %d particles on a %s mesh (%.2f sec)',
                 self.ensemble.count, 'x'.join(map(str, self.mesh.cells)),
                 self.init_time)

  def solve_field(self, remember=True):
    """Returns (E at particles, E_x energy, total energy, iterations)."""
    config = self.config
    timer = self.timer
    ensemble = self.ensemble
    if config.solver == 'pif':
      with timer.phase('solve'):
        E_particles, E_hat = pif.pif_field_solve(
            ensemble, self.modes, self.window,
            deterministic=config.deterministic)
      return (E_particles, pif.pif_field_energy(E_hat, self.mesh),
              pif.pif_field_energy(E_hat, self.mesh, component=None), 0)

    with timer.phase('scatter'):
      rho = particles.scatter_cic(ensemble, self.mesh)
    with timer.phase('solve'):
      if config.solver == 'fft':
        phi, E = spectral.solve_poisson_fft(rho)
        iterations = 0
      elif config.solver == 'pcg':
        phi, E, iterations = pcg.solve_poisson_pcg(rho, self.cg,
                                                   self.previous_phi)
      else:
        phi, E, iterations = fem.solve_poisson_fem(rho, self.cg,
                                                   self.previous_phi)
    if remember:
      self.previous_phi = phi
    with timer.phase('gather'):
      E_particles = particles.gather_cic(E, ensemble.positions)
    return E_particles, field_energy_component(E, 0), field_energy(E), iterations

  def step(self, index):
    """Advances one time step and returns its DiagnosticsRow."""
    self.timer.reset_last()
    try:
      E, ex_energy, total_energy, iterations = self.solve_field()
    except pcg.NonConvergenceError as err:
      err.step = index
      err.args = ('step %d: %s' % (index, err),)
      raise
    with self.timer.phase('push'):
      particles.push(self.ensemble, E, self.config.dt, self.B_ext)
    with self.timer.phase('update'):
      particles.apply_periodic(self.ensemble, self.mesh)
    last = self.timer.last
    row = DiagnosticsRow(index, index * self.config.dt, ex_energy,
                         total_energy, iterations, last['scatter'],
                         last['solve'], last['gather'], last['push'],
                         last['update'])
    self.rows.append(row)
    return row

  def run(self):
    """Runs config.step_count steps; returns the list of DiagnosticsRow."""
    steps = self.config.step_count
    if steps == 0:
      return self.rows
    self.initialize()
    self.start_time = self.last_log = time.time()
    self.last_step = 0
    for index in range(steps):
      self.step(index)
      self.now = time.time()
      if self.now - self.last_log > self.config.log_interval_secs:
        self.log(index + 1)
    self.now = time.time()
    self.log(steps)
    self.check_conservation()
    self.timer.log_totals('Phase totals over %d steps' % steps)
    return self.rows

  def log(self, steps_done):
    """Logs progress."""
    row = self.rows[-1]
    logging.info('Step %d (%.2f sec) %.1f steps/s, ex_energy %.6e, '
                 '%d solver iterations', steps_done,
                 self.now - self.start_time,
                 (steps_done - self.last_step) /
                 max(self.now - self.last_log, 1e-9),
                 row.ex_energy, row.solver_iterations)
    self.last_log = self.now
    self.last_step = steps_done

  def check_conservation(self):
    count = self.ensemble.count
    charge = float(np.sum(self.ensemble.charges))
    if count != self.initial_count or charge != self.initial_charge:
      raise RuntimeError('particle charge changed from %r (%d) to %r (%d)' %
                         (self.initial_charge, self.initial_count, charge,
                          count))

  @property
  def loop_time(self):
    return sum(self.timer.totals.values())


def run_simulation(config):
  """Runs one simulation; returns the list of DiagnosticsRow."""
  return Simulation(config).run()


def fit_damping_rate(series, min_separation=None, stop_at_rise=False):
  """Fits log(energy) at its maxima against time by least squares.

  Args:
    series: sequence of (time, energy) pairs, evenly spaced in time.
    min_separation: if set, maxima closer than this in time are thinned to
      the tallest, which ignores noise wiggles near the field zeros.
    stop_at_rise: keep only the leading run of decreasing maxima, which stops
      the fit where the decay reaches the particle-noise floor.
  Returns:
    (slope, peak_count); for a damped wave slope = -2 gamma.
  Raises:
    InsufficientPeaksError: fewer than 3 maxima remain above 1e-12.
  """
  data = np.asarray(series, dtype=float).reshape(-1, 2)
  times, energy = data[:, 0], data[:, 1]
  if min_separation and len(times) > 1:
    spacing = np.median(np.diff(times))
    distance = max(1, int(round(min_separation / spacing)))
    peaks, _ = signal.find_peaks(energy, distance=distance)
  else:
    peaks = signal.argrelmax(energy)[0]
  peaks = peaks[energy[peaks] >= NOISE_FLOOR]
  if stop_at_rise and len(peaks):
    keep = 1
    while keep < len(peaks) and energy[peaks[keep]] < energy[peaks[keep - 1]]:
      keep += 1
    peaks = peaks[:keep]
  if len(peaks) < MIN_PEAKS:
    raise InsufficientPeaksError('found %d energy maxima above %.0e, need %d' %
                                 (len(peaks), NOISE_FLOOR, MIN_PEAKS))
  slope = np.polyfit(times[peaks], np.log(energy[peaks]), 1)[0]
  return float(slope), len(peaks)


def compare_preconditioners(config):
  """Iteration counts of the step-1 solve without and with preconditioning.

  Uses config.preconditioner when set, else SSOR for pcg and Jacobi for fem.
  Returns:
    (plain_iterations, preconditioned_iterations).
  """
  if config.solver not in ('pcg', 'fem'):
    raise ValueError('preconditioners apply to pcg and fem, not %r' %
                     config.solver)
  preconditioner = config.preconditioner
  if preconditioner == 'none':
    preconditioner = 'ssor' if config.solver == 'pcg' else 'jacobi'
  mesh = config.mesh()
  ensemble = particles.sample_landau(mesh, config.particles_per_cell,
                                     config.alpha, config.kmode, config.seed,
                                     config.loading)
  rho = particles.scatter_cic(ensemble, mesh)
  solve = (pcg.solve_poisson_pcg if config.solver == 'pcg' else
           fem.solve_poisson_fem)
  _, _, plain = solve(rho, config.cg_config('none'))
  _, _, preconditioned = solve(rho, config.cg_config(preconditioner))
  logging.info('%s step-1 solve: %d iterations plain, %d with %s',
               config.solver, plain, preconditioned, preconditioner)
  return plain, preconditioned


def build_parser():
  parser = argparse.ArgumentParser(
      description='Electrostatic PIC/PIF Landau damping benchmark.',
      allow_abbrev=False)
  parser.add_argument('--solver', choices=SOLVERS, default='fft',
                      help='Field solver.')
  parser.add_argument('--grid', type=int, nargs='+', default=[32],
                      metavar='N', help='Cells per dimension: N or NX NY NZ.')
  parser.add_argument('--ppc', type=int, default=8,
                      help='Macro-particles per cell.')
  parser.add_argument('--alpha', type=float, default=0.05,
                      help='Density perturbation amplitude.')
  parser.add_argument('--kmode', type=float, default=0.5,
                      help='Perturbation wave number; L = 2 pi / kmode.')
  parser.add_argument('--dt', type=float, default=0.05, help='Time step.')
  parser.add_argument('--steps', type=int, default=DEFAULT_STEPS,
                      help='Time steps in correctness mode.')
  parser.add_argument('--tol', type=float, default=1e-4,
                      help='CG relative residual target, also the NUFFT '
                      'accuracy for the pif solver.')
  parser.add_argument('--precond', choices=pcg.PRECONDITIONERS,
                      default='none', help='CG preconditioner.')
  parser.add_argument('--ssor-omega', type=float, default=math.pi / 2.,
                      help='SSOR relaxation factor.')
  parser.add_argument('--ssor-inner', type=int, default=4,
                      help='SSOR passes per direction.')
  parser.add_argument('--ssor-outer', type=int, default=2,
                      help='SSOR forward/backward sweep pairs.')
  parser.add_argument('--max-iterations', type=int, default=None,
                      help='CG iteration limit; default 10 * max(N).')
  parser.add_argument('--no-warm-start', dest='warm_start',
                      action='store_false', default=True,
                      help='Start every CG solve from zero.')
  parser.add_argument('--bext', type=float, nargs=3, default=[0., 0., 0.],
                      metavar=('BX', 'BY', 'BZ'),
                      help='Uniform external magnetic field.')
  parser.add_argument('--seed', type=int, default=0,
                      help='Unsigned 64-bit random seed.')
  parser.add_argument('--loading', choices=particles.LOADINGS,
                      default='random',
                      help='random: pseudo-random draws; quiet: scrambled '
                      'Sobol points with lower shot noise.')
  parser.add_argument('--deterministic', action='store_true', default=False,
                      help='Force reproducible reductions; timing columns '
                      'of the CSV are written as 0.')
  parser.add_argument('--mode', choices=MODES, default='correctness',
                      help='benchmark runs %d steps and reports loop time.' %
                      BENCHMARK_STEPS)
  parser.add_argument('--nufft-sigma', type=float,
                      default=nufft.DEFAULT_SIGMA,
                      help='NUFFT oversampling factor.')
  parser.add_argument('--log-interval-secs', type=float, default=10.,
                      help='Minimal interval between progress log lines.')
  parser.add_argument('--config', type=str, default=None,
                      help='File of key = value lines; explicit flags win.')
  parser.add_argument('--out', dest='output_path', type=str, default=None,
                      help='Diagnostics CSV path.')
  parser.add_argument('--fit-damping', action='store_true', default=False,
                      help='Fit the E_x energy peaks and print '
                      'gamma_fit=<slope> peaks=<count>.')
  return parser


def parse_cli(argv):
  """Maps command-line arguments (and an optional config file) to SimConfig."""
  parser = build_parser()
  pre_parser = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
  pre_parser.add_argument('--config', type=str, default=None)
  known, _ = pre_parser.parse_known_args(argv)
  if known.config:
    try:
      argv = util.merge_config_file(known.config, argv, SWITCHES)
    except ValueError as e:
      parser.error(str(e))
  args = parser.parse_args(argv)
  if len(args.grid) not in (1, 3):
    parser.error('--grid takes 1 or 3 values, got %d' % len(args.grid))
  try:
    return SimConfig(
        solver=args.solver,
        cells=args.grid if len(args.grid) == 3 else args.grid[0],
        particles_per_cell=args.ppc,
        alpha=args.alpha,
        kmode=args.kmode,
        dt=args.dt,
        steps=args.steps,
        tolerance=args.tol,
        preconditioner=args.precond,
        omega=args.ssor_omega,
        inner_iterations=args.ssor_inner,
        outer_iterations=args.ssor_outer,
        max_iterations=args.max_iterations,
        warm_start=args.warm_start,
        B_ext=args.bext,
        seed=args.seed,
        deterministic=args.deterministic,
        output_path=args.output_path,
        loading=args.loading,
        mode=args.mode,
        nufft_sigma=args.nufft_sigma,
        log_interval_secs=args.log_interval_secs,
        fit_damping=args.fit_damping)
  except ValueError as e:
    parser.error(str(e))


def main(argv=None):
  config = parse_cli(sys.argv[1:] if argv is None else argv)
  logging.info('Configuration: %r', config)
  simulation = Simulation(config)
  rows = simulation.run()

  if config.mode == 'benchmark':
    logging.info('Benchmark: %d steps in %.3f sec, initialization %.3f sec '
                 'excluded', len(rows), simulation.loop_time,
                 simulation.init_time)
  if config.output_path:
    util.write_csv(rows, config.output_path,
                   timings=not config.deterministic)
    logging.info('Wrote %d diagnostics rows to %s', len(rows),
                 config.output_path)
  if config.fit_damping:
    reference = dispersion.langmuir_root(config.kmode)
    slope, peaks = fit_damping_rate(
        [(row.time, row.ex_energy) for row in rows],
        min_separation=0.75 * math.pi / reference.real, stop_at_rise=True)
    print('gamma_fit=%.17g peaks=%d' % (slope, peaks))
    logging.info('Reference energy slope 2*Im(omega) = %.6f, '
                 'omega = %.6f%+.6fi', 2. * reference.imag, reference.real,
                 reference.imag)
  return rows


if __name__ == '__main__':
  logging.basicConfig(level=logging.INFO)
  main()
