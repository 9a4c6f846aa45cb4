import itertools
import math

import numpy as np
import pytest

from picbench import dispersion, pcg, pif, task, util

GAMMA = 0.1533
SLOPE = -0.3066


def _small(solver='fft', **kwargs):
  settings = dict(solver=solver, cells=8, particles_per_cell=2, steps=4,
                  seed=3)
  settings.update(kwargs)
  return task.SimConfig(**settings)


def _damped_series(decay, omega, dt=0.05, steps=400):
  times = np.arange(steps) * dt
  return list(zip(times, np.exp(-2. * decay * times) *
                  np.sin(omega * times)**2))


def test_parse_cli_maps_flags():
  config = task.parse_cli(['--solver', 'fft', '--grid', '32', '--ppc', '8',
                           '--steps', '10'])
  assert config.solver == 'fft'
  assert config.cells == (32, 32, 32)
  assert config.particles_per_cell == 8
  assert config.steps == 10
  assert config.alpha == 0.05
  assert config.kmode == 0.5
  assert config.dt == 0.05
  assert config.tolerance == 1e-4
  assert config.preconditioner == 'none'
  assert config.warm_start
  assert not config.deterministic
  assert config.B_ext == (0., 0., 0.)


def test_parse_cli_reads_anisotropic_grid_and_ssor_settings():
  config = task.parse_cli(['--solver', 'pcg', '--grid', '16', '8', '32',
                           '--precond', 'ssor', '--ssor-omega', '1.2',
                           '--ssor-inner', '3', '--ssor-outer', '1',
                           '--bext', '0', '0', '2.5', '--no-warm-start',
                           '--deterministic'])
  assert config.cells == (16, 8, 32)
  assert config.preconditioner == 'ssor'
  assert (config.omega, config.inner_iterations,
          config.outer_iterations) == (1.2, 3, 1)
  assert config.B_ext == (0., 0., 2.5)
  assert not config.warm_start
  assert config.deterministic


@pytest.mark.parametrize('argv', [
    ['--solver', 'pif', '--precond', 'ssor'],
    ['--solver', 'fft', '--precond', 'jacobi'],
    ['--solver', 'fem', '--precond', 'ssor'],
    ['--grid', '16', '16'],
    ['--solver', 'spectral'],
    ['--alpha', '1.5'],
    ['--seed', '-1'],
    ['--unknown-flag', '3'],
])
def test_parse_cli_rejects_bad_arguments(argv):
  with pytest.raises(SystemExit):
    task.parse_cli(argv)


def test_explicit_flags_win_over_config_file(tmp_path):
  path = tmp_path / 'run.cfg'
  path.write_text('solver = pcg\nsteps = 20\ngrid = 16 16 8\n'
                  'deterministic = true\n')
  config = task.parse_cli(['--config', str(path), '--steps', '3'])
  assert config.solver == 'pcg'
  assert config.steps == 3
  assert config.cells == (16, 16, 8)
  assert config.deterministic


def test_unreadable_config_file(tmp_path):
  with pytest.raises(IOError):
    task.parse_cli(['--config', str(tmp_path / 'missing.cfg')])


def test_abbreviated_flags_are_rejected(tmp_path):
  path = tmp_path / 'run.cfg'
  path.write_text('steps = 20\n')
  with pytest.raises(SystemExit):
    task.parse_cli(['--config', str(path), '--ste', '3'])
  with pytest.raises(SystemExit):
    task.parse_cli(['--conf', str(path)])
  assert task.parse_cli(['--config', str(path), '--steps=3']).steps == 3


def test_sim_config_derives_box_and_step_count():
  config = task.SimConfig(kmode=0.25, mode='benchmark')
  assert config.extent == (8. * math.pi,) * 3
  assert config.step_count == task.BENCHMARK_STEPS
  assert task.SimConfig(steps=7).step_count == 7


def test_zero_steps_leave_no_trace():
  simulation = task.Simulation(_small(steps=0))
  assert simulation.run() == []
  assert simulation.ensemble is None


@pytest.mark.parametrize('solver', task.SOLVERS)
def test_rows_are_well_formed(solver):
  rows = task.run_simulation(_small(solver))
  assert [row.step for row in rows] == [0, 1, 2, 3]
  assert [row.time for row in rows] == [0., 0.05, 0.1, 0.15000000000000002]
  for row in rows:
    assert row.ex_energy >= 0.
    assert row.total_energy >= row.ex_energy
    for column in util.TIMING_COLUMNS:
      assert getattr(row, column) >= 0.
    if solver in ('fft', 'pif'):
      assert row.solver_iterations == 0
    else:
      assert row.solver_iterations >= 1


def test_pif_rows_report_no_grid_phases():
  rows = task.run_simulation(_small('pif'))
  assert all(row.t_scatter == 0. and row.t_gather == 0. for row in rows)
  assert all(row.t_solve > 0. for row in rows)


def test_pif_energies_use_pif_field_energy():
  simulation = task.Simulation(_small('pif', deterministic=True))
  simulation.initialize()
  _, E_hat = pif.pif_field_solve(simulation.ensemble, simulation.modes,
                                 simulation.window)
  _, ex_energy, total_energy, _ = simulation.solve_field()
  assert ex_energy == pif.pif_field_energy(E_hat, simulation.mesh)
  assert total_energy == pif.pif_field_energy(E_hat, simulation.mesh,
                                              component=None)


def test_charge_is_conserved():
  simulation = task.Simulation(_small('pcg', steps=6))
  simulation.run()
  assert np.sum(simulation.ensemble.charges) == simulation.initial_charge
  simulation.ensemble.macro_charge *= 2.
  with pytest.raises(RuntimeError):
    simulation.check_conservation()


@pytest.mark.parametrize('solver', task.SOLVERS)
def test_deterministic_run_is_bitwise_reproducible(tmp_path, solver):
  outputs = []
  for name in ('a.csv', 'b.csv'):
    path = tmp_path / name
    task.main(['--solver', solver, '--grid', '8', '--ppc', '2', '--steps',
               '10', '--seed', '42', '--deterministic', '--out', str(path)])
    outputs.append(path.read_bytes())
  assert outputs[0] == outputs[1]
  assert len(outputs[0].splitlines()) == 11


def test_warm_start_does_not_add_iterations():
  config = task.SimConfig(solver='pcg', cells=16, particles_per_cell=8,
                          steps=2, seed=1)
  rows = task.run_simulation(config)
  assert rows[1].solver_iterations <= rows[0].solver_iterations


def test_non_convergence_reports_step():
  simulation = task.Simulation(_small('pcg'))
  simulation.initialize()
  simulation.cg = pcg.CgConfig(tolerance=1e-14, max_iterations=1)
  with pytest.raises(pcg.NonConvergenceError) as info:
    simulation.step(3)
  assert info.value.step == 3
  assert str(info.value).startswith('step 3:')


def test_boris_branch_runs():
  rows = task.run_simulation(_small(B_ext=(0., 0., 1.)))
  assert len(rows) == 4


def test_fit_recovers_synthetic_decay():
  slope, peaks = task.fit_damping_rate(_damped_series(GAMMA, 1.4))
  assert abs(slope - SLOPE) <= 0.01 * abs(SLOPE)
  assert peaks >= 6


def test_fit_of_undamped_oscillation_is_flat():
  slope, _ = task.fit_damping_rate(_damped_series(0., 1.4))
  assert abs(slope) < 1e-3


def test_fit_rejects_constant_series():
  with pytest.raises(task.InsufficientPeaksError):
    task.fit_damping_rate([(0.05 * s, 1.) for s in range(100)])


def test_fit_rejects_short_series():
  with pytest.raises(task.InsufficientPeaksError):
    task.fit_damping_rate(_damped_series(GAMMA, 1.4, steps=60))


def test_fit_ignores_peaks_below_noise_floor():
  series = _damped_series(GAMMA, 1.4)
  series = [(t, e * 1e-13) for t, e in series]
  with pytest.raises(task.InsufficientPeaksError):
    task.fit_damping_rate(series)


def test_fit_thins_noise_wiggles():
  times = np.arange(400) * 0.05
  wiggle = 1e-4 * np.cos(40. * times)**2
  energy = np.exp(SLOPE * times) * np.sin(1.4 * times)**2 + wiggle
  slope, peaks = task.fit_damping_rate(
      list(zip(times, energy)), min_separation=0.75 * math.pi / 1.4,
      stop_at_rise=True)
  assert abs(slope - SLOPE) <= 0.05 * abs(SLOPE)
  assert peaks >= 3


def test_fit_stops_at_noise_floor_rise():
  series = _damped_series(GAMMA, 1.4)
  tail = [(t + 20., 0.2) if i % 40 == 20 else (t + 20., 0.)
          for i, (t, _) in enumerate(_damped_series(0., 1.4, steps=200))]
  slope, peaks = task.fit_damping_rate(series + tail, stop_at_rise=True)
  assert abs(slope - SLOPE) <= 0.01 * abs(SLOPE)
  assert peaks == task.fit_damping_rate(series)[1]


def test_compare_preconditioners_rejects_direct_solvers():
  with pytest.raises(ValueError):
    task.compare_preconditioners(_small('fft'))


@pytest.mark.parametrize('solver', ['pcg', 'fem'])
def test_preconditioning_does_not_add_iterations(solver):
  config = task.SimConfig(solver=solver, cells=32, particles_per_cell=8,
                          seed=1)
  plain, preconditioned = task.compare_preconditioners(config)
  assert preconditioned <= plain


def test_main_prints_fit(monkeypatch, capsys, tmp_path):
  series = _damped_series(GAMMA, 1.4)
  rows = [task.DiagnosticsRow(s, t, e, e, 0, 0., 0., 0., 0., 0.)
          for s, (t, e) in enumerate(series)]
  monkeypatch.setattr(task.Simulation, 'run', lambda self: rows)
  path = tmp_path / 'out' / 'fit.csv'
  task.main(['--fit-damping', '--out', str(path)])
  line = capsys.readouterr().out.strip()
  assert line.startswith('gamma_fit=')
  slope = float(line.split()[0].split('=')[1])
  assert abs(slope - SLOPE) <= 0.01 * abs(SLOPE)
  assert len(util.read_csv(str(path))) == len(rows)


def test_benchmark_mode_runs_fixed_steps():
  rows = task.main(['--mode', 'benchmark', '--grid', '8', '--ppc', '1',
                    '--steps', '500'])
  assert len(rows) == task.BENCHMARK_STEPS


@pytest.mark.slow
def test_thermal_plasma_stays_at_noise_floor():
  rows = task.run_simulation(task.SimConfig(cells=16, particles_per_cell=8,
                                            alpha=0., steps=100, seed=9))
  initial = rows[0].ex_energy
  assert max(row.ex_energy for row in rows) <= 10. * initial


@pytest.fixture(scope='module')
def landau_runs():
  runs = {}
  for solver in task.SOLVERS:
    config = task.SimConfig(solver=solver, cells=32, particles_per_cell=8,
                            steps=task.DEFAULT_STEPS, seed=2024,
                            loading='quiet', deterministic=True)
    runs[solver] = task.run_simulation(config)
  return runs


def _peaks(rows):
  reference = dispersion.langmuir_root(0.5)
  series = [(row.time, row.ex_energy) for row in rows]
  return task.fit_damping_rate(
      series, min_separation=0.75 * math.pi / reference.real,
      stop_at_rise=True)


@pytest.mark.slow
@pytest.mark.parametrize('solver', task.SOLVERS)
def test_landau_damping_rate(landau_runs, solver):
  slope, peaks = _peaks(landau_runs[solver])
  assert peaks >= 3
  assert abs(slope - SLOPE) <= 0.15 * abs(SLOPE)


@pytest.mark.slow
def test_solvers_agree_at_early_peaks(landau_runs):
  energies = {
      solver: np.array([row.ex_energy for row in rows])
      for solver, rows in landau_runs.items()
  }
  period = math.pi / dispersion.langmuir_root(0.5).real
  # Peaks of the first four energy oscillations, located on the fft trace.
  fft = energies['fft']
  window = int(round(period / 0.05))
  peaks = [start + int(np.argmax(fft[start:start + window]))
           for start in range(window // 2, 4 * window, window)]
  for a, b in itertools.combinations(task.SOLVERS, 2):
    np.testing.assert_allclose(energies[a][peaks], energies[b][peaks],
                               rtol=0.05)
