"""Reusable helpers for the simulation driver.

Config-file merging, diagnostics CSV input/output and phase timing. Nothing
here knows about particles or fields.
"""

import collections
import contextlib
import logging
import os
import time

import pandas as pd

CSV_COLUMNS = ('step', 'time', 'ex_energy', 'total_energy',
               'solver_iterations', 't_scatter', 't_solve', 't_gather',
               't_push', 't_update')
TIMING_COLUMNS = ('t_scatter', 't_solve', 't_gather', 't_push', 't_update')
PHASES = ('scatter', 'solve', 'gather', 'push', 'update')
FLOAT_FORMAT = '%.17g'


def override_if_not_in_args(flag, argument, args):
  """Checks if flag is in args, and if not it adds the flag to args.

  argument may be None (a bare switch), a string, or a list of strings for
  flags that take several values.
  """
  if flag in args or any(a.startswith(flag + '=') for a in args):
    return
  if argument is None:
    args.append(flag)
  elif isinstance(argument, (list, tuple)):
    args.extend([flag] + list(argument))
  else:
    args.extend([flag, argument])


def read_config_file(path):
  """Parses `key = value` lines; `#` starts a comment.

  Returns:
    OrderedDict mapping key to the list of whitespace-separated value tokens.
  Raises:
    IOError: path cannot be opened.
    ValueError: a line is not of the form key = value.
  """
  entries = collections.OrderedDict()
  with open(path) as f:
    for number, line in enumerate(f, 1):
      line = line.split('#', 1)[0].strip()
      if not line:
        continue
      key, sep, value = line.partition('=')
      key = key.strip()
      if not sep or not key or not value.strip():
        raise ValueError('%s:%d: expected key = value, got %r' %
                         (path, number, line))
      entries[key] = value.split()
  return entries


def merge_config_file(path, argv, switches=()):
  """Appends config-file settings to argv unless argv sets them already.

  Args:
    path: config file.
    argv: explicit command-line arguments; left untouched.
    switches: keys whose flags take no value; `key = true` turns them on.
  Returns:
    New argument list, explicit arguments first.
  """
  merged = list(argv)
  for key, values in read_config_file(path).items():
    flag = '--' + key
    if key in switches:
      if len(values) != 1 or values[0].lower() not in ('true', 'false'):
        raise ValueError('%s: %s expects true or false, got %s' %
                         (path, key, ' '.join(values)))
      if values[0].lower() == 'true':
        override_if_not_in_args(flag, None, merged)
    else:
      override_if_not_in_args(flag, values, merged)
  return merged


class PhaseTimer(object):
  """Accumulates wall-clock seconds per named phase."""

  def __init__(self, phases=PHASES):
    self.phases = tuple(phases)
    self.totals = dict.fromkeys(self.phases, 0.)
    self.last = dict.fromkeys(self.phases, 0.)

  def reset_last(self):
    self.last = dict.fromkeys(self.phases, 0.)

  @contextlib.contextmanager
  def phase(self, name):
    start = time.perf_counter()
    try:
      yield
    finally:
      elapsed = time.perf_counter() - start
      self.last[name] += elapsed
      self.totals[name] += elapsed

  def log_totals(self, header):
    logging.info('%s: %s', header, ', '.join(
        '%s %.3fs' % (name, self.totals[name]) for name in self.phases))


def ensure_output_path(output_path):
  if not output_path:
    raise ValueError('output_path must be specified')
  directory = os.path.dirname(os.path.abspath(output_path))
  os.makedirs(directory, exist_ok=True)


def write_csv(records, path, timings=True):
  """Writes diagnostics records with the fixed header, 17 significant digits.

  Args:
    records: sequence of mappings or tuples in CSV_COLUMNS order.
    path: output file.
    timings: when False the timing columns are written as 0, which makes the
      file a pure function of the physics.
  """
  ensure_output_path(path)
  frame = pd.DataFrame(list(records), columns=list(CSV_COLUMNS))
  frame = frame.astype({'step': 'int64', 'solver_iterations': 'int64'})
  if not timings:
    frame.loc[:, list(TIMING_COLUMNS)] = 0.
  frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_csv(path):
  """Reads a diagnostics CSV back into a DataFrame, checking its header."""
  frame = pd.read_csv(path, float_precision='round_trip')
  if tuple(frame.columns) != CSV_COLUMNS:
    raise ValueError('%s: unexpected header %s' %
                     (path, ','.join(frame.columns)))
  return frame
