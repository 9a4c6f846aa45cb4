import numpy as np
import pytest

from picbench.mesh import UniformMesh


@pytest.fixture
def rng():
  return np.random.default_rng(20240611)


@pytest.fixture
def cube8():
  """8^3 mesh with L = 4 pi, so h = pi / 2."""
  return UniformMesh(8, 4. * np.pi)


@pytest.fixture
def landau_mesh():
  return UniformMesh(32, 4. * np.pi)
