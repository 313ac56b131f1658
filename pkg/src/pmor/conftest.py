# Copyright 2025 Google LLC
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Closed-form parametric families shared by the tests.

All families are diagonal (M = I, K = diag(lambda(p))) so their modes are
unit vectors and mode switching happens exactly where two stiffness values
cross.
"""

import numpy as np
import pytest
from scipy import sparse

from pmor import fem_models
from pmor import geometry
from pmor import sampler

N_DOFS = 6
DAMPING_BETA = 0.02
# Stiffness of the mode that overtakes mode 1 at p = CROSSING.
CROSSING = 0.4
UNIT_BOX = geometry.ParamBox(lower=(0.0,), upper=(1.0,), names=('p',))
UNIT_SQUARE_BOX = geometry.ParamBox(lower=(0.0, 0.0), upper=(1.0, 1.0))


def diagonal_system(stiffness, label: str = 'synthetic'):
  stiffness = np.asarray(stiffness, dtype=float)
  n = len(stiffness)
  k = sparse.diags(stiffness).tocsr()
  m = sparse.identity(n, format='csr')
  f = np.ones(n) / np.sqrt(n)
  return fem_models.SystemMatrices(
      M=m,
      C=(DAMPING_BETA * k).tocsr(),
      K=k,
      f=f,
      g=f.copy(),
      rayleigh=(0.0, DAMPING_BETA),
      label=label,
  )


def crossing_fom(p):
  """Mode 0 stiffens with the mean of p and swaps with mode 1 at 0.4."""
  s = float(np.mean(p))
  return diagonal_system(
      [1.0 + 5.0 * s, 3.0, 10.0, 11.0, 12.0, 13.0], label=f'crossing p={s:g}'
  )


def smooth_fom(p):
  """No mode switching: all stiffness values scale with 1 + p^3."""
  s = float(np.mean(p))
  scale = 1.0 + s**3
  return diagonal_system(
      scale * np.arange(1.0, N_DOFS + 1.0), label=f'smooth p={s:g}'
  )


@pytest.fixture
def crossing_factory():
  return sampler.RomFactory(crossing_fom, r=1)


@pytest.fixture
def smooth_factory():
  return sampler.RomFactory(smooth_fom, r=2)
