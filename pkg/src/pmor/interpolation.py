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

"""Entrywise interpolants of vectorized reduced operators.

Two kinds are supported:
- `spline1d`: not-a-knot cubic splines over 1D training points
- `ridge`: ridge regression on the tensor-product monomials of degree <= 3
  per variable
"""

import dataclasses
import enum
import itertools

import numpy as np
from scipy import interpolate
from scipy import linalg

RIDGE_LAMBDA = 1e-5
RIDGE_MAX_DEGREE = 3


@enum.unique
class InterpolantKind(enum.Enum):
  SPLINE1D = 'spline1d'
  RIDGE = 'ridge'


def monomial_exponents(dimension: int, max_degree: int = RIDGE_MAX_DEGREE):
  return np.array(
      list(itertools.product(range(max_degree + 1), repeat=dimension)),
      dtype=int,
  )


def design_matrix(points: np.ndarray, exponents: np.ndarray) -> np.ndarray:
  """Evaluate every monomial prod_i u_i^a_i at every point, shape (K, B)."""
  points = np.atleast_2d(points)
  return np.prod(points[:, None, :] ** exponents[None, :, :], axis=2)


@dataclasses.dataclass(frozen=True, eq=False)
class EntrywiseInterpolant:
  """Maps normalized parameter points to vectors of operator entries.

  Attributes:
      kind: interpolant kind
      arrays: the coefficients. spline1d keeps the piecewise polynomial
        (`breaks`, `coefficients`) or, for a single training point, the
        constant `values`; ridge keeps `exponents`, `weights` and `offset`
  """

  kind: InterpolantKind
  arrays: dict[str, np.ndarray]

  def __call__(self, u) -> np.ndarray:
    """Evaluate at one point (d-vector) or several points (Q x d)."""
    u = np.asarray(u, dtype=float)
    single = u.ndim <= 1
    points = u.reshape(1, -1) if single else u
    match self.kind:
      case InterpolantKind.SPLINE1D:
        if 'values' in self.arrays:
          values = np.tile(self.arrays['values'], (len(points), 1))
        else:
          spline = interpolate.PPoly(
              self.arrays['coefficients'], self.arrays['breaks']
          )
          values = spline(points[:, 0])
      case InterpolantKind.RIDGE:
        phi = design_matrix(points, self.arrays['exponents'])
        values = phi @ self.arrays['weights'] + self.arrays['offset']
    return values[0] if single else values

  def to_arrays(self, prefix: str = '') -> dict[str, np.ndarray]:
    return {f'{prefix}{name}': value for name, value in self.arrays.items()}

  @classmethod
  def from_arrays(
      cls, kind: InterpolantKind | str, arrays, prefix: str = ''
  ) -> 'EntrywiseInterpolant':
    restored = {
        name[len(prefix) :]: np.array(arrays[name])
        for name in arrays
        if name.startswith(prefix)
    }
    return cls(kind=InterpolantKind(kind), arrays=restored)


def fit_spline1d(points, values) -> EntrywiseInterpolant:
  """Not-a-knot cubic splines through (points, values) for every entry.

  Args:
      points: K distinct 1D normalized points (K x 1 or K).
      values: K x E matrix of entries.

  Raises:
      ValueError: for points that are not 1D or not distinct.
  """
  points = np.asarray(points, dtype=float)
  if points.ndim == 2:
    if points.shape[1] != 1:
      raise ValueError(f'spline1d needs 1D points, got {points.shape[1]}D')
    points = points[:, 0]
  values = np.asarray(values, dtype=float)
  if len(points) == 1:
    return EntrywiseInterpolant(
        kind=InterpolantKind.SPLINE1D, arrays={'values': values[0].copy()}
    )
  order = np.argsort(points, kind='stable')
  if np.any(np.diff(points[order]) <= 0):
    raise ValueError('spline1d training points must be distinct')
  spline = interpolate.CubicSpline(
      points[order], values[order], axis=0, bc_type='not-a-knot'
  )
  return EntrywiseInterpolant(
      kind=InterpolantKind.SPLINE1D,
      arrays={'breaks': spline.x, 'coefficients': spline.c},
  )


def fit_ridge(
    points, values, ridge_lambda: float = RIDGE_LAMBDA
) -> EntrywiseInterpolant:
  """Ridge regression of every entry on the degree <= 3 tensor monomials.

  The entry means are removed before the regression and added back on
  evaluation, so the mean is not shrunk.
  """
  points = np.asarray(points, dtype=float)
  if points.ndim == 1:
    points = points[:, None]
  values = np.asarray(values, dtype=float)
  exponents = monomial_exponents(points.shape[1])
  phi = design_matrix(points, exponents)
  offset = values.mean(axis=0)
  gram = phi.T @ phi + ridge_lambda * np.eye(phi.shape[1])
  weights = linalg.solve(gram, phi.T @ (values - offset), assume_a='sym')
  return EntrywiseInterpolant(
      kind=InterpolantKind.RIDGE,
      arrays={'exponents': exponents, 'weights': weights, 'offset': offset},
  )


def fit(
    kind: InterpolantKind | str,
    points,
    values,
    ridge_lambda: float = RIDGE_LAMBDA,
) -> EntrywiseInterpolant:
  match InterpolantKind(kind):
    case InterpolantKind.SPLINE1D:
      return fit_spline1d(points, values)
    case InterpolantKind.RIDGE:
      return fit_ridge(points, values, ridge_lambda)
