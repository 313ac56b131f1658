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

import itertools

import numpy as np
import pytest

from pmor import interpolation


def _cubic(u):
  return np.stack([1.0 + 2.0 * u - u**2 + 3.0 * u**3, 4.0 - u**3], axis=-1)


class TestSpline1d:

  POINTS = np.array([0.0, 0.125, 0.4, 0.7, 1.0])

  def test_reproduces_cubics(self):
    spline = interpolation.fit_spline1d(self.POINTS, _cubic(self.POINTS))
    queries = np.array([0.05, 0.37, 0.93])
    np.testing.assert_allclose(
        spline(queries[:, None]), _cubic(queries), atol=1e-10
    )

  def test_interpolates_training_points(self):
    values = np.sin(3.0 * self.POINTS)[:, None]
    spline = interpolation.fit_spline1d(self.POINTS[:, None], values)
    np.testing.assert_allclose(spline(self.POINTS[:, None]), values, atol=1e-12)

  def test_unsorted_points(self):
    order = np.array([3, 0, 4, 1, 2])
    spline = interpolation.fit_spline1d(
        self.POINTS[order], _cubic(self.POINTS[order])
    )
    np.testing.assert_allclose(spline([0.5]), _cubic(np.array(0.5)), atol=1e-10)

  def test_single_point_is_constant(self):
    spline = interpolation.fit_spline1d([0.3], [[1.0, 2.0]])
    np.testing.assert_array_equal(spline([0.9]), [1.0, 2.0])

  def test_two_points_are_linear(self):
    spline = interpolation.fit_spline1d([0.0, 1.0], [[0.0], [2.0]])
    np.testing.assert_allclose(spline([0.25]), [0.5])

  def test_duplicate_points(self):
    with pytest.raises(ValueError):
      interpolation.fit_spline1d([0.1, 0.1, 0.5], np.zeros((3, 1)))

  def test_rejects_2d_points(self):
    with pytest.raises(ValueError):
      interpolation.fit_spline1d(np.zeros((3, 2)), np.zeros((3, 1)))

  def test_arrays_round_trip(self):
    spline = interpolation.fit_spline1d(self.POINTS, _cubic(self.POINTS))
    restored = interpolation.EntrywiseInterpolant.from_arrays(
        'spline1d', spline.to_arrays('interp_'), 'interp_'
    )
    np.testing.assert_array_equal(restored([0.61]), spline([0.61]))


class TestRidge:

  GRID = np.array(list(itertools.product(np.linspace(0.0, 1.0, 5), repeat=2)))

  def test_exponents(self):
    exponents = interpolation.monomial_exponents(2)
    assert exponents.shape == (16, 2)
    assert exponents.max() == interpolation.RIDGE_MAX_DEGREE

  def test_design_matrix(self):
    phi = interpolation.design_matrix(
        np.array([[2.0, 3.0]]), np.array([[0, 0], [1, 0], [1, 2]])
    )
    np.testing.assert_allclose(phi, [[1.0, 2.0, 18.0]])

  def test_constant_values_are_exact(self):
    values = np.tile([3.0, -1.0], (len(self.GRID), 1))
    ridge = interpolation.fit_ridge(self.GRID, values)
    np.testing.assert_allclose(ridge([0.33, 0.71]), [3.0, -1.0], atol=1e-12)

  def test_tensor_cubic_with_vanishing_penalty(self):
    u, v = self.GRID[:, 0], self.GRID[:, 1]
    values = (1.0 + u * v**3 - 2.0 * u**2)[:, None]
    ridge = interpolation.fit_ridge(self.GRID, values, ridge_lambda=1e-14)
    query = np.array([[0.3, 0.8]])
    expected = 1.0 + 0.3 * 0.8**3 - 2.0 * 0.3**2
    np.testing.assert_allclose(ridge(query)[0], [expected], atol=1e-6)

  def test_penalty_shrinks_towards_the_mean(self):
    values = (self.GRID[:, 0] ** 2)[:, None]
    loose = interpolation.fit_ridge(self.GRID, values, ridge_lambda=1e-8)
    tight = interpolation.fit_ridge(self.GRID, values, ridge_lambda=1e3)
    mean = values.mean()
    assert abs(tight([1.0, 0.5])[0] - mean) < abs(loose([1.0, 0.5])[0] - mean)

  def test_one_dimensional_points(self):
    points = np.linspace(0.0, 1.0, 6)
    ridge = interpolation.fit_ridge(points, (points**2)[:, None], 1e-12)
    np.testing.assert_allclose(ridge([0.45]), [0.45**2], atol=1e-6)

  def test_batch_evaluation(self):
    ridge = interpolation.fit('ridge', self.GRID, self.GRID.copy())
    assert ridge(self.GRID[:3]).shape == (3, 2)
    assert ridge(self.GRID[0]).shape == (2,)
