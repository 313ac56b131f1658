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

import numpy as np
import pytest
from scipy import linalg
from scipy import sparse

from pmor import consistency
from pmor import fem_models
from pmor import mor_core


def _system(m, c, k, f, g=None):
  f = np.asarray(f, dtype=float)
  return fem_models.SystemMatrices(
      M=sparse.csr_matrix(np.atleast_2d(m)),
      C=sparse.csr_matrix(np.atleast_2d(c)),
      K=sparse.csr_matrix(np.atleast_2d(k)),
      f=f,
      g=f.copy() if g is None else np.asarray(g, dtype=float),
  )


class TestSolveModes:

  def test_diagonal_system(self):
    system = _system(np.eye(2), np.zeros((2, 2)), np.diag([1.0, 4.0]), [1, 1])
    modal = mor_core.solve_modes(system, 2)
    np.testing.assert_allclose(modal.omega, [1.0, 2.0])
    np.testing.assert_allclose(modal.phi, np.eye(2), atol=1e-12)

  def test_mass_normalized(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 6})
    modal = mor_core.solve_modes(system, 8)
    gram = modal.phi.T @ (system.M @ modal.phi)
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-10)
    assert np.all(np.diff(modal.omega) >= 0.0)

  def test_sign_convention(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 6})
    phi = mor_core.solve_modes(system, 4).phi
    pivots = np.argmax(np.abs(phi), axis=0)
    assert np.all(phi[pivots, np.arange(4)] > 0.0)

  def test_shift_invert_matches_dense(self, monkeypatch):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 10})
    dense = mor_core.solve_modes(system, 5)
    monkeypatch.setattr(mor_core, 'DENSE_EIGENSOLVER_LIMIT', 10)
    iterative = mor_core.solve_modes(system, 5)
    np.testing.assert_allclose(iterative.omega, dense.omega, rtol=1e-8)
    basis = mor_core.orthonormalize(dense.phi)
    for i in range(5):
      single = mor_core.orthonormalize(iterative.phi[:, [i]])
      assert consistency.max_angle(single, basis) < 1e-4

  def test_too_many_modes(self):
    system = _system(np.eye(2), np.zeros((2, 2)), np.eye(2), [1, 1])
    with pytest.raises(mor_core.DimensionMismatchError):
      mor_core.solve_modes(system, 3)


class TestSelectModes:

  def test_lowest(self):
    system = _system(
        np.eye(6), np.zeros((6, 6)), np.diag(np.arange(1.0, 7.0)), np.ones(6)
    )
    modal = mor_core.solve_modes(system, 6)
    np.testing.assert_array_equal(
        mor_core.select_modes(modal, system, 4, 'lowest'), [0, 1, 2, 3]
    )

  def test_dominant_picks_the_excited_mode(self):
    f = np.array([0.0, 0.0, 1.0, 0.0])
    system = _system(
        np.eye(4), np.zeros((4, 4)), np.diag([1.0, 2.0, 3.0, 4.0]), f
    )
    modal = mor_core.solve_modes(system, 4)
    np.testing.assert_array_equal(
        mor_core.select_modes(modal, system, 1, 'dominant'), [2]
    )

  def test_dominant_result_is_sorted(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 6})
    modal = mor_core.solve_modes(system, 12)
    chosen = mor_core.select_modes(modal, system, 5, 'dominant')
    assert len(chosen) == 5
    assert np.all(np.diff(chosen) > 0)

  def test_rigid_body_mode_is_infinitely_dominant(self):
    system = _system(np.eye(2), np.zeros((2, 2)), np.diag([0.0, 1.0]), [0, 1])
    modal = mor_core.ModalData(omega=np.array([0.0, 1.0]), phi=np.eye(2))
    scores = mor_core.dominance_scores(modal, system)
    assert scores[0] == np.inf
    assert scores[1] == pytest.approx(1.0)

  def test_too_many(self):
    system = _system(np.eye(2), np.zeros((2, 2)), np.eye(2), [1, 1])
    modal = mor_core.solve_modes(system, 2)
    with pytest.raises(mor_core.DimensionMismatchError):
      mor_core.select_modes(modal, system, 3)


class TestReduce:

  def test_identity_basis(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 2})
    rom = mor_core.reduce(system, np.eye(system.n))
    np.testing.assert_allclose(rom.M, system.M.toarray())
    np.testing.assert_allclose(rom.K, system.K.toarray())
    np.testing.assert_allclose(rom.C, system.C.toarray())
    np.testing.assert_allclose(rom.f, system.f)

  def test_single_unit_vector(self):
    m = np.diag([2.0, 3.0])
    k = np.array([[5.0, 1.0], [1.0, 7.0]])
    c = 0.1 * k
    system = _system(m, c, k, [0.5, 1.0], g=[0.25, 2.0])
    rom = mor_core.reduce(system, np.array([[1.0], [0.0]]))
    assert rom.M[0, 0] == 2.0 and rom.K[0, 0] == 5.0
    assert rom.C[0, 0] == pytest.approx(0.5)
    assert rom.f[0] == 0.5 and rom.g[0] == 0.25

  def test_basis_size_mismatch(self):
    system = _system(np.eye(2), np.zeros((2, 2)), np.eye(2), [1, 1])
    with pytest.raises(mor_core.DimensionMismatchError):
      mor_core.reduce(system, np.eye(3))

  def test_modal_rom_keeps_frequencies(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 8})
    rom = mor_core.modal_rom(system, 6, p=[0.03])
    eigenvalues = linalg.eigvalsh(rom.K, rom.M)
    np.testing.assert_allclose(np.sqrt(eigenvalues), rom.omega, rtol=1e-8)
    np.testing.assert_allclose(rom.V.T @ rom.V, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(rom.p, [0.03])

  def test_arrays_round_trip(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 3})
    rom = mor_core.modal_rom(system, 3, p=[0.03])
    restored = mor_core.ReducedModel.from_arrays(rom.to_arrays())
    np.testing.assert_array_equal(restored.K, rom.K)
    np.testing.assert_array_equal(restored.V, rom.V)
    np.testing.assert_array_equal(restored.omega, rom.omega)


class TestTransferFunction:

  def test_single_dof(self):
    system = _system([[1.0]], [[0.0]], [[4.0]], [1.0])
    response = mor_core.transfer_function(system, [1.0])
    assert response[0] == pytest.approx(1.0 / 3.0)

  def test_two_dof_against_dense_solve(self):
    m = np.array([[2.0, 0.5], [0.5, 1.0]])
    k = np.array([[6.0, -2.0], [-2.0, 4.0]])
    c = 0.05 * m + 0.01 * k
    f, g = np.array([1.0, 0.0]), np.array([0.3, 0.7])
    system = _system(m, c, k, f, g)
    omegas = np.linspace(0.1, 5.0, 40)
    response = mor_core.transfer_function(system, omegas)
    expected = [
        g @ np.linalg.solve(k - w**2 * m + 1j * w * c, f) for w in omegas
    ]
    np.testing.assert_allclose(response, expected, rtol=1e-10)

  def test_reduced_matches_full_for_full_basis(self):
    system = fem_models.parametric_fom('beam', [0.03], {'n_elements': 3})
    rom = mor_core.reduce(system, np.eye(system.n))
    omegas = np.linspace(10.0, 1000.0, 5)
    np.testing.assert_allclose(
        mor_core.transfer_function(rom, omegas),
        mor_core.transfer_function(system, omegas),
        rtol=1e-6,
    )

  def test_undamped_resonance(self):
    system = _system([[1.0]], [[0.0]], [[4.0]], [1.0])
    with pytest.raises(mor_core.NumericError, match='omega=2'):
      mor_core.transfer_function(system, [1.0, 2.0])
    rom = mor_core.ReducedModel(
        M=np.eye(1), C=np.zeros((1, 1)), K=4 * np.eye(1),
        f=np.ones(1), g=np.ones(1),
    )
    with pytest.raises(mor_core.NumericError):
      mor_core.transfer_function(rom, [2.0])


class TestRelativeH2Error:

  OMEGAS = np.linspace(1.0, 10.0, 101)

  def test_identical(self):
    h = 1.0 / (1.0 + 1j * self.OMEGAS)
    assert mor_core.relative_h2_error(h, h, self.OMEGAS) == 0.0

  def test_zero_approximation(self):
    h = 1.0 / (1.0 + 1j * self.OMEGAS)
    error = mor_core.relative_h2_error(h, np.zeros_like(h), self.OMEGAS)
    assert error == pytest.approx(1.0)

  def test_squared_integrand(self):
    h = np.ones(self.OMEGAS.shape, dtype=complex)
    approx = 0.5 * h
    assert mor_core.relative_h2_error(
        h, approx, self.OMEGAS, 'abs'
    ) == pytest.approx(np.sqrt(0.5))
    assert mor_core.relative_h2_error(
        h, approx, self.OMEGAS, 'squared'
    ) == pytest.approx(0.5)

  def test_agrees_with_refined_quadrature(self):
    def one_pole(w, pole):
      return 1.0 / (pole + 1j * w)

    fine = np.linspace(1.0, 10.0, 1001)
    coarse = mor_core.relative_h2_error(
        one_pole(self.OMEGAS, 2.0), one_pole(self.OMEGAS, 2.1), self.OMEGAS
    )
    refined = mor_core.relative_h2_error(
        one_pole(fine, 2.0), one_pole(fine, 2.1), fine
    )
    assert coarse == pytest.approx(refined, abs=1e-3)

  def test_zero_reference(self):
    zero = np.zeros(self.OMEGAS.shape, dtype=complex)
    with pytest.raises(mor_core.NumericError, match='identically zero'):
      mor_core.relative_h2_error(zero, zero, self.OMEGAS)

  def test_length_mismatch(self):
    with pytest.raises(mor_core.DimensionMismatchError):
      mor_core.relative_h2_error(np.ones(3), np.ones(2), self.OMEGAS[:3])

  @pytest.mark.parametrize(
      'omegas', [[1.0, 3.0, 2.0], [1.0, 2.0, 2.0], [3.0, 2.0, 1.0]]
  )
  def test_frequencies_must_ascend(self, omegas):
    h = np.ones(3, dtype=complex)
    with pytest.raises(ValueError, match='ascending'):
      mor_core.relative_h2_error(h, 0.5 * h, omegas)


class TestPositiveDefinite:

  def test_detects_indefinite(self):
    assert mor_core.is_positive_definite(np.diag([1.0, 2.0]))
    assert not mor_core.is_positive_definite(np.diag([1.0, -2.0]))


class TestBeamModeCrossing:
  """The height h stiffens bending in z only, so z modes climb past y modes.

  Bending in y stays near 8.35, 52.3, 146 and 287 Hz. Bending in z starts at
  twice those values for h = 0.02 and reaches five times them at h = 0.05;
  the second z mode passes the third y mode near h = 0.028.
  """

  @staticmethod
  def _bends_in_z(modal):
    phi = modal.phi
    return [
        bool(np.linalg.norm(phi[2::6, i]) > np.linalg.norm(phi[1::6, i]))
        for i in range(modal.m)
    ]

  def test_first_mode_ignores_height(self):
    for h in (0.02, 0.05):
      modal = mor_core.solve_modes(fem_models.parametric_fom('beam', [h]), 5)
      assert modal.omega[0] / (2.0 * np.pi) == pytest.approx(8.35, rel=0.03)

  def test_second_z_mode_changes_ordinal(self):
    low = mor_core.solve_modes(fem_models.parametric_fom('beam', [0.02]), 5)
    high = mor_core.solve_modes(fem_models.parametric_fom('beam', [0.05]), 5)
    assert self._bends_in_z(low) == [False, True, False, True, False]
    assert self._bends_in_z(high) == [False, True, False, False, True]

  def test_lowest_bases_differ_across_the_crossing(self):
    bases = []
    for h in (0.02, 0.05):
      modal = mor_core.solve_modes(fem_models.parametric_fom('beam', [h]), 4)
      bases.append(mor_core.orthonormalize(modal.phi))
    assert consistency.max_angle(*bases) == pytest.approx(90.0, abs=1.0)
