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

"""Modal truncation, Galerkin projection and frequency response evaluation."""

import dataclasses
import enum
import logging

import numpy as np
from scipy import integrate
from scipy import linalg
from scipy.sparse import linalg as sparse_linalg

from pmor import fem_models

DENSE_EIGENSOLVER_LIMIT = 2000
ORTHONORMALITY_TOLERANCE = 1e-10


class NumericError(ArithmeticError):
  pass


class DimensionMismatchError(ValueError):
  pass


@enum.unique
class SelectionStrategy(enum.Enum):
  LOWEST = 'lowest'
  DOMINANT = 'dominant'


@enum.unique
class H2Integrand(enum.Enum):
  ABS = 'abs'
  SQUARED = 'squared'


@dataclasses.dataclass(frozen=True, eq=False)
class ModalData:
  """Undamped eigenpairs: omega ascending [rad/s], Phi mass-normalized."""

  omega: np.ndarray
  phi: np.ndarray

  @property
  def m(self) -> int:
    return len(self.omega)


@dataclasses.dataclass(frozen=True, eq=False)
class ReducedModel:
  """Dense reduced operators and the basis that produced them.

  Attributes:
      M: r x r reduced mass
      C: r x r reduced damping
      K: r x r reduced stiffness
      f: reduced input vector
      g: reduced output vector
      V: n x r orthonormal basis; None for predicted models
      p: physical parameter point of the model
      omega: eigenfrequencies of the selected modes (sampled models only)
      flags: diagnostics attached to predictions (e.g. 'mass-not-pd')
  """

  M: np.ndarray
  C: np.ndarray
  K: np.ndarray
  f: np.ndarray
  g: np.ndarray
  V: np.ndarray | None = None
  p: np.ndarray | None = None
  omega: np.ndarray | None = None
  flags: tuple[str, ...] = ()

  @property
  def r(self) -> int:
    return self.K.shape[0]

  def to_arrays(self) -> dict[str, np.ndarray]:
    arrays = {
        'M': self.M,
        'C': self.C,
        'K': self.K,
        'f': self.f,
        'g': self.g,
    }
    for name in ('V', 'p', 'omega'):
      value = getattr(self, name)
      if value is not None:
        arrays[name] = value
    return arrays

  @classmethod
  def from_arrays(cls, arrays) -> 'ReducedModel':
    optional = {
        name: np.array(arrays[name])
        for name in ('V', 'p', 'omega')
        if name in arrays
    }
    return cls(
        M=np.array(arrays['M']),
        C=np.array(arrays['C']),
        K=np.array(arrays['K']),
        f=np.array(arrays['f']),
        g=np.array(arrays['g']),
        **optional,
    )


def _normalize_modes(phi: np.ndarray, mass) -> np.ndarray:
  modal_mass = np.einsum('ij,ij->j', phi, mass @ phi)
  phi = phi / np.sqrt(modal_mass)
  # Sign convention: the largest-magnitude entry of each mode is positive.
  pivots = np.argmax(np.abs(phi), axis=0)
  signs = np.sign(phi[pivots, np.arange(phi.shape[1])])
  signs[signs == 0] = 1.0
  return phi * signs


def solve_modes(system: fem_models.SystemMatrices, m: int) -> ModalData:
  """Solve K phi = omega^2 M phi for the m smallest eigenfrequencies.

  Args:
      system: full order model.
      m: number of modes.

  Returns:
      Mass-normalized modes with ascending angular frequencies.

  Raises:
      DimensionMismatchError: if m is not in [1, n].
      NumericError: if the eigensolver does not converge.
  """
  n = system.n
  if not 1 <= m <= n:
    raise DimensionMismatchError(f'cannot compute {m} modes of an n={n} system')
  if n <= DENSE_EIGENSOLVER_LIMIT or m >= n - 1:
    try:
      eigenvalues, phi = linalg.eigh(
          system.K.toarray(),
          system.M.toarray(),
          subset_by_index=[0, m - 1],
      )
    except linalg.LinAlgError as e:
      raise NumericError(f'[{system.label}]: dense eigensolver failed: {e}')
  else:
    try:
      eigenvalues, phi = sparse_linalg.eigsh(
          system.K.tocsc(), k=m, M=system.M.tocsc(), sigma=0.0, which='LM'
      )
    except sparse_linalg.ArpackNoConvergence as e:
      raise NumericError(
          f'[{system.label}]: shift-invert eigensolver did not converge,'
          f' {len(e.eigenvalues)} of {m} modes found'
      )
    except RuntimeError as e:
      raise NumericError(f'[{system.label}]: shift-invert failed: {e}')
  order = np.argsort(eigenvalues, kind='stable')
  eigenvalues = eigenvalues[order]
  phi = phi[:, order]
  omega = np.sqrt(np.clip(eigenvalues, 0.0, None))
  phi = _normalize_modes(phi, system.M)
  logging.debug(
      '[%s]: %d modes, %.3f - %.3f Hz',
      system.label,
      m,
      omega[0] / (2 * np.pi),
      omega[-1] / (2 * np.pi),
  )
  return ModalData(omega=omega, phi=phi)


def dominance_scores(
    modal: ModalData, system: fem_models.SystemMatrices
) -> np.ndarray:
  """Residue-style scores |(g phi_i)(phi_i^T f)| / omega_i."""
  residues = np.abs((system.g @ modal.phi) * (modal.phi.T @ system.f))
  scores = np.full(modal.m, np.inf)
  rigid = modal.omega == 0.0
  if np.any(rigid):
    logging.warning(
        '[%s]: rigid-body modes %s treated as infinitely dominant',
        system.label,
        np.flatnonzero(rigid).tolist(),
    )
  scores[~rigid] = residues[~rigid] / modal.omega[~rigid]
  return scores


def select_modes(
    modal: ModalData,
    system: fem_models.SystemMatrices,
    r: int,
    strategy: SelectionStrategy | str = SelectionStrategy.LOWEST,
) -> np.ndarray:
  """Pick r mode indices (ascending) by the given strategy.

  Raises:
      DimensionMismatchError: if r exceeds the number of available modes.
  """
  strategy = SelectionStrategy(strategy)
  if not 1 <= r <= modal.m:
    raise DimensionMismatchError(f'cannot select {r} of {modal.m} modes')
  match strategy:
    case SelectionStrategy.LOWEST:
      return np.arange(r)
    case SelectionStrategy.DOMINANT:
      scores = dominance_scores(modal, system)
      # Stable sort keeps the lowest index first among equal scores.
      chosen = np.argsort(-scores, kind='stable')[:r]
      return np.sort(chosen)


def orthonormalize(basis: np.ndarray) -> np.ndarray:
  q, _ = linalg.qr(basis, mode='economic')
  return q


def reduce(
    system: fem_models.SystemMatrices, basis: np.ndarray, p=None
) -> ReducedModel:
  """Galerkin projection of the full system onto `basis`.

  Raises:
      DimensionMismatchError: if the basis does not match the system size.
  """
  basis = np.asarray(basis, dtype=float)
  if basis.ndim != 2 or basis.shape[0] != system.n:
    raise DimensionMismatchError(
        f'basis of shape {basis.shape} does not fit an n={system.n} system'
    )

  def project(matrix):
    reduced = basis.T @ (matrix @ basis)
    return 0.5 * (reduced + reduced.T)

  return ReducedModel(
      M=project(system.M),
      C=project(system.C),
      K=project(system.K),
      f=basis.T @ system.f,
      g=system.g @ basis,
      V=basis,
      p=None if p is None else np.atleast_1d(np.asarray(p, dtype=float)),
  )


def modal_rom(
    system: fem_models.SystemMatrices,
    r: int,
    n_modes: int | None = None,
    strategy: SelectionStrategy | str = SelectionStrategy.LOWEST,
    p=None,
) -> ReducedModel:
  """Sampled reduced model: modal truncation followed by Galerkin projection.

  Args:
      system: the full order model.
      r: reduced order.
      n_modes: modes computed before selection (defaults to r).
      strategy: mode selection strategy.
      p: parameter point stored on the model.

  Returns:
      The reduced model on the re-orthonormalized selected modes.
  """
  modal = solve_modes(system, n_modes or r)
  chosen = select_modes(modal, system, r, strategy)
  rom = reduce(system, orthonormalize(modal.phi[:, chosen]), p)
  return dataclasses.replace(rom, omega=modal.omega[chosen])


def transfer_function(
    model: fem_models.SystemMatrices | ReducedModel, omegas
) -> np.ndarray:
  """H(i omega) = g (-omega^2 M + i omega C + K)^-1 f per angular frequency.

  Raises:
      NumericError: if the dynamic stiffness is singular at some omega.
  """
  omegas = np.asarray(omegas, dtype=float)
  if omegas.size == 0 or not np.all(np.isfinite(omegas)):
    raise ValueError('frequencies must be a non-empty finite vector')
  response = np.empty(omegas.shape, dtype=complex)
  is_full = isinstance(model, fem_models.SystemMatrices)
  for i, omega in enumerate(omegas):
    if is_full:
      dynamic = (
          model.K - omega**2 * model.M + 1j * omega * model.C
      ).tocsc()
      try:
        x = sparse_linalg.splu(dynamic).solve(model.f.astype(complex))
      except RuntimeError as e:
        raise NumericError(
            f'singular dynamic stiffness at omega={omega:g} rad/s: {e}'
        )
    else:
      dynamic = model.K - omega**2 * model.M + 1j * omega * model.C
      try:
        x = linalg.solve(dynamic, model.f.astype(complex))
      except linalg.LinAlgError as e:
        raise NumericError(
            f'singular dynamic stiffness at omega={omega:g} rad/s: {e}'
        )
    response[i] = model.g @ x
  if not np.all(np.isfinite(response)):
    bad = omegas[~np.isfinite(response)][0]
    raise NumericError(f'singular dynamic stiffness at omega={bad:g} rad/s')
  return response


def relative_h2_error(
    reference,
    approximation,
    omegas,
    integrand: H2Integrand | str = H2Integrand.ABS,
) -> float:
  """Relative H2 error by trapezoidal quadrature on the frequency grid.

  The default integrand is the first power of the error magnitude:
  sqrt(int |H - H_r| / int |H|). The squared variant integrates |.|^2.

  Raises:
      DimensionMismatchError: if the inputs do not share a grid of >= 2 points.
      ValueError: if the frequencies are not strictly ascending.
      NumericError: if the reference response is identically zero.
  """
  reference = np.asarray(reference)
  approximation = np.asarray(approximation)
  omegas = np.asarray(omegas, dtype=float)
  if not reference.shape == approximation.shape == omegas.shape:
    raise DimensionMismatchError('responses and frequencies differ in length')
  if omegas.size < 2:
    raise DimensionMismatchError('at least two frequencies are required')
  if np.any(np.diff(omegas) <= 0.0):
    raise ValueError('frequencies must be strictly ascending')
  power = 2 if H2Integrand(integrand) == H2Integrand.SQUARED else 1
  numerator = integrate.trapezoid(
      np.abs(reference - approximation) ** power, omegas
  )
  denominator = integrate.trapezoid(np.abs(reference) ** power, omegas)
  if denominator == 0.0:
    raise NumericError('reference response identically zero')
  return float(np.sqrt(numerator / denominator))


def is_positive_definite(matrix: np.ndarray) -> bool:
  try:
    linalg.cholesky(0.5 * (matrix + matrix.T))
  except linalg.LinAlgError:
    return False
  return True
