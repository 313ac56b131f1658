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

"""Subspace angles and the transformation of reduced models to a common basis."""

import dataclasses
import logging
from typing import Sequence

import numpy as np
from scipy import linalg

from pmor import mor_core

MAX_CONDITION = 1e12
TRUNCATION_ANGLE_DEG = 45.0


class ContractViolationError(ValueError):
  pass


class SingularTransformationError(mor_core.NumericError):
  pass


class DegenerateTruncationError(ValueError):
  pass


@dataclasses.dataclass(frozen=True, eq=False)
class PrincipalAngles:
  """Principal angles between two subspaces.

  Attributes:
      theta: angles in degrees, ascending
      sigma: singular values of V_i^T V_j, descending, clipped to [0, 1]
      W: left singular vectors (columns ordered like theta)
      Z: right singular vectors (columns ordered like theta)
  """

  theta: np.ndarray
  sigma: np.ndarray
  W: np.ndarray
  Z: np.ndarray

  @property
  def largest(self) -> float:
    return float(self.theta[-1]) if self.theta.size else 0.0

  def count_above(self, threshold_deg: float) -> int:
    return int(np.count_nonzero(self.theta > threshold_deg))


@dataclasses.dataclass(frozen=True, eq=False)
class ReferenceBasis:
  R: np.ndarray
  source_sample_ids: tuple[int, ...] = ()

  @property
  def r(self) -> int:
    return self.R.shape[1]


@dataclasses.dataclass(frozen=True, eq=False)
class TransformedModel:
  """A reduced model expressed in the coordinates of a reference basis."""

  original: mor_core.ReducedModel
  T: np.ndarray
  condition: float
  model: mor_core.ReducedModel


def _check_orthonormal(basis: np.ndarray, name: str) -> None:
  gram = basis.T @ basis
  deviation = np.max(np.abs(gram - np.eye(basis.shape[1])), initial=0.0)
  if deviation > 1e3 * mor_core.ORTHONORMALITY_TOLERANCE:
    raise ContractViolationError(
        f'{name} is not orthonormal (max |V^T V - I| = {deviation:.2e})'
    )


def principal_angles(
    basis_i: np.ndarray, basis_j: np.ndarray
) -> PrincipalAngles:
  """Principal angles between span(basis_i) and span(basis_j).

  Args:
      basis_i: n x r orthonormal basis.
      basis_j: n x q orthonormal basis.

  Returns:
      The angles (ascending, degrees) with the singular vectors of
      basis_i^T basis_j.

  Raises:
      ContractViolationError: if a basis is not orthonormal or the row
        counts differ.
  """
  basis_i = np.atleast_2d(np.asarray(basis_i, dtype=float))
  basis_j = np.atleast_2d(np.asarray(basis_j, dtype=float))
  if basis_i.shape[0] != basis_j.shape[0]:
    raise ContractViolationError(
        f'bases live in different spaces: {basis_i.shape} vs {basis_j.shape}'
    )
  _check_orthonormal(basis_i, 'V_i')
  _check_orthonormal(basis_j, 'V_j')
  u, sigma, vh = linalg.svd(basis_i.T @ basis_j, full_matrices=False)
  sigma = np.clip(sigma, 0.0, 1.0)
  theta = np.degrees(np.arccos(sigma))
  return PrincipalAngles(theta=theta, sigma=sigma, W=u, Z=vh.T)


def max_angle(basis_i: np.ndarray, basis_j: np.ndarray) -> float:
  return principal_angles(basis_i, basis_j).largest


def reference_basis(
    bases: Sequence[np.ndarray], source_sample_ids: Sequence[int] = ()
) -> ReferenceBasis:
  """First r left singular vectors of the concatenated bases.

  Raises:
      ValueError: if `bases` is empty.
      ContractViolationError: if the bases differ in shape.
  """
  if not bases:
    raise ValueError('cannot build a reference basis from an empty library')
  shapes = {np.shape(basis) for basis in bases}
  if len(shapes) != 1:
    raise ContractViolationError(f'bases differ in shape: {sorted(shapes)}')
  r = np.shape(bases[0])[1]
  u, _, _ = linalg.svd(np.hstack(bases), full_matrices=False)
  return ReferenceBasis(R=u[:, :r], source_sample_ids=tuple(source_sample_ids))


def transformation(
    basis: np.ndarray, reference: ReferenceBasis, strict: bool = True
) -> tuple[np.ndarray, float]:
  """T = (R^T V)^-1 and the condition number of R^T V.

  Args:
      basis: n x r basis of a sample.
      reference: the reference basis.
      strict: reject condition numbers above MAX_CONDITION. With strict off
        the ill-conditioned inverse is returned as computed (pseudo-inverse
        if exactly singular).

  Raises:
      SingularTransformationError: if strict and R^T V is near singular.
  """
  product = reference.R.T @ basis
  condition = float(np.linalg.cond(product))
  if strict and not condition <= MAX_CONDITION:
    raise SingularTransformationError(
        f'R^T V is singular to working precision (cond = {condition:.3e})'
    )
  try:
    inverse = linalg.inv(product)
  except linalg.LinAlgError:
    if strict:
      raise SingularTransformationError('R^T V is exactly singular')
    inverse = linalg.pinv(product)
  return inverse, condition


def transform_model(
    rom: mor_core.ReducedModel,
    reference: ReferenceBasis,
    strict: bool = True,
) -> TransformedModel:
  """Express `rom` in the coordinates closest to the reference basis.

  Raises:
      SingularTransformationError: propagated from `transformation`.
  """
  t, condition = transformation(rom.V, reference, strict=strict)
  model = mor_core.ReducedModel(
      M=t.T @ rom.M @ t,
      C=t.T @ rom.C @ t,
      K=t.T @ rom.K @ t,
      f=t.T @ rom.f,
      g=rom.g @ t,
      V=rom.V @ t,
      p=rom.p,
      omega=rom.omega,
  )
  return TransformedModel(original=rom, T=t, condition=condition, model=model)


@dataclasses.dataclass(frozen=True, eq=False)
class Truncation:
  """Bases cut down to the directions consistent with a reference basis.

  Attributes:
      bases: truncated orthonormal bases (n x l_min each)
      projections: the r x l_min factors P_k with truncated = V_k P_k
      counts: l_k per basis (angles below the truncation angle)
      l_min: the common truncated order
  """

  bases: list[np.ndarray]
  projections: list[np.ndarray]
  counts: list[int]
  l_min: int

  def truncate_model(
      self, index: int, rom: mor_core.ReducedModel
  ) -> mor_core.ReducedModel:
    """Re-project a sampled reduced model onto truncated basis `index`."""
    p = self.projections[index]
    return mor_core.ReducedModel(
        M=p.T @ rom.M @ p,
        C=p.T @ rom.C @ p,
        K=p.T @ rom.K @ p,
        f=p.T @ rom.f,
        g=rom.g @ p,
        V=self.bases[index],
        p=rom.p,
        omega=rom.omega,
    )


def amsallem_truncate(
    bases: Sequence[np.ndarray], reference: ReferenceBasis
) -> Truncation:
  """Truncate every basis to the directions within 45 degrees of R.

  For basis k the principal angles against R give W_k and l_k (number of
  angles below 45 degrees). All bases are cut to l_min = min_k l_k columns
  of V_k W_k, re-orthonormalized.

  Raises:
      DegenerateTruncationError: if some basis has no direction within 45
        degrees of R.
  """
  angles = [principal_angles(basis, reference.R) for basis in bases]
  counts = [
      int(np.count_nonzero(a.theta < TRUNCATION_ANGLE_DEG)) for a in angles
  ]
  l_min = min(counts)
  if l_min == 0:
    raise DegenerateTruncationError(
        f'basis {counts.index(0)} has no direction within'
        f' {TRUNCATION_ANGLE_DEG:g} degrees of the reference basis'
    )
  projections = []
  truncated = []
  for basis, angle in zip(bases, angles):
    p, _ = linalg.qr(angle.W[:, :l_min], mode='economic')
    projections.append(p)
    truncated.append(basis @ p)
  logging.info(
      '[truncation]: l_min = %d of r = %d (l_k range %d - %d)',
      l_min,
      reference.r,
      l_min,
      max(counts),
  )
  return Truncation(
      bases=truncated, projections=projections, counts=counts, l_min=l_min
  )
