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

"""Local parametric reduced models, classification and prediction.

A PROMSet directory contains:
- `promset.json`: box, classifier data, triangulation, indicator table and
  per-cluster diagnostics
- `prom_<cluster>.npz`: reference basis and interpolant coefficients
"""

import collections
import dataclasses
import json
import logging
import os
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from pmor import consistency
from pmor import fem_models
from pmor import geometry
from pmor import interpolation
from pmor import mor_core
from pmor import sample_library

PROMSET_FILENAME = 'promset.json'
GLOBAL_BASIS_RTOL = 1e-10
BASELINE_CLUSTER_ID = -1


class TrainingError(ValueError):
  pass


def _triu(r: int) -> tuple[np.ndarray, np.ndarray]:
  return np.triu_indices(r)


def pack_operators(model: mor_core.ReducedModel) -> np.ndarray:
  """Vectorize M, C, K (upper triangles), f and g."""
  rows, cols = _triu(model.r)
  return np.concatenate([
      model.M[rows, cols],
      model.C[rows, cols],
      model.K[rows, cols],
      model.f,
      model.g,
  ])


def unpack_operators(vector: np.ndarray, r: int, p=None) -> mor_core.ReducedModel:
  """Inverse of `pack_operators`; mirrors the upper triangles."""
  rows, cols = _triu(r)
  size = len(rows)
  matrices = []
  for i in range(3):
    upper = np.zeros((r, r))
    upper[rows, cols] = vector[i * size : (i + 1) * size]
    matrices.append(upper + np.triu(upper, 1).T)
  return mor_core.ReducedModel(
      M=matrices[0],
      C=matrices[1],
      K=matrices[2],
      f=np.array(vector[3 * size : 3 * size + r]),
      g=np.array(vector[3 * size + r : 3 * size + 2 * r]),
      p=p,
  )


@dataclasses.dataclass(frozen=True, eq=False)
class LocalPROM:
  """Interpolated operators of one consistent cluster.

  Attributes:
      cluster_id: label of the cluster (BASELINE_CLUSTER_ID for baselines)
      reference: reference basis of the cluster
      points: normalized training points
      sample_ids: library ids of the training samples
      interpolant: entrywise interpolant of the packed transformed operators
      conditions: condition number of R^T V per training sample
      angles: principal angles [deg] of each training basis against R
  """

  cluster_id: int
  reference: consistency.ReferenceBasis
  points: np.ndarray
  sample_ids: tuple[int, ...]
  interpolant: interpolation.EntrywiseInterpolant
  conditions: tuple[float, ...] = ()
  angles: tuple[tuple[float, ...], ...] = ()

  @property
  def r(self) -> int:
    return self.reference.r

  @property
  def kind(self) -> interpolation.InterpolantKind:
    return self.interpolant.kind

  def evaluate(self, u, p=None) -> mor_core.ReducedModel:
    """Predicted transformed operators at normalized point `u`."""
    model = unpack_operators(self.interpolant(u), self.r, p)
    if not mor_core.is_positive_definite(model.M):
      logging.warning(
          '[cluster %d]: predicted mass matrix at u=%s is not positive'
          ' definite',
          self.cluster_id,
          np.atleast_1d(u).tolist(),
      )
      model = dataclasses.replace(model, flags=('mass-not-pd',))
    return model

  def diagnostics(self) -> dict:
    return {
        'cluster_id': self.cluster_id,
        'kind': self.kind.value,
        'r': self.r,
        'sample_ids': list(self.sample_ids),
        'conditions': list(self.conditions),
        'angles': [list(a) for a in self.angles],
    }


def train_prom(
    roms: Sequence[mor_core.ReducedModel],
    points: np.ndarray,
    sample_ids: Sequence[int],
    kind: interpolation.InterpolantKind | str,
    cluster_id: int = BASELINE_CLUSTER_ID,
    ridge_lambda: float = interpolation.RIDGE_LAMBDA,
    strict: bool = True,
) -> LocalPROM:
  """Matrix interpolation over a set of sampled reduced models.

  Builds the reference basis of all bases, transforms every model to it and
  fits the entrywise interpolant.

  Raises:
      TrainingError: if a transformation is singular (strict mode) or the
        interpolant cannot be fitted.
  """
  if not roms:
    raise TrainingError(f'cluster {cluster_id} has no samples')
  reference = consistency.reference_basis(
      [rom.V for rom in roms], source_sample_ids=sample_ids
  )
  packed, conditions, angles = [], [], []
  for sample_id, rom in zip(sample_ids, roms):
    try:
      transformed = consistency.transform_model(rom, reference, strict=strict)
    except consistency.SingularTransformationError as e:
      raise TrainingError(
          f'cluster {cluster_id}: sample {sample_id} cannot be transformed to'
          f' the reference basis ({e})'
      ) from e
    packed.append(pack_operators(transformed.model))
    conditions.append(transformed.condition)
    angles.append(
        tuple(consistency.principal_angles(rom.V, reference.R).theta.tolist())
    )
  try:
    interpolant = interpolation.fit(
        kind, points, np.array(packed), ridge_lambda=ridge_lambda
    )
  except ValueError as e:
    raise TrainingError(f'cluster {cluster_id}: {e}') from e
  logging.info(
      '[cluster %d]: %s pROM trained on %d samples, max cond %.3e',
      cluster_id,
      interpolation.InterpolantKind(kind).value,
      len(roms),
      max(conditions),
  )
  return LocalPROM(
      cluster_id=cluster_id,
      reference=reference,
      points=np.asarray(points, dtype=float).reshape(len(roms), -1),
      sample_ids=tuple(int(i) for i in sample_ids),
      interpolant=interpolant,
      conditions=tuple(conditions),
      angles=tuple(angles),
  )


def train_local_prom(
    lib: sample_library.SampleLibrary,
    label: int,
    kind: interpolation.InterpolantKind | str,
    ridge_lambda: float = interpolation.RIDGE_LAMBDA,
) -> LocalPROM:
  """Train the pROM of cluster `label` from its (non-deleted) samples.

  Raises:
      TrainingError: if the cluster has fewer than m samples or one of its
        samples is inconsistent with the cluster reference basis.
  """
  excluded = lib.excluded
  ids = [i for i in lib.cluster_members(label) if i not in excluded]
  if len(ids) < lib.hyperparams.min_samples_per_cluster:
    raise TrainingError(
        f'cluster {label} has {len(ids)} samples, needs'
        f' {lib.hyperparams.min_samples_per_cluster}'
    )
  return train_prom(
      [lib.samples[i].rom for i in ids],
      lib.points[ids],
      ids,
      kind,
      cluster_id=label,
      ridge_lambda=ridge_lambda,
  )


@dataclasses.dataclass(frozen=True, eq=False)
class IndicatorResult:
  count: int
  clusters: tuple[int, ...]
  inside: bool


@dataclasses.dataclass(frozen=True, eq=False)
class PROMSet:
  """The deployable set of local pROMs with classifier and indicator data.

  Attributes:
      box: the physical parameter box
      proms: local pROMs by cluster id
      classifier_points: normalized training points of the classifier
      classifier_labels: cluster id per classifier point
      classifier_ids: library sample id per classifier point
      k: number of neighbors of the classifier
      triangulation: triangulation of all library samples
      vertex_labels: cluster used for each triangulation vertex
      indicator_table: inconsistent basis vector counts per cluster pair
      theta_lT: angle threshold of the indicator
      metadata: how the library was produced (family, mor settings)
      skipped_clusters: clusters without a pROM (too small or deleted)
  """

  box: geometry.ParamBox
  proms: dict[int, LocalPROM]
  classifier_points: np.ndarray
  classifier_labels: np.ndarray
  classifier_ids: np.ndarray
  k: int
  triangulation: geometry.Triangulation
  vertex_labels: np.ndarray
  indicator_table: dict[tuple[int, int], int]
  theta_lT: float
  metadata: dict = dataclasses.field(default_factory=dict)
  skipped_clusters: tuple[int, ...] = ()

  @property
  def kind(self) -> interpolation.InterpolantKind:
    return next(iter(self.proms.values())).kind

  @property
  def r(self) -> int:
    return next(iter(self.proms.values())).r


def knn_label(
    points: np.ndarray,
    labels: np.ndarray,
    ids: np.ndarray,
    u: np.ndarray,
    k: int = 1,
) -> int:
  """Majority label of the k nearest points.

  Distance ties go to the lowest id; vote ties go to the label of the
  nearest voter.
  """
  distances = np.linalg.norm(points - np.asarray(u, dtype=float), axis=1)
  order = np.lexsort((ids, distances))[:k]
  votes = collections.Counter(labels[order].tolist())
  top = max(votes.values())
  for index in order:
    if votes[int(labels[index])] == top:
      return int(labels[index])
  raise AssertionError('unreachable')


def classify(promset: PROMSet, u) -> int:
  """Cluster id of normalized point `u` by k-nearest-neighbor voting."""
  return knn_label(
      promset.classifier_points,
      promset.classifier_labels,
      promset.classifier_ids,
      u,
      promset.k,
  )


def predict(promset: PROMSet, p) -> tuple[mor_core.ReducedModel, int]:
  """Predict the reduced model at physical point `p`.

  Returns:
      (model in reference coordinates, cluster id used).

  Raises:
      geometry.OutOfRangeError: if p is outside the box.
  """
  u = geometry.normalize(p, promset.box)
  label = classify(promset, u)
  model = promset.proms[label].evaluate(
      u, p=np.atleast_1d(np.asarray(p, dtype=float))
  )
  return model, label


def indicator_table(
    proms: dict[int, LocalPROM], theta_lT: float
) -> dict[tuple[int, int], int]:
  """Count of principal angles above theta_lT between cluster references."""
  table = {}
  labels = sorted(proms)
  for i, a in enumerate(labels):
    for b in labels[i + 1 :]:
      angles = consistency.principal_angles(
          proms[a].reference.R, proms[b].reference.R
      )
      table[(a, b)] = angles.count_above(theta_lT)
  return table


def inconsistency_indicator(promset: PROMSet, p) -> IndicatorResult:
  """Number of inconsistent basis vectors around physical point `p`.

  The simplex of the sample triangulation containing p is located; if its
  vertices belong to several clusters the largest pairwise count of
  principal angles above theta_lT between their reference bases is
  returned, otherwise 0.
  """
  u = geometry.normalize(p, promset.box)
  simplex, inside = promset.triangulation.locate(u)
  if not inside:
    logging.warning(
        '[indicator]: p=%s outside the sample hull, nearest simplex used',
        np.atleast_1d(p).tolist(),
    )
  vertices = promset.triangulation.simplices[simplex]
  clusters = tuple(sorted({int(promset.vertex_labels[v]) for v in vertices}))
  count = 0
  for i, a in enumerate(clusters):
    for b in clusters[i + 1 :]:
      count = max(count, promset.indicator_table[(a, b)])
  return IndicatorResult(count=count, clusters=clusters, inside=inside)


def build_promset(
    lib: sample_library.SampleLibrary,
    kind: interpolation.InterpolantKind | str,
    k: int = 1,
    ridge_lambda: float = interpolation.RIDGE_LAMBDA,
) -> PROMSet:
  """Train one LocalPROM per cluster and assemble the classifier.

  Clusters that were deleted or have fewer than m samples are skipped and
  their samples are left out of the classifier.

  Raises:
      TrainingError: if the library holds no trainable cluster.
  """
  if not len(lib) or any(label is None for label in lib.labels):
    raise TrainingError('library is empty or has not been clustered')
  proms: dict[int, LocalPROM] = {}
  skipped = []
  for label in sorted({l for l in lib.labels}):
    members = [i for i in lib.cluster_members(label) if i not in lib.excluded]
    if len(members) < lib.hyperparams.min_samples_per_cluster:
      skipped.append(label)
      logging.warning(
          '[cluster %d]: skipped with %d samples', label, len(members)
      )
      continue
    proms[label] = train_local_prom(lib, label, kind, ridge_lambda)
  if not proms:
    raise TrainingError('no cluster has enough samples to train a pROM')
  ids = np.array(
      [s.id for s in lib.samples if s.label in proms and s.id not in lib.excluded]
  )
  points = lib.points[ids]
  labels = np.array([lib.samples[i].label for i in ids])
  vertex_labels = np.array([
      s.label
      if s.label in proms and s.id not in lib.excluded
      else knn_label(points, labels, ids, s.u, k)
      for s in lib.samples
  ])
  return PROMSet(
      box=lib.box,
      proms=proms,
      classifier_points=points,
      classifier_labels=labels,
      classifier_ids=ids,
      k=k,
      triangulation=lib.triangulation,
      vertex_labels=vertex_labels,
      indicator_table=indicator_table(proms, lib.hyperparams.theta_lT),
      theta_lT=lib.hyperparams.theta_lT,
      metadata=dict(lib.metadata),
      skipped_clusters=tuple(skipped),
  )


def global_basis_predict(
    fom: Callable[[np.ndarray], fem_models.SystemMatrices],
    lib: sample_library.SampleLibrary,
    p,
) -> mor_core.ReducedModel:
  """Project the FOM at p onto the joint basis of the enclosing simplex.

  The vertex bases are concatenated and orthonormalized by an SVD that drops
  directions with singular values below 1e-10 of the largest.
  """
  u = geometry.normalize(p, lib.box)
  simplex, _ = lib.triangulation.locate(u)
  vertices = lib.triangulation.simplices[simplex]
  stacked = np.hstack([lib.samples[int(v)].rom.V for v in vertices])
  left, singular, _ = linalg.svd(stacked, full_matrices=False)
  keep = singular > GLOBAL_BASIS_RTOL * singular[0]
  basis = left[:, keep]
  logging.debug(
      '[global basis]: %d vertices, %d of %d directions kept',
      len(vertices),
      basis.shape[1],
      stacked.shape[1],
  )
  system = fom(np.atleast_1d(np.asarray(p, dtype=float)))
  return mor_core.reduce(system, basis, p=p)


def train_baseline_matrix_interp(
    lib: sample_library.SampleLibrary,
    kind: interpolation.InterpolantKind | str,
    ridge_lambda: float = interpolation.RIDGE_LAMBDA,
) -> LocalPROM:
  """Matrix interpolation over all samples with one global reference basis.

  The transformation guard is relaxed, so inconsistent samples are carried
  through as computed.
  """
  ids = list(range(len(lib)))
  return train_prom(
      [s.rom for s in lib.samples],
      lib.points,
      ids,
      kind,
      ridge_lambda=ridge_lambda,
      strict=False,
  )


def train_baseline_amsallem(
    lib: sample_library.SampleLibrary,
    kind: interpolation.InterpolantKind | str,
    ridge_lambda: float = interpolation.RIDGE_LAMBDA,
) -> LocalPROM:
  """Matrix interpolation over all samples after consistent truncation.

  Raises:
      consistency.DegenerateTruncationError: if no direction is shared.
  """
  bases = [s.rom.V for s in lib.samples]
  reference = consistency.reference_basis(bases)
  truncation = consistency.amsallem_truncate(bases, reference)
  roms = [
      truncation.truncate_model(i, s.rom) for i, s in enumerate(lib.samples)
  ]
  return train_prom(
      roms,
      lib.points,
      list(range(len(lib))),
      kind,
      ridge_lambda=ridge_lambda,
      strict=False,
  )


def baseline_matrix_interp(
    lib: sample_library.SampleLibrary,
    p,
    kind: interpolation.InterpolantKind | str = 'spline1d',
) -> mor_core.ReducedModel:
  baseline = train_baseline_matrix_interp(lib, kind)
  return baseline.evaluate(geometry.normalize(p, lib.box), p=p)


def baseline_amsallem(
    lib: sample_library.SampleLibrary,
    p,
    kind: interpolation.InterpolantKind | str = 'spline1d',
) -> mor_core.ReducedModel:
  baseline = train_baseline_amsallem(lib, kind)
  return baseline.evaluate(geometry.normalize(p, lib.box), p=p)


class PROMSetEncoder(json.JSONEncoder):
  """Encodes the numpy values found in pROM reports."""

  def default(self, o):
    if isinstance(o, np.ndarray):
      return o.tolist()
    if isinstance(o, np.integer):
      return int(o)
    if isinstance(o, np.floating):
      return float(o)
    return super().default(o)


def _prom_arrays(prom: LocalPROM) -> dict[str, np.ndarray]:
  return {
      'R': prom.reference.R,
      'points': prom.points,
      'sample_ids': np.array(prom.sample_ids, dtype=int),
      'conditions': np.array(prom.conditions, dtype=float),
      'angles': np.array(prom.angles, dtype=float),
      **prom.interpolant.to_arrays(prefix='interp_'),
  }


def save_prom(prom: LocalPROM, path: str) -> None:
  np.savez(path, kind=np.array(prom.kind.value), **_prom_arrays(prom))


def load_prom(path: str, cluster_id: int) -> LocalPROM:
  with np.load(path) as arrays:
    sample_ids = tuple(int(i) for i in arrays['sample_ids'])
    return LocalPROM(
        cluster_id=cluster_id,
        reference=consistency.ReferenceBasis(
            R=np.array(arrays['R']), source_sample_ids=sample_ids
        ),
        points=np.array(arrays['points']),
        sample_ids=sample_ids,
        interpolant=interpolation.EntrywiseInterpolant.from_arrays(
            str(arrays['kind']), arrays, prefix='interp_'
        ),
        conditions=tuple(arrays['conditions'].tolist()),
        angles=tuple(tuple(a) for a in arrays['angles'].tolist()),
    )


def save_promset(promset: PROMSet, directory: str) -> str:
  """Write `promset` to `directory`; returns the path of promset.json."""
  os.makedirs(directory, exist_ok=True)
  for cluster_id, prom in promset.proms.items():
    save_prom(prom, os.path.join(directory, f'prom_{cluster_id}.npz'))
  report = {
      'box': promset.box.to_dict(),
      'clusters': sorted(promset.proms),
      'skipped_clusters': list(promset.skipped_clusters),
      'k': promset.k,
      'theta_lT': promset.theta_lT,
      'classifier': {
          'points': promset.classifier_points,
          'labels': promset.classifier_labels,
          'ids': promset.classifier_ids,
      },
      'triangulation': promset.triangulation.to_dict(),
      'vertex_labels': promset.vertex_labels,
      'indicator_table': [
          [a, b, count] for (a, b), count in promset.indicator_table.items()
      ],
      'metadata': promset.metadata,
      'diagnostics': [p.diagnostics() for p in promset.proms.values()],
  }
  report_filepath = os.path.join(directory, PROMSET_FILENAME)
  with open(report_filepath, 'w') as json_report:
    json.dump(report, json_report, indent=4, cls=PROMSetEncoder)
  logging.info(
      '[promset]: %d local pROMs saved in %s', len(promset.proms), directory
  )
  return report_filepath


def load_promset(directory: str) -> PROMSet:
  with open(os.path.join(directory, PROMSET_FILENAME)) as json_report:
    report = json.load(json_report)
  box = geometry.ParamBox.from_dict(report['box'])
  proms = {
      cluster_id: load_prom(
          os.path.join(directory, f'prom_{cluster_id}.npz'), cluster_id
      )
      for cluster_id in report['clusters']
  }
  classifier = report['classifier']
  return PROMSet(
      box=box,
      proms=proms,
      classifier_points=np.array(classifier['points'], dtype=float).reshape(
          -1, box.dimension
      ),
      classifier_labels=np.array(classifier['labels'], dtype=int),
      classifier_ids=np.array(classifier['ids'], dtype=int),
      k=report['k'],
      triangulation=geometry.Triangulation.from_dict(report['triangulation']),
      vertex_labels=np.array(report['vertex_labels'], dtype=int),
      indicator_table={
          (a, b): count for a, b, count in report['indicator_table']
      },
      theta_lT=report['theta_lT'],
      metadata=report['metadata'],
      skipped_clusters=tuple(report['skipped_clusters']),
  )
