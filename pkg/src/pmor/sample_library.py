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

"""The sample library: sampled reduced models and their neighborhood graph.

A library directory contains:
- `library.json`: box, hyperparameters, samples (points, labels, origin,
  timings), edge records, forced and blocked pairs, deleted clusters, the
  convergence flag and the event log
- `models/sample_<id>.npz`: the reduced operators and basis of each sample
"""

import dataclasses
import enum
import json
import logging
import math
import os

import numpy as np

from pmor import consistency
from pmor import geometry
from pmor import mor_core

LIBRARY_FILENAME = 'library.json'
MODELS_DIRNAME = 'models'
CONSISTENT = 1
UNKNOWN = 0
INCONSISTENT = -1


class InvalidHyperparamsError(ValueError):
  pass


@enum.unique
class DistanceCandidates(enum.Enum):
  """Edges eligible for the distance-driven insertion."""

  BOTH = 'both'
  UNKNOWN = 'unknown'
  INCONSISTENT = 'inconsistent'


@enum.unique
class SampleOrigin(enum.Enum):
  INITIAL = 'initial'
  THETA = 'theta'
  DISTANCE = 'distance'
  BORDER = 'border'
  FILL = 'fill'
  GAP = 'gap'


@dataclasses.dataclass(frozen=True)
class Hyperparams:
  """Thresholds of the adaptive sampling and cluster filling.

  Attributes:
      theta_lT: angle [deg] at or below which neighbors are consistent
      theta_uT: angle [deg] at or above which neighbors are inconsistent
      d_lT: normalized distance below which neighbors are inconsistent
      d_uT: inconsistent neighbors farther apart than this are bisected
      d_N: minimal clearance of a new midpoint to the existing samples
      d_C: consistent neighbors farther apart than this are bisected
      min_samples_per_cluster: samples a cluster needs for interpolation
      angle_decrease_fraction: relative angle drop a bisection must achieve
      max_border_rounds: border searches per cluster before deletion
      max_total_samples: sampling budget
      distance_candidates: which edges the distance-driven insertion bisects
  """

  theta_lT: float = 10.0
  theta_uT: float = 85.0
  d_lT: float = 0.1
  d_uT: float = 0.2
  d_N: float = 0.0
  d_C: float = math.inf
  min_samples_per_cluster: int = 4
  angle_decrease_fraction: float = 0.10
  max_border_rounds: int = 3
  max_total_samples: int = 5000
  distance_candidates: DistanceCandidates = DistanceCandidates.BOTH

  def __post_init__(self):
    object.__setattr__(
        self, 'distance_candidates', DistanceCandidates(self.distance_candidates)
    )
    if not 0 < self.theta_lT < self.theta_uT <= 90:
      raise InvalidHyperparamsError(
          'angle thresholds must satisfy 0 < theta_lT < theta_uT <= 90, got'
          f' {self.theta_lT}, {self.theta_uT}'
      )
    if not 0 <= self.d_lT < self.d_uT:
      raise InvalidHyperparamsError(
          'distance thresholds must satisfy 0 <= d_lT < d_uT, got'
          f' {self.d_lT}, {self.d_uT}'
      )
    if self.d_N < 0 or not self.d_C > 0:
      raise InvalidHyperparamsError(
          f'd_N must be >= 0 and d_C > 0, got {self.d_N}, {self.d_C}'
      )
    if not 0 <= self.angle_decrease_fraction < 1:
      raise InvalidHyperparamsError(
          'angle_decrease_fraction must be in [0, 1), got'
          f' {self.angle_decrease_fraction}'
      )
    if self.min_samples_per_cluster < 1 or self.max_border_rounds < 0:
      raise InvalidHyperparamsError(
          'min_samples_per_cluster must be >= 1 and max_border_rounds >= 0'
      )
    if self.max_total_samples < 2:
      raise InvalidHyperparamsError('max_total_samples must be >= 2')

  def to_dict(self) -> dict:
    values = dataclasses.asdict(self)
    values['distance_candidates'] = self.distance_candidates.value
    # JSON has no infinity literal.
    values['d_C'] = None if math.isinf(self.d_C) else self.d_C
    return values

  @classmethod
  def from_dict(cls, values: dict) -> 'Hyperparams':
    values = dict(values)
    if values.get('d_C') is None:
      values['d_C'] = math.inf
    return cls(**values)


@dataclasses.dataclass
class EdgeRecord:
  a: int
  b: int
  d: float
  theta: float
  c: int
  forced: bool = False

  @property
  def key(self) -> tuple[int, int]:
    return (self.a, self.b)


@dataclasses.dataclass
class Sample:
  """One sampled parameter point and its reduced model."""

  id: int
  p: np.ndarray
  u: np.ndarray
  rom: mor_core.ReducedModel
  origin: SampleOrigin
  label: int | None = None
  timings: dict[str, float] = dataclasses.field(default_factory=dict)

  def to_dict(self) -> dict:
    return {
        'id': self.id,
        'p': self.p.tolist(),
        'u': self.u.tolist(),
        'origin': self.origin.value,
        'label': self.label,
        'timings': self.timings,
    }


def edge_key(a: int, b: int) -> tuple[int, int]:
  return (a, b) if a < b else (b, a)


class SampleLibrary:
  """Samples, their triangulation and the per-edge consistency records.

  Sample ids are positions in `samples` and double as triangulation point
  ids. The triangulation is an immutable snapshot; `sampler.retriangulate`
  replaces it and refreshes the edge records.

  Attributes:
      box: the physical parameter box
      hyperparams: thresholds used to tag edges
      metadata: how the reduced models were produced (family, mor settings)
      samples: all samples in insertion order
      triangulation: Delaunay triangulation of all samples
      edges: one record per triangulation edge
      forced_inconsistent: pairs tagged inconsistent by a rule other than
        the angle/distance thresholds
      blocked: pairs whose midpoint cannot be sampled (clearance <= d_N)
      deleted_clusters: sample id groups of clusters dropped from training
      converged: whether the adaptive sampling loop terminated normally
      events: event log (insertions, timings, rule firings)
  """

  def __init__(
      self,
      box: geometry.ParamBox,
      hyperparams: Hyperparams,
      metadata: dict | None = None,
  ):
    self.box = box
    self.hyperparams = hyperparams
    self.metadata: dict = dict(metadata or {})
    self.samples: list[Sample] = []
    self.triangulation: geometry.Triangulation | None = None
    self.edges: dict[tuple[int, int], EdgeRecord] = {}
    self.forced_inconsistent: set[tuple[int, int]] = set()
    self.blocked: set[tuple[int, int]] = set()
    self.deleted_clusters: list[list[int]] = []
    self.converged = False
    self.events: list[dict] = []
    self._angles: dict[tuple[int, int], float] = {}

  def __len__(self) -> int:
    return len(self.samples)

  @property
  def dimension(self) -> int:
    return self.box.dimension

  @property
  def points(self) -> np.ndarray:
    """Normalized coordinates, one row per sample."""
    return np.array([s.u for s in self.samples]).reshape(-1, self.dimension)

  @property
  def labels(self) -> list[int | None]:
    return [s.label for s in self.samples]

  @property
  def excluded(self) -> set[int]:
    return {i for group in self.deleted_clusters for i in group}

  def cluster_members(self, label: int) -> list[int]:
    return [s.id for s in self.samples if s.label == label]

  def cluster_labels(self) -> list[int]:
    """Labels of the clusters that are not deleted, ascending."""
    excluded = self.excluded
    return sorted({
        s.label
        for s in self.samples
        if s.label is not None and s.id not in excluded
    })

  def log_event(self, event: str, **fields) -> None:
    record = {'event': event, **fields}
    self.events.append(record)
    logging.debug('[library]: %s', record)

  def add_sample(
      self,
      u,
      rom: mor_core.ReducedModel,
      origin: SampleOrigin,
      label: int | None = None,
      timings: dict[str, float] | None = None,
  ) -> int:
    """Append a sample at normalized point `u` (no retriangulation)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    sample = Sample(
        id=len(self.samples),
        p=geometry.denormalize(u, self.box),
        u=u,
        rom=rom,
        origin=SampleOrigin(origin),
        label=label,
        timings=dict(timings or {}),
    )
    self.samples.append(sample)
    self.log_event(
        'sample',
        id=sample.id,
        origin=sample.origin.value,
        u=u.tolist(),
        **sample.timings,
    )
    return sample.id

  def angle(self, a: int, b: int) -> float:
    """Largest principal angle [deg] between the bases of samples a and b."""
    key = edge_key(a, b)
    if key not in self._angles:
      self._angles[key] = consistency.max_angle(
          self.samples[a].rom.V, self.samples[b].rom.V
      )
    return self._angles[key]

  def distance(self, a: int, b: int) -> float:
    return float(np.linalg.norm(self.samples[a].u - self.samples[b].u))

  def neighbors(self, sample_id: int) -> list[int]:
    return sorted(
        b if a == sample_id else a
        for a, b in self.edges
        if sample_id in (a, b)
    )

  def force_inconsistent(self, a: int, b: int, reason: str) -> None:
    key = edge_key(a, b)
    self.forced_inconsistent.add(key)
    if key in self.edges:
      self.edges[key].c = INCONSISTENT
      self.edges[key].forced = True
    self.log_event('forced-inconsistent', pair=list(key), reason=reason)

  def edge_counts(self) -> dict[int, int]:
    counts = {CONSISTENT: 0, UNKNOWN: 0, INCONSISTENT: 0}
    for record in self.edges.values():
      counts[record.c] += 1
    return counts

  def offline_timings(self) -> dict[str, float]:
    totals: dict[str, float] = {}
    for sample in self.samples:
      for name, seconds in sample.timings.items():
        totals[name] = totals.get(name, 0.0) + seconds
    return totals

  def to_dict(self) -> dict:
    return {
        'box': self.box.to_dict(),
        'hyperparams': self.hyperparams.to_dict(),
        'metadata': self.metadata,
        'samples': [s.to_dict() for s in self.samples],
        'edges': [dataclasses.asdict(e) for e in self.edges.values()],
        'angles': [[a, b, t] for (a, b), t in sorted(self._angles.items())],
        'forced_inconsistent': sorted(list(k) for k in self.forced_inconsistent),
        'blocked': sorted(list(k) for k in self.blocked),
        'deleted_clusters': self.deleted_clusters,
        'converged': self.converged,
        'triangulation': (
            self.triangulation.to_dict() if self.triangulation else None
        ),
        'events': self.events,
    }


class LibraryEncoder(json.JSONEncoder):
  """Encodes numpy values and enums found in library reports."""

  def default(self, o):
    if isinstance(o, np.ndarray):
      return o.tolist()
    if isinstance(o, np.integer):
      return int(o)
    if isinstance(o, np.floating):
      return float(o)
    if isinstance(o, enum.Enum):
      return o.value
    return super().default(o)


def _model_path(directory: str, sample_id: int) -> str:
  return os.path.join(directory, MODELS_DIRNAME, f'sample_{sample_id}.npz')


def save_library(lib: SampleLibrary, directory: str) -> str:
  """Write `lib` to `directory`; returns the path of library.json."""
  os.makedirs(os.path.join(directory, MODELS_DIRNAME), exist_ok=True)
  for sample in lib.samples:
    np.savez(_model_path(directory, sample.id), **sample.rom.to_arrays())
  report_filepath = os.path.join(directory, LIBRARY_FILENAME)
  with open(report_filepath, 'w') as json_report:
    json.dump(lib.to_dict(), json_report, indent=4, cls=LibraryEncoder)
  logging.info(
      '[library]: %d samples, %d edges saved in %s',
      len(lib),
      len(lib.edges),
      directory,
  )
  return report_filepath


def load_library(directory: str) -> SampleLibrary:
  """Restore a library written by `save_library`.

  Raises:
      FileNotFoundError: if the directory holds no library.
  """
  with open(os.path.join(directory, LIBRARY_FILENAME)) as json_report:
    data = json.load(json_report)
  lib = SampleLibrary(
      box=geometry.ParamBox.from_dict(data['box']),
      hyperparams=Hyperparams.from_dict(data['hyperparams']),
      metadata=data['metadata'],
  )
  for entry in data['samples']:
    with np.load(_model_path(directory, entry['id'])) as arrays:
      rom = mor_core.ReducedModel.from_arrays(arrays)
    lib.samples.append(
        Sample(
            id=entry['id'],
            p=np.array(entry['p'], dtype=float),
            u=np.array(entry['u'], dtype=float),
            rom=rom,
            origin=SampleOrigin(entry['origin']),
            label=entry['label'],
            timings=entry['timings'],
        )
    )
  lib._angles = {(a, b): theta for a, b, theta in data['angles']}  # pylint: disable=protected-access
  lib.edges = {
      (e['a'], e['b']): EdgeRecord(**e) for e in data['edges']
  }
  lib.forced_inconsistent = {tuple(k) for k in data['forced_inconsistent']}
  lib.blocked = {tuple(k) for k in data['blocked']}
  lib.deleted_clusters = data['deleted_clusters']
  lib.converged = data['converged']
  if data['triangulation'] is not None:
    lib.triangulation = geometry.Triangulation.from_dict(data['triangulation'])
  lib.events = data['events']
  logging.info('[library]: %d samples loaded from %s', len(lib), directory)
  return lib
