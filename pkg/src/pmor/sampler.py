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

"""Consistency-driven adaptive sampling, clustering and cluster filling.

The sampler places samples where the reduced bases of neighboring samples
change, tags every neighbor pair as consistent (+1), inconsistent (-1) or
unknown (0) and finally groups the samples into consistent clusters:
- `adaptive_sample` refines unknown and long inconsistent edges
- `cluster` labels the connected components of the consistent edges
- `fill_clusters` adds samples until every cluster can be interpolated
"""

import itertools
import logging
import time
from typing import Callable, Iterable

import numpy as np

from pmor import fem_models
from pmor import geometry
from pmor import mor_core
from pmor import sample_library

Hyperparams = sample_library.Hyperparams
SampleLibrary = sample_library.SampleLibrary
SampleOrigin = sample_library.SampleOrigin

CONSISTENT = sample_library.CONSISTENT
UNKNOWN = sample_library.UNKNOWN
INCONSISTENT = sample_library.INCONSISTENT
TIE_RTOL = 1e-9
COINCIDENT_DISTANCE = 1e-12


class UnresolvedEdgeError(ValueError):
  pass


class BudgetExhaustedError(RuntimeError):
  pass


class RomFactory:
  """Computes the sampled reduced model at a physical parameter point.

  Attributes:
      fom: maps a physical parameter point to the full order model
      r: reduced order
      n_modes: eigenmodes computed before selection
      selection: mode selection strategy
  """

  def __init__(
      self,
      fom: Callable[[np.ndarray], fem_models.SystemMatrices],
      r: int,
      n_modes: int | None = None,
      selection: mor_core.SelectionStrategy | str = 'lowest',
  ):
    self.fom = fom
    self.r = r
    self.n_modes = n_modes or r
    self.selection = mor_core.SelectionStrategy(selection)

  def __call__(self, p) -> tuple[mor_core.ReducedModel, dict[str, float]]:
    start = time.perf_counter()
    system = self.fom(p)
    assembled = time.perf_counter()
    rom = mor_core.modal_rom(system, self.r, self.n_modes, self.selection, p)
    reduced = time.perf_counter()
    return rom, {
        'assembly_s': assembled - start,
        'reduction_s': reduced - assembled,
    }


def get_consistency(d: float, theta: float, hp: Hyperparams) -> int:
  """Tag a neighbor pair from its distance and largest principal angle."""
  if theta <= hp.theta_lT:
    return CONSISTENT
  elif theta >= hp.theta_uT or d < hp.d_lT:
    return INCONSISTENT
  return UNKNOWN


def retriangulate(lib: SampleLibrary) -> None:
  """Rebuild the triangulation of all samples and refresh the edge records."""
  lib.triangulation = geometry.triangulate(lib.points)
  lengths = geometry.edge_metrics(lib.triangulation)
  records = {}
  for (a, b), d in zip(lib.triangulation.edges, lengths):
    key = sample_library.edge_key(int(a), int(b))
    theta = lib.angle(*key)
    c = get_consistency(float(d), theta, lib.hyperparams)
    forced = key in lib.forced_inconsistent
    if forced:
      c = INCONSISTENT
    records[key] = sample_library.EdgeRecord(
        a=key[0], b=key[1], d=float(d), theta=theta, c=c, forced=forced
    )
  lib.edges = dict(sorted(records.items()))


def _pick_largest(items: Iterable, value: Callable, key: Callable):
  """Item with the largest value; near-ties go to the smallest key."""
  items = list(items)
  if not items:
    return None
  top = max(value(item) for item in items)
  tolerance = TIE_RTOL * max(abs(top), 1e-300)
  return min((item for item in items if value(item) >= top - tolerance), key=key)


def _clearance(lib: SampleLibrary, point: np.ndarray) -> float:
  if not len(lib):
    return geometry.CLEARANCE_UNBOUNDED
  return float(np.min(np.linalg.norm(lib.points - point, axis=1)))


def _insert(
    lib: SampleLibrary,
    factory: RomFactory,
    u: np.ndarray,
    origin: SampleOrigin,
    label: int | None = None,
) -> int:
  if len(lib) >= lib.hyperparams.max_total_samples:
    raise BudgetExhaustedError(
        f'sampling budget of {lib.hyperparams.max_total_samples} samples spent'
    )
  p = geometry.denormalize(u, lib.box)
  rom, timings = factory(p)
  sample_id = lib.add_sample(u, rom, origin, label=label, timings=timings)
  logging.info(
      '[sample %d]: %s sample at p=%s', sample_id, origin.value, p.tolist()
  )
  return sample_id


def _apply_angle_decrease_rule(
    lib: SampleLibrary, parent: sample_library.EdgeRecord, new_id: int
) -> None:
  """Tag the halves of a bisected edge inconsistent if the angle barely fell.

  Only halves still tagged unknown are forced; a half at or below theta_lT
  keeps its consistent tag.
  """
  hp = lib.hyperparams
  halves = [(parent.a, new_id), (new_id, parent.b)]
  largest = max(lib.angle(a, b) for a, b in halves)
  if largest < (1.0 - hp.angle_decrease_fraction) * parent.theta:
    return
  logging.debug(
      '[sample %d]: angle %.2f -> %.2f deg, decrease rule fires',
      new_id,
      parent.theta,
      largest,
  )
  for a, b in halves:
    record = lib.edges.get(sample_library.edge_key(a, b))
    if record is not None and record.c == UNKNOWN:
      lib.force_inconsistent(a, b, reason='angle-decrease')


def _distance_candidates(
    lib: SampleLibrary,
    unknown: list[sample_library.EdgeRecord],
    long_inconsistent: list[sample_library.EdgeRecord],
) -> list[sample_library.EdgeRecord]:
  match lib.hyperparams.distance_candidates:
    case sample_library.DistanceCandidates.UNKNOWN:
      return unknown
    case sample_library.DistanceCandidates.INCONSISTENT:
      return long_inconsistent
    case sample_library.DistanceCandidates.BOTH:
      return unknown + long_inconsistent


def adaptive_sample(
    factory: RomFactory,
    box: geometry.ParamBox,
    hp: Hyperparams,
    initial_points=None,
    library: SampleLibrary | None = None,
    metadata: dict | None = None,
) -> SampleLibrary:
  """Run the adaptive sampling loop.

  Every iteration bisects the unknown edge with the largest principal angle
  and the longest edge among the distance candidates, provided the midpoint
  keeps a clearance > d_N to all samples. The loop ends when no edge is
  unknown and no inconsistent edge is longer than d_uT, or when the sample
  budget is spent.

  Args:
      factory: computes the reduced model of a physical parameter point.
      box: the physical parameter box.
      hp: sampling thresholds.
      initial_points: physical starting points; defaults to the box corners.
      library: a library to resume; `initial_points` is then ignored.
      metadata: stored with a new library.

  Returns:
      The library. `converged` is False if the budget stopped the loop.

  Raises:
      geometry.OutOfRangeError: if an initial point lies outside the box.
      geometry.DegenerateGeometryError: if the initial points coincide.
      mor_core.NumericError: if a reduced model cannot be computed.
  """
  if library is None:
    lib = SampleLibrary(box, hp, metadata)
    points = box.corners() if initial_points is None else initial_points
    for p in np.atleast_2d(np.asarray(points, dtype=float)).reshape(
        -1, box.dimension
    ):
      _insert(lib, factory, geometry.normalize(p, box), SampleOrigin.INITIAL)
  else:
    lib = library
    lib.hyperparams = hp
  retriangulate(lib)
  lib.converged = False
  started = time.perf_counter()
  iteration = 0
  while True:
    unknown = [e for e in lib.edges.values() if e.c == UNKNOWN]
    long_inconsistent = [
        e
        for e in lib.edges.values()
        if e.c == INCONSISTENT and e.d > hp.d_uT and e.key not in lib.blocked
    ]
    if not unknown and not long_inconsistent:
      lib.converged = True
      break
    if len(lib) >= hp.max_total_samples:
      logging.warning(
          '[sampler]: budget of %d samples exhausted with %d unknown edges',
          hp.max_total_samples,
          len(unknown),
      )
      break
    iteration += 1

    def has_clearance(record):
      _, clearance = geometry.midpoint_clearance(
          record.a, record.b, lib.triangulation
      )
      return clearance > hp.d_N and clearance > COINCIDENT_DISTANCE

    by_key = lambda e: e.key
    theta_edge = _pick_largest(
        filter(has_clearance, unknown), lambda e: e.theta, by_key
    )
    distance_edge = None
    if long_inconsistent:
      candidates = _distance_candidates(lib, unknown, long_inconsistent)
      distance_edge = _pick_largest(
          filter(has_clearance, candidates), lambda e: e.d, by_key
      )
    if theta_edge is not None and distance_edge is not None:
      if distance_edge.key == theta_edge.key:
        distance_edge = None

    if theta_edge is None and distance_edge is None:
      # Nothing can be refined any more: settle what is left.
      for record in unknown:
        lib.force_inconsistent(record.a, record.b, reason='unrefinable')
        if record.d > hp.d_uT:
          lib.blocked.add(record.key)
      for record in long_inconsistent:
        lib.blocked.add(record.key)
      logging.debug(
          '[sampler]: iteration %d placed nothing, %d edges settled',
          iteration,
          len(unknown) + len(long_inconsistent),
      )
      continue

    theta_id = None
    for record, origin in (
        (theta_edge, SampleOrigin.THETA),
        (distance_edge, SampleOrigin.DISTANCE),
    ):
      if record is None:
        continue
      if len(lib) >= hp.max_total_samples:
        break
      midpoint = 0.5 * (lib.samples[record.a].u + lib.samples[record.b].u)
      if _clearance(lib, midpoint) <= COINCIDENT_DISTANCE:
        continue
      new_id = _insert(lib, factory, midpoint, origin)
      if origin == SampleOrigin.THETA:
        theta_id = new_id
    retriangulate(lib)
    if theta_id is not None:
      _apply_angle_decrease_rule(lib, theta_edge, theta_id)
    counts = lib.edge_counts()
    logging.debug(
        '[sampler]: iteration %d, %d samples, edges +1/0/-1 = %d/%d/%d',
        iteration,
        len(lib),
        counts[CONSISTENT],
        counts[UNKNOWN],
        counts[INCONSISTENT],
    )
  lib.log_event(
      'adaptive-sampling',
      iterations=iteration,
      samples=len(lib),
      converged=lib.converged,
      seconds=time.perf_counter() - started,
  )
  logging.info(
      '[sampler]: %s after %d iterations with %d samples',
      'converged' if lib.converged else 'stopped',
      iteration,
      len(lib),
  )
  return lib


def cluster(lib: SampleLibrary) -> list[int]:
  """Label the samples by walking the consistent edges.

  Labels are renumbered so that cluster ids increase with the smallest
  sample id they contain.

  Raises:
      UnresolvedEdgeError: if an edge still has unknown consistency.
  """
  unresolved = [e.key for e in lib.edges.values() if e.c == UNKNOWN]
  if unresolved:
    raise UnresolvedEdgeError(
        f'{len(unresolved)} edges still unknown, first {unresolved[0]}'
    )
  labels: list[int | None] = [None] * len(lib)
  next_label = 0
  for record in lib.edges.values():
    if record.c != CONSISTENT:
      continue
    label_a, label_b = labels[record.a], labels[record.b]
    if label_a is None and label_b is None:
      labels[record.a] = labels[record.b] = next_label
      next_label += 1
    elif label_a is None:
      labels[record.a] = label_b
    elif label_b is None:
      labels[record.b] = label_a
    elif label_a != label_b:
      labels = [label_a if l == label_b else l for l in labels]
  for i, label in enumerate(labels):
    if label is None:
      labels[i] = next_label
      next_label += 1

  canonical = {}
  for label in labels:
    canonical.setdefault(label, len(canonical))
  final = [canonical[label] for label in labels]
  for sample, label in zip(lib.samples, final):
    sample.label = label
  lib.log_event('cluster', clusters=len(canonical))
  logging.info('[sampler]: %d samples in %d clusters', len(lib), len(canonical))
  return final


def _next_label(lib: SampleLibrary) -> int:
  labels = [l for l in lib.labels if l is not None]
  return max(labels) + 1 if labels else 0


def _spans(lib: SampleLibrary, members: list[int]) -> bool:
  if len(members) <= lib.dimension:
    return False
  return geometry.affine_rank(lib.points[members]) == lib.dimension


def _cluster_edges(lib: SampleLibrary, members: list[int]) -> list[tuple]:
  """Edges among cluster members, from the cluster's own triangulation."""
  if _spans(lib, members):
    tri = geometry.triangulate(lib.points[members])
    return [(members[a], members[b]) for a, b in tri.edges]
  return list(itertools.combinations(members, 2))


def fill_region(
    lib: SampleLibrary, label: int, hp: Hyperparams, factory: RomFactory
) -> list[int]:
  """Bisect the longest intra-cluster edge until the cluster has m samples.

  Returns:
      Ids of the added samples.
  """
  added = []
  members = lib.cluster_members(label)
  while len(members) < hp.min_samples_per_cluster:
    candidates = []
    for a, b in _cluster_edges(lib, members):
      midpoint = 0.5 * (lib.samples[a].u + lib.samples[b].u)
      if _clearance(lib, midpoint) > COINCIDENT_DISTANCE:
        candidates.append((sample_library.edge_key(a, b), lib.distance(a, b)))
    pick = _pick_largest(candidates, lambda c: c[1], lambda c: c[0])
    if pick is None:
      logging.warning('[cluster %d]: no edge left to bisect', label)
      break
    a, b = pick[0]
    midpoint = 0.5 * (lib.samples[a].u + lib.samples[b].u)
    added.append(_insert(lib, factory, midpoint, SampleOrigin.FILL, label))
    members = lib.cluster_members(label)
  if added:
    retriangulate(lib)
    logging.info('[cluster %d]: filled with %d samples', label, len(added))
  return added


def _classify_border_sample(lib: SampleLibrary, sample_id: int) -> int:
  """Label of the neighbor with the smallest largest angle, or a new label."""
  hp = lib.hyperparams
  neighbors = [
      j for j in lib.neighbors(sample_id) if lib.samples[j].label is not None
  ]
  best = None
  if neighbors:
    best = min(neighbors, key=lambda j: (lib.angle(sample_id, j), j))
  if best is not None and lib.angle(sample_id, best) <= hp.theta_lT:
    return lib.samples[best].label
  return _next_label(lib)


def find_borders(
    lib: SampleLibrary, label: int, hp: Hyperparams, factory: RomFactory
) -> list[int]:
  """Sample between the cluster and each neighbor outside of it.

  Each midpoint joins the class of its most similar labelled neighbor (if
  within theta_lT) or starts a new class.

  Returns:
      Ids of the added samples.
  """
  added = []
  for i in lib.cluster_members(label):
    outside = [j for j in lib.neighbors(i) if lib.samples[j].label != label]
    for j in outside:
      midpoint = 0.5 * (lib.samples[i].u + lib.samples[j].u)
      if _clearance(lib, midpoint) <= max(hp.d_N, COINCIDENT_DISTANCE):
        continue
      new_id = _insert(lib, factory, midpoint, SampleOrigin.BORDER)
      retriangulate(lib)
      lib.samples[new_id].label = _classify_border_sample(lib, new_id)
      logging.debug(
          '[cluster %d]: border sample %d joins cluster %d',
          label,
          new_id,
          lib.samples[new_id].label,
      )
      added.append(new_id)
  return added


def _delete_cluster(lib: SampleLibrary, label: int) -> None:
  """Exclude the cluster from training; one group per label."""
  excluded = lib.excluded
  members = [i for i in lib.cluster_members(label) if i not in excluded]
  if not members:
    return
  for group in lib.deleted_clusters:
    if lib.samples[group[0]].label == label:
      group.extend(members)
      break
  else:
    lib.deleted_clusters.append(members)
  lib.log_event('cluster-deleted', label=label, members=members)
  logging.warning(
      '[cluster %d]: deleted with %d samples (below %d)',
      label,
      len(members),
      lib.hyperparams.min_samples_per_cluster,
  )


def fill_long_consistent_edges(
    lib: SampleLibrary, hp: Hyperparams, factory: RomFactory
) -> list[int]:
  """Bisect consistent intra-cluster edges longer than d_C until none is left.

  Returns:
      Ids of the added samples.
  """
  added = []
  excluded = lib.excluded
  while True:
    long_edges = [
        e
        for e in lib.edges.values()
        if e.c == CONSISTENT
        and e.d > hp.d_C
        and lib.samples[e.a].label == lib.samples[e.b].label
        and e.a not in excluded
        and e.b not in excluded
    ]
    if not long_edges:
      break
    placed = len(added)
    for record in long_edges:
      midpoint = 0.5 * (lib.samples[record.a].u + lib.samples[record.b].u)
      if _clearance(lib, midpoint) <= COINCIDENT_DISTANCE:
        continue
      added.append(
          _insert(
              lib,
              factory,
              midpoint,
              SampleOrigin.GAP,
              lib.samples[record.a].label,
          )
      )
    if len(added) == placed:
      logging.warning(
          '[sampler]: %d edges longer than d_C have occupied midpoints',
          len(long_edges),
      )
      break
    retriangulate(lib)
  if added:
    logging.info('[sampler]: %d samples close gaps longer than d_C', len(added))
  return added


def fill_clusters(
    lib: SampleLibrary, hp: Hyperparams, factory: RomFactory
) -> list[int]:
  """Make every cluster ready for interpolation.

  Clusters below m samples are first grown by border searches until they
  span the parameter space (at most max_border_rounds), then filled. A
  cluster that cannot be grown is deleted, as is any cluster still below m
  afterwards. Finally consistent gaps longer than d_C are closed.

  Returns:
      Ids of the added samples.
  """
  added = []
  for label in lib.cluster_labels():
    members = lib.cluster_members(label)
    if len(members) >= hp.min_samples_per_cluster:
      continue
    rounds = 0
    while not _spans(lib, members) and rounds < hp.max_border_rounds:
      added += find_borders(lib, label, hp, factory)
      rounds += 1
      members = lib.cluster_members(label)
    if len(members) >= hp.min_samples_per_cluster:
      continue
    if not _spans(lib, members):
      _delete_cluster(lib, label)
      continue
    added += fill_region(lib, label, hp, factory)
  for label in lib.cluster_labels():
    if len(lib.cluster_members(label)) < hp.min_samples_per_cluster:
      _delete_cluster(lib, label)
  added += fill_long_consistent_edges(lib, hp, factory)
  lib.log_event(
      'fill-clusters',
      added=len(added),
      clusters=len(lib.cluster_labels()),
      deleted=len(lib.deleted_clusters),
  )
  return added
