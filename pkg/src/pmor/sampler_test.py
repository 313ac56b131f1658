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
from scipy import sparse
from scipy.sparse import csgraph

from pmor import conftest
from pmor import fem_models
from pmor import geometry
from pmor import mor_core
from pmor import sample_library
from pmor import sampler

HP = sampler.Hyperparams()


def _library(factory, points, labels=None, hp=HP):
  lib = sampler.SampleLibrary(conftest.UNIT_BOX, hp)
  labels = labels or [None] * len(points)
  for u, label in zip(points, labels):
    rom, _ = factory([u])
    lib.add_sample([u], rom, sampler.SampleOrigin.INITIAL, label=label)
  sampler.retriangulate(lib)
  return lib


def _rotating_fom(p):
  """The lowest mode turns by 60 degrees in the e0-e1 plane above p = 0.3."""
  angle = np.radians(60.0) if float(np.mean(p)) > 0.3 else 0.0
  rotation = np.eye(conftest.N_DOFS)
  rotation[:2, :2] = [
      [np.cos(angle), -np.sin(angle)],
      [np.sin(angle), np.cos(angle)],
  ]
  k = rotation @ np.diag([1.0, 3.0, 10.0, 11.0, 12.0, 13.0]) @ rotation.T
  f = np.ones(conftest.N_DOFS) / np.sqrt(conftest.N_DOFS)
  return fem_models.SystemMatrices(
      M=sparse.identity(conftest.N_DOFS, format='csr'),
      C=sparse.csr_matrix(conftest.DAMPING_BETA * k),
      K=sparse.csr_matrix(k),
      f=f,
      g=f.copy(),
  )


def _unit_vector_rom(index):
  stiffness = np.full(conftest.N_DOFS, 10.0) + np.arange(conftest.N_DOFS)
  stiffness[index] = 1.0
  return mor_core.modal_rom(conftest.diagonal_system(stiffness), 1)


def _u_values(lib):
  return [float(s.u[0]) for s in lib.samples]


class TestGetConsistency:

  @pytest.mark.parametrize(
      'd,theta,expected',
      [
          (0.5, 5.0, sampler.CONSISTENT),
          (0.5, 87.0, sampler.INCONSISTENT),
          (0.05, 40.0, sampler.INCONSISTENT),
          (0.5, 40.0, sampler.UNKNOWN),
          (0.05, 5.0, sampler.CONSISTENT),
          (0.5, 10.0, sampler.CONSISTENT),
          (0.5, 85.0, sampler.INCONSISTENT),
      ],
  )
  def test_thresholds(self, d, theta, expected):
    assert sampler.get_consistency(d, theta, HP) == expected


class TestAdaptiveSample:

  def test_consistent_corners_terminate_immediately(self, smooth_factory):
    lib = sampler.adaptive_sample(smooth_factory, conftest.UNIT_BOX, HP)
    assert lib.converged
    assert len(lib) == 2
    assert [e.c for e in lib.edges.values()] == [sampler.CONSISTENT]

  def test_crossing_is_bracketed(self, crossing_factory):
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_BOX, HP)
    assert lib.converged
    assert _u_values(lib) == [0.0, 1.0, 0.5, 0.25, 0.375]
    assert [s.origin for s in lib.samples[2:]] == [
        sampler.SampleOrigin.DISTANCE
    ] * 3
    border = lib.edges[(2, 4)]
    assert border.c == sampler.INCONSISTENT
    assert border.d == pytest.approx(0.125)
    assert border.d <= HP.d_uT

  def test_no_unknown_edges_after_convergence(self, crossing_factory):
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_BOX, HP)
    counts = lib.edge_counts()
    assert counts[sampler.UNKNOWN] == 0
    assert counts[sampler.CONSISTENT] == 3

  def test_initial_points(self, crossing_factory):
    lib = sampler.adaptive_sample(
        crossing_factory, conftest.UNIT_BOX, HP, initial_points=[[0.0], [0.3]]
    )
    assert lib.converged
    assert _u_values(lib) == [0.0, 0.3]
    assert lib.edges[(0, 1)].c == sampler.CONSISTENT

  def test_angle_decrease_rule(self):
    factory = sampler.RomFactory(_rotating_fom, r=1)
    lib = sampler.adaptive_sample(factory, conftest.UNIT_BOX, HP)
    assert lib.converged
    assert _u_values(lib) == [0.0, 1.0, 0.5, 0.25, 0.375]
    assert lib.samples[2].origin == sampler.SampleOrigin.THETA
    assert lib.samples[3].origin == sampler.SampleOrigin.DISTANCE
    assert {(0, 2), (3, 4)} <= lib.forced_inconsistent
    border = lib.edges[(3, 4)]
    assert border.theta == pytest.approx(60.0, abs=1e-4)
    assert border.c == sampler.INCONSISTENT and border.forced

  def test_budget_exhaustion(self, crossing_factory):
    hp = sampler.Hyperparams(max_total_samples=3)
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_BOX, hp)
    assert not lib.converged
    assert len(lib) == 3
    sampler.cluster(lib)
    with pytest.raises(sampler.BudgetExhaustedError):
      sampler.fill_region(lib, 1, hp, crossing_factory)

  def test_resume(self, crossing_factory):
    partial = sampler.adaptive_sample(
        crossing_factory,
        conftest.UNIT_BOX,
        sampler.Hyperparams(max_total_samples=3),
    )
    lib = sampler.adaptive_sample(
        crossing_factory, conftest.UNIT_BOX, HP, library=partial
    )
    assert lib is partial
    assert lib.converged
    assert _u_values(lib) == [0.0, 1.0, 0.5, 0.25, 0.375]

  def test_two_dimensional_crossing(self, crossing_factory):
    hp = sampler.Hyperparams(max_total_samples=400)
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_SQUARE_BOX, hp)
    assert lib.converged
    below = np.mean(lib.points, axis=1) < conftest.CROSSING
    for record in lib.edges.values():
      assert record.c != sampler.UNKNOWN
      same_side = below[record.a] == below[record.b]
      assert (record.c == sampler.CONSISTENT) == same_side
      if record.c == sampler.INCONSISTENT:
        assert record.d <= hp.d_uT or record.key in lib.blocked

  def test_outside_initial_point(self, crossing_factory):
    with pytest.raises(geometry.OutOfRangeError):
      sampler.adaptive_sample(
          crossing_factory, conftest.UNIT_BOX, HP, initial_points=[[1.5]]
      )


class TestCluster:

  def _library_with_edges(self, n, edges):
    lib = sampler.SampleLibrary(conftest.UNIT_BOX, HP)
    rom = _unit_vector_rom(0)
    for i in range(n):
      lib.add_sample([i / max(n - 1, 1)], rom, sampler.SampleOrigin.INITIAL)
    lib.edges = {
        (a, b): sample_library.EdgeRecord(a=a, b=b, d=0.1, theta=0.0, c=c)
        for (a, b), c in edges.items()
    }
    return lib

  def test_chain(self):
    lib = self._library_with_edges(
        4,
        {
            (0, 1): sampler.CONSISTENT,
            (1, 2): sampler.CONSISTENT,
            (2, 3): sampler.INCONSISTENT,
        },
    )
    assert sampler.cluster(lib) == [0, 0, 0, 1]
    assert lib.labels == [0, 0, 0, 1]

  def test_all_inconsistent(self):
    edges = {
        (a, b): sampler.INCONSISTENT
        for a, b in itertools.combinations(range(5), 2)
    }
    lib = self._library_with_edges(5, edges)
    assert sampler.cluster(lib) == [0, 1, 2, 3, 4]

  def test_labels_follow_smallest_member(self):
    lib = self._library_with_edges(
        4,
        {
            (0, 3): sampler.CONSISTENT,
            (1, 2): sampler.CONSISTENT,
            (2, 3): sampler.INCONSISTENT,
        },
    )
    assert sampler.cluster(lib) == [0, 1, 1, 0]

  def test_crossing_library(self, crossing_factory):
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_BOX, HP)
    assert sampler.cluster(lib) == [0, 1, 1, 0, 0]

  def test_unknown_edge(self):
    lib = self._library_with_edges(2, {(0, 1): sampler.UNKNOWN})
    with pytest.raises(sampler.UnresolvedEdgeError):
      sampler.cluster(lib)

  @pytest.mark.parametrize('seed', range(20))
  def test_matches_connected_components(self, seed):
    rng = np.random.default_rng(seed)
    n = 40
    pairs = [
        pair
        for pair in itertools.combinations(range(n), 2)
        if rng.random() < 0.06
    ]
    edges = {
        pair: sampler.CONSISTENT if rng.random() < 0.5 else sampler.INCONSISTENT
        for pair in pairs
    }
    lib = self._library_with_edges(n, edges)
    labels = np.array(sampler.cluster(lib))

    consistent = [pair for pair, c in edges.items() if c == sampler.CONSISTENT]
    rows = [a for a, _ in consistent]
    cols = [b for _, b in consistent]
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_components, components = csgraph.connected_components(
        graph, directed=False
    )
    assert labels.max() + 1 == n_components
    for a, b in itertools.combinations(range(n), 2):
      assert (labels[a] == labels[b]) == (components[a] == components[b])

  def test_exhaustive_small_graphs(self):
    pairs = list(itertools.combinations(range(4), 2))
    for tags in itertools.product(
        (sampler.CONSISTENT, sampler.INCONSISTENT), repeat=len(pairs)
    ):
      edges = dict(zip(pairs, tags))
      labels = sampler.cluster(self._library_with_edges(4, edges))
      graph = np.zeros((4, 4))
      for (a, b), c in edges.items():
        graph[a, b] = c == sampler.CONSISTENT
      _, components = csgraph.connected_components(graph, directed=False)
      for a, b in pairs:
        assert (labels[a] == labels[b]) == (components[a] == components[b])


class TestFillRegion:

  def test_bisects_longest_edge_first(self, smooth_factory):
    lib = _library(smooth_factory, [0.1, 0.5], labels=[0, 0])
    added = sampler.fill_region(lib, 0, HP, smooth_factory)
    assert added == [2, 3]
    np.testing.assert_allclose(_u_values(lib), [0.1, 0.5, 0.3, 0.2])
    assert lib.labels == [0, 0, 0, 0]
    assert all(s.origin == sampler.SampleOrigin.FILL for s in lib.samples[2:])

  def test_full_cluster_is_unchanged(self, smooth_factory):
    lib = _library(smooth_factory, [0.0, 0.2, 0.4, 0.6], labels=[0] * 4)
    assert sampler.fill_region(lib, 0, HP, smooth_factory) == []
    assert len(lib) == 4


class TestFindBorders:

  def test_singleton_between_other_classes(self, crossing_factory):
    lib = sampler.SampleLibrary(conftest.UNIT_BOX, HP)
    for u, index, label in ((0.0, 0, 0), (0.5, 1, 1), (1.0, 2, 2)):
      lib.add_sample(
          [u], _unit_vector_rom(index), sampler.SampleOrigin.INITIAL, label
      )
    sampler.retriangulate(lib)

    added = sampler.find_borders(lib, 1, HP, crossing_factory)

    assert added == [3, 4]
    np.testing.assert_allclose(_u_values(lib)[3:], [0.25, 0.75])
    # 0.25 carries mode 0 like sample 0, 0.75 mode 1 like the singleton.
    assert lib.samples[3].label == 0
    assert lib.samples[4].label == 1
    assert all(s.origin == sampler.SampleOrigin.BORDER for s in lib.samples[3:])

  def test_unmatched_border_sample_opens_a_class(self, crossing_factory):
    lib = sampler.SampleLibrary(conftest.UNIT_BOX, HP)
    lib.add_sample([0.0], _unit_vector_rom(2), sampler.SampleOrigin.INITIAL, 0)
    lib.add_sample([1.0], _unit_vector_rom(3), sampler.SampleOrigin.INITIAL, 1)
    sampler.retriangulate(lib)
    sampler.find_borders(lib, 0, HP, crossing_factory)
    assert lib.labels == [0, 1, 2]


class TestFillClusters:

  def test_crossing_library(self, crossing_factory):
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_BOX, HP)
    sampler.cluster(lib)
    added = sampler.fill_clusters(lib, HP, crossing_factory)
    assert added == [5, 6, 7]
    np.testing.assert_allclose(_u_values(lib)[5:], [0.125, 0.75, 0.875])
    assert lib.labels == [0, 1, 1, 0, 0, 0, 1, 1]
    assert lib.cluster_labels() == [0, 1]
    assert not lib.deleted_clusters

  def test_smooth_library(self, smooth_factory):
    lib = sampler.adaptive_sample(smooth_factory, conftest.UNIT_BOX, HP)
    sampler.cluster(lib)
    sampler.fill_clusters(lib, HP, smooth_factory)
    np.testing.assert_allclose(_u_values(lib), [0.0, 1.0, 0.5, 0.25])
    assert lib.cluster_labels() == [0]

  def test_cluster_without_room_is_deleted(self, crossing_factory):
    hp = sampler.Hyperparams(max_border_rounds=0)
    lib = sampler.SampleLibrary(conftest.UNIT_BOX, hp)
    lib.add_sample([0.0], _unit_vector_rom(0), sampler.SampleOrigin.INITIAL, 0)
    lib.add_sample([1.0], _unit_vector_rom(1), sampler.SampleOrigin.INITIAL, 1)
    lib.add_sample([0.9], _unit_vector_rom(1), sampler.SampleOrigin.INITIAL, 1)
    sampler.retriangulate(lib)
    sampler.fill_clusters(lib, hp, crossing_factory)
    assert lib.deleted_clusters == [[0]]
    assert lib.excluded == {0}
    assert 0 not in lib.cluster_labels()

  def test_long_consistent_edges(self, smooth_factory):
    hp = sampler.Hyperparams(d_C=0.3)
    lib = _library(smooth_factory, [0.0, 0.5], labels=[0, 0], hp=hp)
    added = sampler.fill_long_consistent_edges(lib, hp, smooth_factory)
    assert added == [2]
    np.testing.assert_allclose(_u_values(lib), [0.0, 0.5, 0.25])
    assert lib.samples[2].origin == sampler.SampleOrigin.GAP
    assert lib.samples[2].label == 0

  def test_no_long_consistent_edges(self, smooth_factory):
    hp = sampler.Hyperparams(d_C=0.3)
    lib = _library(smooth_factory, [0.0, 0.25], labels=[0, 0], hp=hp)
    assert sampler.fill_long_consistent_edges(lib, hp, smooth_factory) == []

  def test_occupied_midpoints_stop_the_gap_filling(
      self, smooth_factory, monkeypatch
  ):
    hp = sampler.Hyperparams(d_C=0.3)
    lib = _library(smooth_factory, [0.0, 0.5], labels=[0, 0], hp=hp)
    monkeypatch.setattr(sampler, '_clearance', lambda lib, point: 0.0)
    assert sampler.fill_long_consistent_edges(lib, hp, smooth_factory) == []
    assert len(lib) == 2

  def test_deleted_cluster_keeps_one_group(self):
    lib = sampler.SampleLibrary(conftest.UNIT_BOX, HP)
    lib.add_sample([0.0], _unit_vector_rom(0), sampler.SampleOrigin.INITIAL, 0)
    lib.add_sample([1.0], _unit_vector_rom(1), sampler.SampleOrigin.INITIAL, 1)
    sampler._delete_cluster(lib, 0)  # pylint: disable=protected-access
    lib.add_sample([0.1], _unit_vector_rom(0), sampler.SampleOrigin.BORDER, 0)
    sampler._delete_cluster(lib, 0)  # pylint: disable=protected-access
    sampler._delete_cluster(lib, 0)  # pylint: disable=protected-access
    assert lib.deleted_clusters == [[0, 2]]
    assert lib.excluded == {0, 2}
    assert lib.cluster_labels() == [1]


class TestLibraryPersistence:

  def test_round_trip(self, crossing_factory, tmp_path):
    lib = sampler.adaptive_sample(crossing_factory, conftest.UNIT_BOX, HP)
    sampler.cluster(lib)
    sample_library.save_library(lib, str(tmp_path))
    restored = sample_library.load_library(str(tmp_path))
    assert restored.converged
    assert restored.labels == lib.labels
    assert restored.edges.keys() == lib.edges.keys()
    assert restored.hyperparams == lib.hyperparams
    np.testing.assert_array_equal(restored.points, lib.points)
    np.testing.assert_array_equal(restored.samples[3].rom.V, lib.samples[3].rom.V)
    assert restored.angle(2, 4) == lib.angle(2, 4)

  def test_infinite_gap_threshold_survives_json(self):
    values = HP.to_dict()
    assert values['d_C'] is None
    assert sampler.Hyperparams.from_dict(values) == HP

  @pytest.mark.parametrize(
      'overrides',
      [
          {'theta_lT': 90.0},
          {'theta_lT': 20.0, 'theta_uT': 10.0},
          {'d_lT': 0.3, 'd_uT': 0.2},
          {'d_N': -0.1},
          {'angle_decrease_fraction': 1.0},
          {'min_samples_per_cluster': 0},
          {'max_total_samples': 1},
      ],
  )
  def test_invalid_hyperparams(self, overrides):
    with pytest.raises(sample_library.InvalidHyperparamsError):
      sampler.Hyperparams(**overrides)
