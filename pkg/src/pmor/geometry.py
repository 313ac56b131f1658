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

"""Parameter-space geometry used by the adaptive sampler.

The sampler works in the normalized parameter space [0, 1]^d. This module
provides:
- the affine map between the physical box and the unit cube
- Delaunay triangulations of the sample points in d = 1, 2, 3
- edge lengths, edge midpoints and their clearance to the other samples
- point location (containing simplex) for queried parameter points
"""

import dataclasses
import itertools
import logging
import sys

import numpy as np
from scipy import spatial

MAX_DIMENSION = 3
# Relative slack when checking that a point lies inside a box or simplex.
RANGE_TOLERANCE = 1e-12
# Clearance reported for an edge midpoint when no other sample exists.
CLEARANCE_UNBOUNDED = sys.float_info.max
QHULL_OPTIONS = 'Qt Qbb Qc Qz'


class OutOfRangeError(ValueError):
  pass


class DegenerateGeometryError(ValueError):
  pass


@dataclasses.dataclass(frozen=True)
class ParamBox:
  """Axis-aligned box of physical parameter bounds.

  Attributes:
      lower: lower bound per parameter
      upper: upper bound per parameter
      names: optional parameter names, used in reports
  """

  lower: tuple[float, ...]
  upper: tuple[float, ...]
  names: tuple[str, ...] = ()

  def __post_init__(self):
    object.__setattr__(self, 'lower', tuple(float(v) for v in self.lower))
    object.__setattr__(self, 'upper', tuple(float(v) for v in self.upper))
    if not self.names:
      object.__setattr__(
          self, 'names', tuple(f'p{i + 1}' for i in range(len(self.lower)))
      )
    else:
      object.__setattr__(self, 'names', tuple(self.names))
    if len(self.lower) != len(self.upper) or not self.lower:
      raise OutOfRangeError(
          f'box bounds must be non-empty and of equal length: {self}'
      )
    if len(self.names) != len(self.lower):
      raise OutOfRangeError(f'box names do not match its dimension: {self}')
    if any(lo >= up for lo, up in zip(self.lower, self.upper)):
      raise OutOfRangeError(f'box lower bound must be < upper bound: {self}')

  @property
  def dimension(self) -> int:
    return len(self.lower)

  @property
  def span(self) -> np.ndarray:
    return np.asarray(self.upper) - np.asarray(self.lower)

  def contains(self, p_phys) -> bool:
    p = np.asarray(p_phys, dtype=float)
    slack = RANGE_TOLERANCE * self.span
    return bool(
        np.all(p >= np.asarray(self.lower) - slack)
        and np.all(p <= np.asarray(self.upper) + slack)
    )

  def corners(self) -> np.ndarray:
    """Return the 2^d corner points in physical coordinates.

    Corners are ordered like `itertools.product((0, 1), repeat=d)`.
    """
    unit = np.array(
        list(itertools.product((0.0, 1.0), repeat=self.dimension))
    )
    return denormalize(unit, self)

  def to_dict(self) -> dict:
    return {
        'lower': list(self.lower),
        'upper': list(self.upper),
        'names': list(self.names),
    }

  @classmethod
  def from_dict(cls, data: dict) -> 'ParamBox':
    return cls(
        lower=tuple(data['lower']),
        upper=tuple(data['upper']),
        names=tuple(data.get('names', ())),
    )


def normalize(p_phys, box: ParamBox) -> np.ndarray:
  """Map physical parameter point(s) into [0, 1]^d.

  Args:
      p_phys: a d-vector or a (K, d) array of physical parameter points.
      box: the parameter box.

  Returns:
      The normalized point(s), same shape as the input.

  Raises:
      OutOfRangeError: if a point lies outside the box.
  """
  p = np.asarray(p_phys, dtype=float)
  if p.shape[-1] != box.dimension:
    raise OutOfRangeError(
        f'point dimension {p.shape[-1]} != box dimension {box.dimension}'
    )
  points = p.reshape(-1, box.dimension)
  for point in points:
    if not box.contains(point):
      raise OutOfRangeError(f'point {point.tolist()} outside box {box}')
  unit = (p - np.asarray(box.lower)) / box.span
  return np.clip(unit, 0.0, 1.0)


def denormalize(p_norm, box: ParamBox) -> np.ndarray:
  """Inverse of `normalize`."""
  p = np.asarray(p_norm, dtype=float)
  if p.shape[-1] != box.dimension:
    raise OutOfRangeError(
        f'point dimension {p.shape[-1]} != box dimension {box.dimension}'
    )
  if np.any(p < -RANGE_TOLERANCE) or np.any(p > 1.0 + RANGE_TOLERANCE):
    raise OutOfRangeError(f'normalized point(s) outside [0, 1]: {p.tolist()}')
  return np.asarray(box.lower) + np.clip(p, 0.0, 1.0) * box.span


def affine_rank(points) -> int:
  """Dimension of the affine hull spanned by a set of points."""
  p = np.atleast_2d(np.asarray(points, dtype=float))
  if p.shape[0] < 2:
    return 0
  offsets = p[1:] - p[0]
  scale = max(float(np.max(np.abs(offsets))), 1.0)
  return int(np.linalg.matrix_rank(offsets, tol=1e-10 * scale))


@dataclasses.dataclass(frozen=True, eq=False)
class Triangulation:
  """An immutable Delaunay triangulation snapshot.

  Attributes:
      points: (K, d) normalized sample coordinates
      simplices: (S, d + 1) point ids per simplex
      edges: (E, 2) deduplicated point id pairs, a < b, lexicographic order
  """

  points: np.ndarray
  simplices: np.ndarray
  edges: np.ndarray

  @property
  def dimension(self) -> int:
    return self.points.shape[1]

  @property
  def n_points(self) -> int:
    return self.points.shape[0]

  def neighbors(self, point_id: int) -> list[int]:
    """Return the ids of all points sharing an edge with `point_id`."""
    mask_a = self.edges[:, 0] == point_id
    mask_b = self.edges[:, 1] == point_id
    return sorted(
        set(self.edges[mask_a, 1].tolist()) | set(self.edges[mask_b, 0].tolist())
    )

  def barycentric(self, point) -> np.ndarray:
    """Barycentric coordinates of `point` in every simplex, shape (S, d+1)."""
    p = np.asarray(point, dtype=float).reshape(self.dimension)
    vertices = self.points[self.simplices]
    origin = vertices[:, 0, :]
    frame = np.transpose(vertices[:, 1:, :] - origin[:, None, :], (0, 2, 1))
    local = np.linalg.solve(frame, (p - origin)[:, :, None])[:, :, 0]
    return np.hstack([1.0 - local.sum(axis=1, keepdims=True), local])

  def locate(self, point) -> tuple[int, bool]:
    """Find the simplex containing `point`.

    Args:
        point: a normalized d-vector.

    Returns:
        (simplex index, inside). When the point lies outside the convex hull
        the simplex with the largest minimal barycentric coordinate is
        returned together with inside=False.
    """
    coords = self.barycentric(point)
    min_coords = coords.min(axis=1)
    inside = np.flatnonzero(min_coords >= -1e-10)
    if inside.size:
      return int(inside[0]), True
    return int(np.argmax(min_coords)), False

  def to_dict(self) -> dict:
    return {
        'points': self.points.tolist(),
        'simplices': self.simplices.tolist(),
        'edges': self.edges.tolist(),
    }

  @classmethod
  def from_dict(cls, data: dict) -> 'Triangulation':
    d = len(data['points'][0]) if data['points'] else 1
    return cls(
        points=np.asarray(data['points'], dtype=float).reshape(-1, d),
        simplices=np.asarray(data['simplices'], dtype=int).reshape(-1, d + 1),
        edges=np.asarray(data['edges'], dtype=int).reshape(-1, 2),
    )


def _edges_from_simplices(simplices: np.ndarray) -> np.ndarray:
  pairs = set()
  for simplex in simplices:
    for a, b in itertools.combinations(sorted(int(v) for v in simplex), 2):
      pairs.add((a, b))
  return np.array(sorted(pairs), dtype=int).reshape(-1, 2)


def _simplex_volumes(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
  vertices = points[simplices]
  frame = vertices[:, 1:, :] - vertices[:, :1, :]
  return np.abs(np.linalg.det(frame))


def triangulate(points) -> Triangulation:
  """Delaunay triangulation of normalized sample points.

  d = 1 degenerates to the coordinate-sorted chain. d = 2, 3 use Qhull with
  triangulated output, which resolves cospherical configurations (regular
  grids) deterministically for a fixed input order.

  Args:
      points: (K, d) array of normalized points, pairwise distinct.

  Returns:
      The triangulation snapshot.

  Raises:
      DegenerateGeometryError: duplicate points, too few points, d > 3 or all
        points affinely dependent.
  """
  pts = np.asarray(points, dtype=float)
  if pts.ndim == 1:
    pts = pts[:, None]
  n_points, dimension = pts.shape
  if dimension > MAX_DIMENSION:
    raise DegenerateGeometryError(
        f'parameter dimension {dimension} > {MAX_DIMENSION} is not supported'
    )
  if n_points < 2:
    raise DegenerateGeometryError(f'need at least 2 points, got {n_points}')
  if np.min(spatial.distance.pdist(pts)) <= 0.0:
    raise DegenerateGeometryError('sample points are not pairwise distinct')

  if dimension == 1:
    order = np.argsort(pts[:, 0], kind='stable')
    simplices = np.array(
        [sorted((int(a), int(b))) for a, b in zip(order[:-1], order[1:])],
        dtype=int,
    )
    return Triangulation(
        points=pts, simplices=simplices, edges=_edges_from_simplices(simplices)
    )

  if n_points < dimension + 1 or affine_rank(pts) < dimension:
    raise DegenerateGeometryError(
        f'{n_points} points are affinely dependent in {dimension}D'
    )
  try:
    delaunay = spatial.Delaunay(pts, qhull_options=QHULL_OPTIONS)
  except spatial.QhullError as e:
    raise DegenerateGeometryError(f'Qhull failed: {e}') from e
  if len(delaunay.coplanar):
    raise DegenerateGeometryError(
        f'points {delaunay.coplanar[:, 0].tolist()} dropped by the'
        ' triangulation (nearly coincident samples)'
    )
  simplices = np.asarray(delaunay.simplices, dtype=int)
  volumes = _simplex_volumes(pts, simplices)
  flat = volumes <= 1e-14 * max(float(volumes.max()), 1e-300)
  if np.any(flat):
    logging.debug('dropping %d flat simplices', int(flat.sum()))
    simplices = simplices[~flat]
  logging.debug(
      'triangulated %d points in %dD: %d simplices',
      n_points,
      dimension,
      len(simplices),
  )
  return Triangulation(
      points=pts, simplices=simplices, edges=_edges_from_simplices(simplices)
  )


def edge_metrics(tri: Triangulation) -> np.ndarray:
  """Euclidean edge lengths in normalized space, in `tri.edges` order."""
  if not len(tri.edges):
    return np.zeros(0)
  delta = tri.points[tri.edges[:, 1]] - tri.points[tri.edges[:, 0]]
  return np.linalg.norm(delta, axis=1)


def midpoint_clearance(
    a: int, b: int, tri: Triangulation
) -> tuple[np.ndarray, float]:
  """Midpoint of the segment (a, b) and its distance to all other samples.

  Args:
      a: first point id.
      b: second point id, different from `a`.
      tri: the current triangulation.

  Returns:
      (midpoint, clearance). The clearance is `CLEARANCE_UNBOUNDED` when a
      and b are the only samples.
  """
  if a == b:
    raise ValueError('midpoint_clearance needs two different points')
  midpoint = 0.5 * (tri.points[a] + tri.points[b])
  others = np.ones(tri.n_points, dtype=bool)
  others[[a, b]] = False
  if not np.any(others):
    return midpoint, CLEARANCE_UNBOUNDED
  distances = np.linalg.norm(tri.points[others] - midpoint, axis=1)
  return midpoint, float(distances.min())
