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

"""Parametric second-order finite element models.

Two structures are available, both built from 2-node, 6 DoF/node 3D
Timoshenko beam elements:
- a cantilever beam along x, clamped at x = 0 and loaded at the tip by a force
  tilted in the y-z plane
- a Kelvin cell (tetrakaidecahedron edge skeleton) clamped at its bottom
  struts, excited on its left face and observed on its right face

`parametric_fom` maps the coordinates of a parameter point to one of these
structures and returns its `SystemMatrices`.
"""

import dataclasses
import enum
import itertools
import logging
import math
import os

import numpy as np
from scipy import io as scipy_io
from scipy import sparse

from pmor import geometry

DOFS_PER_NODE = 6
_GAUSS_POINTS, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)
# Gauss rule mapped from [-1, 1] to [0, 1].
_XI = 0.5 * (_GAUSS_POINTS + 1.0)
_XI_WEIGHTS = 0.5 * _GAUSS_WEIGHTS


class InvalidSpecError(ValueError):
  pass


class ParameterDomainError(ValueError):
  pass


def _check_positive(owner: str, **values) -> None:
  for name, value in values.items():
    if not value > 0:
      raise InvalidSpecError(f'{owner}.{name} must be > 0, got {value}')


def _check_damping(owner: str, alpha: float, beta: float) -> None:
  if alpha < 0 or beta < 0:
    raise InvalidSpecError(
        f'{owner} Rayleigh coefficients must be >= 0, got {alpha}, {beta}'
    )


@dataclasses.dataclass(frozen=True)
class BeamSpec:
  """Geometry and material of the 3D cantilever Timoshenko beam.

  The height h acts in z (bending in z is governed by t*h^3/12), the
  thickness t acts in y.
  """

  height: float = 0.02
  thickness: float = 0.01
  length: float = 1.0
  youngs_modulus: float = 2.1e11
  poisson: float = 0.3
  density: float = 7860.0
  rayleigh_alpha: float = 8e-6
  rayleigh_beta: float = 8.0
  n_elements: int = 50
  force_tilt: float = math.pi / 4

  def validate(self) -> None:
    _check_positive(
        'BeamSpec',
        height=self.height,
        thickness=self.thickness,
        length=self.length,
        youngs_modulus=self.youngs_modulus,
        poisson=self.poisson,
        density=self.density,
    )
    _check_damping('BeamSpec', self.rayleigh_alpha, self.rayleigh_beta)
    if self.poisson >= 0.5:
      raise InvalidSpecError(f'BeamSpec.poisson must be < 0.5: {self.poisson}')
    if self.n_elements < 2:
      raise InvalidSpecError(
          f'BeamSpec.n_elements must be >= 2, got {self.n_elements}'
      )


@dataclasses.dataclass(frozen=True)
class KelvinCellSpec:
  """Geometry and material of the Kelvin cell lattice."""

  l_x: float = 0.0675
  l_y: float = 0.0325
  l_z: float = 0.05
  beam_thickness: float = 0.001
  youngs_modulus: float = 4.35e9
  poisson: float = 0.3
  density: float = 1180.0
  rayleigh_alpha: float = 8e-6
  rayleigh_beta: float = 8.0
  elements_per_strut: int = 10

  def validate(self) -> None:
    _check_positive(
        'KelvinCellSpec',
        l_x=self.l_x,
        l_y=self.l_y,
        l_z=self.l_z,
        beam_thickness=self.beam_thickness,
        youngs_modulus=self.youngs_modulus,
        poisson=self.poisson,
        density=self.density,
    )
    _check_damping('KelvinCellSpec', self.rayleigh_alpha, self.rayleigh_beta)
    if self.poisson >= 0.5:
      raise InvalidSpecError(
          f'KelvinCellSpec.poisson must be < 0.5: {self.poisson}'
      )
    if self.elements_per_strut < 1:
      raise InvalidSpecError(
          'KelvinCellSpec.elements_per_strut must be >= 1, got'
          f' {self.elements_per_strut}'
      )


@dataclasses.dataclass(frozen=True, eq=False)
class SystemMatrices:
  """A full order model instance M x'' + C x' + K x = f u, y = g x.

  Attributes:
      M: sparse symmetric positive definite mass matrix
      C: sparse Rayleigh damping matrix alpha*M + beta*K
      K: sparse symmetric positive definite stiffness matrix (clamped)
      f: input vector
      g: output vector (acts as a row)
      rayleigh: the (alpha, beta) pair used for C
      label: short description used in log messages
  """

  M: sparse.csr_matrix
  C: sparse.csr_matrix
  K: sparse.csr_matrix
  f: np.ndarray
  g: np.ndarray
  rayleigh: tuple[float, float] = (0.0, 0.0)
  label: str = ''

  @property
  def n(self) -> int:
    return self.K.shape[0]


@dataclasses.dataclass(frozen=True)
class _Section:
  area: float
  i_y: float  # governs bending in z (w, theta_y)
  i_z: float  # governs bending in y (v, theta_z)
  torsion: float
  shear_factor: float


def _torsion_constant(a: float, b: float, n_terms: int = 20) -> float:
  """Saint-Venant torsion constant of an a x b rectangle (series form)."""
  long_side, short_side = max(a, b), min(a, b)
  ratio = short_side / long_side
  series = sum(
      math.tanh(n * math.pi * long_side / (2.0 * short_side)) / n**5
      for n in range(1, 2 * n_terms, 2)
  )
  beta = 1.0 / 3.0 - 64.0 / math.pi**5 * ratio * series
  return beta * long_side * short_side**3


def _rectangular_section(width_y: float, height_z: float, nu: float) -> _Section:
  return _Section(
      area=width_y * height_z,
      i_y=width_y * height_z**3 / 12.0,
      i_z=height_z * width_y**3 / 12.0,
      torsion=_torsion_constant(width_y, height_z),
      shear_factor=10.0 * (1.0 + nu) / (12.0 + 11.0 * nu),
  )


def _bending_matrices(
    length: float, ei: float, kga: float, rho_a: float, rho_i: float
) -> tuple[np.ndarray, np.ndarray]:
  """Stiffness and mass of one Timoshenko bending plane.

  Uses the interdependent interpolation (exact for static nodal loads).
  DoF order is (v1, theta1, v2, theta2) with theta = dv/dx in the
  shear-free limit.
  """
  phi = 12.0 * ei / (kga * length**2)
  c = 1.0 / (1.0 + phi)
  xi = _XI
  one = np.ones_like(xi)
  disp = c * np.array([
      1.0 - 3.0 * xi**2 + 2.0 * xi**3 + phi * (1.0 - xi),
      length * (xi - 2.0 * xi**2 + xi**3 + 0.5 * phi * (xi - xi**2)),
      3.0 * xi**2 - 2.0 * xi**3 + phi * xi,
      length * (xi**3 - xi**2 - 0.5 * phi * (xi - xi**2)),
  ])
  rot = c * np.array([
      6.0 / length * (xi**2 - xi),
      1.0 - 4.0 * xi + 3.0 * xi**2 + phi * (1.0 - xi),
      -6.0 / length * (xi**2 - xi),
      -2.0 * xi + 3.0 * xi**2 + phi * xi,
  ])
  curvature = c * np.array([
      6.0 / length**2 * (2.0 * xi - 1.0),
      (-4.0 + 6.0 * xi - phi) / length,
      -6.0 / length**2 * (2.0 * xi - 1.0),
      (-2.0 + 6.0 * xi + phi) / length,
  ])
  shear = c * np.array([
      -phi / length * one,
      -0.5 * phi * one,
      phi / length * one,
      -0.5 * phi * one,
  ])
  w = _XI_WEIGHTS * length
  stiffness = ei * (curvature * w) @ curvature.T + kga * (shear * w) @ shear.T
  mass = rho_a * (disp * w) @ disp.T + rho_i * (rot * w) @ rot.T
  return stiffness, mass


def _local_element(
    length: float, youngs: float, nu: float, rho: float, section: _Section
) -> tuple[np.ndarray, np.ndarray]:
  """12x12 local stiffness and consistent mass of a 3D Timoshenko element.

  Local DoFs per node: (u, v, w, theta_x, theta_y, theta_z).
  """
  shear_modulus = youngs / (2.0 * (1.0 + nu))
  kga = section.shear_factor * shear_modulus * section.area
  k = np.zeros((12, 12))
  m = np.zeros((12, 12))

  two_node = np.array([[1.0, -1.0], [-1.0, 1.0]])
  two_node_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) * length / 6.0
  axial = [0, 6]
  k[np.ix_(axial, axial)] = youngs * section.area / length * two_node
  m[np.ix_(axial, axial)] = rho * section.area * two_node_mass
  twist = [3, 9]
  polar = section.i_y + section.i_z
  k[np.ix_(twist, twist)] = shear_modulus * section.torsion / length * two_node
  m[np.ix_(twist, twist)] = rho * polar * two_node_mass

  # x-y plane: (v, theta_z) with theta_z = dv/dx.
  k_xy, m_xy = _bending_matrices(
      length, youngs * section.i_z, kga, rho * section.area, rho * section.i_z
  )
  xy = [1, 5, 7, 11]
  k[np.ix_(xy, xy)] = k_xy
  m[np.ix_(xy, xy)] = m_xy
  # x-z plane: (w, theta_y) with theta_y = -dw/dx.
  k_xz, m_xz = _bending_matrices(
      length, youngs * section.i_y, kga, rho * section.area, rho * section.i_y
  )
  flip = np.diag([1.0, -1.0, 1.0, -1.0])
  xz = [2, 4, 8, 10]
  k[np.ix_(xz, xz)] = flip @ k_xz @ flip
  m[np.ix_(xz, xz)] = flip @ m_xz @ flip
  return k, m


def _element_rotation(start: np.ndarray, end: np.ndarray) -> np.ndarray:
  """12x12 global-to-local rotation of an element from `start` to `end`."""
  axis = (end - start) / np.linalg.norm(end - start)
  reference = np.array([0.0, 0.0, 1.0])
  if abs(axis @ reference) > 0.99:
    reference = np.array([1.0, 0.0, 0.0])
  local_y = np.cross(reference, axis)
  local_y /= np.linalg.norm(local_y)
  local_z = np.cross(axis, local_y)
  frame = np.vstack([axis, local_y, local_z])
  return np.kron(np.eye(4), frame)


def _assemble_frame(
    nodes: np.ndarray,
    elements: list[tuple[int, int]],
    youngs: float,
    nu: float,
    rho: float,
    section: _Section,
) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
  """Assemble unconstrained global K and M of a beam frame."""
  n_dofs = DOFS_PER_NODE * len(nodes)
  rows, cols, k_vals, m_vals = [], [], [], []
  for a, b in elements:
    length = float(np.linalg.norm(nodes[b] - nodes[a]))
    k_local, m_local = _local_element(length, youngs, nu, rho, section)
    rotation = _element_rotation(nodes[a], nodes[b])
    k_global = rotation.T @ k_local @ rotation
    m_global = rotation.T @ m_local @ rotation
    dofs = np.concatenate([
        DOFS_PER_NODE * a + np.arange(DOFS_PER_NODE),
        DOFS_PER_NODE * b + np.arange(DOFS_PER_NODE),
    ])
    rr, cc = np.meshgrid(dofs, dofs, indexing='ij')
    rows.append(rr.ravel())
    cols.append(cc.ravel())
    k_vals.append(k_global.ravel())
    m_vals.append(m_global.ravel())
  rows = np.concatenate(rows)
  cols = np.concatenate(cols)
  k = sparse.coo_matrix(
      (np.concatenate(k_vals), (rows, cols)), shape=(n_dofs, n_dofs)
  ).tocsr()
  m = sparse.coo_matrix(
      (np.concatenate(m_vals), (rows, cols)), shape=(n_dofs, n_dofs)
  ).tocsr()
  # Remove roundoff asymmetry from the rotations.
  return 0.5 * (k + k.T).tocsr(), 0.5 * (m + m.T).tocsr()


def _free_dofs(n_nodes: int, clamped_nodes) -> np.ndarray:
  fixed = np.concatenate([
      DOFS_PER_NODE * int(node) + np.arange(DOFS_PER_NODE)
      for node in clamped_nodes
  ])
  return np.setdiff1d(np.arange(DOFS_PER_NODE * n_nodes), fixed)


def _finish(
    k_full: sparse.csr_matrix,
    m_full: sparse.csr_matrix,
    free: np.ndarray,
    f_full: np.ndarray,
    g_full: np.ndarray,
    alpha: float,
    beta: float,
    label: str,
) -> SystemMatrices:
  k = k_full[free][:, free].tocsr()
  m = m_full[free][:, free].tocsr()
  c = (alpha * m + beta * k).tocsr()
  return SystemMatrices(
      M=m,
      C=c,
      K=k,
      f=np.asarray(f_full[free], dtype=float),
      g=np.asarray(g_full[free], dtype=float),
      rayleigh=(alpha, beta),
      label=label,
  )


def assemble_timoshenko_beam(spec: BeamSpec) -> SystemMatrices:
  """Assemble the clamped 3D cantilever beam.

  Args:
      spec: beam geometry and material.

  Returns:
      The clamped system. f is a unit tip force tilted by `spec.force_tilt`
      from y towards z; g reads the tip displacement in the same direction.

  Raises:
      InvalidSpecError: if the spec violates its invariants.
  """
  spec.validate()
  section = _rectangular_section(spec.thickness, spec.height, spec.poisson)
  n_nodes = spec.n_elements + 1
  nodes = np.zeros((n_nodes, 3))
  nodes[:, 0] = np.linspace(0.0, spec.length, n_nodes)
  elements = [(i, i + 1) for i in range(spec.n_elements)]
  k_full, m_full = _assemble_frame(
      nodes,
      elements,
      spec.youngs_modulus,
      spec.poisson,
      spec.density,
      section,
  )
  tip = DOFS_PER_NODE * (n_nodes - 1)
  f_full = np.zeros(DOFS_PER_NODE * n_nodes)
  f_full[tip + 1] = math.cos(spec.force_tilt)
  f_full[tip + 2] = math.sin(spec.force_tilt)
  system = _finish(
      k_full,
      m_full,
      _free_dofs(n_nodes, [0]),
      f_full,
      f_full.copy(),
      spec.rayleigh_alpha,
      spec.rayleigh_beta,
      label=f'beam h={spec.height:g}',
  )
  logging.debug('[beam]: h=%g assembled with n=%d', spec.height, system.n)
  return system


def _kelvin_cell_skeleton() -> tuple[np.ndarray, list[tuple[int, int]]]:
  """Vertices and struts of the unit tetrakaidecahedron.

  The vertices are all permutations of (0, +-1, +-2) (24 vertices) and
  struts join vertices at distance sqrt(2) (36 struts). Coordinates are
  mapped to [0, 1]^3.
  """
  vertices = sorted({
      perm
      for signs in itertools.product((1, -1), repeat=2)
      for perm in itertools.permutations((0, signs[0] * 1, signs[1] * 2))
  })
  raw = np.array(vertices, dtype=float)
  struts = [
      (a, b)
      for a, b in itertools.combinations(range(len(raw)), 2)
      if np.isclose(np.sum((raw[a] - raw[b]) ** 2), 2.0)
  ]
  return (raw + 2.0) / 4.0, struts


def assemble_kelvin_cell(spec: KelvinCellSpec) -> SystemMatrices:
  """Assemble the clamped Kelvin cell lattice.

  Each strut is split into `spec.elements_per_strut` square-section
  elements; struts share their end nodes. All nodes of the struts lying in
  the bottom face (minimal z) are clamped. f is 1 on every DoF of the left
  face (minimal x) and g is 1 on every DoF of the right face (maximal x);
  both are normalized.

  Raises:
      InvalidSpecError: if the spec violates its invariants.
  """
  spec.validate()
  unit_vertices, struts = _kelvin_cell_skeleton()
  scale = np.array([spec.l_x, spec.l_y, spec.l_z])
  nodes = [unit_vertices * scale]
  n_vertices = len(unit_vertices)
  elements = []
  bottom_nodes = set()
  bottom_z = unit_vertices[:, 2].min()
  next_node = n_vertices
  for a, b in struts:
    steps = np.linspace(0.0, 1.0, spec.elements_per_strut + 1)[1:-1]
    inner = unit_vertices[a] + steps[:, None] * (
        unit_vertices[b] - unit_vertices[a]
    )
    inner_ids = list(range(next_node, next_node + len(inner)))
    next_node += len(inner)
    nodes.append(inner * scale)
    chain = [a, *inner_ids, b]
    elements.extend(zip(chain[:-1], chain[1:]))
    if np.isclose(unit_vertices[a, 2], bottom_z) and np.isclose(
        unit_vertices[b, 2], bottom_z
    ):
      bottom_nodes.update(chain)
  nodes = np.vstack(nodes)
  section = _rectangular_section(
      spec.beam_thickness, spec.beam_thickness, spec.poisson
  )
  k_full, m_full = _assemble_frame(
      nodes,
      elements,
      spec.youngs_modulus,
      spec.poisson,
      spec.density,
      section,
  )
  free = _free_dofs(len(nodes), sorted(bottom_nodes))
  left = np.flatnonzero(np.isclose(nodes[:, 0], nodes[:, 0].min()))
  right = np.flatnonzero(np.isclose(nodes[:, 0], nodes[:, 0].max()))
  f_full = np.zeros(DOFS_PER_NODE * len(nodes))
  g_full = np.zeros(DOFS_PER_NODE * len(nodes))
  for node in left:
    f_full[DOFS_PER_NODE * node : DOFS_PER_NODE * (node + 1)] = 1.0
  for node in right:
    g_full[DOFS_PER_NODE * node : DOFS_PER_NODE * (node + 1)] = 1.0
  system = _finish(
      k_full,
      m_full,
      free,
      f_full,
      g_full,
      spec.rayleigh_alpha,
      spec.rayleigh_beta,
      label=f'kelvin l=({spec.l_x:g}, {spec.l_y:g}, {spec.l_z:g})',
  )
  f = system.f / np.linalg.norm(system.f)
  g = system.g / np.linalg.norm(system.g)
  system = dataclasses.replace(system, f=f, g=g)
  logging.debug(
      '[kelvin]: %d nodes, %d elements, %d clamped nodes, n=%d',
      len(nodes),
      len(elements),
      len(bottom_nodes),
      system.n,
  )
  return system


@enum.unique
class ModelFamily(enum.Enum):
  BEAM = 'beam'
  KELVIN2D = 'kelvin2d'
  KELVIN3D = 'kelvin3d'


FAMILY_BOXES = {
    ModelFamily.BEAM: geometry.ParamBox(
        lower=(0.02,), upper=(0.05,), names=('h',)
    ),
    ModelFamily.KELVIN2D: geometry.ParamBox(
        lower=(0.055, 0.020), upper=(0.080, 0.045), names=('l_x', 'l_y')
    ),
    ModelFamily.KELVIN3D: geometry.ParamBox(
        lower=(0.045, 0.6, 1.1),
        upper=(0.055, 0.9, 1.4),
        names=('l_x', 'l_y/l_x', 'l_z/l_x'),
    ),
}


def family_box(family: ModelFamily | str) -> geometry.ParamBox:
  return FAMILY_BOXES[ModelFamily(family)]


def spec_for(
    family: ModelFamily | str, p, overrides: dict | None = None
) -> BeamSpec | KelvinCellSpec:
  """Build the structure spec a parameter point stands for.

  Args:
      family: the model family.
      p: physical parameter vector inside the family box.
      overrides: spec fields replacing the Table defaults.

  Returns:
      A BeamSpec or KelvinCellSpec.

  Raises:
      ParameterDomainError: if p lies outside the family box.
      InvalidSpecError: if an override names an unknown field.
  """
  family = ModelFamily(family)
  box = FAMILY_BOXES[family]
  p = np.atleast_1d(np.asarray(p, dtype=float))
  if p.shape != (box.dimension,) or not box.contains(p):
    raise ParameterDomainError(
        f'{family.value}: parameter point {p.tolist()} outside box'
        f' {box.lower} - {box.upper}'
    )
  overrides = dict(overrides or {})
  match family:
    case ModelFamily.BEAM:
      base = BeamSpec()
      fields = {'height': float(p[0])}
    case ModelFamily.KELVIN2D:
      base = KelvinCellSpec()
      fields = {'l_x': float(p[0]), 'l_y': float(p[1])}
    case ModelFamily.KELVIN3D:
      base = KelvinCellSpec()
      fields = {
          'l_x': float(p[0]),
          'l_y': float(p[0] * p[1]),
          'l_z': float(p[0] * p[2]),
      }
  known = {field.name for field in dataclasses.fields(base)}
  unknown = set(overrides) - known
  if unknown:
    raise InvalidSpecError(
        f'unknown {type(base).__name__} fields: {sorted(unknown)}'
    )
  overrides.update(fields)
  return dataclasses.replace(base, **overrides)


def parametric_fom(
    family: ModelFamily | str, p, overrides: dict | None = None
) -> SystemMatrices:
  """Assemble the full order model of `family` at parameter point `p`."""
  spec = spec_for(family, p, overrides)
  if isinstance(spec, BeamSpec):
    return assemble_timoshenko_beam(spec)
  return assemble_kelvin_cell(spec)


def dump_matrix_market(system: SystemMatrices, directory: str) -> list[str]:
  """Write M, C, K (and f, g) in Matrix Market format for debugging."""
  os.makedirs(directory, exist_ok=True)
  written = []
  for name in ('M', 'C', 'K'):
    path = os.path.join(directory, f'{name}.mtx')
    scipy_io.mmwrite(path, getattr(system, name))
    written.append(path)
  for name in ('f', 'g'):
    path = os.path.join(directory, f'{name}.mtx')
    scipy_io.mmwrite(path, getattr(system, name)[:, None])
    written.append(path)
  logging.info('[%s]: matrices written to %s', system.label, directory)
  return written
