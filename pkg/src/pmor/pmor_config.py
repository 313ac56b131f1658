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

"""Configuration for pmor experiments.

Configurations are TOML files whose sections mirror the dataclasses below:
`[model]`, `[model.spec]`, `[mor]`, `[sampler]`, `[interpolation]`,
`[frequency]`, `[test_grid]` and `[run]`. An optional `[paper_scale]` section
holds overrides (same layout) applied with `paper_scale=True`.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import itertools
import json
import math
import platform

try:
  import tomllib
except ModuleNotFoundError:  # Python < 3.11
  import tomli as tomllib

import numpy as np
import scipy

from pmor import fem_models
from pmor import geometry
from pmor import interpolation
from pmor import mor_core
from pmor import sample_library
from pmor import sampler

DEFAULT_OUTPUT_DIR = 'pmor-output'
TEST_GRID_KINDS = ('grid', 'random')


class ConfigError(ValueError):
  pass


@dataclasses.dataclass(frozen=True)
class ModelConfig:
  """Model family, spec overrides and parameter box.

  Attributes:
      family: beam, kelvin2d or kelvin3d
      spec: BeamSpec / KelvinCellSpec fields overriding the defaults
      lower: lower box corner; defaults to the family box
      upper: upper box corner; defaults to the family box
  """

  family: fem_models.ModelFamily = fem_models.ModelFamily.BEAM
  spec: dict = dataclasses.field(default_factory=dict)
  lower: tuple[float, ...] | None = None
  upper: tuple[float, ...] | None = None

  def __post_init__(self):
    try:
      object.__setattr__(self, 'family', fem_models.ModelFamily(self.family))
    except ValueError as e:
      raise ConfigError(f'unknown model family: {self.family}') from e
    family_box = fem_models.family_box(self.family)
    try:
      box = self.box
    except ValueError as e:
      raise ConfigError(f'invalid parameter box: {e}') from e
    if not (family_box.contains(box.lower) and family_box.contains(box.upper)):
      raise ConfigError(
          f'box {box.lower} - {box.upper} leaves the {self.family.value}'
          f' family box {family_box.lower} - {family_box.upper}'
      )
    try:
      fem_models.spec_for(self.family, box.lower, self.spec).validate()
    except fem_models.InvalidSpecError as e:
      raise ConfigError(str(e)) from e

  @property
  def box(self) -> geometry.ParamBox:
    family_box = fem_models.family_box(self.family)
    return geometry.ParamBox(
        lower=tuple(self.lower or family_box.lower),
        upper=tuple(self.upper or family_box.upper),
        names=family_box.names,
    )


@dataclasses.dataclass(frozen=True)
class MorConfig:
  """Modal truncation settings: r modes selected among n_modes."""

  r: int = 20
  n_modes: int | None = None
  selection: mor_core.SelectionStrategy = mor_core.SelectionStrategy.LOWEST

  def __post_init__(self):
    try:
      object.__setattr__(
          self, 'selection', mor_core.SelectionStrategy(self.selection)
      )
    except ValueError as e:
      raise ConfigError(f'unknown mode selection: {self.selection}') from e
    if self.r < 1:
      raise ConfigError(f'r must be >= 1, got {self.r}')
    if self.n_modes is not None and self.n_modes < self.r:
      raise ConfigError(f'n_modes ({self.n_modes}) < r ({self.r})')


@dataclasses.dataclass(frozen=True)
class InterpolationConfig:
  """Interpolant settings.

  Attributes:
      kind: spline1d, ridge, or auto (spline1d in 1D, ridge otherwise)
      ridge_lambda: ridge regularization parameter
      k_neighbors: neighbors of the classifier
  """

  kind: str = 'auto'
  ridge_lambda: float = interpolation.RIDGE_LAMBDA
  k_neighbors: int = 1

  def __post_init__(self):
    if self.kind != 'auto':
      try:
        interpolation.InterpolantKind(self.kind)
      except ValueError as e:
        raise ConfigError(f'unknown interpolant kind: {self.kind}') from e
    if self.ridge_lambda < 0 or self.k_neighbors < 1:
      raise ConfigError('ridge_lambda must be >= 0 and k_neighbors >= 1')

  def resolve(self, dimension: int) -> interpolation.InterpolantKind:
    if self.kind == 'auto':
      return (
          interpolation.InterpolantKind.SPLINE1D
          if dimension == 1
          else interpolation.InterpolantKind.RIDGE
      )
    kind = interpolation.InterpolantKind(self.kind)
    if kind == interpolation.InterpolantKind.SPLINE1D and dimension != 1:
      raise ConfigError(f'spline1d needs a 1D parameter space, got {dimension}D')
    return kind


@dataclasses.dataclass(frozen=True)
class FrequencyBand:
  """Evaluation band: n_points linearly spaced in [f_min_hz, f_max_hz]."""

  f_min_hz: float = 1.0
  f_max_hz: float = 1000.0
  n_points: int = 1000
  h2_integrand: mor_core.H2Integrand = mor_core.H2Integrand.ABS

  def __post_init__(self):
    try:
      object.__setattr__(
          self, 'h2_integrand', mor_core.H2Integrand(self.h2_integrand)
      )
    except ValueError as e:
      raise ConfigError(f'unknown h2 integrand: {self.h2_integrand}') from e
    if not 0 < self.f_min_hz < self.f_max_hz:
      raise ConfigError(
          'frequency band must be positive and ascending, got'
          f' [{self.f_min_hz}, {self.f_max_hz}]'
      )
    if self.n_points < 2:
      raise ConfigError(f'n_points must be >= 2, got {self.n_points}')

  @property
  def freqs_hz(self) -> np.ndarray:
    return np.linspace(self.f_min_hz, self.f_max_hz, self.n_points)

  @property
  def omegas(self) -> np.ndarray:
    return 2.0 * np.pi * self.freqs_hz


@dataclasses.dataclass(frozen=True)
class TestGrid:
  """Test points: a regular grid or uniformly random points in the box."""

  __test__ = False  # not a pytest class

  kind: str = 'grid'
  points_per_dim: int = 21
  n_random: int = 200

  def __post_init__(self):
    if self.kind not in TEST_GRID_KINDS:
      raise ConfigError(f'unknown test grid kind: {self.kind}')
    if self.points_per_dim < 1 or self.n_random < 1:
      raise ConfigError('test grid must not be empty')

  def points(self, box: geometry.ParamBox, seed: int) -> np.ndarray:
    """Physical test points, in deterministic order."""
    if self.kind == 'grid':
      axes = [np.linspace(0.0, 1.0, self.points_per_dim)] * box.dimension
      unit = np.array(list(itertools.product(*axes)))
    else:
      rng = np.random.default_rng(seed)
      unit = rng.uniform(size=(self.n_random, box.dimension))
    return geometry.denormalize(unit, box)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
  """Configuration of a sample -> train -> evaluate experiment."""

  model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
  mor: MorConfig = dataclasses.field(default_factory=MorConfig)
  sampler: sample_library.Hyperparams = dataclasses.field(
      default_factory=sample_library.Hyperparams
  )
  interpolation: InterpolationConfig = dataclasses.field(
      default_factory=InterpolationConfig
  )
  frequency: FrequencyBand = dataclasses.field(default_factory=FrequencyBand)
  test_grid: TestGrid = dataclasses.field(default_factory=TestGrid)
  output_dir: str = DEFAULT_OUTPUT_DIR
  seed: int = 0
  workers: int = 1

  def __post_init__(self):
    if self.workers < 1:
      raise ConfigError(f'workers must be >= 1, got {self.workers}')
    if self.seed < 0:
      raise ConfigError(f'seed must be >= 0, got {self.seed}')

  @property
  def box(self) -> geometry.ParamBox:
    return self.model.box

  @property
  def interpolant_kind(self) -> interpolation.InterpolantKind:
    return self.interpolation.resolve(self.box.dimension)

  def fom(self):
    """Callable assembling the full order model at a physical point."""
    return functools.partial(
        fem_models.parametric_fom, self.model.family, overrides=self.model.spec
    )

  def rom_factory(self) -> sampler.RomFactory:
    return sampler.RomFactory(
        self.fom(),
        r=self.mor.r,
        n_modes=self.mor.n_modes,
        selection=self.mor.selection,
    )

  def library_metadata(self) -> dict:
    return {
        'family': self.model.family.value,
        'spec': dict(self.model.spec),
        'r': self.mor.r,
        'n_modes': self.mor.n_modes or self.mor.r,
        'selection': self.mor.selection.value,
    }

  def to_dict(self) -> dict:
    return {
        'model': {
            'family': self.model.family.value,
            'spec': dict(self.model.spec),
            'lower': list(self.box.lower),
            'upper': list(self.box.upper),
        },
        'mor': {
            'r': self.mor.r,
            'n_modes': self.mor.n_modes,
            'selection': self.mor.selection.value,
        },
        'sampler': self.sampler.to_dict(),
        'interpolation': dataclasses.asdict(self.interpolation),
        'frequency': {
            'f_min_hz': self.frequency.f_min_hz,
            'f_max_hz': self.frequency.f_max_hz,
            'n_points': self.frequency.n_points,
            'h2_integrand': self.frequency.h2_integrand.value,
        },
        'test_grid': dataclasses.asdict(self.test_grid),
        'run': {
            'output_dir': self.output_dir,
            'seed': self.seed,
            'workers': self.workers,
        },
    }

  def manifest(self) -> dict:
    """Config, its sha256 (canonical JSON), seed and library versions."""
    config = self.to_dict()
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'))
    return {
        'config': config,
        'config_sha256': hashlib.sha256(canonical.encode()).hexdigest(),
        'seed': self.seed,
        'versions': {
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
        },
    }


def _merge(base: dict, overrides: dict) -> dict:
  merged = dict(base)
  for key, value in overrides.items():
    if isinstance(value, dict) and isinstance(merged.get(key), dict):
      merged[key] = _merge(merged[key], value)
    else:
      merged[key] = value
  return merged


def _build(section: dict, name: str, factory):
  try:
    return factory(**section)
  except TypeError as e:
    raise ConfigError(f'[{name}]: {e}') from e
  except ConfigError:
    raise
  except ValueError as e:
    raise ConfigError(f'[{name}]: {e}') from e


def config_from_dict(data: dict, paper_scale: bool = False) -> ExperimentConfig:
  """Build an ExperimentConfig from TOML-shaped data.

  Raises:
      ConfigError: for unknown keys or invalid values.
  """
  data = dict(data)
  paper = data.pop('paper_scale', {})
  if paper_scale:
    data = _merge(data, paper)
  known = {
      'model',
      'mor',
      'sampler',
      'interpolation',
      'frequency',
      'test_grid',
      'run',
  }
  unknown = set(data) - known
  if unknown:
    raise ConfigError(f'unknown config sections: {sorted(unknown)}')
  model = dict(data.get('model', {}))
  for corner in ('lower', 'upper'):
    if corner in model:
      model[corner] = tuple(float(v) for v in model[corner])
  sampler_section = dict(data.get('sampler', {}))
  if 'd_C' in sampler_section and sampler_section['d_C'] is None:
    sampler_section['d_C'] = math.inf
  run = data.get('run', {})
  unknown_run = set(run) - {'output_dir', 'seed', 'workers'}
  if unknown_run:
    raise ConfigError(f'[run]: unknown keys {sorted(unknown_run)}')
  return _build(
      dict(
          model=_build(model, 'model', ModelConfig),
          mor=_build(data.get('mor', {}), 'mor', MorConfig),
          sampler=_build(sampler_section, 'sampler', sample_library.Hyperparams),
          interpolation=_build(
              data.get('interpolation', {}), 'interpolation', InterpolationConfig
          ),
          frequency=_build(data.get('frequency', {}), 'frequency', FrequencyBand),
          test_grid=_build(data.get('test_grid', {}), 'test_grid', TestGrid),
          **run,
      ),
      'run',
      ExperimentConfig,
  )


def load_config(
    path: str,
    paper_scale: bool = False,
    output_dir: str | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> ExperimentConfig:
  """Read a TOML config and apply command-line overrides.

  Raises:
      ConfigError: if the file is missing, malformed or invalid.
  """
  try:
    with open(path, 'rb') as config_file:
      data = tomllib.load(config_file)
  except FileNotFoundError as e:
    raise ConfigError(f'config file not found: {path}') from e
  except tomllib.TOMLDecodeError as e:
    raise ConfigError(f'{path}: {e}') from e
  config = config_from_dict(data, paper_scale=paper_scale)
  overrides = {
      name: value
      for name, value in (
          ('output_dir', output_dir),
          ('seed', seed),
          ('workers', workers),
      )
      if value is not None
  }
  if overrides:
    config = _build(overrides, 'run', functools.partial(
        dataclasses.replace, config
    ))
  return config
