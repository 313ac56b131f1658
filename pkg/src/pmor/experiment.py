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

"""This module runs the sample -> train -> evaluate pipeline.

Every command writes into its own directory below the configured output
directory, together with a `manifest.json` describing the run:
- `library/`: the sample library, `samples.csv` and `triangulation.json`
- `promset/`: the trained local pROMs
- `evaluation/` (or `baseline/`): `errors.csv`, `timings.json` and the
  cached full order model responses `reference_frfs.npz`
- `prediction/`: `frf.csv` and `prediction.json`
- `modes/`: `modes.csv` and `modes.json`
"""

import concurrent.futures
import csv
import json
import logging
import os
import time
from typing import Sequence

import numpy as np

from pmor import consistency
from pmor import fem_models
from pmor import geometry
from pmor import mor_core
from pmor import pmor_config
from pmor import prediction_method
from pmor import prom
from pmor import sample_library
from pmor import sampler

LIBRARY_DIRNAME = 'library'
PROMSET_DIRNAME = 'promset'
EVALUATION_DIRNAME = 'evaluation'
BASELINE_DIRNAME = 'baseline'
PREDICTION_DIRNAME = 'prediction'
MODES_DIRNAME = 'modes'
MANIFEST_FILENAME = 'manifest.json'
REFERENCE_CACHE_FILENAME = 'reference_frfs.npz'


def write_manifest(config: pmor_config.ExperimentConfig, directory: str) -> str:
  os.makedirs(directory, exist_ok=True)
  path = os.path.join(directory, MANIFEST_FILENAME)
  with open(path, 'w') as json_report:
    json.dump(config.manifest(), json_report, indent=4, sort_keys=True)
  return path


def _write_samples_csv(lib: sample_library.SampleLibrary, path: str) -> None:
  d = lib.dimension
  with open(path, 'w', newline='') as csv_file:
    writer = csv.writer(csv_file)
    writer.writerow(
        ['id']
        + [f'u{i + 1}' for i in range(d)]
        + list(lib.box.names)
        + ['label', 'origin', 'excluded']
    )
    excluded = lib.excluded
    for s in lib.samples:
      writer.writerow(
          [s.id]
          + [repr(float(v)) for v in s.u]
          + [repr(float(v)) for v in s.p]
          + [
              '' if s.label is None else s.label,
              s.origin.value,
              int(s.id in excluded),
          ]
      )


def cmd_sample(
    config: pmor_config.ExperimentConfig, resume: bool = False
) -> sample_library.SampleLibrary:
  """Adaptive sampling, clustering and cluster filling.

  The library is written even if the sampling budget runs out; its
  `converged` flag is then False.

  Args:
      config: the experiment configuration.
      resume: continue from the library found in the output directory.

  Returns:
      The written library.
  """
  directory = os.path.join(config.output_dir, LIBRARY_DIRNAME)
  write_manifest(config, directory)
  factory = config.rom_factory()
  library = None
  if resume and os.path.exists(
      os.path.join(directory, sample_library.LIBRARY_FILENAME)
  ):
    library = sample_library.load_library(directory)
    logging.info('[sample]: resuming with %d samples', len(library))
  started = time.perf_counter()
  lib = sampler.adaptive_sample(
      factory,
      config.box,
      config.sampler,
      library=library,
      metadata=config.library_metadata(),
  )
  if lib.converged:
    sampler.cluster(lib)
    try:
      sampler.fill_clusters(lib, config.sampler, factory)
    except sampler.BudgetExhaustedError as e:
      logging.warning('[sample]: %s, cluster filling incomplete', e)
      lib.converged = False
  elapsed = time.perf_counter() - started
  fom_time = sum(lib.offline_timings().values())
  lib.log_event('offline-cost', seconds=elapsed, fom_seconds=fom_time)
  logging.info(
      '[sample]: %d samples in %.1f s, %.1f%% spent on full order models',
      len(lib),
      elapsed,
      100.0 * fom_time / elapsed if elapsed > 0 else 0.0,
  )
  sample_library.save_library(lib, directory)
  _write_samples_csv(lib, os.path.join(directory, 'samples.csv'))
  with open(os.path.join(directory, 'triangulation.json'), 'w') as json_report:
    json.dump(lib.triangulation.to_dict(), json_report, indent=4)
  return lib


def _library_dir(config, library_dir):
  return library_dir or os.path.join(config.output_dir, LIBRARY_DIRNAME)


def _promset_dir(config, promset_dir):
  return promset_dir or os.path.join(config.output_dir, PROMSET_DIRNAME)


def cmd_train(
    config: pmor_config.ExperimentConfig, library_dir: str | None = None
) -> prom.PROMSet:
  """Train one local pROM per cluster of the library and write the PROMSet.

  Raises:
      prom.TrainingError: if the library is incomplete or has no trainable
        cluster.
  """
  lib = sample_library.load_library(_library_dir(config, library_dir))
  if not lib.converged:
    raise prom.TrainingError('library sampling did not converge')
  promset = prom.build_promset(
      lib,
      config.interpolant_kind,
      k=config.interpolation.k_neighbors,
      ridge_lambda=config.interpolation.ridge_lambda,
  )
  directory = os.path.join(config.output_dir, PROMSET_DIRNAME)
  write_manifest(config, directory)
  prom.save_promset(promset, directory)
  if promset.skipped_clusters:
    logging.warning(
        '[train]: clusters without pROM: %s', list(promset.skipped_clusters)
    )
  return promset


def _reference_frfs(
    config: pmor_config.ExperimentConfig,
    points: np.ndarray,
    directory: str,
) -> tuple[np.ndarray, np.ndarray]:
  """FOM responses at the test points, cached per (points, band)."""
  omegas = config.frequency.omegas
  cache = os.path.join(directory, REFERENCE_CACHE_FILENAME)
  if os.path.exists(cache):
    with np.load(cache) as arrays:
      if np.array_equal(arrays['points'], points) and np.array_equal(
          arrays['omegas'], omegas
      ):
        logging.info('[evaluate]: reference responses read from %s', cache)
        return np.array(arrays['responses']), np.array(arrays['seconds'])
  fom = config.fom()

  def solve(p):
    start = time.perf_counter()
    response = mor_core.transfer_function(fom(p), omegas)
    return response, time.perf_counter() - start

  with concurrent.futures.ThreadPoolExecutor(config.workers) as executor:
    results = list(executor.map(solve, points))
  responses = np.array([r for r, _ in results])
  seconds = np.array([s for _, s in results])
  np.savez(
      cache, points=points, omegas=omegas, responses=responses, seconds=seconds
  )
  logging.info(
      '[evaluate]: %d reference responses, %.2f s each on average',
      len(points),
      float(seconds.mean()),
  )
  return responses, seconds


def _error_row(
    config: pmor_config.ExperimentConfig,
    method: prediction_method.PredictionMethod,
    p: np.ndarray,
    reference: np.ndarray,
) -> tuple[dict, float]:
  omegas = config.frequency.omegas
  try:
    result = method.predict(p)
  except (mor_core.NumericError, np.linalg.LinAlgError, ValueError) as e:
    logging.warning('[%s]: prediction at p=%s failed: %s', method.method_name, p.tolist(), e)
    result = prediction_method.PredictionResult(
        method_name=method.method_name, p=p, model=None, note=str(e)
    )
  error = float('nan')
  note = result.note
  if result.model is not None:
    try:
      response = mor_core.transfer_function(result.model, omegas)
      error = mor_core.relative_h2_error(
          reference, response, omegas, config.frequency.h2_integrand
      )
    except (mor_core.NumericError, np.linalg.LinAlgError) as e:
      logging.warning(
          '[%s]: response at p=%s failed: %s', method.method_name, p.tolist(), e
      )
      note = f'{note}; {e}' if note else str(e)
  if result.model is not None and result.model.flags:
    note = f'{note}; {",".join(result.model.flags)}'
  row = {
      **{f'p{i + 1}': float(v) for i, v in enumerate(p)},
      'method': method.method_name,
      'h2_rel': error,
      'indicator': '' if result.indicator is None else result.indicator,
      'note': note,
  }
  return row, result.seconds


def _evaluate(
    config: pmor_config.ExperimentConfig,
    method_classes: Sequence[type[prediction_method.PredictionMethod]],
    directory: str,
    library_dir: str | None,
    promset_dir: str | None,
) -> list[dict]:
  write_manifest(config, directory)
  lib = sample_library.load_library(_library_dir(config, library_dir))
  promset = prom.load_promset(_promset_dir(config, promset_dir))
  points = config.test_grid.points(config.box, config.seed)
  references, fom_seconds = _reference_frfs(config, points, directory)
  context = prediction_method.EvaluationContext(
      promset=promset,
      library=lib,
      fom=config.fom(),
      r=config.mor.r,
      n_modes=config.mor.n_modes or config.mor.r,
      selection=config.mor.selection,
  )
  rows = []
  timings = {
      'fom_seconds_mean': float(fom_seconds.mean()),
      'test_points': len(points),
      'methods': {},
  }
  for method_class in method_classes:
    method = method_class()
    start = time.perf_counter()
    method.prepare(context)
    prepare_seconds = time.perf_counter() - start
    with concurrent.futures.ThreadPoolExecutor(config.workers) as executor:
      results = list(
          executor.map(
              lambda args: _error_row(config, method, *args),
              zip(points, references),
          )
      )
    method_rows = [row for row, _ in results]
    errors = np.array([row['h2_rel'] for row in method_rows])
    finite = errors[np.isfinite(errors)]
    timings['methods'][method.method_name] = {
        'prepare_seconds': prepare_seconds,
        'predict_seconds_mean': float(np.mean([s for _, s in results])),
        'failures': int(np.count_nonzero(~np.isfinite(errors))),
    }
    logging.info(
        '[%s]: median relative H2 error %.3e over %d points',
        method.method_name,
        float(np.median(finite)) if finite.size else float('nan'),
        len(points),
    )
    rows += method_rows

  fieldnames = [f'p{i + 1}' for i in range(config.box.dimension)] + [
      'method',
      'h2_rel',
      'indicator',
      'note',
  ]
  with open(os.path.join(directory, 'errors.csv'), 'w', newline='') as f:
    writer = csv.DictWriter(f, fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
      writer.writerow({
          key: repr(value) if isinstance(value, float) else value
          for key, value in row.items()
      })
  with open(os.path.join(directory, 'timings.json'), 'w') as json_report:
    json.dump(timings, json_report, indent=4)
  logging.info('[evaluate]: %d rows written to %s', len(rows), directory)
  return rows


def cmd_evaluate(
    config: pmor_config.ExperimentConfig,
    method_classes: Sequence[type[prediction_method.PredictionMethod]],
    library_dir: str | None = None,
    promset_dir: str | None = None,
) -> list[dict]:
  """Relative H2 error of every method at every test point.

  Returns:
      The rows of errors.csv in grid order, method by method.
  """
  return _evaluate(
      config,
      method_classes,
      os.path.join(config.output_dir, EVALUATION_DIRNAME),
      library_dir,
      promset_dir,
  )


def cmd_baseline(
    config: pmor_config.ExperimentConfig,
    method_classes: Sequence[type[prediction_method.PredictionMethod]],
    library_dir: str | None = None,
    promset_dir: str | None = None,
) -> list[dict]:
  """Evaluate the baseline methods only, into the baseline directory."""
  return _evaluate(
      config,
      method_classes,
      os.path.join(config.output_dir, BASELINE_DIRNAME),
      library_dir,
      promset_dir,
  )


def cmd_predict(
    config: pmor_config.ExperimentConfig,
    p,
    remedy: bool = False,
    library_dir: str | None = None,
    promset_dir: str | None = None,
) -> dict:
  """Predict the FRF at one parameter point.

  With `remedy`, points flagged by the indicator are reduced with the
  global basis of the enclosing simplex (this assembles the FOM).

  Returns:
      The content of prediction.json.

  Raises:
      geometry.OutOfRangeError: if p lies outside the box.
  """
  p = np.atleast_1d(np.asarray(p, dtype=float))
  promset = prom.load_promset(_promset_dir(config, promset_dir))
  geometry.normalize(p, promset.box)
  directory = os.path.join(config.output_dir, PREDICTION_DIRNAME)
  write_manifest(config, directory)
  indicator = prom.inconsistency_indicator(promset, p)
  if remedy and indicator.count > 0:
    lib = sample_library.load_library(_library_dir(config, library_dir))
    model = prom.global_basis_predict(config.fom(), lib, p)
    mode, cluster_id = 'global-remedy', None
  else:
    model, cluster_id = prom.predict(promset, p)
    mode = 'proposed'
  response = mor_core.transfer_function(model, config.frequency.omegas)
  with open(os.path.join(directory, 'frf.csv'), 'w', newline='') as csv_file:
    writer = csv.writer(csv_file)
    writer.writerow(['freq_hz', 're', 'im', 'abs'])
    for f, h in zip(config.frequency.freqs_hz, response):
      writer.writerow([repr(float(f)), repr(h.real), repr(h.imag), repr(abs(h))])
  report = {
      'p': p.tolist(),
      'cluster': cluster_id,
      'indicator': indicator.count,
      'indicator_clusters': list(indicator.clusters),
      'inside_hull': indicator.inside,
      'mode': mode,
      'flags': list(model.flags),
      'r': model.r,
  }
  with open(os.path.join(directory, 'prediction.json'), 'w') as json_report:
    json.dump(report, json_report, indent=4)
  logging.info(
      '[predict]: p=%s, %s, indicator %d', p.tolist(), mode, indicator.count
  )
  return report


def cmd_modes(
    config: pmor_config.ExperimentConfig,
    n_modes: int = 10,
    n_points: int = 31,
    dump_matrices: bool = False,
) -> dict:
  """Eigenfrequency sweep along the first parameter.

  The other parameters stay at the box center. A crossing is counted
  between consecutive sweep points whose r lowest modes span subspaces with
  a largest principal angle >= theta_uT.

  Returns:
      The content of modes.json.
  """
  directory = os.path.join(config.output_dir, MODES_DIRNAME)
  write_manifest(config, directory)
  box = config.box
  fom = config.fom()
  r = min(config.mor.r, n_modes)
  center = 0.5 * (np.asarray(box.lower) + np.asarray(box.upper))
  sweep = np.linspace(box.lower[0], box.upper[0], n_points)
  rows = []
  previous = None
  crossings = []
  for i, value in enumerate(sweep):
    p = center.copy()
    p[0] = value
    system = fom(p)
    if dump_matrices and i == 0:
      fem_models.dump_matrix_market(system, os.path.join(directory, 'matrices'))
    modal = mor_core.solve_modes(system, n_modes)
    for mode, omega in enumerate(modal.omega):
      rows.append([repr(float(value)), mode + 1, repr(omega / (2 * np.pi))])
    basis = mor_core.orthonormalize(modal.phi[:, :r])
    if previous is not None:
      angle = consistency.max_angle(previous, basis)
      if angle >= config.sampler.theta_uT:
        crossings.append([float(sweep[i - 1]), float(value), angle])
    previous = basis
  with open(os.path.join(directory, 'modes.csv'), 'w', newline='') as csv_file:
    writer = csv.writer(csv_file)
    writer.writerow(['p', 'mode', 'freq_hz'])
    writer.writerows(rows)
  report = {
      'parameter': box.names[0],
      'fixed': center.tolist(),
      'n_modes': n_modes,
      'r': r,
      'crossings': crossings,
  }
  with open(os.path.join(directory, 'modes.json'), 'w') as json_report:
    json.dump(report, json_report, indent=4)
  logging.info(
      '[modes]: %d sweep points, %d basis-changing crossings',
      n_points,
      len(crossings),
  )
  return report
