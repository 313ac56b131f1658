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

import argparse
import importlib
import inspect
import logging
import os
import sys

import numpy as np

from pmor import consistency
from pmor import experiment
from pmor import fem_models
from pmor import geometry
from pmor import mor_core
from pmor import pmor_config
from pmor import prediction_method
from pmor import prom
from pmor import sampler

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_BUDGET = 4

BASELINE_METHODS = ('matrix-interp', 'amsallem')


def _import_available_modules(
    folder_path=os.path.join(os.path.dirname(__file__), 'pmor', 'methods'),
) -> list[type[prediction_method.PredictionMethod]]:
  """Import all prediction methods from the specified folder.

  Args:
      folder_path: The path to the folder containing the method modules.

  Returns:
      A list of available method classes, sorted by METHOD_NAME.
  """
  method_classes = []
  for filename in sorted(os.listdir(folder_path)):
    if filename.endswith('.py') and not filename.startswith('_'):
      module = importlib.import_module(
          f'.{filename[:-3]}', package='pmor.methods'
      )
      for _, cls in inspect.getmembers(module, inspect.isclass):
        if (
            issubclass(cls, prediction_method.PredictionMethod)
            and hasattr(cls, 'METHOD_NAME')
            and cls not in method_classes
        ):
          method_classes.append(cls)
  return sorted(method_classes, key=lambda cls: cls.METHOD_NAME)


def _select_methods(names, available, default_names=None):
  if not names or 'ALL' in names:
    if default_names is None:
      return available
    names = default_names
  return [m for m in available if m.METHOD_NAME in names]


def _parameter_point(values: str) -> np.ndarray:
  try:
    return np.array([float(v) for v in values.split(',')])
  except ValueError as ex:
    raise argparse.ArgumentTypeError(
        f'Invalid parameter point: {values}'
    ) from ex


def _run(args: argparse.Namespace, available) -> int:
  config = pmor_config.load_config(
      args.config,
      paper_scale=args.paper_scale,
      output_dir=args.out,
      seed=args.seed,
      workers=args.workers,
  )
  match args.mode:
    case 'sample':
      lib = experiment.cmd_sample(config, resume=args.resume)
      if not lib.converged:
        logging.error(
            'Sampling budget of %d samples exhausted, partial library written',
            config.sampler.max_total_samples,
        )
        return EXIT_BUDGET
    case 'train':
      experiment.cmd_train(config, library_dir=args.library)
    case 'evaluate':
      experiment.cmd_evaluate(
          config,
          _select_methods(args.method, available),
          library_dir=args.library,
          promset_dir=args.promset,
      )
    case 'baseline':
      experiment.cmd_baseline(
          config,
          _select_methods(args.method, available, BASELINE_METHODS),
          library_dir=args.library,
          promset_dir=args.promset,
      )
    case 'predict':
      experiment.cmd_predict(
          config,
          args.p,
          remedy=args.remedy,
          library_dir=args.library,
          promset_dir=args.promset,
      )
    case 'modes':
      experiment.cmd_modes(
          config,
          n_modes=args.n_modes,
          n_points=args.n_points,
          dump_matrices=args.dump_matrices,
      )
  return EXIT_OK


def main(argv=None) -> int:
  available_method_classes = _import_available_modules()
  available_method_names = ['ALL'] + [
      m.METHOD_NAME for m in available_method_classes
  ]

  parser = argparse.ArgumentParser(
      description=(
          'Sample, cluster and interpolate reduced order models of'
          ' parametric structural dynamics models'
      )
  )
  subparsers = parser.add_subparsers(dest='mode')
  sample_parser = subparsers.add_parser(
      'sample', help='adaptive sampling, clustering and cluster filling'
  )
  sample_parser.add_argument(
      '--resume',
      action='store_true',
      help='continue from the library in the output directory',
  )
  train_parser = subparsers.add_parser(
      'train', help='train one local pROM per cluster'
  )
  evaluate_parser = subparsers.add_parser(
      'evaluate', help='relative H2 error of prediction methods on a test grid'
  )
  baseline_parser = subparsers.add_parser(
      'baseline', help='relative H2 error of the global baselines'
  )
  for p in [evaluate_parser, baseline_parser]:
    p.add_argument(
        '--method',
        nargs='+',
        type=str,
        choices=available_method_names,
        help='prediction methods to evaluate',
    )
  predict_parser = subparsers.add_parser(
      'predict', help='frequency response at one parameter point'
  )
  predict_parser.add_argument(
      '-p',
      required=True,
      type=_parameter_point,
      help='comma-separated physical parameter point',
  )
  predict_parser.add_argument(
      '--remedy',
      action='store_true',
      help='use the global basis where the indicator flags the point',
  )
  modes_parser = subparsers.add_parser(
      'modes', help='eigenfrequency sweep along the first parameter'
  )
  modes_parser.add_argument('--n-modes', type=int, default=10)
  modes_parser.add_argument('--n-points', type=int, default=31)
  modes_parser.add_argument(
      '--dump-matrices',
      action='store_true',
      help='write M, C, K, f, g of the first sweep point as Matrix Market',
  )
  for p in [train_parser, evaluate_parser, baseline_parser, predict_parser]:
    p.add_argument('--library', help='sample library directory')
  for p in [evaluate_parser, baseline_parser, predict_parser]:
    p.add_argument('--promset', help='PROMSet directory')
  # Common arguments
  for p in [
      sample_parser,
      train_parser,
      evaluate_parser,
      baseline_parser,
      predict_parser,
      modes_parser,
  ]:
    p.add_argument(
        '-c', '--config', required=True, help='TOML experiment configuration'
    )
    p.add_argument('--out', help='output directory')
    p.add_argument('--workers', type=int, help='worker threads')
    p.add_argument('--seed', type=int, help='seed of the random test grid')
    p.add_argument(
        '--paper-scale',
        action='store_true',
        help='apply the [paper_scale] section of the configuration',
    )
    p.add_argument('-v', '--verbose', action='store_true')

  args = parser.parse_args(argv)
  if args.mode is None:
    parser.print_help()
    return EXIT_OK
  if args.verbose:
    logging.basicConfig(level=logging.DEBUG)
  else:
    logging.basicConfig(level=logging.INFO)
  try:
    return _run(args, available_method_classes)
  except (
      pmor_config.ConfigError,
      fem_models.InvalidSpecError,
      fem_models.ParameterDomainError,
      geometry.OutOfRangeError,
  ) as e:
    logging.error('Invalid input: %s', e)
    return EXIT_CONFIG
  except sampler.BudgetExhaustedError as e:
    logging.error('Sampling budget exhausted: %s', e)
    return EXIT_BUDGET
  except (
      mor_core.NumericError,
      consistency.DegenerateTruncationError,
      geometry.DegenerateGeometryError,
      prom.TrainingError,
      np.linalg.LinAlgError,
  ) as e:
    logging.error('Numeric failure: %s', e)
    return EXIT_NUMERIC


if __name__ == '__main__':
  sys.exit(main())
