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

"""Global matrix interpolation baselines that ignore the clusters."""

import logging
import time

import numpy as np

from pmor import consistency
from pmor import geometry
from pmor import prediction_method
from pmor import prom


class _GlobalInterpolationMethod(prediction_method.PredictionMethod):
  """Evaluates one pROM trained over every sample of the library."""

  def __init__(self):
    super().__init__()
    self.baseline = None
    self.box = None
    self.failure = ''

  def _train(self, context: prediction_method.EvaluationContext):
    raise NotImplementedError

  def prepare(self, context: prediction_method.EvaluationContext) -> None:
    self.box = context.library.box
    try:
      self.baseline = self._train(context)
    except (
        consistency.DegenerateTruncationError,
        prom.TrainingError,
    ) as e:
      logging.warning('[%s]: training failed: %s', self.method_name, e)
      self.failure = str(e)

  def predict(self, p: np.ndarray) -> prediction_method.PredictionResult:
    p = np.atleast_1d(p)
    if self.baseline is None:
      return prediction_method.PredictionResult(
          method_name=self.method_name, p=p, model=None, note=self.failure
      )
    start = time.perf_counter()
    model = self.baseline.evaluate(geometry.normalize(p, self.box), p=p)
    return prediction_method.PredictionResult(
        method_name=self.method_name,
        p=p,
        model=model,
        note=f'r={self.baseline.r}',
        seconds=time.perf_counter() - start,
    )


class PredictionMethodMatrixInterp(_GlobalInterpolationMethod):
  """Matrix interpolation with one reference basis for all samples."""

  METHOD_NAME = 'matrix-interp'

  def __init__(self):
    super().__init__()
    self.method_name = PredictionMethodMatrixInterp.METHOD_NAME

  def _train(self, context):
    return prom.train_baseline_matrix_interp(
        context.library, context.promset.kind
    )


class PredictionMethodAmsallem(_GlobalInterpolationMethod):
  """Matrix interpolation on bases truncated to their consistent directions."""

  METHOD_NAME = 'amsallem'

  def __init__(self):
    super().__init__()
    self.method_name = PredictionMethodAmsallem.METHOD_NAME

  def _train(self, context):
    return prom.train_baseline_amsallem(context.library, context.promset.kind)
