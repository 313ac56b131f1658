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

"""Local pROMs with the global-basis fallback at cluster borders."""

import time

import numpy as np

from pmor import prediction_method
from pmor import prom


class PredictionMethodGlobalRemedy(prediction_method.PredictionMethod):
  """Uses the local pROM unless the indicator flags the point.

  Flagged points (indicator > 0) are projected onto the joint basis of the
  enclosing simplex, which requires assembling the full order model.
  """

  METHOD_NAME = 'global-remedy'

  def __init__(self):
    super().__init__()
    self.method_name = PredictionMethodGlobalRemedy.METHOD_NAME
    self.context = None

  def prepare(self, context: prediction_method.EvaluationContext) -> None:
    self.context = context

  def predict(self, p: np.ndarray) -> prediction_method.PredictionResult:
    start = time.perf_counter()
    indicator = prom.inconsistency_indicator(self.context.promset, p)
    if indicator.count > 0:
      model = prom.global_basis_predict(
          self.context.fom, self.context.library, p
      )
      note = f'global basis over clusters {list(indicator.clusters)}'
    else:
      model, label = prom.predict(self.context.promset, p)
      note = f'cluster {label}'
    return prediction_method.PredictionResult(
        method_name=self.method_name,
        p=np.atleast_1d(p),
        model=model,
        indicator=indicator.count,
        note=note,
        seconds=time.perf_counter() - start,
    )
