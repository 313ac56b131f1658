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

"""Local pROM of the classified cluster."""

import time

import numpy as np

from pmor import prediction_method
from pmor import prom


class PredictionMethodProposed(prediction_method.PredictionMethod):
  """Classifies the point and evaluates the local pROM of its cluster."""

  METHOD_NAME = 'proposed'

  def __init__(self):
    super().__init__()
    self.method_name = PredictionMethodProposed.METHOD_NAME
    self.promset = None

  def prepare(self, context: prediction_method.EvaluationContext) -> None:
    self.promset = context.promset

  def predict(self, p: np.ndarray) -> prediction_method.PredictionResult:
    start = time.perf_counter()
    model, label = prom.predict(self.promset, p)
    seconds = time.perf_counter() - start
    indicator = prom.inconsistency_indicator(self.promset, p)
    return prediction_method.PredictionResult(
        method_name=self.method_name,
        p=np.atleast_1d(p),
        model=model,
        indicator=indicator.count,
        note=f'cluster {label}',
        seconds=seconds,
    )
