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

"""Modal truncation of the full order model at the queried point."""

import time

import numpy as np

from pmor import mor_core
from pmor import prediction_method


class PredictionMethodSampledRom(prediction_method.PredictionMethod):
  """Reduces the full order model directly: the accuracy floor of the pROMs."""

  METHOD_NAME = 'sampled-rom'

  def __init__(self):
    super().__init__()
    self.method_name = PredictionMethodSampledRom.METHOD_NAME
    self.context = None

  def prepare(self, context: prediction_method.EvaluationContext) -> None:
    self.context = context

  def predict(self, p: np.ndarray) -> prediction_method.PredictionResult:
    p = np.atleast_1d(p)
    start = time.perf_counter()
    system = self.context.fom(p)
    model = mor_core.modal_rom(
        system,
        self.context.r,
        self.context.n_modes,
        self.context.selection,
        p,
    )
    return prediction_method.PredictionResult(
        method_name=self.method_name,
        p=p,
        model=model,
        note=f'r={model.r}',
        seconds=time.perf_counter() - start,
    )
