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

import abc
import dataclasses
from typing import Callable

import numpy as np

from pmor import fem_models
from pmor import mor_core
from pmor import prom
from pmor import sample_library


@dataclasses.dataclass
class EvaluationContext:
  """Everything a prediction method may use.

  Attributes:
      promset: the trained local pROMs
      library: the sample library the pROMs were trained on
      fom: maps a physical parameter point to the full order model
      r: reduced order of the sampled models
      n_modes: eigenmodes computed before selection
      selection: mode selection strategy of the sampled models
  """

  promset: prom.PROMSet
  library: sample_library.SampleLibrary
  fom: Callable[[np.ndarray], fem_models.SystemMatrices]
  r: int
  n_modes: int
  selection: mor_core.SelectionStrategy


@dataclasses.dataclass
class PredictionResult:
  """A reduced model predicted by one method at one parameter point.

  Attributes:
      method_name: the name of the prediction method
      p: physical parameter point
      model: the predicted reduced model, None if the method failed
      indicator: inconsistent basis vector count, if the method computes it
      note: free-form detail (cluster used, failure reason)
      seconds: wall-clock time of the prediction
  """

  method_name: str
  p: np.ndarray
  model: mor_core.ReducedModel | None
  indicator: int | None = None
  note: str = ''
  seconds: float = 0.0

  def to_dict(self):
    """Convert the object to a dictionary."""
    return {
        'method_name': self.method_name,
        'p': self.p.tolist(),
        'indicator': self.indicator,
        'note': self.note,
        'flags': list(self.model.flags) if self.model is not None else [],
        'seconds': self.seconds,
    }


class PredictionMethod(abc.ABC):
  """Abstract class representing a method predicting reduced models.

  Attributes:
      method_name: the name of the method.
  """

  method_name: str

  @abc.abstractmethod
  def prepare(self, context: EvaluationContext) -> None:
    """Train whatever the method needs before predictions are requested."""

  @abc.abstractmethod
  def predict(self, p: np.ndarray) -> PredictionResult:
    """Predict the reduced model at physical point `p`."""
