"""Model persistence and the kind registry.

One binary envelope serves all three kinds; the header's kind tag picks
the class on load.  ``ModelSpec`` packages a kind plus its training
inputs behind the uniform ``fit`` interface the experiment harness uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..cohort import Cohort, atomic_write_bytes
from ..errors import ValidationError
from .base import pack_arrays, unpack_arrays
from .ddrsa import DdrsaModel
from .deephit import DeepHitModel
from .finegray import FineGrayFit, fit_finegray
from . import training

_log = logging.getLogger(__name__)

MODEL_KINDS = {
    "deephit": DeepHitModel,
    "ddrsa": DdrsaModel,
    "finegray": FineGrayFit,
}


def save_model(model, path) -> None:
    header, arrays = model.to_payload()
    atomic_write_bytes(path, pack_arrays(header, arrays))


def load_model(path):
    with open(path, "rb") as fh:
        header, arrays = unpack_arrays(fh.read())
    kind = header.get("kind")
    if kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model kind {kind!r}")
    return MODEL_KINDS[kind].from_payload(header, arrays)


@dataclass(frozen=True)
class ModelSpec:
    """A trainable model kind with its (neural) training configuration."""

    kind: str
    hyper_grid: tuple = ()
    protocol: training.TrainProtocol = field(default_factory=training.TrainProtocol)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")

    @property
    def name(self) -> str:
        return self.kind

    def fit(self, cohort: Cohort, seed: int):
        model, _ = self.fit_with_log(cohort, seed)
        return model

    def fit_with_log(self, cohort: Cohort, seed: int):
        if self.kind == "finegray":
            # the proportional-hazards kind has no hyperparameters
            if self.hyper_grid:
                _log.info("finegray ignores the neural hyperparameter grid")
            return fit_finegray(cohort), ["finegray: closed-form fit, no tuning"]
        grid = list(self.hyper_grid) or None
        cls = MODEL_KINDS[self.kind]
        return training.train_neural(cls, cohort, None, grid, seed, self.protocol)
