"""Dynamic-DeepHit: encoder, attention pooling, one cause-specific MLP head
per risk, and a joint softmax over all k*m bin logits."""

from __future__ import annotations

import numpy as np

from ..cohort import Cohort, TimeSeries
from ..diffcore import add_mlp_params, ops
from .base import CifEstimate, PmfEstimate, TimeGrid
from .neural import NeuralCifModel
from . import training


class DeepHitModel(NeuralCifModel):
    kind = "deephit"

    def _build_output_params(self, rng) -> None:
        # one hidden layer of width 2m per head
        for j in range(self.k):
            add_mlp_params(
                self.params, f"head{j}", self.hidden, 2 * self.grid.m,
                self.grid.m, rng,
            )

    def _logits(self, context, tc):
        x = context[None, :]
        rows = []
        caches = []
        for j in range(self.k):
            mask = tc.mask((1, 2 * self.grid.m)) if tc else None
            y, cache = ops.mlp_forward(
                x, self.params[f"head{j}.w1"], self.params[f"head{j}.b1"],
                self.params[f"head{j}.w2"], self.params[f"head{j}.b2"], mask,
            )
            rows.append(y[0])
            caches.append(cache)
        return np.vstack(rows), caches

    def _logits_backward(self, caches, dlogits):
        dcontext = np.zeros(self.hidden)
        for j in range(self.k):
            dx, (dw1, db1, dw2, db2) = ops.mlp_backward(caches[j], dlogits[j][None, :])
            self.params.add_grad(f"head{j}.w1", dw1)
            self.params.add_grad(f"head{j}.b1", db1)
            self.params.add_grad(f"head{j}.w2", dw2)
            self.params.add_grad(f"head{j}.b2", db2)
            dcontext += dx[0]
        return dcontext


def forward(model: DeepHitModel, series: TimeSeries) -> PmfEstimate:
    """Bin masses for one subject; entries sum to 1 by construction."""
    return model.forward_pmf(series)


def predict_cif(model: DeepHitModel, series: TimeSeries, t: float) -> CifEstimate:
    return model.predict_cif(series, t)


def train(cohort: Cohort, grid: TimeGrid | None = None, hyper_grid=None,
          seed: int = 0, protocol: training.TrainProtocol | None = None) -> DeepHitModel:
    """Grid-searched, early-stopped fit; see ``training.train_neural``."""
    model, _ = train_with_log(cohort, grid, hyper_grid, seed, protocol)
    return model


def train_with_log(cohort: Cohort, grid: TimeGrid | None = None, hyper_grid=None,
                   seed: int = 0, protocol: training.TrainProtocol | None = None):
    return training.train_neural(DeepHitModel, cohort, grid, hyper_grid, seed, protocol)
