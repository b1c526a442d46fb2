"""Competing-risks DDRSA: the Dynamic-DeepHit encoder and attention, then
one decoder GRU per risk unrolled over the m duration bins.

Each decoder step consumes the (dropout-masked) context vector
concatenated with its previous hidden state and emits one bin logit
through a linear readout; the k*m logits share one softmax, and training
reuses the Dynamic-DeepHit loss unchanged.  Decoders share no parameters
across risks.
"""

from __future__ import annotations

import numpy as np

from ..cohort import Cohort, TimeSeries
from ..diffcore import add_gru_params, init_uniform, kernels
from .base import CifEstimate, PmfEstimate, TimeGrid
from .neural import NeuralCifModel
from . import training

_GATES = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")


class DdrsaModel(NeuralCifModel):
    kind = "ddrsa"
    _EXTRA_HEADER_KEYS = ("dec_hidden",)

    def __init__(self, d, static_mask, k, grid, hidden=16, dropout=0.0,
                 seed=0, dec_hidden=None):
        self.dec_hidden = int(dec_hidden) if dec_hidden else hidden
        super().__init__(d, static_mask, k, grid, hidden, dropout, seed)

    def _extra_header(self):
        return {"dec_hidden": self.dec_hidden}

    def _build_output_params(self, rng) -> None:
        d_in = self.hidden + self.dec_hidden
        for j in range(self.k):
            add_gru_params(self.params, f"dec{j}", d_in, self.dec_hidden, rng)
            self.params.add(f"dec{j}.v", init_uniform(rng, (1, self.dec_hidden), self.dec_hidden))
            self.params.add(f"dec{j}.c", np.zeros(1))

    def _dec_weights(self, j):
        return tuple(self.params[f"dec{j}.{g}"] for g in _GATES)

    def _logits(self, context, tc):
        rows = []
        caches = []
        for j in range(self.k):
            mask = tc.mask(context.shape) if tc else None
            ctx_in = context if mask is None else context * mask
            h, z, r, hb = kernels.decoder_forward(
                np.ascontiguousarray(ctx_in), *self._dec_weights(j), self.grid.m
            )
            v = self.params[f"dec{j}.v"]
            rows.append(h @ v[0] + self.params[f"dec{j}.c"][0])
            caches.append((ctx_in, mask, h, z, r, hb))
        return np.vstack(rows), caches

    def _logits_backward(self, caches, dlogits):
        dcontext = np.zeros(self.hidden)
        for j in range(self.k):
            ctx_in, mask, h, z, r, hb = caches[j]
            v = self.params[f"dec{j}.v"]
            dv = dlogits[j] @ h
            self.params.add_grad(f"dec{j}.v", dv[None, :])
            self.params.add_grad(f"dec{j}.c", dlogits[j].sum(keepdims=True))
            dh = np.outer(dlogits[j], v[0])
            w = self._dec_weights(j)
            out = kernels.decoder_backward(
                ctx_in, h, z, r, hb, w[0], w[1], w[3], w[4], w[6], w[7], dh
            )
            dctx_in = out[0]
            for gate, grad in zip(_GATES, out[1:]):
                self.params.add_grad(f"dec{j}.{gate}", grad)
            dcontext += dctx_in if mask is None else dctx_in * mask
        return dcontext


def forward_ddrsa(model: DdrsaModel, series: TimeSeries) -> PmfEstimate:
    """Bin masses for one subject; decoder step count is always m."""
    return model.forward_pmf(series)


def predict_cif(model: DdrsaModel, series: TimeSeries, t: float) -> CifEstimate:
    return model.predict_cif(series, t)


def train_ddrsa(cohort: Cohort, grid: TimeGrid | None = None, hyper_grid=None,
                seed: int = 0, protocol: training.TrainProtocol | None = None) -> DdrsaModel:
    model, _ = train_ddrsa_with_log(cohort, grid, hyper_grid, seed, protocol)
    return model


def train_ddrsa_with_log(cohort: Cohort, grid: TimeGrid | None = None, hyper_grid=None,
                         seed: int = 0, protocol: training.TrainProtocol | None = None):
    return training.train_neural(DdrsaModel, cohort, grid, hyper_grid, seed, protocol)
