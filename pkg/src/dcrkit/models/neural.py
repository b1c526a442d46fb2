"""Shared machinery for the neural CIF models.

Both neural kinds encode a subject the same way: the feature rows get
missingness-indicator columns (time-varying features only) and a
duration-to-next-step column, run through a GRU, and are pooled with
attention against the last observed feature vector.  A next-step
predictor head reconstructs the following feature row from each hidden
state.  Subclasses differ only in how the pooled context becomes k*m
logits; one joint softmax then yields the bin masses.

Training minimizes

    total = nll + alpha * ranking + beta * next_step_mse

where nll is the discrete-time likelihood over (event, bin) cells with a
survival term for censored subjects, ranking is the exponential pairwise
penalty on same-event CIF orderings, and the last term scores next-step
feature predictions on observed entries.  Gradients accumulate into the
model's ParamStore via the hand-derived backward passes in diffcore.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..cohort import Subject, TimeSeries
from ..diffcore import (
    ParamStore,
    add_gru_params,
    add_mlp_params,
    attend,
    attend_backward,
    gap_augment,
    gru_apply,
    gru_apply_backward,
)
from ..diffcore import ops
from ..errors import CompatibilityError, TrainingError, ValidationError
from .base import CifEstimate, PmfEstimate, TimeGrid, cif_from_pmf

_log = logging.getLogger(__name__)

_LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Weights of the ranking and next-step terms; ``sigma`` is the
    bandwidth of the exponential ranking kernel."""

    alpha: float
    beta: float
    sigma: float = 0.1

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0 or self.sigma <= 0:
            raise ValidationError("loss weights must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    nll: float
    ranking: float
    next_step: float


class _TrainContext:
    """Draws inverted-dropout masks; inactive when rate is 0 or rng absent."""

    def __init__(self, rng, rate):
        self.rng = rng
        self.rate = rate

    def mask(self, shape):
        if self.rng is None or self.rate <= 0.0:
            return None
        keep = self.rng.random(shape) >= self.rate
        return keep / (1.0 - self.rate)


class NeuralCifModel:
    """Base of the two neural kinds; owns encoder, next-step head, and the
    uniform predict-CIF contract."""

    kind: str = ""

    def __init__(self, d: int, static_mask, k: int, grid: TimeGrid,
                 hidden: int = 16, dropout: float = 0.0, seed: int = 0):
        if k < 1:
            raise ValidationError("k must be >= 1")
        if grid.deltas[0] <= 0:
            raise ValidationError("model grids need a positive first duration")
        if not 0.0 <= dropout < 1.0:
            raise ValidationError("dropout rate must lie in [0, 1)")
        self.d = d
        self.static_mask = np.ascontiguousarray(static_mask, dtype=bool)
        if self.static_mask.shape != (d,):
            raise ValidationError("static_mask must have one flag per feature")
        self.tv_idx = np.flatnonzero(~self.static_mask)
        self.k = k
        self.grid = grid
        self.hidden = hidden
        self.dropout = dropout
        self.seed = seed
        self.selected_hyper: dict = {}
        self.params = ParamStore()
        rng = np.random.default_rng(seed)
        d_base = d + self.tv_idx.size
        add_gru_params(self.params, "gru", d_base + 1, hidden, rng)
        add_mlp_params(self.params, "attn", hidden + d_base, hidden, 1, rng)
        add_mlp_params(self.params, "next", hidden + 1, hidden, d, rng)
        self._build_output_params(rng)

    # -- subclass hooks ----------------------------------------------------

    def _build_output_params(self, rng) -> None:
        raise NotImplementedError

    def _logits(self, context, tc):
        """(k, m) logits from the pooled context; returns (logits, cache)."""
        raise NotImplementedError

    def _logits_backward(self, cache, dlogits):
        """Accumulate output-side gradients; returns d(context)."""
        raise NotImplementedError

    def _extra_header(self) -> dict:
        return {}

    # -- encoding ----------------------------------------------------------

    def _base_matrix(self, series: TimeSeries) -> np.ndarray:
        if series.width != self.d:
            raise CompatibilityError(
                f"series has {series.width} features, model expects {self.d}"
            )
        mask_cols = series.missing_mask[:, self.tv_idx].astype(np.float64)
        return np.hstack([series.features, mask_cols])

    def _forward_subject(self, series: TimeSeries, tc: _TrainContext | None,
                         want_next: bool):
        base = self._base_matrix(series)
        inputs = gap_augment(base, series.timestamps)
        in_mask = tc.mask(inputs.shape) if tc else None
        x = inputs if in_mask is None else inputs * in_mask
        h, gru_cache = gru_apply(self.params, "gru", x)
        attn_mask = tc.mask((h.shape[0], self.hidden)) if tc else None
        state, attn_cache = attend(self.params, h, base[-1], "attn", attn_mask)
        logits, out_cache = self._logits(state.context, tc)
        pmf_flat = ops.softmax(logits.reshape(-1))

        xhat = next_cache = None
        if want_next and series.n_steps > 1:
            next_in = np.hstack([h[:-1], inputs[:-1, -1:]])
            next_mask = tc.mask((next_in.shape[0], self.hidden)) if tc else None
            xhat, next_cache = ops.mlp_forward(
                next_in, self.params["next.w1"], self.params["next.b1"],
                self.params["next.w2"], self.params["next.b2"], next_mask,
            )
        cache = (gru_cache, attn_cache, out_cache, next_cache, pmf_flat)
        return pmf_flat.reshape(self.k, self.grid.m), xhat, cache

    def _backward_subject(self, cache, dpmf, dxhat) -> None:
        gru_cache, attn_cache, out_cache, next_cache, pmf_flat = cache
        dlogits = ops.softmax_backward(pmf_flat, dpmf.reshape(-1))
        dcontext = self._logits_backward(out_cache, dlogits.reshape(self.k, self.grid.m))
        dh, _ = attend_backward(self.params, attn_cache, dcontext)
        dh = dh.copy()
        if next_cache is not None and dxhat is not None:
            dnext_in, (dw1, db1, dw2, db2) = ops.mlp_backward(next_cache, dxhat)
            self.params.add_grad("next.w1", dw1)
            self.params.add_grad("next.b1", db1)
            self.params.add_grad("next.w2", dw2)
            self.params.add_grad("next.b2", db2)
            dh[:-1] += dnext_in[:, : self.hidden]
        gru_apply_backward(self.params, gru_cache, dh)

    # -- public contract ---------------------------------------------------

    def forward_pmf(self, series: TimeSeries) -> PmfEstimate:
        pmf, _, _ = self._forward_subject(series, None, want_next=False)
        return PmfEstimate(values=pmf)

    def predict_cif(self, series: TimeSeries, t: float) -> CifEstimate:
        """CIF on the model grid from the series truncated at ``t``.

        Dropout is never active here, so repeated calls are identical.
        """
        return cif_from_pmf(self.forward_pmf(series.truncated(t)), self.grid)

    def horizon(self) -> float:
        return float(self.grid.deltas[-1])

    def to_payload(self):
        header = {
            "kind": self.kind,
            "d": self.d,
            "k": self.k,
            "hidden": self.hidden,
            "dropout": self.dropout,
            "seed": self.seed,
            "static_mask": [int(b) for b in self.static_mask],
            "hyper": self.selected_hyper,
        }
        header.update(self._extra_header())
        arrays = {"__grid__": self.grid.deltas}
        arrays.update(self.params.values_dict())
        return header, arrays

    @classmethod
    def from_payload(cls, header, arrays) -> "NeuralCifModel":
        kwargs = {
            key: header[key]
            for key in ("d", "k", "hidden", "dropout", "seed")
        }
        extra = {
            key: header[key]
            for key in getattr(cls, "_EXTRA_HEADER_KEYS", ())
        }
        model = cls(
            static_mask=np.array(header["static_mask"], dtype=bool),
            grid=TimeGrid(arrays["__grid__"]),
            **kwargs, **extra,
        )
        model.params.load_values(arrays)
        model.selected_hyper = dict(header.get("hyper", {}))
        return model


def _event_bin(grid: TimeGrid, subject: Subject):
    """Map a subject's residual duration onto the grid for the likelihood.

    Event residuals past the grid are a modeling error and are rejected;
    censored residuals past the grid degrade to "survived through bin
    m-1", the most that the grid can express.
    """
    residual = subject.residual_duration
    event = subject.outcome.event
    if residual > grid.deltas[-1]:
        if event != 0:
            raise TrainingError(
                f"event residual duration {residual:.6g} exceeds the grid "
                f"upper bound {grid.deltas[-1]:.6g}; widen the grid"
            )
        return event, max(grid.m - 2, 0)
    return event, grid.bin_index(residual)


def loss_total(model: NeuralCifModel, batch, weights: LossWeights, rng=None) -> LossBreakdown:
    """Three-term loss over a batch of subjects.

    Gradients accumulate into ``model.params`` (callers zero them first).
    ``rng`` enables dropout at the model's configured rate; without it the
    loss is deterministic, which is what the gradient checker relies on.
    """
    if not batch:
        raise ValidationError("batch must be nonempty")
    k, m = model.k, model.grid.m
    tc = _TrainContext(rng, model.dropout) if rng is not None else None

    pmfs, cifs, caches, xhats = [], [], [], []
    bins = []
    nll = 0.0
    dpmf = []
    for subject in batch:
        event, u = _event_bin(model.grid, subject)
        bins.append((event, u))
        pmf, xhat, cache = model._forward_subject(subject.series, tc, want_next=True)
        pmfs.append(pmf)
        cifs.append(np.cumsum(pmf, axis=1))
        caches.append(cache)
        xhats.append(xhat)
        d_s = np.zeros((k, m))
        if event > 0:
            cell = pmf[event - 1, u]
            nll += -np.log(cell + _LOG_EPS)
            d_s[event - 1, u] = -1.0 / (cell + _LOG_EPS)
        else:
            tail = pmf[:, u + 1 :].sum()
            nll += -np.log(tail + _LOG_EPS)
            d_s[:, u + 1 :] = -1.0 / (tail + _LOG_EPS)
        dpmf.append(d_s)
    n = len(batch)
    nll /= n
    for d_s in dpmf:
        d_s /= n

    # Ranking: subject a with event j is penalized against every subject
    # still at risk at a's residual time, comparing event-j CIFs at a's bin.
    # Normalized over all k * n^2 ordered (event, pair) slots, so the
    # published alpha grid is batch-size independent.
    ranking = 0.0
    residuals = [s.residual_duration for s in batch]
    pair_terms = []  # (a, b, j, u, eta)
    for a in range(n):
        event_a, u_a = bins[a]
        if event_a == 0:
            continue
        for b in range(n):
            if residuals[b] > residuals[a]:
                eta = np.exp(
                    -(cifs[a][event_a - 1, u_a] - cifs[b][event_a - 1, u_a])
                    / weights.sigma
                )
                ranking += eta
                pair_terms.append((a, b, event_a - 1, u_a, eta))
    if pair_terms:
        n_slots = k * n * n
        ranking /= n_slots
        dcif = [np.zeros((k, m)) for _ in range(n)]
        for a, b, j, u, eta in pair_terms:
            g = eta / (weights.sigma * n_slots)
            dcif[a][j, u] -= g
            dcif[b][j, u] += g
        for s in range(n):
            # F(u) = sum_{v<=u} pmf(v), so d/dpmf is a reversed prefix sum
            dpmf[s] += weights.alpha * np.cumsum(dcif[s][:, ::-1], axis=1)[:, ::-1]

    # Next-step prediction error over observed entries.
    sse = 0.0
    count = 0
    dxhats = [None] * n
    for s, subject in enumerate(batch):
        if xhats[s] is None:
            continue
        target = subject.series.features[1:]
        obs = subject.series.missing_mask[1:].astype(np.float64)
        diff = (xhats[s] - target) * obs
        sse += float((diff * diff).sum())
        count += int(obs.sum())
        dxhats[s] = diff
    next_step = sse / count if count else 0.0
    if count:
        for s in range(n):
            if dxhats[s] is not None:
                dxhats[s] *= 2.0 * weights.beta / count

    for s in range(n):
        model._backward_subject(caches[s], dpmf[s], dxhats[s])

    total = nll + weights.alpha * ranking + weights.beta * next_step
    return LossBreakdown(total=total, nll=nll, ranking=ranking, next_step=next_step)
