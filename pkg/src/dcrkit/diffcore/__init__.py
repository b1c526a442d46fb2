"""Minimal differentiable substrate for the neural survival models.

Holds the named-parameter store, the encoder operations (gated
recurrence, attention pooling), and the finite-difference gradient
checker that every composed loss in this repository is verified against.
Reverse-mode gradients are hand-derived per operation; there is no
general tape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ValidationError
from . import kernels, ops

_GATE_SUFFIXES = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")


class ParamStore:
    """Named float64 tensors with one gradient buffer each."""

    def __init__(self):
        self._values: dict = {}
        self._grads: dict = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._values:
            raise ValidationError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValidationError(f"parameter {name!r} has non-finite entries")
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def names(self):
        return list(self._values)

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def add_grad(self, name: str, g) -> None:
        self._grads[name] += g

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    def n_coords(self) -> int:
        return sum(v.size for v in self._values.values())

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, value in self._values.items():
            out.add(name, value.copy())
        return out

    def values_dict(self) -> dict:
        """Name -> value view used by the model file writer."""
        return dict(self._values)

    def load_values(self, arrays: dict) -> None:
        for name, value in self._values.items():
            if name not in arrays:
                raise ValidationError(f"model file is missing parameter {name!r}")
            incoming = np.ascontiguousarray(arrays[name], dtype=np.float64)
            if incoming.shape != value.shape:
                raise ValidationError(
                    f"parameter {name!r} has shape {incoming.shape}, "
                    f"expected {value.shape}"
                )
            value[...] = incoming


def init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Scale-aware uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def add_gru_params(params: ParamStore, prefix: str, d_in: int, p: int,
                   rng: np.random.Generator) -> None:
    for gate in ("z", "r", "h"):
        params.add(f"{prefix}.w{gate}", init_uniform(rng, (p, d_in), d_in))
        params.add(f"{prefix}.u{gate}", init_uniform(rng, (p, p), p))
        params.add(f"{prefix}.b{gate}", np.zeros(p))


def add_mlp_params(params: ParamStore, prefix: str, d_in: int, d_hidden: int,
                   d_out: int, rng: np.random.Generator) -> None:
    params.add(f"{prefix}.w1", init_uniform(rng, (d_hidden, d_in), d_in))
    params.add(f"{prefix}.b1", np.zeros(d_hidden))
    params.add(f"{prefix}.w2", init_uniform(rng, (d_out, d_hidden), d_hidden))
    params.add(f"{prefix}.b2", np.zeros(d_out))


def _gate_weights(params: ParamStore, prefix: str):
    return tuple(params[f"{prefix}.{s}"] for s in _GATE_SUFFIXES)


@dataclass(frozen=True)
class EncoderState:
    """Attention-pooled summary of a hidden sequence."""

    hidden_seq: np.ndarray
    context: np.ndarray
    attn_weights: np.ndarray

    def __post_init__(self):
        w = self.attn_weights
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("attention weights must be a distribution")
        if self.hidden_seq.shape != (w.size, self.context.size):
            raise ValidationError("inconsistent encoder state shapes")


def gap_augment(features: np.ndarray, timestamps: np.ndarray) -> np.ndarray:
    """Append the duration-to-next-step column; the final step gets 0."""
    gaps = np.zeros((features.shape[0], 1))
    gaps[:-1, 0] = np.diff(timestamps)
    return np.hstack([features, gaps])


def gru_apply(params: ParamStore, prefix: str, x: np.ndarray):
    """Run the gated recurrence; returns (hidden_seq, cache)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    weights = _gate_weights(params, prefix)
    if x.shape[1] != weights[0].shape[1]:
        raise ValidationError(
            f"input width {x.shape[1]} does not match {prefix} "
            f"weights ({weights[0].shape[1]})"
        )
    h, z, r, hb = kernels.gru_forward(x, *weights)
    return h, (prefix, x, h, z, r, hb)


def gru_apply_backward(params: ParamStore, cache, dh: np.ndarray) -> np.ndarray:
    """Accumulate gate-weight gradients; returns d(inputs)."""
    prefix, x, h, z, r, hb = cache
    ws = _gate_weights(params, prefix)
    out = kernels.gru_backward(
        x, h, z, r, hb, ws[0], ws[1], ws[3], ws[4], ws[6], ws[7],
        np.ascontiguousarray(dh),
    )
    dx = out[0]
    for suffix, grad in zip(_GATE_SUFFIXES, out[1:]):
        params.add_grad(f"{prefix}.{suffix}", grad)
    return dx


def gru_forward(params: ParamStore, inputs: np.ndarray, prefix: str = "gru") -> np.ndarray:
    """Hidden sequence (L, p) for an already-assembled input matrix."""
    h, _ = gru_apply(params, prefix, inputs)
    return h


def attend(params: ParamStore, hidden_seq: np.ndarray, last_features: np.ndarray,
           prefix: str = "attn", hidden_mask=None):
    """Score each step with an MLP over (H_l, X_last), softmax the scores,
    and pool.  Returns (EncoderState, cache)."""
    L = hidden_seq.shape[0]
    if L < 1:
        raise ValidationError("cannot attend over an empty sequence")
    scored_in = np.hstack([hidden_seq, np.tile(last_features, (L, 1))])
    logits, mlp_cache = ops.mlp_forward(
        scored_in, params[f"{prefix}.w1"], params[f"{prefix}.b1"],
        params[f"{prefix}.w2"], params[f"{prefix}.b2"], hidden_mask,
    )
    weights = ops.softmax(logits[:, 0])
    context = weights @ hidden_seq
    state = EncoderState(hidden_seq=hidden_seq, context=context, attn_weights=weights)
    return state, (prefix, mlp_cache, weights, hidden_seq, last_features.size)


def attend_backward(params: ParamStore, cache, dcontext: np.ndarray):
    """Returns (d(hidden_seq), d(last_features))."""
    prefix, mlp_cache, weights, hidden_seq, d_last = cache
    dweights = hidden_seq @ dcontext
    dhidden = np.outer(weights, dcontext)
    dlogits = ops.softmax_backward(weights, dweights)
    dscored, (dw1, db1, dw2, db2) = ops.mlp_backward(mlp_cache, dlogits[:, None])
    params.add_grad(f"{prefix}.w1", dw1)
    params.add_grad(f"{prefix}.b1", db1)
    params.add_grad(f"{prefix}.w2", dw2)
    params.add_grad(f"{prefix}.b2", db2)
    p = hidden_seq.shape[1]
    dhidden += dscored[:, :p]
    dlast = dscored[:, p:].sum(axis=0)
    return dhidden, dlast


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tolerance: float
    n_coords: int
    worst_param: str = ""
    message: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"grad_check {status}: max relative error {self.max_rel_error:.3e} "
            f"(tolerance {self.tolerance:.1e}, {self.n_coords} coordinates, "
            f"worst {self.worst_param}){': ' + self.message if self.message else ''}"
        )


def grad_check(
    loss_fn: Callable[[ParamStore], float],
    params: ParamStore,
    tolerance: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
    coords_per_param: int = 20,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn`` must return the scalar loss and deposit gradients into
    ``params`` (they are zeroed first).  A random subsample of coordinates
    per tensor is perturbed by ``step``.  Relative error uses a floor of
    1e-3 in the denominator so that coordinates with negligible gradient
    are compared on an absolute scale.
    """
    rng = rng or np.random.default_rng(0)
    params.zero_grads()
    loss = float(loss_fn(params))
    if not np.isfinite(loss):
        return GradCheckReport(
            passed=False, max_rel_error=np.inf, tolerance=tolerance,
            n_coords=0, message=f"loss is non-finite ({loss})",
        )
    analytic = {name: params.grad(name).copy() for name in params.names()}

    worst = 0.0
    worst_param = ""
    n_checked = 0
    for name in params.names():
        flat = params[name].reshape(-1)
        size = flat.size
        idx = np.arange(size)
        if size > coords_per_param:
            idx = rng.choice(size, size=coords_per_param, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            hi = float(loss_fn(params))
            flat[i] = orig - step
            lo = float(loss_fn(params))
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                return GradCheckReport(
                    passed=False, max_rel_error=np.inf, tolerance=tolerance,
                    n_coords=n_checked,
                    message=f"loss non-finite while perturbing {name}[{i}]",
                )
            fd = (hi - lo) / (2.0 * step)
            an = analytic[name].reshape(-1)[i]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-3)
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_param = f"{name}[{i}]"
    params.zero_grads()
    loss_fn(params)  # leave gradients in the analytic state
    return GradCheckReport(
        passed=worst < tolerance, max_rel_error=worst, tolerance=tolerance,
        n_coords=n_checked, worst_param=worst_param,
    )
