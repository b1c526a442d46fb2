"""Dense/MLP/softmax building blocks with explicit backward passes.

All functions take 2-d inputs (rows = items) and double precision
throughout; recurrences live in :mod:`.kernels`.  Dropout is passed in as
a pre-scaled multiplicative mask (inverted dropout) so that evaluation
code never branches on a training flag.
"""

import numpy as np


def dense(x, w, b):
    """x: (N, din), w: (dout, din), b: (dout,) -> (N, dout)."""
    return x @ w.T + b


def dense_backward(x, w, dy):
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dw, db


def mlp_forward(x, w1, b1, w2, b2, hidden_mask=None):
    """One-hidden-layer tanh MLP; returns (y, cache)."""
    h = np.tanh(dense(x, w1, b1))
    hd = h if hidden_mask is None else h * hidden_mask
    y = dense(hd, w2, b2)
    return y, (x, h, hd, hidden_mask, w1, w2)


def mlp_backward(cache, dy):
    """Returns (dx, (dw1, db1, dw2, db2))."""
    x, h, hd, mask, w1, w2 = cache
    dhd, dw2, db2 = dense_backward(hd, w2, dy)
    dh = dhd if mask is None else dhd * mask
    da = dh * (1.0 - h * h)
    dx, dw1, db1 = dense_backward(x, w1, da)
    return dx, (dw1, db1, dw2, db2)


def softmax(v):
    """Max-subtracted softmax of a 1-d logit vector."""
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_backward(p, dp):
    """Given probabilities p = softmax(v) and dL/dp, return dL/dv."""
    return p * (dp - p @ dp)
