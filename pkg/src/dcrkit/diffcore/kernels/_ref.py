"""Pure-numpy recurrence kernels; the fallback when the compiled extension
is unavailable and the ground truth its parity tests compare against.

Gate math (update z, reset r, candidate hb, zero initial state):

    z_t  = sigmoid(Wz x_t + Uz h_{t-1} + bz)
    r_t  = sigmoid(Wr x_t + Ur h_{t-1} + br)
    hb_t = tanh(Wh x_t + Uh (r_t * h_{t-1}) + bh)
    h_t  = (1 - z_t) * h_{t-1} + z_t * hb_t

The decoder variant feeds ``concat(ctx, h_{u-1})`` as the step input, so
its input gradient splits between the context and the recurrent carry.
"""

import numpy as np


def _sigmoid(a):
    # tanh form keeps the two backends structurally identical and avoids
    # overflow for large |a|
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def gru_forward(x, wz, uz, bz, wr, ur, br, wh, uh, bh):
    L = x.shape[0]
    p = bz.shape[0]
    h = np.zeros((L, p))
    z = np.zeros((L, p))
    r = np.zeros((L, p))
    hb = np.zeros((L, p))
    hprev = np.zeros(p)
    for t in range(L):
        xt = x[t]
        z[t] = _sigmoid(wz @ xt + uz @ hprev + bz)
        r[t] = _sigmoid(wr @ xt + ur @ hprev + br)
        hb[t] = np.tanh(wh @ xt + uh @ (r[t] * hprev) + bh)
        h[t] = (1.0 - z[t]) * hprev + z[t] * hb[t]
        hprev = h[t]
    return h, z, r, hb


def gru_backward(x, h, z, r, hb, wz, uz, wr, ur, wh, uh, dh):
    L, p = h.shape
    dx = np.zeros_like(x)
    dwz = np.zeros_like(wz)
    duz = np.zeros_like(uz)
    dbz = np.zeros(p)
    dwr = np.zeros_like(wr)
    dur = np.zeros_like(ur)
    dbr = np.zeros(p)
    dwh = np.zeros_like(wh)
    duh = np.zeros_like(uh)
    dbh = np.zeros(p)
    carry = np.zeros(p)
    for t in range(L - 1, -1, -1):
        hprev = h[t - 1] if t > 0 else np.zeros(p)
        dht = dh[t] + carry
        zt, rt, hbt = z[t], r[t], hb[t]
        da_h = dht * zt * (1.0 - hbt * hbt)
        da_z = dht * (hbt - hprev) * zt * (1.0 - zt)
        dhprev = dht * (1.0 - zt)
        dwh += np.outer(da_h, x[t])
        duh += np.outer(da_h, rt * hprev)
        dbh += da_h
        drh = uh.T @ da_h
        da_r = drh * hprev * rt * (1.0 - rt)
        dhprev += drh * rt
        dwr += np.outer(da_r, x[t])
        dur += np.outer(da_r, hprev)
        dbr += da_r
        dwz += np.outer(da_z, x[t])
        duz += np.outer(da_z, hprev)
        dbz += da_z
        dhprev += uz.T @ da_z + ur.T @ da_r
        dx[t] = wz.T @ da_z + wr.T @ da_r + wh.T @ da_h
        carry = dhprev
    return dx, dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh


def decoder_forward(ctx, wz, uz, bz, wr, ur, br, wh, uh, bh, m):
    p = bz.shape[0]
    pe = ctx.shape[0]
    h = np.zeros((m, p))
    z = np.zeros((m, p))
    r = np.zeros((m, p))
    hb = np.zeros((m, p))
    hprev = np.zeros(p)
    xt = np.empty(pe + p)
    xt[:pe] = ctx
    for t in range(m):
        xt[pe:] = hprev
        z[t] = _sigmoid(wz @ xt + uz @ hprev + bz)
        r[t] = _sigmoid(wr @ xt + ur @ hprev + br)
        hb[t] = np.tanh(wh @ xt + uh @ (r[t] * hprev) + bh)
        h[t] = (1.0 - z[t]) * hprev + z[t] * hb[t]
        hprev = h[t]
    return h, z, r, hb


def decoder_backward(ctx, h, z, r, hb, wz, uz, wr, ur, wh, uh, dh):
    m, p = h.shape
    pe = ctx.shape[0]
    dctx = np.zeros(pe)
    dwz = np.zeros_like(wz)
    duz = np.zeros_like(uz)
    dbz = np.zeros(p)
    dwr = np.zeros_like(wr)
    dur = np.zeros_like(ur)
    dbr = np.zeros(p)
    dwh = np.zeros_like(wh)
    duh = np.zeros_like(uh)
    dbh = np.zeros(p)
    carry = np.zeros(p)
    xt = np.empty(pe + p)
    xt[:pe] = ctx
    for t in range(m - 1, -1, -1):
        hprev = h[t - 1] if t > 0 else np.zeros(p)
        xt[pe:] = hprev
        dht = dh[t] + carry
        zt, rt, hbt = z[t], r[t], hb[t]
        da_h = dht * zt * (1.0 - hbt * hbt)
        da_z = dht * (hbt - hprev) * zt * (1.0 - zt)
        dhprev = dht * (1.0 - zt)
        dwh += np.outer(da_h, xt)
        duh += np.outer(da_h, rt * hprev)
        dbh += da_h
        drh = uh.T @ da_h
        da_r = drh * hprev * rt * (1.0 - rt)
        dhprev += drh * rt
        dwr += np.outer(da_r, xt)
        dur += np.outer(da_r, hprev)
        dbr += da_r
        dwz += np.outer(da_z, xt)
        duz += np.outer(da_z, hprev)
        dbz += da_z
        dhprev += uz.T @ da_z + ur.T @ da_r
        dxt = wz.T @ da_z + wr.T @ da_r + wh.T @ da_h
        dctx += dxt[:pe]
        dhprev += dxt[pe:]
        carry = dhprev
    return dctx, dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh
