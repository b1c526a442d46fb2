# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled recurrence kernels; same contract and gate math as `_ref`."""

from libc.math cimport tanh

import numpy as np


cdef inline double _sigmoid(double a) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * a))


def gru_forward(double[:, ::1] x,
                double[:, ::1] wz, double[:, ::1] uz, double[::1] bz,
                double[:, ::1] wr, double[:, ::1] ur, double[::1] br,
                double[:, ::1] wh, double[:, ::1] uh, double[::1] bh):
    cdef Py_ssize_t L = x.shape[0], di = x.shape[1], p = bz.shape[0]
    h_np = np.zeros((L, p))
    z_np = np.zeros((L, p))
    r_np = np.zeros((L, p))
    hb_np = np.zeros((L, p))
    cdef double[:, ::1] h = h_np, z = z_np, r = r_np, hb = hb_np
    prev_np = np.zeros(p)
    rh_np = np.zeros(p)
    cdef double[::1] prev = prev_np, rh = rh_np
    cdef Py_ssize_t t, i, j
    cdef double az, ar, ah
    for t in range(L):
        for i in range(p):
            az = bz[i]
            ar = br[i]
            for j in range(di):
                az = az + wz[i, j] * x[t, j]
                ar = ar + wr[i, j] * x[t, j]
            for j in range(p):
                az = az + uz[i, j] * prev[j]
                ar = ar + ur[i, j] * prev[j]
            z[t, i] = _sigmoid(az)
            r[t, i] = _sigmoid(ar)
        for i in range(p):
            rh[i] = r[t, i] * prev[i]
        for i in range(p):
            ah = bh[i]
            for j in range(di):
                ah = ah + wh[i, j] * x[t, j]
            for j in range(p):
                ah = ah + uh[i, j] * rh[j]
            hb[t, i] = tanh(ah)
            h[t, i] = (1.0 - z[t, i]) * prev[i] + z[t, i] * hb[t, i]
        for i in range(p):
            prev[i] = h[t, i]
    return h_np, z_np, r_np, hb_np


def gru_backward(double[:, ::1] x, double[:, ::1] h,
                 double[:, ::1] z, double[:, ::1] r, double[:, ::1] hb,
                 double[:, ::1] wz, double[:, ::1] uz,
                 double[:, ::1] wr, double[:, ::1] ur,
                 double[:, ::1] wh, double[:, ::1] uh,
                 double[:, ::1] dh):
    cdef Py_ssize_t L = x.shape[0], di = x.shape[1], p = z.shape[1]
    dx_np = np.zeros((L, di))
    dwz_np = np.zeros((p, di))
    duz_np = np.zeros((p, p))
    dbz_np = np.zeros(p)
    dwr_np = np.zeros((p, di))
    dur_np = np.zeros((p, p))
    dbr_np = np.zeros(p)
    dwh_np = np.zeros((p, di))
    duh_np = np.zeros((p, p))
    dbh_np = np.zeros(p)
    cdef double[:, ::1] dx = dx_np, dwz = dwz_np, duz = duz_np
    cdef double[:, ::1] dwr = dwr_np, dur = dur_np, dwh = dwh_np, duh = duh_np
    cdef double[::1] dbz = dbz_np, dbr = dbr_np, dbh = dbh_np
    buf = np.zeros((6, p))
    cdef double[:, ::1] b = buf
    # row 0: carry, 1: da_h, 2: da_z, 3: da_r, 4: dhprev, 5: drh
    cdef Py_ssize_t t, i, j
    cdef double dht, hprev_i, acc
    for t in range(L - 1, -1, -1):
        for i in range(p):
            hprev_i = h[t - 1, i] if t > 0 else 0.0
            dht = dh[t, i] + b[0, i]
            b[1, i] = dht * z[t, i] * (1.0 - hb[t, i] * hb[t, i])
            b[2, i] = dht * (hb[t, i] - hprev_i) * z[t, i] * (1.0 - z[t, i])
            b[4, i] = dht * (1.0 - z[t, i])
        for j in range(p):
            acc = 0.0
            for i in range(p):
                acc = acc + uh[i, j] * b[1, i]
            b[5, j] = acc
        for i in range(p):
            hprev_i = h[t - 1, i] if t > 0 else 0.0
            b[3, i] = b[5, i] * hprev_i * r[t, i] * (1.0 - r[t, i])
            b[4, i] = b[4, i] + b[5, i] * r[t, i]
        for i in range(p):
            hprev_i = 0.0
            for j in range(di):
                dwh[i, j] = dwh[i, j] + b[1, i] * x[t, j]
                dwr[i, j] = dwr[i, j] + b[3, i] * x[t, j]
                dwz[i, j] = dwz[i, j] + b[2, i] * x[t, j]
            for j in range(p):
                hprev_i = h[t - 1, j] if t > 0 else 0.0
                duh[i, j] = duh[i, j] + b[1, i] * r[t, j] * hprev_i
                dur[i, j] = dur[i, j] + b[3, i] * hprev_i
                duz[i, j] = duz[i, j] + b[2, i] * hprev_i
            dbh[i] = dbh[i] + b[1, i]
            dbr[i] = dbr[i] + b[3, i]
            dbz[i] = dbz[i] + b[2, i]
        for j in range(p):
            acc = 0.0
            for i in range(p):
                acc = acc + uz[i, j] * b[2, i] + ur[i, j] * b[3, i]
            b[4, j] = b[4, j] + acc
        for j in range(di):
            acc = 0.0
            for i in range(p):
                acc = acc + wz[i, j] * b[2, i] + wr[i, j] * b[3, i] + wh[i, j] * b[1, i]
            dx[t, j] = acc
        for i in range(p):
            b[0, i] = b[4, i]
    return (dx_np, dwz_np, duz_np, dbz_np, dwr_np, dur_np, dbr_np,
            dwh_np, duh_np, dbh_np)


def decoder_forward(double[::1] ctx,
                    double[:, ::1] wz, double[:, ::1] uz, double[::1] bz,
                    double[:, ::1] wr, double[:, ::1] ur, double[::1] br,
                    double[:, ::1] wh, double[:, ::1] uh, double[::1] bh,
                    Py_ssize_t m):
    cdef Py_ssize_t pe = ctx.shape[0], p = bz.shape[0], di = pe + p
    h_np = np.zeros((m, p))
    z_np = np.zeros((m, p))
    r_np = np.zeros((m, p))
    hb_np = np.zeros((m, p))
    cdef double[:, ::1] h = h_np, z = z_np, r = r_np, hb = hb_np
    xt_np = np.zeros(di)
    rh_np = np.zeros(p)
    cdef double[::1] xt = xt_np, rh = rh_np
    cdef Py_ssize_t t, i, j
    cdef double az, ar, ah
    for j in range(pe):
        xt[j] = ctx[j]
    for t in range(m):
        # xt[pe:] holds h_{t-1} (zeros at t = 0)
        for i in range(p):
            az = bz[i]
            ar = br[i]
            for j in range(di):
                az = az + wz[i, j] * xt[j]
                ar = ar + wr[i, j] * xt[j]
            for j in range(p):
                az = az + uz[i, j] * xt[pe + j]
                ar = ar + ur[i, j] * xt[pe + j]
            z[t, i] = _sigmoid(az)
            r[t, i] = _sigmoid(ar)
        for i in range(p):
            rh[i] = r[t, i] * xt[pe + i]
        for i in range(p):
            ah = bh[i]
            for j in range(di):
                ah = ah + wh[i, j] * xt[j]
            for j in range(p):
                ah = ah + uh[i, j] * rh[j]
            hb[t, i] = tanh(ah)
            h[t, i] = (1.0 - z[t, i]) * xt[pe + i] + z[t, i] * hb[t, i]
        for i in range(p):
            xt[pe + i] = h[t, i]
    return h_np, z_np, r_np, hb_np


def decoder_backward(double[::1] ctx, double[:, ::1] h,
                     double[:, ::1] z, double[:, ::1] r, double[:, ::1] hb,
                     double[:, ::1] wz, double[:, ::1] uz,
                     double[:, ::1] wr, double[:, ::1] ur,
                     double[:, ::1] wh, double[:, ::1] uh,
                     double[:, ::1] dh):
    cdef Py_ssize_t m = h.shape[0], p = h.shape[1], pe = ctx.shape[0], di = pe + p
    dctx_np = np.zeros(pe)
    dwz_np = np.zeros((p, di))
    duz_np = np.zeros((p, p))
    dbz_np = np.zeros(p)
    dwr_np = np.zeros((p, di))
    dur_np = np.zeros((p, p))
    dbr_np = np.zeros(p)
    dwh_np = np.zeros((p, di))
    duh_np = np.zeros((p, p))
    dbh_np = np.zeros(p)
    cdef double[:, ::1] dwz = dwz_np, duz = duz_np, dwr = dwr_np
    cdef double[:, ::1] dur = dur_np, dwh = dwh_np, duh = duh_np
    cdef double[::1] dctx = dctx_np, dbz = dbz_np, dbr = dbr_np, dbh = dbh_np
    buf = np.zeros((6, p))
    xt_np = np.zeros(di)
    cdef double[:, ::1] b = buf
    cdef double[::1] xt = xt_np
    cdef Py_ssize_t t, i, j
    cdef double dht, hprev_i, acc, dxtj
    for j in range(pe):
        xt[j] = ctx[j]
    for t in range(m - 1, -1, -1):
        for i in range(p):
            xt[pe + i] = h[t - 1, i] if t > 0 else 0.0
        for i in range(p):
            hprev_i = xt[pe + i]
            dht = dh[t, i] + b[0, i]
            b[1, i] = dht * z[t, i] * (1.0 - hb[t, i] * hb[t, i])
            b[2, i] = dht * (hb[t, i] - hprev_i) * z[t, i] * (1.0 - z[t, i])
            b[4, i] = dht * (1.0 - z[t, i])
        for j in range(p):
            acc = 0.0
            for i in range(p):
                acc = acc + uh[i, j] * b[1, i]
            b[5, j] = acc
        for i in range(p):
            hprev_i = xt[pe + i]
            b[3, i] = b[5, i] * hprev_i * r[t, i] * (1.0 - r[t, i])
            b[4, i] = b[4, i] + b[5, i] * r[t, i]
        for i in range(p):
            for j in range(di):
                dwh[i, j] = dwh[i, j] + b[1, i] * xt[j]
                dwr[i, j] = dwr[i, j] + b[3, i] * xt[j]
                dwz[i, j] = dwz[i, j] + b[2, i] * xt[j]
            for j in range(p):
                hprev_i = xt[pe + j]
                duh[i, j] = duh[i, j] + b[1, i] * r[t, j] * hprev_i
                dur[i, j] = dur[i, j] + b[3, i] * hprev_i
                duz[i, j] = duz[i, j] + b[2, i] * hprev_i
            dbh[i] = dbh[i] + b[1, i]
            dbr[i] = dbr[i] + b[3, i]
            dbz[i] = dbz[i] + b[2, i]
        for j in range(p):
            acc = 0.0
            for i in range(p):
                acc = acc + uz[i, j] * b[2, i] + ur[i, j] * b[3, i]
            b[4, j] = b[4, j] + acc
        for j in range(di):
            dxtj = 0.0
            for i in range(p):
                dxtj = dxtj + wz[i, j] * b[2, i] + wr[i, j] * b[3, i] + wh[i, j] * b[1, i]
            if j < pe:
                dctx[j] = dctx[j] + dxtj
            else:
                b[4, j - pe] = b[4, j - pe] + dxtj
        for i in range(p):
            b[0, i] = b[4, i]
    return (dctx_np, dwz_np, duz_np, dbz_np, dwr_np, dur_np, dbr_np,
            dwh_np, duh_np, dbh_np)
