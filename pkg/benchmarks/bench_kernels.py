#!/usr/bin/env python3
"""Timing comparison of the compiled recurrence kernels against the
numpy fallback, on raw kernel calls and on a full training epoch.

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from dcrkit.diffcore import kernels
from dcrkit.models.base import default_grid
from dcrkit.models.deephit import DeepHitModel
from dcrkit.models.neural import LossWeights, loss_total
from dcrkit.simulator import GenerativeConfig, simulate


def time_call(fn, *args, repeat=200):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_raw(backend):
    kernels.select_backend(backend)
    rng = np.random.default_rng(0)
    L, di, p = 12, 25, 16
    x = rng.standard_normal((L, di))
    ws = [rng.standard_normal(s) * 0.3 for s in
          [(p, di), (p, p), (p,), (p, di), (p, p), (p,), (p, di), (p, p), (p,)]]
    fwd = time_call(kernels.gru_forward, x, *ws)
    h, z, r, hb = kernels.gru_forward(x, *ws)
    dh = rng.standard_normal((L, p))
    w_only = [ws[0], ws[1], ws[3], ws[4], ws[6], ws[7]]
    bwd = time_call(kernels.gru_backward, x, h, z, r, hb, *w_only, dh)
    return fwd, bwd


def bench_epoch(backend, cohort, grid):
    kernels.select_backend(backend)
    model = DeepHitModel(
        d=cohort.d, static_mask=cohort.subjects[0].series.static_mask,
        k=cohort.k, grid=grid, hidden=16, dropout=0.0, seed=0,
    )
    weights = LossWeights(0.5, 0.1)
    subjects = list(cohort.subjects)
    t0 = time.perf_counter()
    for start in range(0, len(subjects), 32):
        model.params.zero_grads()
        loss_total(model, subjects[start : start + 32], weights)
    return time.perf_counter() - t0


def main():
    available = kernels.available_backends()
    print(f"backends: {', '.join(available)}")
    cfg = GenerativeConfig(
        k=3, d_dynamic=2, d_static=1, length_min=4, length_max=12, step_hours=1.0,
        hazard_rates=(0.02, 0.015, 0.01),
        hazard_betas=(np.array([0.2, 0.0, 1.0]), np.array([-0.2, 0.2, -0.8]),
                      np.array([0.1, 0.1, 0.4])),
        censor_rate=0.002, seed=7,
    )
    cohort = simulate(cfg, 512)
    residuals = [s.residual_duration for s in cohort.subjects]
    grid = default_grid(max(residuals), 30)

    rows = []
    for backend in available:
        fwd, bwd = bench_raw(backend)
        epoch = bench_epoch(backend, cohort, grid)
        rows.append((backend, fwd * 1e6, bwd * 1e6, epoch))
    print(f"{'backend':8s} {'gru fwd us':>12s} {'gru bwd us':>12s} {'epoch(512) s':>14s}")
    for backend, fwd, bwd, epoch in rows:
        print(f"{backend:8s} {fwd:12.1f} {bwd:12.1f} {epoch:14.3f}")
    if len(rows) == 2:
        print(f"epoch speedup (fast vs ref): {rows[0][3] / rows[1][3]:.1f}x"
              if rows[0][0] == "ref" else
              f"epoch speedup (fast vs ref): {rows[1][3] / rows[0][3]:.1f}x")
    kernels.select_backend("fast" if "fast" in available else "ref")


if __name__ == "__main__":
    main()
