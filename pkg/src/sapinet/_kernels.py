"""Compiled inner loops for the network engine.

The granule-cell kernel integrates one gamma cycle of the whole GC
population given the mitral soma spike events of that cycle (within a cycle
the MC->GC direction is feedforward; the GC->MC drive acts with a one-cycle
lag, so events are fully known before integration starts).

Double-exponential synapses factorize as

    g_j(t) = coef * (A_j * exp(-t/tau_1) - B_j * exp(-t/tau_2))
    A_j = sum_i w_ij * exp(+t_i/tau_1),  B_j likewise with tau_2

so per-step work is O(1) per cell and events are O(fan-out) scatter updates.

Cells retire early when they spike, or when a rigorous upper bound on all
future depolarization cannot reach threshold.  The bound uses: the exact
remaining integral of the already-active conductance, the full kernel
integral (g_max*tau_1*tau_2 per unit weight) for events not yet delivered,
and one peak-sized Riemann correction term per unit weight (the kernel is
unimodal, so a left Riemann sum exceeds the integral by at most one
peak * dt per kernel).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["granule_cycle", "stdp_apply", "kernel_peak_unit"]


def kernel_peak_unit(tau_1: float, tau_2: float) -> float:
    """Peak of the unit-weight, unit-g_max double-exponential kernel."""
    t_peak = math.log(tau_1 / tau_2) * tau_1 * tau_2 / (tau_1 - tau_2)
    coef = tau_1 * tau_2 / (tau_1 - tau_2)
    return coef * (math.exp(-t_peak / tau_1) - math.exp(-t_peak / tau_2))


@njit(cache=True)
def granule_cycle(
    evt_steps,      # int64[n_evt], ascending spike step of each MC event
    evt_mc,         # int64[n_evt], MC index per event
    post_ptr,       # int64[n_mc + 1], CSR by MC over synapses
    post_gc,        # int64[nnz], target GC of each synapse
    post_w,         # float64[nnz], current weight of each synapse
    vth,            # float64[n_gc]
    e1, e2,         # float64[n_steps], exp(-t_n/tau) tables
    ex1, ex2,       # float64[n_steps], exp(+t_n/tau) tables
    alpha,          # dt / tau_m
    inv_g,          # 1 / g_const
    e_nernst,
    coef,           # g_max * tau1*tau2/(tau1 - tau2)
    unit_integral,  # g_max * tau1 * tau2
    unit_peak,      # g_max * kernel_peak_unit(tau1, tau2)
    tau1, tau2, dt, tau_m,
    n_steps,
    check_every,
    v, A, B, w_future, w_applied, active,   # work arrays, len n_gc
    spike_step,     # int32[n_gc] out, -1 = no spike
):
    n_gc = vth.shape[0]
    for j in range(n_gc):
        v[j] = 0.0
        A[j] = 0.0
        B[j] = 0.0
        w_future[j] = 0.0
        w_applied[j] = 0.0
        spike_step[j] = -1

    n_evt = evt_steps.shape[0]
    if n_evt == 0:
        return 0

    # total afferent weight each GC will receive this cycle
    for e in range(n_evt):
        mc = evt_mc[e]
        for s in range(post_ptr[mc], post_ptr[mc + 1]):
            w_future[post_gc[s]] += post_w[s]

    # active list: cells that could still spike
    n_active = 0
    bound_coef = e_nernst * inv_g / tau_m
    for j in range(n_gc):
        if w_future[j] > 0.0 and bound_coef * w_future[j] * (unit_integral + unit_peak * dt) >= vth[j]:
            active[n_active] = j
            n_active += 1

    n_spikes = 0
    ev = 0
    for n in range(1, n_steps):
        tprev = n - 1
        # deliver events that occurred at step n-1 (kernel value there is 0)
        while ev < n_evt and evt_steps[ev] <= tprev:
            mc = evt_mc[ev]
            x1 = ex1[evt_steps[ev]]
            x2 = ex2[evt_steps[ev]]
            for s in range(post_ptr[mc], post_ptr[mc + 1]):
                jj = post_gc[s]
                wv = post_w[s]
                A[jj] += wv * x1
                B[jj] += wv * x2
                w_future[jj] -= wv
                w_applied[jj] += wv
            ev += 1

        d1 = e1[tprev]
        d2 = e2[tprev]
        k = 0
        while k < n_active:
            j = active[k]
            g = coef * (A[j] * d1 - B[j] * d2)
            vj = v[j]
            vj += alpha * (-vj + g * (e_nernst - vj) * inv_g)
            v[j] = vj
            if vj >= vth[j]:
                spike_step[j] = n
                n_spikes += 1
                n_active -= 1
                active[k] = active[n_active]
            else:
                k += 1

        if n % check_every == 0 and n_active > 0:
            r1 = e1[n]
            r2 = e2[n]
            k = 0
            while k < n_active:
                j = active[k]
                remaining = coef * (A[j] * tau1 * r1 - B[j] * tau2 * r2)
                if remaining < 0.0:
                    remaining = 0.0
                slack = (
                    remaining
                    + unit_peak * w_applied[j] * dt
                    + w_future[j] * (unit_integral + unit_peak * dt)
                )
                if v[j] + bound_coef * slack * (1.0 + 1e-9) < vth[j]:
                    n_active -= 1
                    active[k] = active[n_active]
                else:
                    k += 1
        if n_active == 0 and ev >= n_evt:
            break
    return n_spikes


@njit(cache=True)
def stdp_apply(
    gc_ids,        # int64[n_upd], granule cells that spiked this cycle (unlocked, learning)
    gc_spike_ms,   # float64[n_upd], their spike times in ms
    aff_ptr,       # int64[n_gc + 1], CSR by GC over afferent synapses
    aff_mc,        # int64[nnz]
    aff_w,         # float64[nnz], updated in place
    aff_cap,       # float64[nnz], per-synapse weight ceiling
    mc_spike_ms,   # float64[n_mc], soma spike time in ms, inf = silent
    a_p, a_n, tau_p, tau_n, w_scale,
):
    """Pairwise weight update at gamma-cycle end.

    For each updated GC with spike time u and afferent MC spike time t:
      t <= u      : w <- min(w + a_p * exp((t - u)/tau_p), cap)
      t infinite  : w <- max(0, w - w_scale)
      t > u       : w <- max(0, w - a_n * exp(-(t - u)/tau_n))
    """
    for idx in range(gc_ids.shape[0]):
        j = gc_ids[idx]
        u = gc_spike_ms[idx]
        for s in range(aff_ptr[j], aff_ptr[j + 1]):
            t = mc_spike_ms[aff_mc[s]]
            w = aff_w[s]
            if t <= u:
                w = w + a_p * math.exp((t - u) / tau_p)
                if w > aff_cap[s]:
                    w = aff_cap[s]
            elif math.isinf(t):
                w = w - w_scale
                if w < 0.0:
                    w = 0.0
            else:
                w = w - a_n * math.exp(-(t - u) / tau_n)
                if w < 0.0:
                    w = 0.0
            aff_w[s] = w
