"""Scratch tuning harness (not part of the package)."""
import itertools
import sys

import numpy as np
from joblib import Parallel, delayed

from sapinet.core import CellParams, calibrate_g_max
from sapinet.epl import EplConfig, StdpConfig, build_network, run_sniff, train_one_shot
from sapinet.glomerular import GlomerularPreprocessor
from sapinet.datagen import OdorSeriesSpec, NoiseSpec, generate_series, build_test_suite
from sapinet.readout import classify, ClassifierConfig

_gm = {}
def gmax_for_peak(peak, tau1, tau2, taum):
    key = (round(peak, 4), tau1, tau2, taum)
    if key not in _gm:
        cells = CellParams(tau_1=tau1, tau_2=tau2, tau_m=taum, g_max=1.0)
        _gm[key] = calibrate_g_max(vth=peak, weight=18.0, margin=1.0, cells=cells)
    return _gm[key]


def acc_one(seed, peak=0.4, t1=1.0, t2=0.5, tm=2.5, step=20.0, dec=1.5, gv=2.4, ap=0.4,
            an=6.0, taun=25.0, ws=3.0, density=0.1, std=6.0, occl=0.5, kv=0.9, kc=0.45,
            d=20, gb=2.0):
    gmax = gmax_for_peak(peak, t1, t2, tm)
    spec = OdorSeriesSpec(dimension=d, n_similar=4, inter_odor_distance=step, rng_seed=seed)
    odors = generate_series(spec)
    pre = GlomerularPreprocessor(random_state=seed + 100, density=density).fit(odors)
    X = pre.transform(odors)
    cells = CellParams(conductance_shape="exp_ramp", g_base=gb, ramp_decades=dec,
                       g_max=gmax, tau_1=t1, tau_2=t2, tau_m=tm)
    stdp = StdpConfig(a_p=ap, a_n=an, tau_p=5.0, tau_n=taun, w_scale=ws)
    cfg = EplConfig(rng_seed=seed + 200, cells=cells, stdp=stdp, gc_vth_max=gv, k_vth=kv, k_cp=kc)
    state = build_network(cfg, d)
    for i in range(5):
        train_one_shot(state, X[i], i)
    noise = NoiseSpec(kind="gaussian", std=std, occlusion=occl, rng_seed=seed + 300)
    Xts, yts = build_test_suite(odors, noise, n_noisy=10)
    Xc = pre.transform(Xts)
    correct = sum(
        classify(run_sniff(state, row).soma_steps, state.trained_patterns,
                 state.trained_labels, ClassifierConfig()).label == lab
        for row, lab in zip(Xc, yts))
    return 100.0 * correct / len(yts)


def main():
    grids = {
        "peak": [0.4, 0.55],
        "t1": [1.0, 1.4],
        "tm": [2.5, 3.5],
        "ap": [0.4, 1.0],
    }
    keys = list(grids)
    combos = [dict(zip(keys, vals)) for vals in itertools.product(*(grids[k] for k in keys))]
    for c in combos:
        c["t2"] = c["t1"] / 2
    seeds = (1, 2, 3)
    jobs = [(c, s) for c in combos for s in seeds]
    results = Parallel(n_jobs=2)(delayed(acc_one)(s, **c) for c, s in jobs)
    by_combo = {}
    for (c, s), r in zip(jobs, results):
        by_combo.setdefault(tuple(sorted(c.items())), []).append(r)
    rows = sorted(by_combo.items(), key=lambda kv: -np.mean(kv[1]))
    for c, vals in rows:
        print(f"{dict(c)}: {[round(v,1) for v in vals]} mean={np.mean(vals):5.1f}", flush=True)


if __name__ == "__main__":
    main()
