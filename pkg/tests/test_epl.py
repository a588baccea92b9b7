import math

import numpy as np
import pytest

from sapinet.core import CellParams, GammaClock, GranuleCell, run_granule_cycle
from sapinet.epl import (
    EplConfig,
    EplState,
    StdpConfig,
    apply_inhibitory_drive,
    build_network,
    feedforward_cycle,
    learn_inhibitory_drive,
    neurogenesis,
    run_sniff,
    stdp_update,
    train_one_shot,
    tunable_sigmoid,
)

from conftest import make_trained_network


def naive_stdp_reference(w, caps, mc_ms, gc_ms, stdp):
    """Literal scalar re-implementation of the cycle-end pairwise rule."""
    out = w.copy()
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            if math.isinf(gc_ms[j]):
                continue  # weight changes are initiated by interneuron spikes
            v, u = mc_ms[i], gc_ms[j]
            if v <= u:
                out[i, j] = min(out[i, j] + stdp.a_p * math.exp((v - u) / stdp.tau_p), caps[i, j])
            elif math.isinf(v):
                out[i, j] = max(0.0, out[i, j] - stdp.w_scale)
            else:
                out[i, j] = max(0.0, out[i, j] - stdp.a_n * math.exp(-(v - u) / stdp.tau_n))
    return out


def apply_stdp_via_state(w, caps, mc_steps, gc_steps, stdp):
    """Drive the production stdp_update through a minimal dense network state."""
    n_mc, n_gc = w.shape
    config = EplConfig(
        duplication_factor=n_mc, n_learning_gc_per_column=n_gc,
        n_nonlearning_gc_per_column=0, stdp=stdp, rng_seed=0,
        conv_min=1.0, conv_max=1.0, mc_vth_min=0.8, mc_vth_max=0.8,
    )
    state = build_network(config, 1)  # one column: n_mc sisters, n_gc cells
    assert state.n_mc == n_mc and state.n_gc == n_gc
    state.aff_ptr = np.arange(0, n_mc * n_gc + 1, n_mc, dtype=np.int64)
    state.aff_mc = np.tile(np.arange(n_mc, dtype=np.int64), n_gc)
    state.aff_w = np.ascontiguousarray(w.T).ravel().astype(float)
    state.aff_cap = np.ascontiguousarray(caps.T).ravel().astype(float)
    state._rebuild_derived()
    stdp_update(state, mc_steps, gc_steps)
    return state.aff_w.reshape(n_gc, n_mc).T


class TestTunableSigmoid:
    def test_identity_at_zero(self):
        x = np.linspace(0, 1, 11)
        assert np.allclose(tunable_sigmoid(x, 0.0), x)

    def test_fixed_endpoints(self):
        for k in (-0.9, -0.3, 0.3, 0.9):
            assert tunable_sigmoid(0.0, k) == 0.0
            assert tunable_sigmoid(1.0, k) == pytest.approx(1.0)

    def test_hand_computed_value(self):
        # k = 0.9, x = 0.5: (0.5 - 0.45) / (0.9 - 0.9 + 1) = 0.05
        assert tunable_sigmoid(0.5, 0.9) == pytest.approx(0.05)

    def test_strictly_increasing(self):
        x = np.linspace(0, 1, 101)
        for k in (-0.95, -0.5, 0.0, 0.5, 0.95):
            y = tunable_sigmoid(x, k)
            assert np.all(np.diff(y) > 0)

    def test_shape_parameter_bounds(self):
        with pytest.raises(ValueError):
            tunable_sigmoid(0.5, 1.0)
        with pytest.raises(ValueError):
            tunable_sigmoid(0.5, -1.0)


class TestBuildNetwork:
    def test_population_sizes(self):
        state = build_network(EplConfig(rng_seed=0), 20)
        assert state.n_mc == 100
        assert state.n_gc == 20 * (75 + 50)

    def test_uniform_ladder_at_k_zero(self):
        config = EplConfig(rng_seed=0, k_vth=0.0, n_learning_gc_per_column=4,
                           n_nonlearning_gc_per_column=0, gc_vth_min=1.0, gc_vth_max=4.0,
                           reference_dimension=4)
        state = build_network(config, 4)
        ladder = state.gc_vth[state.gc_column == 0]
        assert np.allclose(ladder, [1.0, 2.0, 3.0, 4.0])

    def test_threshold_fanin_coupling_monotone(self):
        state = build_network(EplConfig(rng_seed=1), 10)
        learning = state.gc_is_learning & (state.gc_column == 0)
        vth = state.gc_vth[learning]
        fanin = np.diff(state.aff_ptr)[learning]
        order = np.argsort(vth)
        assert np.all(np.diff(fanin[order]) >= 0)

    def test_nonlearning_absolute_fanin(self):
        state = build_network(EplConfig(rng_seed=1, nonlearning_fanin=7), 10)
        nl = ~state.gc_is_learning
        assert np.all(np.diff(state.aff_ptr)[nl] == 7)

    def test_learning_threshold_scales_with_dimension(self):
        config = EplConfig(rng_seed=0, reference_dimension=20)
        base = build_network(config, 20)
        big = build_network(config, 40)
        assert big.gc_vth.max() == pytest.approx(2.0 * base.gc_vth.max())
        nl_max_base = base.gc_vth[~base.gc_is_learning].max()
        nl_max_big = big.gc_vth[~big.gc_is_learning].max()
        assert nl_max_big == pytest.approx(nl_max_base)  # non-learning band unscaled

    def test_insufficient_mitral_population(self):
        with pytest.raises(ValueError):
            build_network(EplConfig(rng_seed=0, nonlearning_fanin=1000), 5)

    def test_weight_caps_within_range(self):
        state = build_network(EplConfig(rng_seed=2), 8)
        assert np.all(state.aff_w == 18.0)
        assert np.all(state.aff_cap >= 18.0)
        assert np.all(state.aff_cap <= 27.0)


class TestStdp:
    def test_saturating_increment_at_zero_lag(self):
        stdp = StdpConfig(a_p=1.5)
        w = np.array([[18.0]])
        caps = np.array([[27.0]])
        out = apply_stdp_via_state(w, caps, np.array([40]), np.array([40], dtype=np.int32), stdp)
        assert out[0, 0] == pytest.approx(18.0 + 1.5)  # e^0 = 1

    def test_silent_afferent_penalty_floors_at_zero(self):
        stdp = StdpConfig(w_scale=3.0)
        w = np.array([[1.0]])
        caps = np.array([[27.0]])
        out = apply_stdp_via_state(w, caps, np.array([-1]), np.array([40], dtype=np.int32), stdp)
        assert out[0, 0] == 0.0

    def test_matches_naive_reference_bit_exactly(self):
        rng = np.random.default_rng(0)
        stdp = StdpConfig(a_p=0.7, a_n=2.5, tau_p=4.0, tau_n=17.0, w_scale=2.0)
        dt = 0.025
        for _ in range(200):
            n_mc = int(rng.integers(2, 9))
            n_gc = int(rng.integers(1, 5))
            w = rng.uniform(0, 20, size=(n_mc, n_gc))
            caps = rng.uniform(18, 27, size=(n_mc, n_gc))
            mc_steps = np.where(rng.random(n_mc) < 0.8,
                                rng.integers(1, 999, size=n_mc), -1)
            gc_steps = np.where(rng.random(n_gc) < 0.8,
                                rng.integers(1, 999, size=n_gc), -1).astype(np.int32)
            got = apply_stdp_via_state(w, caps, mc_steps, gc_steps, stdp)
            mc_ms = np.where(mc_steps >= 0, mc_steps * dt, np.inf)
            gc_ms = np.where(gc_steps >= 0, gc_steps * dt, np.inf)
            want = naive_stdp_reference(w, caps, mc_ms, gc_ms, stdp)
            assert np.array_equal(got, want)

    def test_weight_bounds_under_stress(self):
        rng = np.random.default_rng(1)
        stdp = StdpConfig(a_p=5.0, a_n=8.0, tau_p=3.0, tau_n=10.0, w_scale=6.0)
        w = rng.uniform(0, 27, size=(6, 4))
        caps = rng.uniform(18, 27, size=(6, 4))
        for _ in range(50):
            mc = np.where(rng.random(6) < 0.7, rng.integers(1, 999, size=6), -1)
            gc = np.where(rng.random(4) < 0.9, rng.integers(1, 999, size=4), -1).astype(np.int32)
            w = apply_stdp_via_state(w, caps, mc, gc, stdp)
            assert np.all(w >= 0.0)
            assert np.all(w <= caps + 1e-12)


class TestDriveLearning:
    def test_stores_exact_times_with_unset(self):
        state = build_network(EplConfig(rng_seed=0, n_learning_gc_per_column=3,
                                        n_nonlearning_gc_per_column=2), 4)
        state.nl_member = np.zeros((state.n_gc, 1), dtype=bool)
        ids = state._col_gc[1]
        gc_spikes = np.full(state.n_gc, -1, dtype=np.int32)
        learner = ids[state.gc_is_learning[ids]][0]
        gc_spikes[learner] = 100
        sisters = np.array([124, 168, -1, 80, 220], dtype=np.int32)
        learn_inhibitory_drive(state, 1, sisters, gc_spikes, 0)
        assert np.array_equal(state.drive_vec[learner], sisters)
        assert state.gc_vec_label[learner] == 0
        # a cell that did not spike keeps an unset vector
        other = ids[state.gc_is_learning[ids]][1]
        assert np.all(state.drive_vec[other] == -1)

    def test_locked_cells_never_update(self):
        state = build_network(EplConfig(rng_seed=0, n_learning_gc_per_column=2,
                                        n_nonlearning_gc_per_column=0), 4)
        state.nl_member = np.zeros((state.n_gc, 2), dtype=bool)
        ids = state._col_gc[0]
        j = ids[0]
        gc_spikes = np.full(state.n_gc, -1, dtype=np.int32)
        gc_spikes[j] = 50
        first = np.array([10, 20, 30, 40, 50], dtype=np.int32)
        learn_inhibitory_drive(state, 0, first, gc_spikes, 0)
        state.gc_locked[j] = True
        learn_inhibitory_drive(state, 0, np.array([1, 2, 3, 4, 5], dtype=np.int32), gc_spikes, 1)
        assert np.array_equal(state.drive_vec[j], first)

    def test_no_vote_without_stored_vectors(self):
        state = build_network(EplConfig(rng_seed=0), 5)
        spikes = np.zeros(state.n_gc, dtype=np.int32)  # everything spikes at step 0
        assert apply_inhibitory_drive(state, 0, spikes) is None

    def test_identical_vectors_after_single_odor(self, small_trained):
        odors, pre, X, state = small_trained
        locked0 = np.nonzero(state.gc_locked & (state.gc_label == 0))[0]
        for col in range(state.d):
            members = locked0[state.gc_column[locked0] == col]
            if members.size > 1:
                assert all(np.array_equal(state.drive_vec[m], state.drive_vec[members[0]])
                           for m in members)


class TestAttractor:
    def test_trained_pattern_is_exact_fixed_point(self, small_trained):
        odors, pre, X, state = small_trained
        for i in range(len(odors)):
            res = run_sniff(state, X[i])
            for c in range(2, state.config.clock.cycles_per_sniff):
                assert np.array_equal(res.soma_steps[c], state.trained_patterns[i])

    def test_naive_network_follows_apical(self):
        state = build_network(EplConfig(rng_seed=3), 6)
        currents = np.random.default_rng(0).uniform(0.3, 3.0, size=30)
        res = run_sniff(state, currents)
        for c in range(8):
            assert np.array_equal(res.soma_steps[c], res.soma_steps[0])

    def test_noisy_input_converges_toward_trained(self, small_trained):
        from sapinet.datagen import NoiseSpec, add_noise
        from sapinet.readout import jaccard_similarity

        odors, pre, X, state = small_trained
        rng = np.random.default_rng(7)
        noise = NoiseSpec(std=6.0, occlusion=0.5)
        wins = 0
        trials = 20
        for t in range(trials):
            lab = t % len(odors)
            xn = add_noise(odors[lab], noise, rng)
            res = run_sniff(state, pre.transform(xn)[0])
            d1 = 1.0 - jaccard_similarity(res.soma_steps[0], state.trained_patterns[lab])
            d8 = 1.0 - jaccard_similarity(res.soma_steps[-1], state.trained_patterns[lab])
            wins += (d8 < d1)
        assert wins >= 0.7 * trials

    def test_lock_permanence_at_synapse_level(self, small_trained):
        odors, pre, X, state = small_trained
        locked0 = state.gc_locked & (state.gc_label == 0)
        before = {int(j): state.aff_w[state.aff_ptr[j]:state.aff_ptr[j + 1]].copy()
                  for j in np.nonzero(locked0)[0][:40]}
        train_one_shot(state, pre.transform(odors[0] * 0.7 + 1.3)[0], "extra")
        for j, w in before.items():
            assert np.array_equal(state.aff_w[state.aff_ptr[j]:state.aff_ptr[j + 1]], w)

    def test_receptive_field_order_grows_with_threshold(self, small_trained):
        odors, pre, X, state = small_trained
        locked = state.gc_locked & (state.gc_label == 0)
        vth = state.gc_vth[locked]
        rf = np.diff(state.aff_ptr)[locked]
        lo = rf[vth <= np.quantile(vth, 0.3)]
        hi = rf[vth >= np.quantile(vth, 0.7)]
        assert hi.mean() > lo.mean()

    def test_determinism_bit_identical(self):
        def run():
            odors, pre, X, state = make_trained_network(seed=5, d=8, n_odors=2)
            res = run_sniff(state, X[0])
            return res.soma_steps.copy()

        assert np.array_equal(run(), run())

    def test_one_spike_per_cycle_everywhere(self, small_trained):
        odors, pre, X, state = small_trained
        res = run_sniff(state, X[0], record_gc=True)
        n_steps = state.config.clock.steps_per_cycle
        assert np.all((res.soma_steps == -1) | ((res.soma_steps >= 1) & (res.soma_steps < n_steps)))
        for gc in res.gc_spike_steps:
            assert np.all((gc == -1) | ((gc >= 1) & (gc < n_steps)))

    def test_duplicate_label_rejected(self, small_trained):
        odors, pre, X, state = small_trained
        with pytest.raises(ValueError):
            train_one_shot(state, X[0], 0)


class TestNeurogenesis:
    def test_no_differentiation_no_growth(self):
        state = build_network(EplConfig(rng_seed=0, n_learning_gc_per_column=2,
                                        n_nonlearning_gc_per_column=0), 4)
        n = state.n_gc
        state._newly_locked = np.empty(0, dtype=np.int64)
        neurogenesis(state)
        assert state.n_gc == n

    def test_growth_matches_differentiation_and_copies_params(self):
        odors, pre, X, state = make_trained_network(seed=9, d=8, n_odors=1)
        newly = int(np.sum(state.gc_locked))
        assert state.n_gc == 8 * 125 + newly
        newborns = np.arange(8 * 125, state.n_gc)
        assert np.all(state.gc_is_learning[newborns])
        assert np.all(~state.gc_locked[newborns])
        assert np.all(state.gc_vec_label[newborns] == -1)
        # newborn thresholds are copies of differentiated ones
        assert set(np.round(state.gc_vth[newborns], 9)) <= set(np.round(state.gc_vth[state.gc_locked], 9))

    def test_additions_capped_per_column(self):
        odors, pre, X, state = make_trained_network(seed=10, d=8, n_odors=3)
        cap = state.config.n_learning_gc_per_column
        for label in range(3):
            locked = state.gc_locked & (state.gc_label == label)
            counts = np.bincount(state.gc_column[locked], minlength=8)
            assert np.all(counts <= cap)

    def test_disabled_neurogenesis_keeps_population(self):
        odors, pre, X, state = make_trained_network(seed=11, d=8, n_odors=2,
                                                    neurogenesis=False)
        assert state.n_gc == 8 * 125


class TestGranuleKernelAgainstReference:
    def test_kernel_matches_per_cell_integration(self):
        rng = np.random.default_rng(4)
        config = EplConfig(rng_seed=4, n_learning_gc_per_column=6,
                           n_nonlearning_gc_per_column=4)
        state = build_network(config, 6)
        cells = config.cells
        clock = config.clock
        for trial in range(5):
            currents = rng.uniform(0.2, 4.0, size=state.n_mc)
            soma, gc_fast = feedforward_cycle(state, currents)
            mismatches = 0
            for j in rng.choice(state.n_gc, size=25, replace=False):
                lo, hi = state.aff_ptr[j], state.aff_ptr[j + 1]
                presyn = [(state.aff_w[s], soma[state.aff_mc[s]] * clock.dt_ms)
                          for s in range(lo, hi) if soma[state.aff_mc[s]] >= 0]
                cell = GranuleCell(
                    v_th=state.gc_vth[j], tau_m=cells.tau_m, g_const=cells.gc_g_const,
                    tau_1=cells.tau_1, tau_2=cells.tau_2, g_max=cells.g_max,
                    e_nernst=cells.e_nernst)
                t = run_granule_cycle(cell, presyn, clock)
                want = -1 if t is None else int(round(t / clock.dt_ms))
                if abs(int(gc_fast[j]) - want) > 1:
                    mismatches += 1
            assert mismatches == 0

    def test_late_crossing_not_pruned(self):
        # one afferent whose kernel peaks well after the event must still fire
        config = EplConfig(rng_seed=0, n_learning_gc_per_column=1,
                           n_nonlearning_gc_per_column=0, conv_min=0.9, conv_max=0.9,
                           gc_vth_min=0.39, gc_vth_max=0.39, duplication_factor=1,
                           mc_vth_min=0.8, mc_vth_max=0.8)
        state = build_network(config, 2)
        currents = np.array([2.0, 2.0])
        soma, gc = feedforward_cycle(state, currents)
        fired = gc[gc >= 0]
        assert fired.size >= 1


class TestSerialization:
    def test_roundtrip_preserves_behavior(self, small_trained):
        odors, pre, X, state = small_trained
        arrays = state.to_arrays()
        clone = EplState.from_arrays(arrays)
        res_a = run_sniff(state, X[1])
        res_b = run_sniff(clone, X[1])
        assert np.array_equal(res_a.soma_steps, res_b.soma_steps)
        assert clone.trained_labels == state.trained_labels

    def test_version_check(self, small_trained):
        import json

        odors, pre, X, state = small_trained
        arrays = state.to_arrays()
        meta = json.loads(bytes(arrays["meta_json"]).decode())
        meta["version"] = 999
        arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with pytest.raises(ValueError):
            EplState.from_arrays(arrays)
