"""External plexiform layer: the recurrent mitral/granule attractor.

Construction: d glomerular columns, q sister mitral cells per column with a
uniform threshold ladder, and per column a shared ladder of granule-cell
thresholds shaped by a tunable sigmoid.  The lowest-threshold rungs are
non-learning cells with a small fixed afferent count; the high rungs are
learning cells whose initial mitral fan-in ratio grows with their threshold
rank.  All excitatory weights start at w_init with per-synapse caps drawn
from U(w_init, 1.5 * w_init).

Learning (one sniff per stimulus, one stimulus per class): at the end of
every gamma cycle, spiking unlocked learning cells run the asymmetric STDP
rule against the cycle's mitral soma spike times and store those soma times
as their column's inhibitory-drive vector.  At sniff end, cells that spiked
and hold at least one afferent at its cap are differentiated: their weights
lock, zero-weight afferents are pruned, and neurogenesis adds an equal
number of fresh cells with the same threshold/convergence/column.

Inference: from `drive_start_cycle` on, each column's spiking granule cells
(from the previous cycle) vote among their stored spike-time vectors; the
plurality vector clamps the sister somas to the stored times, pulling a
noisy input toward the nearest trained pattern over successive cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels
from .core import ApicalResponseSolver, CellParams, GammaClock

__all__ = [
    "StdpConfig",
    "EplConfig",
    "EplState",
    "SniffResult",
    "tunable_sigmoid",
    "build_network",
    "stdp_update",
    "learn_inhibitory_drive",
    "apply_inhibitory_drive",
    "neurogenesis",
    "train_one_shot",
    "run_sniff",
    "feedforward_cycle",
]


def tunable_sigmoid(x, k):
    """Normalized tunable sigmoid (x - kx) / (k - 2k|x| + 1) on [0, 1].

    k = 0 is the identity; k -> 1 pushes mass toward the minimum of the
    target range, k -> -1 toward the maximum.  Endpoints are fixed:
    f(0) = 0, f(1) = 1.  Strictly increasing for |k| < 1.
    """
    x = np.asarray(x, dtype=float)
    k = float(k)
    if not -1.0 < k < 1.0:
        raise ValueError("sigmoid shape parameter k must be in (-1, 1)")
    return (x - k * x) / (k - 2.0 * k * np.abs(x) + 1.0)


@dataclass
class StdpConfig:
    """Constants of the cycle-end STDP rule (config-exposed; tuned on synthetic data).

    Depression must drive an afferent from w_init to zero within one sniff
    (8 cycles) or receptive fields keep odor-unspecific residual weights:
    keep 8 * a_n * exp(-T_cycle / tau_n) >= w_init and 8 * w_scale >= w_init.
    """

    a_p: float = 0.4
    a_n: float = 6.0
    tau_p: float = 5.0
    tau_n: float = 25.0
    w_scale: float = 3.0


@dataclass
class EplConfig:
    """Structural and plasticity hyperparameters of the attractor network."""

    duplication_factor: int = 5           # q sister mitral cells per column
    mc_vth_min: float = 0.8
    mc_vth_max: float = 12.8
    gc_vth_min: float = 0.8
    gc_vth_max: float = 2.4
    k_cp: float = 0.45                    # convergence-ratio sigmoid shape
    k_vth: float = 0.9                    # threshold-ladder sigmoid shape
    conv_min: float = 0.4
    conv_max: float = 0.8
    n_learning_gc_per_column: int = 50
    n_nonlearning_gc_per_column: int = 75
    nonlearning_fanin: int = 10           # absolute afferent count, dimension-invariant
    w_init: float = 18.0
    w_cap_factor: float = 1.5             # caps drawn from U(w_init, factor * w_init)
    stdp: StdpConfig = field(default_factory=StdpConfig)
    drive_start_cycle: int = 3            # 1-based; drive active from this gamma cycle on
    neurogenesis: bool = True
    reference_dimension: int = 20         # k for threshold scaling
    clock: GammaClock = field(default_factory=GammaClock)
    cells: CellParams = field(default_factory=CellParams)
    rng_seed: int = 0

    def __post_init__(self):
        if not (-1.0 < self.k_cp < 1.0 and -1.0 < self.k_vth < 1.0):
            raise ValueError("k_cp and k_vth must be in (-1, 1)")
        if self.conv_min > self.conv_max or self.conv_min <= 0 or self.conv_max > 1:
            raise ValueError("need 0 < conv_min <= conv_max <= 1")
        if min(self.mc_vth_min, self.gc_vth_min) <= 0:
            raise ValueError("thresholds must be positive")
        if self.duplication_factor < 1:
            raise ValueError("duplication_factor must be >= 1")
        if self.drive_start_cycle < 2:
            raise ValueError("drive_start_cycle must be >= 2 (cycles 1-2 follow the apical code)")


class EplState:
    """Mutable network state: populations, synapses, stored patterns.

    Single-owner object; mutate only from one thread at a time.  All arrays
    indexed by granule cell grow under neurogenesis.
    """

    def __init__(self, config: EplConfig, d: int):
        self.config = config
        self.d = d
        self.q = config.duplication_factor
        self.n_mc = d * self.q
        self.rng = np.random.default_rng(config.rng_seed)
        self.solver = ApicalResponseSolver(config.clock, config.cells)
        self.n_steps = config.clock.steps_per_cycle

        self.mc_column = np.repeat(np.arange(d), self.q)
        self.mc_vth = np.tile(
            np.linspace(config.mc_vth_min, config.mc_vth_max, self.q), d
        )

        # granule populations (filled by build_network)
        self.gc_column = np.empty(0, dtype=np.int64)
        self.gc_vth = np.empty(0, dtype=float)
        self.gc_conv = np.empty(0, dtype=float)       # nan for non-learning cells
        self.gc_is_learning = np.empty(0, dtype=bool)
        self.gc_locked = np.empty(0, dtype=bool)
        self.gc_label = np.empty(0, dtype=np.int64)   # class locked to, -1
        self.gc_vec_label = np.empty(0, dtype=np.int64)  # class of the stored drive vector, -1

        self.aff_ptr = np.zeros(1, dtype=np.int64)
        self.aff_mc = np.empty(0, dtype=np.int64)
        self.aff_w = np.empty(0, dtype=float)
        self.aff_cap = np.empty(0, dtype=float)

        self.drive_vec = np.empty((0, self.q), dtype=np.int32)  # stored soma steps, -1 unset
        self.nl_member = np.empty((0, 0), dtype=bool)           # (n_gc, n_labels) grouping

        self.trained_patterns: list[np.ndarray] = []   # last-cycle soma steps per class
        self.trained_labels: list = []

        self._spiked_this_sniff = np.empty(0, dtype=bool)
        self._init_tables()

    # -- caches ------------------------------------------------------------

    def _init_tables(self):
        cells = self.config.cells
        clock = self.config.clock
        t = clock.step_times()
        self._e1 = np.exp(-t / cells.tau_1)
        self._e2 = np.exp(-t / cells.tau_2)
        self._ex1 = np.exp(t / cells.tau_1)
        self._ex2 = np.exp(t / cells.tau_2)
        self._coef = cells.g_max * cells.tau_1 * cells.tau_2 / (cells.tau_1 - cells.tau_2)
        self._unit_integral = cells.g_max * cells.tau_1 * cells.tau_2
        self._unit_peak = cells.g_max * _kernels.kernel_peak_unit(cells.tau_1, cells.tau_2)
        self._alpha = clock.dt_ms / cells.tau_m
        self._inv_g = 1.0 / cells.gc_g_const

    @property
    def n_gc(self) -> int:
        return self.gc_vth.shape[0]

    @property
    def n_labels(self) -> int:
        return len(self.trained_labels)

    def _rebuild_derived(self):
        """Refresh transpose CSR, per-column id lists and work arrays."""
        n_gc = self.n_gc
        gc_of_slot = np.repeat(np.arange(n_gc), np.diff(self.aff_ptr))
        order = np.argsort(self.aff_mc, kind="stable")
        self.post_slot = order
        self.post_gc = gc_of_slot[order]
        counts = np.bincount(self.aff_mc, minlength=self.n_mc)
        self.post_ptr = np.zeros(self.n_mc + 1, dtype=np.int64)
        np.cumsum(counts, out=self.post_ptr[1:])
        self.post_w = self.aff_w[self.post_slot]
        self._col_gc = [np.nonzero(self.gc_column == c)[0] for c in range(self.d)]
        self._v = np.zeros(n_gc)
        self._A = np.zeros(n_gc)
        self._B = np.zeros(n_gc)
        self._wf = np.zeros(n_gc)
        self._wa = np.zeros(n_gc)
        self._active = np.zeros(n_gc, dtype=np.int64)
        self._spike_buf = np.full(n_gc, -1, dtype=np.int32)
        if self._spiked_this_sniff.shape[0] != n_gc:
            grown = np.zeros(n_gc, dtype=bool)
            grown[: self._spiked_this_sniff.shape[0]] = self._spiked_this_sniff
            self._spiked_this_sniff = grown

    def refresh_weights(self):
        """Mirror per-GC weights into the MC-major CSR used by the kernel."""
        self.post_w = self.aff_w[self.post_slot]

    def scaled_gc_vth_max(self) -> float:
        """Learning-cell threshold ceiling scaled by d / reference_dimension."""
        return self.config.gc_vth_max * self.d / self.config.reference_dimension

    # -- serialization -----------------------------------------------------

    CHECKPOINT_VERSION = 1

    def to_arrays(self) -> dict:
        import json

        meta = {
            "version": self.CHECKPOINT_VERSION,
            "d": self.d,
            "config": _config_to_dict(self.config),
            "labels": list(self.trained_labels),
        }
        out = {
            "meta_json": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
            "gc_column": self.gc_column,
            "gc_vth": self.gc_vth,
            "gc_conv": self.gc_conv,
            "gc_is_learning": self.gc_is_learning,
            "gc_locked": self.gc_locked,
            "gc_label": self.gc_label,
            "gc_vec_label": self.gc_vec_label,
            "aff_ptr": self.aff_ptr,
            "aff_mc": self.aff_mc,
            "aff_w": self.aff_w,
            "aff_cap": self.aff_cap,
            "drive_vec": self.drive_vec,
            "nl_member": self.nl_member,
        }
        for i, pat in enumerate(self.trained_patterns):
            out[f"pattern_{i}"] = pat
        return out

    @classmethod
    def from_arrays(cls, data: dict) -> "EplState":
        import json

        meta = json.loads(bytes(data["meta_json"]).decode())
        if meta["version"] != cls.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        config = _config_from_dict(meta["config"])
        state = cls(config, meta["d"])
        for name in ("gc_column", "gc_vth", "gc_conv", "gc_is_learning", "gc_locked",
                     "gc_label", "gc_vec_label", "aff_ptr", "aff_mc", "aff_w",
                     "aff_cap", "drive_vec", "nl_member"):
            setattr(state, name, np.array(data[name]))
        state.trained_labels = list(meta["labels"])
        state.trained_patterns = [np.array(data[f"pattern_{i}"]) for i in range(len(meta["labels"]))]
        state._spiked_this_sniff = np.zeros(state.gc_vth.shape[0], dtype=bool)
        state._rebuild_derived()
        return state


def _config_to_dict(config: EplConfig) -> dict:
    d = asdict(config)
    return d


def _config_from_dict(d: dict) -> EplConfig:
    d = dict(d)
    d["stdp"] = StdpConfig(**d["stdp"])
    d["clock"] = GammaClock(**{k: v for k, v in d["clock"].items()})
    d["cells"] = CellParams(**d["cells"])
    return EplConfig(**d)


def build_network(config: EplConfig, d: int) -> EplState:
    """Construct a naive (untrained) network for d-dimensional inputs."""
    state = EplState(config, d)
    n_mc = state.n_mc
    q = state.q
    n_nl = config.n_nonlearning_gc_per_column
    n_l = config.n_learning_gc_per_column
    n_per_col = n_nl + n_l
    if n_per_col < 1:
        raise ValueError("need at least one granule cell per column")
    if config.nonlearning_fanin > n_mc and n_nl > 0:
        raise ValueError("non-learning fan-in exceeds the mitral population")

    # shared per-column ladders: thresholds via k_vth, convergence via k_cp,
    # both coupled to the same rank so fan-in grows with threshold
    ranks = np.linspace(0.0, 1.0, n_per_col) if n_per_col > 1 else np.array([1.0])
    # learning ceiling scales with dimension but never collapses below the floor
    vth_max_learning = max(config.gc_vth_max * d / config.reference_dimension,
                           config.gc_vth_min)
    shaped = tunable_sigmoid(ranks, config.k_vth)
    vth_ladder = np.where(
        np.arange(n_per_col) < n_nl,
        config.gc_vth_min + shaped * (config.gc_vth_max - config.gc_vth_min),
        config.gc_vth_min + shaped * (vth_max_learning - config.gc_vth_min),
    )
    conv_ladder = config.conv_min + tunable_sigmoid(ranks, config.k_cp) * (config.conv_max - config.conv_min)

    max_fanin = int(round(config.conv_max * n_mc))
    if max_fanin < 1 or max_fanin > n_mc:
        raise ValueError("maximum convergence does not fit the mitral population")

    is_learning_ladder = np.arange(n_per_col) >= n_nl

    state.gc_column = np.repeat(np.arange(d), n_per_col)
    state.gc_vth = np.tile(vth_ladder, d)
    state.gc_conv = np.tile(np.where(is_learning_ladder, conv_ladder, np.nan), d)
    state.gc_is_learning = np.tile(is_learning_ladder, d)
    n_gc = d * n_per_col
    state.gc_locked = np.zeros(n_gc, dtype=bool)
    state.gc_label = np.full(n_gc, -1, dtype=np.int64)
    state.gc_vec_label = np.full(n_gc, -1, dtype=np.int64)

    learn_fanin = np.clip(np.round(np.nan_to_num(state.gc_conv) * n_mc), 1, n_mc).astype(np.int64)
    fanin = np.where(state.gc_is_learning, learn_fanin, min(config.nonlearning_fanin, n_mc))
    state.aff_ptr = np.zeros(n_gc + 1, dtype=np.int64)
    np.cumsum(fanin, out=state.aff_ptr[1:])
    nnz = int(state.aff_ptr[-1])
    state.aff_mc = np.empty(nnz, dtype=np.int64)
    for j in range(n_gc):
        lo, hi = state.aff_ptr[j], state.aff_ptr[j + 1]
        state.aff_mc[lo:hi] = state.rng.choice(n_mc, size=hi - lo, replace=False)
    state.aff_w = np.full(nnz, config.w_init, dtype=float)
    state.aff_cap = state.rng.uniform(config.w_init, config.w_cap_factor * config.w_init, size=nnz)

    state.drive_vec = np.full((n_gc, q), -1, dtype=np.int32)
    state.nl_member = np.zeros((n_gc, 0), dtype=bool)
    state._spiked_this_sniff = np.zeros(n_gc, dtype=bool)
    state._rebuild_derived()
    return state


# ---------------------------------------------------------------------------
# engine pieces
# ---------------------------------------------------------------------------


def _soma_follow(state: EplState, apical_steps: np.ndarray) -> np.ndarray:
    """Soma spike steps when slaved to the apical spike (one-step propagation)."""
    soma = np.where(apical_steps >= 0, apical_steps + 1, -1).astype(np.int32)
    soma[soma > state.n_steps - 1] = -1
    return soma


def _gc_cycle(state: EplState, soma_steps: np.ndarray) -> np.ndarray:
    """Integrate all granule cells for one cycle; returns spike steps (-1 none)."""
    mask = soma_steps >= 0
    mcs = np.nonzero(mask)[0]
    if mcs.size == 0 or state.n_gc == 0:
        return np.full(state.n_gc, -1, dtype=np.int32)
    steps = soma_steps[mcs].astype(np.int64)
    order = np.argsort(steps, kind="stable")
    cells = state.config.cells
    clock = state.config.clock
    _kernels.granule_cycle(
        steps[order], mcs[order].astype(np.int64),
        state.post_ptr, state.post_gc, state.post_w,
        state.gc_vth,
        state._e1, state._e2, state._ex1, state._ex2,
        state._alpha, state._inv_g, cells.e_nernst,
        state._coef, state._unit_integral, state._unit_peak,
        cells.tau_1, cells.tau_2, clock.dt_ms, cells.tau_m,
        state.n_steps, 16,
        state._v, state._A, state._B, state._wf, state._wa, state._active,
        state._spike_buf,
    )
    return state._spike_buf.copy()


def stdp_update(state: EplState, soma_steps: np.ndarray, gc_spike_steps: np.ndarray) -> None:
    """Cycle-end STDP on unlocked learning cells that spiked this cycle."""
    stdp = state.config.stdp
    dt = state.config.clock.dt_ms
    eligible = (gc_spike_steps >= 0) & state.gc_is_learning & ~state.gc_locked
    ids = np.nonzero(eligible)[0]
    if ids.size == 0:
        return
    mc_ms = np.where(soma_steps >= 0, soma_steps * dt, np.inf)
    _kernels.stdp_apply(
        ids.astype(np.int64),
        gc_spike_steps[ids].astype(float) * dt,
        state.aff_ptr, state.aff_mc, state.aff_w, state.aff_cap,
        mc_ms,
        stdp.a_p, stdp.a_n, stdp.tau_p, stdp.tau_n, stdp.w_scale,
    )
    state.refresh_weights()


def learn_inhibitory_drive(state: EplState, column: int, sister_steps: np.ndarray,
                           gc_spike_steps: np.ndarray, label_idx: int) -> None:
    """Store this cycle's sister soma spike times on the column's spiking learning cells.

    Only unlocked learning cells update; differentiated cells keep the vector
    of the class they locked to.  Co-columnar non-learning cells that spiked
    in the same cycle are grouped with the label for drive voting.
    """
    ids = state._col_gc[column]
    spiked = gc_spike_steps[ids] >= 0
    learners = ids[spiked & state.gc_is_learning[ids] & ~state.gc_locked[ids]]
    if learners.size:
        state.drive_vec[learners] = sister_steps.astype(np.int32)
        state.gc_vec_label[learners] = label_idx
    if learners.size or np.any(spiked & state.gc_is_learning[ids]):
        nl = ids[spiked & ~state.gc_is_learning[ids]]
        if nl.size:
            state.nl_member[nl, label_idx] = True


def apply_inhibitory_drive(state: EplState, column: int, prev_gc_spikes: np.ndarray,
                           unlocked_only: bool = False) -> np.ndarray | None:
    """Plurality vote among stored vectors of the column's spiking cells.

    Returns the winning q-vector of soma spike steps (-1 entries = unset) or
    None when no spiking cell holds a stored vector.  Vectors equal within
    one step are merged; non-learning spikers add votes to the best cluster
    of each class they were grouped with; ties break toward the earliest
    learned class, then the lowest cell index.

    During a training sniff the vote is restricted to unlocked cells
    (`unlocked_only`): the drive then reinforces the stimulus being learned
    rather than pulling the new pattern toward previously stored ones.
    """
    ids = state._col_gc[column]
    spiked = prev_gc_spikes[ids] >= 0
    eligible = spiked & (state.gc_vec_label[ids] >= 0)
    if unlocked_only:
        eligible &= ~state.gc_locked[ids]
    holders = ids[eligible]
    if holders.size == 0:
        return None

    clusters: dict[tuple, list] = {}
    for j in holders:
        label = int(state.gc_vec_label[j])
        key = (label, state.drive_vec[j].tobytes())
        entry = clusters.get(key)
        rank = (label, int(j))
        if entry is None:
            clusters[key] = [1, rank, state.drive_vec[j], label]
        else:
            entry[0] += 1
            if rank < entry[1]:
                entry[1] = rank

    # merge same-class vectors equal within one step (stored on different
    # training cycles); the representative is the majority exact vector.
    # Vectors of different classes never merge, however close.
    merged: list[list] = []
    for votes, rank, vec, label in clusters.values():
        placed = False
        for m in merged:
            other = m[2]
            if (m[3] == label and np.array_equal(other >= 0, vec >= 0)
                    and np.all(np.abs(other[other >= 0] - vec[vec >= 0]) <= 1)):
                m[0] += votes
                if (votes, tuple(-r for r in rank)) > (m[4], tuple(-r for r in m[1])):
                    m[1], m[2], m[4] = rank, vec, votes
                placed = True
                break
        if not placed:
            merged.append([votes, rank, vec, label, votes])

    if state.nl_member.shape[1]:
        nl = ids[spiked & ~state.gc_is_learning[ids]]
        if nl.size:
            label_votes = state.nl_member[nl].sum(axis=0)
            for label, extra in enumerate(label_votes):
                if extra == 0:
                    continue
                best = None
                for m in merged:
                    if m[3] == label and (best is None or (-m[0], m[1]) < (-best[0], best[1])):
                        best = m
                if best is not None:
                    best[0] += int(extra)

    winner = min(merged, key=lambda m: (-m[0], m[1]))
    return winner[2]


def _drive_soma(state: EplState, follow: np.ndarray, prev_gc_spikes: np.ndarray,
                unlocked_only: bool = False) -> np.ndarray:
    soma = follow.copy()
    q = state.q
    spiking_cols = np.unique(state.gc_column[prev_gc_spikes >= 0]) if state.n_gc else ()
    for c in spiking_cols:
        vec = apply_inhibitory_drive(state, int(c), prev_gc_spikes, unlocked_only)
        if vec is None:
            continue
        sl = slice(c * q, (c + 1) * q)
        soma[sl] = np.where(vec >= 0, vec, follow[sl])
    return soma


@dataclass
class SniffResult:
    """Record of one stimulus presentation."""

    soma_steps: np.ndarray                      # (n_cycles, n_mc), -1 = no spike
    apical_steps: np.ndarray                    # (n_mc,)
    gc_spike_steps: list | None = None          # per cycle (n_gc,) when recorded

    @property
    def last_cycle(self) -> np.ndarray:
        return self.soma_steps[-1]


def run_sniff(state: EplState, currents: np.ndarray, *, train_label=None,
              record_gc: bool = False) -> SniffResult:
    """Present one stimulus for a full sniff (all gamma cycles).

    Testing runs with frozen weights and detects the attractor fixed point
    (identical consecutive soma patterns imply all later cycles repeat);
    training applies STDP, drive learning, locking and neurogenesis.
    """
    train = train_label is not None
    currents = np.asarray(currents, dtype=float)
    if currents.shape != (state.n_mc,):
        raise ValueError(f"expected {state.n_mc} mitral input currents, got {currents.shape}")
    clock = state.config.clock
    n_cycles = clock.cycles_per_sniff
    apical = state.solver.spike_steps(currents, state.mc_vth)
    follow = _soma_follow(state, apical)

    label_idx = None
    if train:
        if train_label in state.trained_labels:
            raise ValueError(f"label {train_label!r} already trained (one-shot protocol)")
        label_idx = state.n_labels
        state.nl_member = np.concatenate(
            [state.nl_member, np.zeros((state.n_gc, 1), dtype=bool)], axis=1
        )
        state._spiked_this_sniff[:] = False

    soma_hist = np.full((n_cycles, state.n_mc), -1, dtype=np.int32)
    gc_hist: list | None = [] if record_gc else None
    prev_gc = None
    prev_soma = None
    converged_at = None

    for c in range(n_cycles):
        cycle_no = c + 1
        if converged_at is not None:
            soma_hist[c] = soma_hist[c - 1]
            if record_gc:
                gc_hist.append(gc_hist[-1])
            continue

        if cycle_no < state.config.drive_start_cycle or prev_gc is None:
            soma = follow
        else:
            soma = _drive_soma(state, follow, prev_gc, unlocked_only=train)
        soma_hist[c] = soma

        # a repeated pattern is a fixed point only once the drive is active
        if (not train and cycle_no >= state.config.drive_start_cycle
                and prev_soma is not None and np.array_equal(soma, prev_soma)):
            converged_at = c            # fixed point: GC response and vote repeat
            if record_gc:
                gc_hist.append(prev_gc)
            continue

        last = c == n_cycles - 1
        if train or record_gc or not last:
            gc_spikes = _gc_cycle(state, soma)
        else:
            gc_spikes = None            # final test cycle's GC spikes are unused
        if record_gc:
            gc_hist.append(gc_spikes)

        if train:
            state._spiked_this_sniff |= gc_spikes >= 0
            stdp_update(state, soma, gc_spikes)
            q = state.q
            for col in np.unique(state.gc_column[gc_spikes >= 0]):
                learn_inhibitory_drive(
                    state, int(col), soma[col * q:(col + 1) * q], gc_spikes, label_idx
                )
        prev_gc = gc_spikes
        prev_soma = soma

    if train:
        _differentiate_and_lock(state, label_idx)
        if state.config.neurogenesis:
            neurogenesis(state)
        state.trained_patterns.append(soma_hist[-1].copy())
        state.trained_labels.append(train_label)

    return SniffResult(soma_steps=soma_hist, apical_steps=apical, gc_spike_steps=gc_hist)


def _differentiate_and_lock(state: EplState, label_idx: int) -> None:
    """Lock learning cells that spiked during the sniff; prune their zero weights.

    A cell active during a training sniff is differentiated: its weights
    freeze on this first learned stimulus and its stored drive vector stops
    updating, so later training cannot overwrite it.
    """
    newly = np.nonzero(state._spiked_this_sniff & state.gc_is_learning & ~state.gc_locked)[0]
    state._newly_locked = newly
    if newly.size == 0:
        return
    state.gc_locked[newly] = True
    state.gc_label[newly] = label_idx

    # prune zero-weight afferents of freshly locked cells
    keep = np.ones(state.aff_mc.shape[0], dtype=bool)
    for j in newly:
        lo, hi = state.aff_ptr[j], state.aff_ptr[j + 1]
        keep[lo:hi] = state.aff_w[lo:hi] > 0.0
    if not np.all(keep):
        counts = np.diff(state.aff_ptr)
        kept_counts = np.add.reduceat(keep.astype(np.int64), state.aff_ptr[:-1])
        kept_counts[counts == 0] = 0
        state.aff_mc = state.aff_mc[keep]
        state.aff_w = state.aff_w[keep]
        state.aff_cap = state.aff_cap[keep]
        state.aff_ptr = np.zeros(state.n_gc + 1, dtype=np.int64)
        np.cumsum(kept_counts, out=state.aff_ptr[1:])
    state._rebuild_derived()


def neurogenesis(state: EplState) -> None:
    """Use-dependent column filler: replace newly differentiated cells.

    Adds, per column, as many fresh learning cells as differentiated during
    the last training sniff (capped at the initial per-column learning
    count). Each newborn copies threshold, convergence ratio and column from
    the cell it replaces and draws fresh afferents at w_init.
    """
    newly = getattr(state, "_newly_locked", np.empty(0, dtype=np.int64))
    if newly.size == 0:
        return
    cap = state.config.n_learning_gc_per_column
    config = state.config
    born_templates = []
    for c in np.unique(state.gc_column[newly]):
        templates = newly[state.gc_column[newly] == c][:cap]
        born_templates.extend(int(t) for t in templates)
    if not born_templates:
        return
    n_new = len(born_templates)
    tpl = np.array(born_templates, dtype=np.int64)

    state.gc_column = np.concatenate([state.gc_column, state.gc_column[tpl]])
    state.gc_vth = np.concatenate([state.gc_vth, state.gc_vth[tpl]])
    state.gc_conv = np.concatenate([state.gc_conv, state.gc_conv[tpl]])
    state.gc_is_learning = np.concatenate([state.gc_is_learning, np.ones(n_new, dtype=bool)])
    state.gc_locked = np.concatenate([state.gc_locked, np.zeros(n_new, dtype=bool)])
    state.gc_label = np.concatenate([state.gc_label, np.full(n_new, -1, dtype=np.int64)])
    state.gc_vec_label = np.concatenate([state.gc_vec_label, np.full(n_new, -1, dtype=np.int64)])
    state.drive_vec = np.concatenate(
        [state.drive_vec, np.full((n_new, state.q), -1, dtype=np.int32)]
    )
    state.nl_member = np.concatenate(
        [state.nl_member, np.zeros((n_new, state.nl_member.shape[1]), dtype=bool)]
    )

    fanin = np.clip(np.round(state.gc_conv[tpl] * state.n_mc), 1, state.n_mc).astype(np.int64)
    new_mc = []
    for f in fanin:
        new_mc.append(state.rng.choice(state.n_mc, size=int(f), replace=False))
    add_nnz = int(fanin.sum())
    state.aff_mc = np.concatenate([state.aff_mc, np.concatenate(new_mc)])
    state.aff_w = np.concatenate([state.aff_w, np.full(add_nnz, config.w_init)])
    state.aff_cap = np.concatenate(
        [state.aff_cap, state.rng.uniform(config.w_init, config.w_cap_factor * config.w_init, size=add_nnz)]
    )
    state.aff_ptr = np.concatenate(
        [state.aff_ptr, state.aff_ptr[-1] + np.cumsum(fanin)]
    )
    state._rebuild_derived()


def train_one_shot(state: EplState, currents: np.ndarray, label) -> SniffResult:
    """One-shot training: a single sniff with plasticity, then lock/neurogenesis."""
    return run_sniff(state, currents, train_label=label)


def feedforward_cycle(state: EplState, currents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One gamma cycle of the feedforward (no-drive) network.

    Returns (soma spike steps, granule spike steps).  Used by the
    regularization and model-scaling studies, where every cycle of a sniff
    is identical.
    """
    currents = np.asarray(currents, dtype=float)
    apical = state.solver.spike_steps(currents, state.mc_vth)
    soma = _soma_follow(state, apical)
    return soma, _gc_cycle(state, soma)
