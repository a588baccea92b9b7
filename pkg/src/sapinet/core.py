"""Neuron dynamics and the gamma/sniff clock.

Time is discretized with explicit Euler steps (dt = 0.025 ms by default)
inside a 25 ms gamma cycle; a sniff is 8 consecutive gamma cycles (200 ms).
Every compartment spikes at most once per gamma cycle and all membrane
state is reset at each cycle boundary, so spike *timing within the cycle*
is the code.

Three compartment types:

* ``ApicalDendrite`` -- leaky integrator ``tau_m dv/dt = -v + I/G(t)`` whose
  conductance G oscillates over the gamma cycle.  G starts high (slow
  charging) and dips mid-cycle, so strong inputs cross threshold early and
  weak inputs late or never: a spike-precedence code.
* ``MitralSoma`` -- pure integrator ``dv/dt = I/c_mem``; its timing is either
  slaved to the apical spike or clamped by granule-cell inhibitory drive.
* ``GranuleCell`` -- leaky integrator with constant conductance driven by
  double-exponential excitatory synapses, ``I = g_w(t) * (E_nernst - v)``.

The per-cell classes here are the reference dynamics and are deliberately
plain; the network engine in :mod:`sapinet.epl` uses vectorized/event-driven
equivalents that are tested against these references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GammaClock",
    "CellParams",
    "ApicalDendrite",
    "MitralSoma",
    "GranuleCell",
    "conductance_profile",
    "apical_response_curve",
    "apical_spike_steps",
    "reset_cycle",
]


class NonFiniteStateError(FloatingPointError):
    """Membrane potential left the finite range (dt too coarse for tau_m)."""


@dataclass
class GammaClock:
    """Discrete clock: `cycles_per_sniff` gamma cycles of `cycle_period_ms` each.

    `steps_per_cycle` Euler steps tile one cycle; step index n corresponds to
    time n*dt_ms inside the cycle. Spike times are reported on this grid and
    always lie in [0, cycle_period_ms).
    """

    cycle_period_ms: float = 25.0
    cycles_per_sniff: int = 8
    dt_ms: float = 0.025
    current_cycle: int = 0
    current_time_in_cycle: float = 0.0

    def __post_init__(self):
        if self.cycle_period_ms <= 0 or self.dt_ms <= 0:
            raise ValueError("cycle_period_ms and dt_ms must be positive")
        n = self.cycle_period_ms / self.dt_ms
        if abs(n - round(n)) > 1e-9:
            raise ValueError("cycle_period_ms must be an integer number of dt_ms steps")
        if self.cycles_per_sniff < 1:
            raise ValueError("cycles_per_sniff must be >= 1")

    @property
    def steps_per_cycle(self) -> int:
        return int(round(self.cycle_period_ms / self.dt_ms))

    @property
    def sniff_duration_ms(self) -> float:
        return self.cycles_per_sniff * self.cycle_period_ms

    def advance(self) -> None:
        """Advance one Euler step, rolling over at the cycle boundary."""
        self.current_time_in_cycle += self.dt_ms
        if self.current_time_in_cycle >= self.cycle_period_ms - 1e-12:
            self.current_time_in_cycle = 0.0
            self.current_cycle += 1

    def step_times(self) -> np.ndarray:
        """Times (ms) of each step inside a cycle: 0, dt, ..., T - dt."""
        return np.arange(self.steps_per_cycle) * self.dt_ms


@dataclass
class CellParams:
    """Shared membrane constants; all thresholds live in network configs.

    `g_max` is calibrated with calibrate_g_max so one full-weight synaptic
    input peaks at half the minimum granule threshold: a granule cell then
    needs at least two to three near-coincident inputs to fire, and learned
    receptive fields stay selective to co-activated mitral groups.
    """

    tau_m: float = 2.5          # membrane time constant, ms
    c_mem: float = 1.0          # soma capacitance
    g_base: float = 2.0         # apical conductance at the cycle start
    g_floor_frac: float = 0.05  # conductance floor, fraction of g_base
    tau_1: float = 1.4          # synaptic rise/decay pair, ms (tau_1 != tau_2)
    tau_2: float = 0.7
    g_max: float = 1.8406e-3    # synaptic conductance scale (see calibrate_g_max)
    e_nernst: float = 70.0      # excitatory reversal potential, mV
    gc_g_const: float = 1.0     # granule-cell (constant) conductance
    soma_vth: float = 0.8       # mitral soma threshold, mV
    strong_pulse_factor: float = 10.0  # drive pulse = factor * max regularized input
    conductance_shape: str = "exp_ramp"       # "exp_ramp", "half_cosine" or "mid_dip"
    ramp_decades: float = 1.5   # exp_ramp: orders of magnitude G falls per cycle

    def __post_init__(self):
        if self.tau_1 == self.tau_2:
            raise ValueError("tau_1 must differ from tau_2")
        if self.tau_m <= 0 or self.c_mem <= 0 or self.g_base <= 0:
            raise ValueError("tau_m, c_mem and g_base must be positive")
        if self.conductance_shape not in ("exp_ramp", "half_cosine", "mid_dip"):
            raise ValueError("conductance_shape must be 'exp_ramp', 'half_cosine' or 'mid_dip'")


def _conductance(t, period_ms: float, cells: "CellParams"):
    g_floor = cells.g_floor_frac * cells.g_base
    phase = t / period_ms
    if cells.conductance_shape == "exp_ramp":
        # exponential decay over the cycle: the charging equilibrium I/G
        # sweeps log-uniformly, so equal current *ratios* map to equal spike
        # time shifts and crossings spread across the whole cycle
        return cells.g_base * np.power(10.0, -cells.ramp_decades * phase)
    if cells.conductance_shape == "half_cosine":
        return cells.g_base * (1.0 + np.cos(np.pi * phase)) / 2.0 + g_floor
    # mid-cycle dip: high at both cycle boundaries, floor at mid-cycle
    return cells.g_base * (1.0 + np.sin(2.0 * np.pi * phase + np.pi / 2.0)) / 2.0 + g_floor


def conductance_profile(clock: GammaClock, cells: CellParams) -> np.ndarray:
    """Apical conductance G at every step of a gamma cycle.

    G is maximal at the cycle start and decays toward the floor, so charging
    is slow early and fast late: strong inputs cross threshold early, weak
    ones late or never, and spike time is a monotone (non-increasing)
    function of the input current.
    """
    return _conductance(clock.step_times(), clock.cycle_period_ms, cells)


def apical_response_curve(clock: GammaClock, cells: CellParams) -> np.ndarray:
    """Per-step membrane response of the apical dendrite to a unit current.

    The Euler update v <- v + (dt/tau_m) * (-v + I/G) is linear in I with
    v(0) = 0, so v_n = I * S_n with S independent of the input. S_n is the
    potential at step n (time n*dt); S_0 = 0.
    """
    n = clock.steps_per_cycle
    g = conductance_profile(clock, cells)
    alpha = clock.dt_ms / cells.tau_m
    s = np.empty(n)
    s[0] = 0.0
    for i in range(1, n):
        s[i] = s[i - 1] + alpha * (-s[i - 1] + 1.0 / g[i - 1])
    if not np.all(np.isfinite(s)):
        raise NonFiniteStateError("apical response diverged; reduce dt_ms or raise tau_m")
    return s


def _running_max_records(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices and values where `s` attains a new running maximum."""
    m = np.maximum.accumulate(s)
    is_record = np.empty(len(s), dtype=bool)
    is_record[0] = True
    is_record[1:] = s[1:] > m[:-1]
    idx = np.nonzero(is_record)[0]
    return idx, s[idx]


class ApicalResponseSolver:
    """Exact first-crossing solver for the apical precedence code.

    For current I and threshold vth the spike step is the first n with
    I * S_n >= vth, found by binary search over the running maxima of S.
    Produces step indices identical to stepping the Euler recurrence (up to
    float associativity at exact-threshold ties).
    """

    def __init__(self, clock: GammaClock, cells: CellParams):
        self.clock = clock
        self.cells = cells
        self.curve = apical_response_curve(clock, cells)
        self._rec_idx, self._rec_val = _running_max_records(self.curve)

    def spike_steps(self, currents: np.ndarray, vths: np.ndarray) -> np.ndarray:
        """First-crossing step per cell; -1 where the cell never spikes."""
        currents = np.asarray(currents, dtype=float)
        vths = np.asarray(vths, dtype=float)
        if np.any(vths <= 0):
            raise ValueError("spike thresholds must be positive")
        with np.errstate(divide="ignore"):
            ratio = np.where(currents > 0, vths / np.maximum(currents, 1e-300), np.inf)
        pos = np.searchsorted(self._rec_val, ratio, side="left")
        out = np.full(ratio.shape, -1, dtype=np.int32)
        hit = pos < len(self._rec_idx)
        out[hit] = self._rec_idx[pos[hit]].astype(np.int32)
        out[currents <= 0] = -1
        return out


def apical_spike_steps(currents, vths, clock: GammaClock, cells: CellParams) -> np.ndarray:
    return ApicalResponseSolver(clock, cells).spike_steps(np.asarray(currents), np.asarray(vths))


# ---------------------------------------------------------------------------
# Reference per-cell dynamics (one compartment per object, explicit stepping)
# ---------------------------------------------------------------------------


@dataclass
class ApicalDendrite:
    """Input-driven leaky integrator with oscillating conductance."""

    v_th: float
    tau_m: float = 2.5
    g_base: float = 2.0
    g_floor_frac: float = 0.05
    input_current: float = 0.0
    conductance_shape: str = "exp_ramp"
    ramp_decades: float = 1.5
    v: float = 0.0
    has_spiked_this_cycle: bool = False
    spike_time: float | None = None

    def conductance(self, t_ms: float, period_ms: float) -> float:
        g_floor = self.g_floor_frac * self.g_base
        phase = t_ms / period_ms
        if self.conductance_shape == "exp_ramp":
            return self.g_base * math.pow(10.0, -self.ramp_decades * phase)
        if self.conductance_shape == "half_cosine":
            return self.g_base * (1.0 + math.cos(math.pi * phase)) / 2.0 + g_floor
        return self.g_base * (1.0 + math.sin(2.0 * math.pi * phase + math.pi / 2.0)) / 2.0 + g_floor

    def step(self, clock: GammaClock) -> float | None:
        """One Euler step; returns the spike time (ms in cycle) if it fires."""
        if self.has_spiked_this_cycle:
            return None
        t = clock.current_time_in_cycle
        g = self.conductance(t, clock.cycle_period_ms)
        self.v += (clock.dt_ms / self.tau_m) * (-self.v + self.input_current / g)
        if not math.isfinite(self.v):
            raise NonFiniteStateError("apical membrane potential is non-finite")
        t_next = t + clock.dt_ms
        if self.v >= self.v_th and t_next < clock.cycle_period_ms - 1e-12:
            self.v = 0.0
            self.has_spiked_this_cycle = True
            self.spike_time = t_next
            return t_next
        return None

    def reset_cycle(self) -> None:
        self.v = 0.0
        self.has_spiked_this_cycle = False
        self.spike_time = None


@dataclass
class MitralSoma:
    """Pure integrator; spike timing shaped by apical input or inhibitory drive."""

    v_th: float = 0.8
    c_mem: float = 1.0
    drive_mode: str = "follow_apical"   # or "inhibitory_drive"
    v: float = 0.0
    has_spiked_this_cycle: bool = False
    spike_time: float | None = None

    def step(self, drive_current: float, clock: GammaClock) -> float | None:
        if self.has_spiked_this_cycle:
            return None
        self.v += clock.dt_ms * drive_current / self.c_mem
        if not math.isfinite(self.v):
            raise NonFiniteStateError("soma membrane potential is non-finite")
        t_next = clock.current_time_in_cycle + clock.dt_ms
        if self.v >= self.v_th and t_next < clock.cycle_period_ms - 1e-12:
            self.v = 0.0
            self.has_spiked_this_cycle = True
            self.spike_time = t_next
            return t_next
        return None

    def reset_cycle(self) -> None:
        self.v = 0.0
        self.has_spiked_this_cycle = False
        self.spike_time = None


@dataclass
class GranuleCell:
    """Leaky integrator fed by double-exponential excitatory synapses.

    g_w(t) = sum_i w_i * g_max * (tau_1*tau_2/(tau_1 - tau_2))
             * (exp(-(t - t_i)/tau_1) - exp(-(t - t_i)/tau_2))
    I(t) = g_w(t) * (e_nernst - v);  tau_m dv/dt = -v + I/g_const.

    The synaptic kernel has unit time-integral g_max*tau_1*tau_2 per unit
    weight, independent of the spike time.
    """

    v_th: float
    tau_m: float = 2.5
    g_const: float = 1.0
    tau_1: float = 1.4
    tau_2: float = 0.7
    g_max: float = 1.8406e-3
    e_nernst: float = 70.0
    column: int = 0
    is_learning: bool = True
    is_differentiated: bool = False
    v: float = 0.0
    has_spiked_this_cycle: bool = False
    spike_time: float | None = None

    def conductance_at(self, t_ms: float, presyn: list[tuple[float, float]]) -> float:
        """Total synaptic conductance given (weight, spike_time_ms) inputs."""
        coef = self.g_max * self.tau_1 * self.tau_2 / (self.tau_1 - self.tau_2)
        g = 0.0
        for w, ti in presyn:
            if t_ms >= ti:
                g += w * coef * (math.exp(-(t_ms - ti) / self.tau_1) - math.exp(-(t_ms - ti) / self.tau_2))
        return g

    def step(self, presyn: list[tuple[float, float]], clock: GammaClock) -> float | None:
        if self.has_spiked_this_cycle:
            return None
        t = clock.current_time_in_cycle
        g_w = self.conductance_at(t, presyn)
        current = g_w * (self.e_nernst - self.v)
        self.v += (clock.dt_ms / self.tau_m) * (-self.v + current / self.g_const)
        if not math.isfinite(self.v):
            raise NonFiniteStateError("granule membrane potential is non-finite")
        t_next = t + clock.dt_ms
        if self.v >= self.v_th and t_next < clock.cycle_period_ms - 1e-12:
            self.v = 0.0
            self.has_spiked_this_cycle = True
            self.spike_time = t_next
            return t_next
        return None

    def reset_cycle(self) -> None:
        self.v = 0.0
        self.has_spiked_this_cycle = False
        self.spike_time = None


def run_apical_cycle(cell: ApicalDendrite, clock: GammaClock) -> float | None:
    """Step a fresh apical dendrite through one full cycle; return spike time."""
    cell.reset_cycle()
    local = GammaClock(clock.cycle_period_ms, clock.cycles_per_sniff, clock.dt_ms)
    spike = None
    for _ in range(local.steps_per_cycle - 1):
        out = cell.step(local)
        if out is not None and spike is None:
            spike = out
        local.current_time_in_cycle += local.dt_ms
    return spike


def run_granule_cycle(cell: GranuleCell, presyn: list[tuple[float, float]], clock: GammaClock) -> float | None:
    """Step a fresh granule cell through one full cycle; return spike time."""
    cell.reset_cycle()
    local = GammaClock(clock.cycle_period_ms, clock.cycles_per_sniff, clock.dt_ms)
    spike = None
    for _ in range(local.steps_per_cycle - 1):
        out = cell.step(presyn, local)
        if out is not None and spike is None:
            spike = out
        local.current_time_in_cycle += local.dt_ms
    return spike


def reset_cycle(cells) -> None:
    """Zero membrane state and spike flags on a collection of cells.

    Clears dynamics only; learned weights and recorded spike patterns are
    untouched.
    """
    for c in cells:
        c.reset_cycle()


def calibrate_g_max(
    vth: float = 0.4,
    weight: float = 18.0,
    margin: float = 1.0,
    clock: GammaClock | None = None,
    cells: CellParams | None = None,
) -> float:
    """g_max such that one weight-`weight` input peaks at `margin * vth`.

    Used once to fix the CellParams.g_max default: a single presynaptic spike
    at full initial weight just fires a granule cell at the minimum threshold,
    so multiple coincident inputs are required at any higher threshold.
    """
    clock = clock or GammaClock()
    cells = cells or CellParams(g_max=1.0)
    probe = GranuleCell(
        v_th=np.inf, tau_m=cells.tau_m, g_const=cells.gc_g_const,
        tau_1=cells.tau_1, tau_2=cells.tau_2, g_max=1.0, e_nernst=cells.e_nernst,
    )
    # Peak of the subthreshold response is proportional to g_max to first
    # order (driving-force correction is < v/e_nernst); iterate to converge.
    g = 1e-4
    for _ in range(40):
        probe.g_max = g
        vmax = 0.0
        probe.reset_cycle()
        local = GammaClock(clock.cycle_period_ms, clock.cycles_per_sniff, clock.dt_ms)
        for _ in range(local.steps_per_cycle - 1):
            probe.step([(weight, 1.0)], local)
            local.current_time_in_cycle += local.dt_ms
            vmax = max(vmax, probe.v)
        target = margin * vth
        if abs(vmax - target) < 1e-12:
            break
        g *= target / vmax
    return g
