"""Synthetic odor generation and noise injection.

Sequentially similar odors are a random walk: each odor adds a skew-normal
step rescaled so the realized Euclidean step length equals the requested
inter-odor distance.  Random walks in high dimension reliably move away
from their origin, so distance from odor 0 grows with odor index; an
optional non-overlapping control odor is a random permutation of the base
odor's values.  Raw samples live in the 0-20 sensor-response range, the
same units the noise models use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = [
    "OdorSeriesSpec",
    "NoiseSpec",
    "generate_series",
    "add_gaussian_noise",
    "add_impulse_noise",
    "add_noise",
    "build_test_suite",
    "generate_wild_samples",
]


@dataclass
class OdorSeriesSpec:
    dimension: int = 20
    n_similar: int = 4
    inter_odor_distance: float = 0.5
    include_nonoverlapping: bool = True
    skew: float = 4.0                 # shape of the skew-normal step distribution
    base_max: float = 20.0            # base odor ~ U(0, base_max)
    rng_seed: int = 0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.inter_odor_distance < 0:
            raise ValueError("inter_odor_distance must be nonnegative")
        if self.n_similar < 1:
            raise ValueError("need at least one odor")


@dataclass
class NoiseSpec:
    kind: str = "gaussian"            # "gaussian" or "impulse"
    mean: float = 0.0
    std: float = 6.0
    occlusion: float = 0.5            # fraction of sensors perturbed
    impulse_low: float = 0.0
    impulse_high: float = 20.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "impulse"):
            raise ValueError("noise kind must be 'gaussian' or 'impulse'")
        if not 0.0 <= self.occlusion <= 1.0:
            raise ValueError("occlusion must be in [0, 1]")
        if self.kind == "gaussian" and self.std <= 0:
            raise ValueError("gaussian std must be positive")


def generate_series(spec: OdorSeriesSpec) -> np.ndarray:
    """Odor matrix (n_odors, d): a chained walk plus an optional shuffled control.

    Every consecutive pair is exactly `inter_odor_distance` apart (the step
    is re-projected after clipping negatives until the realized distance
    matches).
    """
    rng = np.random.default_rng(spec.rng_seed)
    d = spec.dimension
    base = rng.uniform(0.0, spec.base_max, size=d)
    odors = [base]
    for _ in range(spec.n_similar - 1):
        odors.append(_step_from(odors[-1], spec, rng))
    if spec.include_nonoverlapping:
        odors.append(rng.permutation(base))
    return np.array(odors)


def _step_from(prev: np.ndarray, spec: OdorSeriesSpec, rng: np.random.Generator) -> np.ndarray:
    target = spec.inter_odor_distance
    if target == 0.0:
        return prev.copy()
    # centered skew-normal steps: skewed perturbation without a net drift that
    # would inflate (and after intensity normalization, flatten) later odors
    offset = stats.skewnorm.mean(spec.skew)
    for _ in range(64):
        step = stats.skewnorm.rvs(spec.skew, size=prev.shape[0], random_state=rng) - offset
        norm = np.linalg.norm(step)
        if norm == 0.0:
            continue
        cand = prev + step * (target / norm)
        # project back onto the nonnegative orthant while keeping the step length
        for _ in range(100):
            cand = np.maximum(cand, 0.0)
            direction = cand - prev
            norm = np.linalg.norm(direction)
            if norm == 0.0:
                break
            cand = prev + direction * (target / norm)
            if np.all(cand >= 0.0) and abs(np.linalg.norm(cand - prev) - target) < 1e-12:
                return cand
    raise RuntimeError("could not realize the requested inter-odor distance near the boundary")


def add_gaussian_noise(sample: np.ndarray, spec: NoiseSpec,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Add N(mean, std) draws to floor(occlusion * d) sensors, clipped at 0."""
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    sample = np.asarray(sample, dtype=float).copy()
    n_hit = int(np.floor(spec.occlusion * sample.shape[0]))
    if n_hit == 0:
        return sample
    idx = rng.choice(sample.shape[0], size=n_hit, replace=False)
    sample[idx] += rng.normal(spec.mean, spec.std, size=n_hit)
    return np.maximum(sample, 0.0)


def add_impulse_noise(sample: np.ndarray, spec: NoiseSpec,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Replace floor(occlusion * d) sensor values with U(low, high) draws."""
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    sample = np.asarray(sample, dtype=float).copy()
    n_hit = int(np.floor(spec.occlusion * sample.shape[0]))
    if n_hit == 0:
        return sample
    idx = rng.choice(sample.shape[0], size=n_hit, replace=False)
    sample[idx] = rng.uniform(spec.impulse_low, spec.impulse_high, size=n_hit)
    return sample


def add_noise(sample: np.ndarray, spec: NoiseSpec,
              rng: np.random.Generator | None = None) -> np.ndarray:
    if spec.kind == "gaussian":
        return add_gaussian_noise(sample, spec, rng)
    return add_impulse_noise(sample, spec, rng)


def build_test_suite(train_odors: np.ndarray, noise: NoiseSpec | None,
                     n_noisy: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Each train odor plus `n_noisy` noisy variants, labeled by source odor."""
    train_odors = np.asarray(train_odors, dtype=float)
    samples, labels = [], []
    rng = np.random.default_rng(noise.rng_seed if noise is not None else 0)
    for i, odor in enumerate(train_odors):
        samples.append(odor)
        labels.append(i)
        if noise is not None:
            for _ in range(n_noisy):
                samples.append(add_noise(odor, noise, rng))
                labels.append(i)
    return np.array(samples), np.array(labels)


def generate_wild_samples(dimension: int = 100, rng_seed: int = 7) -> np.ndarray:
    """40 synthetic samples from wildly mismatched distributions.

    Composition (1-based sample indices):
      1-9    folded normals, three means x three stds
      10-18  the same draws scaled up, mimicking a higher concentration
      19-21  uniform with three different means
      22-24  power-law with three shapes
      25-29  Poisson with growing mean
      30-32  Rayleigh with growing scale
      33-37  linear ramps y = m * sensor_index, five slopes
      38     every sensor at 200 (saturator)
      39     first 25% of sensors at 5, rest silent
      40     first 75% of sensors at 5, rest silent
    """
    d = dimension
    rng = np.random.default_rng(rng_seed)
    samples = []
    folded = []
    for mean in (50.0, 150.0, 300.0):
        for std in (10.0, 60.0, 150.0):
            folded.append(np.abs(rng.normal(mean, std, size=d)))
    samples.extend(folded)                       # 1-9
    samples.extend(3.5 * s for s in folded)      # 10-18, concentration variants
    for hi in (60.0, 150.0, 400.0):              # 19-21
        samples.append(rng.uniform(0.0, hi, size=d))
    for a in (0.3, 1.5, 5.0):                    # 22-24
        samples.append(200.0 * rng.power(a, size=d))
    for lam in (2.0, 8.0, 32.0, 128.0, 512.0):   # 25-29
        samples.append(rng.poisson(lam, size=d).astype(float))
    for scale_ in (10.0, 40.0, 160.0):           # 30-32
        samples.append(rng.rayleigh(scale_, size=d))
    for m in (0.1, 0.5, 1.0, 2.0, 4.0):          # 33-37
        samples.append(m * np.arange(d, dtype=float))
    samples.append(np.full(d, 200.0))            # 38
    s39 = np.zeros(d)
    s39[: d // 4] = 5.0
    samples.append(s39)                          # 39
    s40 = np.zeros(d)
    s40[: (3 * d) // 4] = 5.0
    samples.append(s40)                          # 40
    return np.array(samples)
