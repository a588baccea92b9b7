"""Glomerular-layer data regularization.

Deterministic preprocessing that maps raw nonnegative sensor vectors of any
dimension into well-behaved mitral-cell input currents in the 0-20 range.
The pipeline order is fixed:

    scale -> normalize_intensity -> apply_model_scaling -> heterogeneous_duplicate

``scale`` uses a reference maximum frozen from a declared reference batch
(for drifting sensors: the first batch), so later data that exceeds it is
clamped rather than re-normalized.  ``normalize_intensity`` divides by the
sample sum, making the remaining pipeline exactly invariant to stimulus
concentration.  ``apply_model_scaling`` multiplies by d/k (k = reference
dimension) so spike counts stay consistent as dimensionality changes.
``heterogeneous_duplicate`` projects the d inputs onto d*q mitral slots
through a fixed sparse random matrix with no intra-column connections, which
is the step that actually regularizes wild data.

`GlomerularPreprocessor` wraps the pipeline as a scikit-learn transformer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

__all__ = [
    "PreprocessConfig",
    "EtMcProjection",
    "scale",
    "normalize_intensity",
    "apply_model_scaling",
    "heterogeneous_duplicate",
    "scale_thresholds_for_dimension",
    "ThresholdScaling",
    "GlomerularPreprocessor",
]


@dataclass
class PreprocessConfig:
    """Knobs of the regularization pipeline.

    et_weight_max = 0.65 keeps the maximum possible mitral input near the
    top of the 0-20 current range; et_input_scale multiplies normalized
    inputs by 10 before projection. `density` is the fraction of *reference
    dimension* sensors feeding each mitral slot: the absolute fan-in per
    slot is held constant across dimensions so per-slot input magnitude
    does not grow with d.
    """

    target_max_current: float = 20.0
    duplication_factor: int = 5          # q sister mitral cells per column
    et_weight_max: float = 0.65
    et_input_scale: float = 10.0
    reference_dimension: int = 20        # k
    density: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.duplication_factor < 1:
            raise ValueError("duplication_factor must be >= 1")
        if self.et_weight_max <= 0:
            raise ValueError("et_weight_max must be positive")
        if self.reference_dimension < 1:
            raise ValueError("reference_dimension must be >= 1")
        if not 0 < self.density <= 1:
            raise ValueError("density must be in (0, 1]")

    @property
    def fanin_per_slot(self) -> int:
        return max(1, int(round(self.density * (self.reference_dimension - 1))))


class EtMcProjection:
    """Fixed sparse random projection from d sensors onto d*q mitral slots.

    Each slot receives `fanin` afferents with weights ~ U(0, et_weight_max),
    never from its own column, and the assignment is balanced: every sensor
    feeds the same number of slots (random permutation rounds), which keeps
    small networks from drawing degenerate wirings.  Every slot is
    guaranteed at least one nonzero afferent.
    """

    def __init__(self, d: int, config: PreprocessConfig, seed: int | None = None):
        if d < 2:
            raise ValueError("heterogeneous duplication needs at least 2 sensor columns")
        self.d = d
        self.q = config.duplication_factor
        self.config = config
        self.seed = config.rng_seed if seed is None else seed
        rng = np.random.default_rng(self.seed)
        n_slots = d * self.q
        fanin = min(config.fanin_per_slot, d - 1)
        self.afferent_idx = self._balanced_assignment(d, self.q, fanin, rng)
        self.afferent_w = rng.uniform(0.0, config.et_weight_max, size=(n_slots, fanin))
        zero_rows = ~np.any(self.afferent_w > 0, axis=1)
        while np.any(zero_rows):  # nonzero afferent guarantee (re-draw)
            self.afferent_w[zero_rows] = rng.uniform(
                0.0, config.et_weight_max, size=(int(zero_rows.sum()), fanin))
            zero_rows = ~np.any(self.afferent_w > 0, axis=1)
        # dense matrix form (d x d*q), convenient for matmul application;
        # duplicate afferents within a slot accumulate
        self.weights = np.zeros((d, n_slots))
        cols = np.repeat(np.arange(n_slots), fanin)
        np.add.at(self.weights, (self.afferent_idx.ravel(), cols), self.afferent_w.ravel())

    @staticmethod
    def _balanced_assignment(d: int, q: int, fanin: int, rng: np.random.Generator) -> np.ndarray:
        n_slots = d * q

        def violates(r, pos, val):
            return val == own[pos] or (r > 0 and val in idx[pos, :r])

        own = np.repeat(np.arange(d), q)
        idx = np.empty((n_slots, fanin), dtype=np.int64)
        for r in range(fanin):
            perm = rng.permutation(np.repeat(np.arange(d), q))
            for _ in range(20 * n_slots):
                bad = [p for p in range(n_slots) if violates(r, p, perm[p])]
                if not bad:
                    break
                for p in bad:  # pairwise swaps preserve the balanced multiset
                    for _ in range(n_slots):
                        j = int(rng.integers(0, n_slots))
                        if not violates(r, p, perm[j]) and not violates(r, j, perm[p]):
                            perm[p], perm[j] = perm[j], perm[p]
                            break
            else:
                raise RuntimeError("could not draw a balanced non-self wiring")
            idx[:, r] = perm
        return idx

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional input, got {x.shape[-1]}")
        return x @ self.weights


def scale(samples: np.ndarray, target_max: float = 20.0, reference: np.ndarray | None = None,
          clamp: bool = True) -> np.ndarray:
    """Max-scale into [0, target_max] using a frozen reference maximum.

    `reference` is the batch the global maximum is taken from (defaults to
    `samples` itself). Values that exceed the reference maximum after
    scaling -- e.g. drifted sensor responses from later batches -- are
    clamped at target_max.
    """
    samples = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(samples)) or np.any(samples < 0):
        raise ValueError("samples must be finite and nonnegative")
    ref = samples if reference is None else np.asarray(reference, dtype=float)
    ref_max = float(np.max(ref)) if ref.size else 0.0
    if ref_max <= 0:
        raise ValueError("reference set is all zero; scale factor undefined")
    out = samples * (target_max / ref_max)
    if clamp:
        np.clip(out, 0.0, target_max, out=out)
    return out


def normalize_intensity(sample: np.ndarray) -> np.ndarray:
    """Divide by the sample sum so the output sums to 1 (rowwise for 2-D)."""
    sample = np.asarray(sample, dtype=float)
    s = sample.sum(axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("cannot intensity-normalize a zero vector")
    return sample / s


def apply_model_scaling(sample: np.ndarray, config: PreprocessConfig) -> np.ndarray:
    """Multiply an intensity-normalized sample by d/k, then by the ET input scale."""
    sample = np.asarray(sample, dtype=float)
    d = sample.shape[-1]
    return sample * (d / config.reference_dimension) * config.et_input_scale


def heterogeneous_duplicate(sample: np.ndarray, proj: EtMcProjection) -> np.ndarray:
    """Project onto mitral slots; defensively clamp into [0, target_max]."""
    out = proj.apply(sample)
    np.clip(out, 0.0, proj.config.target_max_current, out=out)
    return out


@dataclass
class ThresholdScaling:
    """Dimension-adjusted threshold parameters for the granule-cell layer."""

    learning_vth_max: float
    nonlearning_fanin: int
    dimension: int
    reference_dimension: int


def scale_thresholds_for_dimension(base_vth_max: float, nonlearning_fanin: int,
                                   config: PreprocessConfig, d: int) -> ThresholdScaling:
    """Scale the learning-GC threshold ceiling by d/k; keep non-learning fan-in absolute.

    Learning granule cells see afferent drive that grows with the mitral
    population, so their maximum threshold scales with d/k; non-learning
    cells keep a constant absolute number of afferents instead, which keeps
    their spike fraction flat across dimensions.
    """
    factor = d / config.reference_dimension
    return ThresholdScaling(
        learning_vth_max=base_vth_max * factor,
        nonlearning_fanin=nonlearning_fanin,
        dimension=d,
        reference_dimension=config.reference_dimension,
    )


class GlomerularPreprocessor(BaseEstimator, TransformerMixin):
    """Scikit-learn transformer running the full regularization pipeline.

    fit() freezes the scaling reference maximum from the training batch and
    draws the ET->MC projection; transform() maps raw (n, d) sensor data to
    (n, d*q) mitral input currents. Stateless w.r.t. the data otherwise, so
    it composes into sklearn Pipelines ahead of SapinetClassifier.
    """

    def __init__(self, target_max_current=20.0, duplication_factor=5, et_weight_max=0.65,
                 et_input_scale=10.0, reference_dimension=20, density=0.1, random_state=0):
        self.target_max_current = target_max_current
        self.duplication_factor = duplication_factor
        self.et_weight_max = et_weight_max
        self.et_input_scale = et_input_scale
        self.reference_dimension = reference_dimension
        self.density = density
        self.random_state = random_state

    def _config(self) -> PreprocessConfig:
        return PreprocessConfig(
            target_max_current=self.target_max_current,
            duplication_factor=self.duplication_factor,
            et_weight_max=self.et_weight_max,
            et_input_scale=self.et_input_scale,
            reference_dimension=self.reference_dimension,
            density=self.density,
            rng_seed=0 if self.random_state is None else int(self.random_state),
        )

    def fit(self, X, y=None):
        X = self._validate(X)
        config = self._config()
        self.n_features_in_ = X.shape[1]
        self.reference_max_ = float(np.max(X))
        if self.reference_max_ <= 0:
            raise ValueError("reference batch is all zero; scale factor undefined")
        self.projection_ = EtMcProjection(X.shape[1], config)
        self.config_ = config
        return self

    def transform(self, X):
        if not hasattr(self, "projection_"):
            raise RuntimeError("GlomerularPreprocessor must be fitted before transform")
        X = self._validate(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        ref = np.array([[self.reference_max_]])
        scaled = scale(X, self.config_.target_max_current, reference=ref)
        normalized = normalize_intensity(scaled)
        modeled = apply_model_scaling(normalized, self.config_)
        return heterogeneous_duplicate(modeled, self.projection_)

    @staticmethod
    def _validate(X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise ValueError("expected a 2-D array of samples")
        if not np.all(np.isfinite(X)):
            raise ValueError("samples must be finite")
        if np.any(X < 0):
            raise ValueError("sensor responses must be nonnegative")
        return X
