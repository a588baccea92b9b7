"""Classification and diagnostics on spike patterns.

A pattern is the per-mitral-cell spike step of one gamma cycle (-1 = no
spike); two spikes match when cell index and step agree, i.e. spike times
are compared at one-integration-step resolution.  Classification compares
every cycle of the unknown against the stored last-cycle pattern of each
trained class and takes the best Jaccard similarity; if the best class is
still farther than the classifier confidence, the sample is labeled
none-of-the-above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NONE_OF_THE_ABOVE",
    "ClassifierConfig",
    "Prediction",
    "jaccard_similarity",
    "classify",
    "goodness_of_preprocessing",
    "interneuron_overlap",
    "cluster_distances",
]

NONE_OF_THE_ABOVE = "none_of_the_above"


@dataclass
class ClassifierConfig:
    """confidence: Jaccard-distance ceiling beyond which a sample is unknown."""

    confidence: float = 0.5
    compare_cycles: tuple | None = None   # cycle indices to match; None = all

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


@dataclass
class Prediction:
    label: object
    similarity: float
    per_class: dict = field(default_factory=dict)

    @property
    def is_unknown(self) -> bool:
        return isinstance(self.label, str) and self.label == NONE_OF_THE_ABOVE


def jaccard_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """|A & B| / |A | B| over (cell, spike step) events; two empty sets -> 1."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("patterns must cover the same mitral population")
    a_on = a >= 0
    b_on = b >= 0
    inter = int(np.count_nonzero(a_on & b_on & (a == b)))
    union = int(np.count_nonzero(a_on)) + int(np.count_nonzero(b_on)) - inter
    if union == 0:
        return 1.0
    return inter / union


def classify(test_cycles: np.ndarray, patterns: list[np.ndarray], labels: list,
             config: ClassifierConfig | None = None) -> Prediction:
    """Best-cycle Jaccard match of an unknown sniff against the trained store.

    `test_cycles` is (n_cycles, n_mc); each trained pattern is the class's
    last-cycle record. Store order breaks ties (earliest trained wins).
    """
    config = config or ClassifierConfig()
    if len(patterns) == 0:
        raise ValueError("cannot classify with an empty trained-pattern store")
    cycles = np.atleast_2d(np.asarray(test_cycles))
    if config.compare_cycles is not None:
        cycles = cycles[list(config.compare_cycles)]
    per_class = {}
    best_label, best_sim = None, -1.0
    for pattern, label in zip(patterns, labels):
        sim = max(jaccard_similarity(cycle, pattern) for cycle in cycles)
        per_class[label] = sim
        if sim > best_sim:
            best_label, best_sim = label, sim
    if 1.0 - best_sim > config.confidence:
        return Prediction(NONE_OF_THE_ABOVE, best_sim, per_class)
    return Prediction(best_label, best_sim, per_class)


def goodness_of_preprocessing(spike_fractions, threshold: float = 0.9) -> float:
    """Scalar in [0, 1] scoring spike-count consistency across samples.

    g_p = min(v) * [max(v) < threshold] * mean(v_i / max(v)), with v the
    per-sample fraction of cells that spiked.  Any silent sample or any
    sample above the sparsity threshold zeroes the score.
    """
    v = np.asarray(spike_fractions, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one sample")
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("spike fractions must be in [0, 1]")
    vmax = float(v.max())
    if vmax >= threshold or vmax == 0.0:
        return 0.0
    return float(v.min()) * float(np.mean(v / vmax))


def interneuron_overlap(spike_sets: list[set]) -> np.ndarray:
    """Pairwise |A & B| / |A | B| over per-stimulus interneuron spike sets."""
    n = len(spike_sets)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            a, b = spike_sets[i], spike_sets[j]
            union = len(a | b)
            out[i, j] = out[j, i] = 1.0 if union == 0 else len(a & b) / union
    return out


def cluster_distances(X: np.ndarray, y) -> tuple[np.ndarray, list]:
    """Mean pairwise Euclidean distances within and between label groups.

    Returns (D, labels) where D[i, i] is the intra-cluster mean distance
    (nan for singleton classes) and D[i, j] the inter-cluster mean.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    labels = sorted(set(y.tolist()))
    groups = [X[y == lab] for lab in labels]
    n = len(labels)
    out = np.zeros((n, n))
    for i in range(n):
        gi = groups[i]
        for j in range(i, n):
            gj = groups[j]
            diff = gi[:, None, :] - gj[None, :, :]
            dist = np.sqrt((diff ** 2).sum(axis=2))
            if i == j:
                if len(gi) < 2:
                    out[i, i] = np.nan
                else:
                    iu = np.triu_indices(len(gi), k=1)
                    out[i, i] = float(dist[iu].mean())
            else:
                out[i, j] = out[j, i] = float(dist.mean())
    return out, labels
