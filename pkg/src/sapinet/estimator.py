"""Scikit-learn facing API.

`SapinetClassifier` consumes mitral input currents (the output of
`GlomerularPreprocessor`) and exposes the one-shot sequential protocol as
fit/partial_fit/predict, so the whole system composes as

    Pipeline([("glom", GlomerularPreprocessor(...)),
              ("net", SapinetClassifier(...))])

fit() trains each row once (one sniff per class); partial_fit() appends
classes online.  predict() returns the trained label with the best
spike-pattern similarity, or `unknown_label` when the best Jaccard distance
exceeds the classifier confidence.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin

from .epl import EplConfig, EplState, build_network, run_sniff, train_one_shot
from .glomerular import GlomerularPreprocessor
from .readout import NONE_OF_THE_ABOVE, ClassifierConfig, Prediction, classify

__all__ = ["SapinetClassifier", "save_pipeline", "load_pipeline"]


class SapinetClassifier(BaseEstimator, ClassifierMixin):
    """One-shot spike-timing classifier over mitral input currents.

    Parameters
    ----------
    epl_config : EplConfig, optional
        Structural/plasticity configuration; defaults to `EplConfig()`.
    confidence : float
        Jaccard-distance ceiling; beyond it predictions become
        `unknown_label`.
    compare_cycles : tuple of int, optional
        Test cycles matched against the stored patterns (default: all).
    unknown_label : object
        Label emitted for none-of-the-above (default: the module sentinel).
    random_state : int, optional
        Overrides `epl_config.rng_seed` so replicate networks differ.
    n_jobs : int, optional
        Process parallelism for predict() over samples.
    """

    def __init__(self, epl_config: EplConfig | None = None, confidence: float = 0.5,
                 compare_cycles=None, unknown_label=None, random_state=None, n_jobs=None):
        self.epl_config = epl_config
        self.confidence = confidence
        self.compare_cycles = compare_cycles
        self.unknown_label = unknown_label
        self.random_state = random_state
        self.n_jobs = n_jobs

    # -- protocol ---------------------------------------------------------

    def _effective_config(self) -> EplConfig:
        config = self.epl_config if self.epl_config is not None else EplConfig()
        if self.random_state is not None:
            config = dataclasses.replace(config, rng_seed=int(self.random_state))
        return config

    def _classifier_config(self) -> ClassifierConfig:
        cycles = tuple(self.compare_cycles) if self.compare_cycles is not None else None
        return ClassifierConfig(confidence=self.confidence, compare_cycles=cycles)

    def fit(self, X, y):
        """Reset the network and train one sniff per row (labels must be unique)."""
        X, y = self._validate(X, y)
        config = self._effective_config()
        q = config.duplication_factor
        if X.shape[1] % q:
            raise ValueError(
                f"input width {X.shape[1]} is not a multiple of duplication factor {q}"
            )
        self.state_ = build_network(config, X.shape[1] // q)
        self.n_features_in_ = X.shape[1]
        for row, label in zip(X, y):
            train_one_shot(self.state_, row, label)
        self.classes_ = np.asarray(self.state_.trained_labels)
        return self

    def partial_fit(self, X, y, classes=None):
        """Train additional classes online without resetting learned ones."""
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        X, y = self._validate(X, y)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        for row, label in zip(X, y):
            train_one_shot(self.state_, row, label)
        self.classes_ = np.asarray(self.state_.trained_labels)
        return self

    def predict_detailed(self, X) -> list[Prediction]:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        cconf = self._classifier_config()
        state = self.state_
        if self.n_jobs in (None, 1) or X.shape[0] < 8:
            return [_predict_one(state, row, cconf) for row in X]
        chunks = np.array_split(np.arange(X.shape[0]), max(1, self.n_jobs * 4))
        chunks = [c for c in chunks if c.size]
        parts = Parallel(n_jobs=self.n_jobs)(
            delayed(_predict_chunk)(state, X[idx], cconf) for idx in chunks
        )
        return [p for part in parts for p in part]

    def predict(self, X):
        preds = self.predict_detailed(X)
        unknown = self.unknown_label if self.unknown_label is not None else NONE_OF_THE_ABOVE
        out = [unknown if p.is_unknown else p.label for p in preds]
        return np.asarray(out, dtype=object)

    def similarity_matrix(self, X) -> np.ndarray:
        """(n_samples, n_classes) best-cycle Jaccard similarity per class."""
        preds = self.predict_detailed(X)
        return np.array([[p.per_class[c] for c in self.state_.trained_labels] for p in preds])

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        arrays = self.state_.to_arrays()
        arrays["clf_confidence"] = np.array(self.confidence)
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path) -> "SapinetClassifier":
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
        state = EplState.from_arrays(arrays)
        clf = cls(epl_config=state.config, confidence=float(arrays["clf_confidence"]))
        clf.state_ = state
        clf.n_features_in_ = state.n_mc
        clf.classes_ = np.asarray(state.trained_labels)
        return clf

    # -- helpers ------------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "state_"):
            raise RuntimeError("SapinetClassifier is not fitted")

    @staticmethod
    def _validate(X, y):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        y = np.asarray(y)
        if X.ndim != 2 or not np.all(np.isfinite(X)) or np.any(X < 0):
            raise ValueError("inputs must be a 2-D array of finite nonnegative currents")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y length mismatch")
        return X, y


def _predict_one(state: EplState, currents: np.ndarray, cconf: ClassifierConfig) -> Prediction:
    result = run_sniff(state, currents)
    return classify(result.soma_steps, state.trained_patterns, state.trained_labels, cconf)


def _predict_chunk(state, rows, cconf):
    return [_predict_one(state, row, cconf) for row in rows]


def save_pipeline(path, pre: GlomerularPreprocessor, clf: SapinetClassifier) -> None:
    """Persist a fitted preprocessor + classifier pair as one checkpoint file."""
    import json

    arrays = clf.state_.to_arrays()
    arrays["clf_confidence"] = np.array(clf.confidence)
    pre_meta = {
        "params": pre.get_params(),
        "reference_max": pre.reference_max_,
        "n_features_in": pre.n_features_in_,
    }
    arrays["pre_meta_json"] = np.frombuffer(
        json.dumps(pre_meta, sort_keys=True).encode(), dtype=np.uint8
    )
    arrays["pre_afferent_idx"] = pre.projection_.afferent_idx
    arrays["pre_afferent_w"] = pre.projection_.afferent_w
    np.savez_compressed(path, **arrays)


def load_pipeline(path) -> tuple[GlomerularPreprocessor, SapinetClassifier]:
    import json

    from .glomerular import EtMcProjection

    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    state = EplState.from_arrays(arrays)
    clf = SapinetClassifier(epl_config=state.config, confidence=float(arrays["clf_confidence"]))
    clf.state_ = state
    clf.n_features_in_ = state.n_mc
    clf.classes_ = np.asarray(state.trained_labels)

    pre_meta = json.loads(bytes(arrays["pre_meta_json"]).decode())
    pre = GlomerularPreprocessor(**pre_meta["params"])
    pre.n_features_in_ = int(pre_meta["n_features_in"])
    pre.reference_max_ = float(pre_meta["reference_max"])
    pre.config_ = pre._config()
    proj = EtMcProjection(pre.n_features_in_, pre.config_)
    proj.afferent_idx = np.array(arrays["pre_afferent_idx"])
    proj.afferent_w = np.array(arrays["pre_afferent_w"])
    n_slots = pre.n_features_in_ * pre.config_.duplication_factor
    proj.weights = np.zeros((pre.n_features_in_, n_slots))
    fanin = proj.afferent_idx.shape[1]
    rows = proj.afferent_idx.ravel()
    cols = np.repeat(np.arange(n_slots), fanin)
    proj.weights[rows, cols] = proj.afferent_w.ravel()
    pre.projection_ = proj
    return pre, clf
