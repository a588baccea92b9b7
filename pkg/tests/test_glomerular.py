import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from sapinet.datagen import OdorSeriesSpec, generate_series, generate_wild_samples
from sapinet.glomerular import (
    EtMcProjection,
    GlomerularPreprocessor,
    PreprocessConfig,
    apply_model_scaling,
    heterogeneous_duplicate,
    normalize_intensity,
    scale,
    scale_thresholds_for_dimension,
)


class TestScale:
    def test_halves_when_max_is_double_target(self):
        X = np.array([[40.0, 10.0], [20.0, 4.0]])
        out = scale(X, 20.0)
        assert np.allclose(out, X / 2.0)

    def test_all_zero_reference_errors(self):
        with pytest.raises(ValueError):
            scale(np.zeros((3, 4)), 20.0)

    def test_frozen_reference_clamps_later_batches(self):
        reference = np.array([[10.0, 5.0]])
        later = np.array([[30.0, 2.0]])  # drifted beyond the reference max
        out = scale(later, 20.0, reference=reference)
        assert out[0, 0] == 20.0  # clamped
        assert out[0, 1] == pytest.approx(4.0)

    def test_preserves_distance_ratios(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 100, size=(6, 8))
        out = scale(X, 20.0)
        d_in = np.linalg.norm(X[:, None] - X[None, :], axis=2)
        d_out = np.linalg.norm(out[:, None] - out[None, :], axis=2)
        iu = np.triu_indices(6, k=1)
        ratios = d_out[iu] / d_in[iu]
        assert np.allclose(ratios, ratios[0])

    def test_rejects_negative_and_non_finite(self):
        with pytest.raises(ValueError):
            scale(np.array([[-1.0, 2.0]]), 20.0)
        with pytest.raises(ValueError):
            scale(np.array([[np.inf, 2.0]]), 20.0)


class TestNormalizeIntensity:
    def test_direct_evaluation(self):
        assert np.allclose(normalize_intensity(np.array([1.0, 1.0, 2.0])), [0.25, 0.25, 0.5])

    def test_concentration_invariance(self):
        x = np.array([2.0, 5.0, 13.0])
        assert np.allclose(normalize_intensity(x), normalize_intensity(3.0 * x), atol=1e-15)

    def test_sums_to_one_for_random_vectors(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0.01, 50, size=(1000, 7))
        sums = normalize_intensity(X).sum(axis=1)
        assert np.all(np.abs(sums - 1.0) < 1e-12)

    def test_zero_vector_errors(self):
        with pytest.raises(ValueError):
            normalize_intensity(np.zeros(5))


class TestModelScaling:
    def test_reference_dimension_identity(self):
        config = PreprocessConfig(reference_dimension=20)
        x = normalize_intensity(np.arange(1.0, 21.0))
        assert np.allclose(apply_model_scaling(x, config), x * 10.0)

    def test_doubled_for_double_dimension(self):
        config = PreprocessConfig(reference_dimension=20)
        x = normalize_intensity(np.arange(1.0, 41.0))
        assert np.allclose(apply_model_scaling(x, config), x * 2.0 * 10.0)


class TestProjection:
    def test_zero_sample_maps_to_zero(self):
        proj = EtMcProjection(10, PreprocessConfig(rng_seed=0))
        assert np.all(heterogeneous_duplicate(np.zeros(10), proj) == 0.0)

    def test_identity_like_wiring(self):
        # degenerate wiring: one afferent per slot at the maximum weight
        proj = EtMcProjection(4, PreprocessConfig(rng_seed=0, density=0.05))
        proj.afferent_w[:] = 0.65
        proj.weights[:] = 0.0
        cols = np.arange(proj.weights.shape[1])
        proj.weights[proj.afferent_idx[:, 0], cols] = 0.65
        x = np.full(4, 2.0)
        out = heterogeneous_duplicate(x, proj)
        assert np.allclose(out, 0.65 * 2.0)

    def test_dimension_mismatch(self):
        proj = EtMcProjection(10, PreprocessConfig(rng_seed=0))
        with pytest.raises(ValueError):
            proj.apply(np.zeros(11))

    def test_no_intracolumn_connections_and_balance(self):
        for seed in range(5):
            config = PreprocessConfig(rng_seed=seed)
            proj = EtMcProjection(12, config)
            own = np.repeat(np.arange(12), config.duplication_factor)
            assert np.all(proj.afferent_idx != own[:, None])
            fan_out = np.bincount(proj.afferent_idx.ravel(), minlength=12)
            assert fan_out.min() == fan_out.max()

    def test_every_slot_has_afferent_weight(self):
        for seed in range(5):
            proj = EtMcProjection(8, PreprocessConfig(rng_seed=seed))
            assert np.all(proj.weights.sum(axis=0) > 0)

    def test_needs_two_columns(self):
        with pytest.raises(ValueError):
            EtMcProjection(1, PreprocessConfig())

    def test_output_clamped_to_target(self):
        proj = EtMcProjection(6, PreprocessConfig(rng_seed=3))
        out = heterogeneous_duplicate(np.full(6, 1e6), proj)
        assert out.max() <= 20.0


class TestThresholdScaling:
    def test_reference_dimension_unchanged(self):
        config = PreprocessConfig(reference_dimension=20)
        ts = scale_thresholds_for_dimension(2.4, 10, config, 20)
        assert ts.learning_vth_max == pytest.approx(2.4)
        assert ts.nonlearning_fanin == 10

    def test_scales_with_dimension(self):
        config = PreprocessConfig(reference_dimension=20)
        ts = scale_thresholds_for_dimension(2.4, 10, config, 640)
        assert ts.learning_vth_max == pytest.approx(2.4 * 32)
        assert ts.nonlearning_fanin == 10  # absolute fan-in is held constant


class TestPreprocessor:
    def test_pipeline_order_is_canonical(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(0, 100, size=(8, 12))
        pre = GlomerularPreprocessor(random_state=2).fit(X)
        got = pre.transform(X)
        ref = np.array([[pre.reference_max_]])
        manual = heterogeneous_duplicate(
            apply_model_scaling(
                normalize_intensity(scale(X, 20.0, reference=ref)), pre.config_),
            pre.projection_)
        assert np.array_equal(got, manual)

    def test_concentration_invariance_end_to_end(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(1, 10, size=(1, 15))
        pre = GlomerularPreprocessor(random_state=1).fit(np.vstack([x * 3.0, x]))
        a = pre.transform(x)
        b = pre.transform(2.0 * x)  # stays below the frozen reference max
        assert np.allclose(a, b, rtol=1e-12)

    def test_sequential_similarity_preserved_at_every_stage(self):
        odors = generate_series(OdorSeriesSpec(dimension=30, inter_odor_distance=15.0,
                                               rng_seed=3))
        pre = GlomerularPreprocessor(random_state=3).fit(odors)
        ref = np.array([[pre.reference_max_]])
        stages = {}
        stages["scaled"] = scale(odors, 20.0, reference=ref)
        stages["normalized"] = normalize_intensity(stages["scaled"])
        stages["projected"] = pre.transform(odors)
        for name, X in stages.items():
            near = np.linalg.norm(X[0] - X[1])
            far = np.linalg.norm(X[0] - X[4])
            assert near < far, name

    def test_degenerate_inputs_pass(self):
        wild = generate_wild_samples(100, rng_seed=0)
        pre = GlomerularPreprocessor(random_state=0).fit(wild)
        out = pre.transform(wild[[37, 38, 39]])  # constant and single-block samples
        assert np.all(np.isfinite(out))

    def test_sklearn_contract(self):
        X = np.random.default_rng(0).uniform(0, 10, size=(4, 6))
        pre = GlomerularPreprocessor(duplication_factor=3, random_state=1)
        cloned = clone(pre)
        assert cloned.get_params() == pre.get_params()
        out = pre.fit_transform(X)
        assert out.shape == (4, 18)
        with pytest.raises(RuntimeError):
            GlomerularPreprocessor().transform(X)
        with pytest.raises(ValueError):
            pre.transform(np.zeros((2, 7)))

    def test_composes_in_sklearn_pipeline(self):
        from sapinet.epl import EplConfig
        from sapinet.estimator import SapinetClassifier

        odors = generate_series(OdorSeriesSpec(dimension=10, inter_odor_distance=25.0,
                                               n_similar=2, rng_seed=4))
        pipe = Pipeline([
            ("glom", GlomerularPreprocessor(random_state=4)),
            ("net", SapinetClassifier(epl_config=EplConfig(
                rng_seed=4, n_learning_gc_per_column=10, n_nonlearning_gc_per_column=10))),
        ])
        y = np.array(["a", "b", "c"])
        pipe.fit(odors, y)
        assert list(pipe.predict(odors)) == ["a", "b", "c"]
