import numpy as np
import pytest

from noisefp import features as ft


class TestFeatureSpec:
    def test_single(self):
        spec = ft.FeatureSpec.single(5)
        assert spec.steps() == (5,)
        assert spec.n_features == 4
        assert "5" in spec.label()

    def test_prefix(self):
        spec = ft.FeatureSpec.prefix(4)
        assert spec.steps() == (1, 2, 3, 4)
        assert spec.n_features == 16

    def test_window(self):
        spec = ft.FeatureSpec.window(5, 2)
        assert spec.steps() == (3, 4, 5)

    def test_window_clamps_to_prefix(self):
        assert ft.FeatureSpec.window(2, 5).steps() == ft.FeatureSpec.prefix(2).steps()
        assert ft.FeatureSpec.window(1, 1).steps() == (1,)

    def test_validation(self):
        with pytest.raises(ValueError):
            ft.FeatureSpec.single(0)
        with pytest.raises(ValueError):
            ft.FeatureSpec.single(10)
        with pytest.raises(ValueError):
            ft.FeatureSpec.window(3, 0)


class TestExtraction:
    def test_run_features_layout(self, fast_ds3):
        run = fast_ds3.runs_for("athens")[0]
        spec = ft.FeatureSpec.window(4, 1)
        x = ft.run_features(run, spec)
        assert x.shape == (8, 8)
        # Column blocks follow the step order (3, 4).
        assert np.allclose(x[:, :4], run.distributions[:, 2, :])
        assert np.allclose(x[:, 4:], run.distributions[:, 3, :])

    def test_build_features_default_labels(self, fast_ds3):
        data = ft.build_features(fast_ds3, ft.FeatureSpec.single(1))
        assert data.x.shape == (3 * 20 * 8, 4)
        assert set(np.unique(data.y)) == {0, 1, 2}
        counts = np.bincount(data.y)
        assert counts.tolist() == [160, 160, 160]

    def test_build_features_machine_subset(self, fast_ds3):
        data = ft.build_features(fast_ds3, ft.FeatureSpec.single(1),
                                 machines=["yorktown", "athens"])
        assert data.x.shape == (2 * 20 * 8, 4)
        # Label 0 belongs to the first listed machine.
        y_first = data.y[:5]
        assert np.all(y_first == 0)

    def test_build_features_labeler_drops(self, fast_ds3):
        data = ft.build_features(
            fast_ds3, ft.FeatureSpec.single(2),
            machines=["athens"],
            labeler=lambda run: 1 if run.run_id < 10 else None,
        )
        assert data.x.shape == (10 * 8, 4)
        assert np.all(data.y == 1)

    def test_build_features_missing_machine(self, fast_ds3):
        with pytest.raises(ValueError, match="missing machine"):
            ft.build_features(fast_ds3, ft.FeatureSpec.single(1), machines=["nix"])

    def test_build_features_empty(self, fast_ds3):
        with pytest.raises(ValueError, match="empty selection"):
            ft.build_features(fast_ds3, ft.FeatureSpec.single(1),
                              machines=["athens"], labeler=lambda run: None)

    def test_from_groups(self, fast_ds3):
        runs_a = fast_ds3.runs_for("athens")[:2]
        runs_b = fast_ds3.runs_for("rome")[:3]
        data = ft.from_groups([(runs_a, -1), (runs_b, +1)], ft.FeatureSpec.single(1))
        assert data.x.shape == (5 * 8, 4)
        assert np.bincount(data.y + 1)[[0, 2]].tolist() == [16, 24]


class TestStandardize:
    def test_train_statistics(self, rng):
        x = rng.normal(loc=3.0, scale=2.0, size=(50, 4))
        train = ft.LabeledSet(x, np.zeros(50, dtype=int))
        (out,) = ft.standardize(train)
        assert np.allclose(out.x.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out.x.std(axis=0), 1.0, atol=1e-12)

    def test_others_use_train_stats(self, rng):
        train = ft.LabeledSet(rng.normal(size=(40, 3)), np.zeros(40, dtype=int))
        other = ft.LabeledSet(rng.normal(size=(10, 3)) + 5.0, np.ones(10, dtype=int))
        strain, sother = ft.standardize(train, other)
        mean, std = ft.scaling_params(train.x)
        assert np.allclose(sother.x, (other.x - mean) / std)

    def test_constant_feature_preserved(self):
        x = np.ones((20, 2))
        x[:, 1] = np.arange(20)
        train = ft.LabeledSet(x, np.zeros(20, dtype=int))
        (out,) = ft.standardize(train)
        assert np.allclose(out.x[:, 0], 0.0)
        assert np.isfinite(out.x).all()
