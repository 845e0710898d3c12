import itertools

import numpy as np
import pytest

from ecgshapegan import shape_model as sm
from ecgshapegan import synthetic
from ecgshapegan.errors import DegenerateCluster, EmptyClass, TooFewSignals
from ecgshapegan.preprocess import T_BEAT, BeatDataset


def exhaustive_kmeans_inertia(vectors, k):
    """Best inertia over every partition into k non-empty groups."""
    n = len(vectors)
    best = np.inf
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) < k:
            continue
        assign = np.array(assign)
        inertia = 0.0
        for c in range(k):
            pts = vectors[assign == c]
            inertia += float(((pts - pts.mean(axis=0)) ** 2).sum())
        best = min(best, inertia)
    return best


class TestKmeans:
    def test_two_well_separated_pairs(self):
        pts = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
        out = sm.kmeans(pts, k=2, seed=0)
        assert out.labels[0] == out.labels[1]
        assert out.labels[2] == out.labels[3]
        assert out.labels[0] != out.labels[2]
        got = sorted(out.centroids.tolist())
        assert np.allclose(got, [[0.05, 0.0], [10.05, 10.0]])

    def test_matches_exhaustive_optimum(self):
        rng = np.random.default_rng(0)
        pts = np.concatenate(
            [rng.normal(0, 0.3, (3, 2)), rng.normal(6, 0.3, (3, 2))]
        )
        out = sm.kmeans(pts, k=2, seed=1)
        d2 = ((pts[:, None] - out.centroids[None]) ** 2).sum(axis=2)
        inertia = float(d2[np.arange(6), out.labels].sum())
        assert inertia == pytest.approx(exhaustive_kmeans_inertia(pts, 2), rel=1e-9)

    def test_k_equals_one(self):
        pts = np.random.default_rng(1).standard_normal((7, 3))
        out = sm.kmeans(pts, k=1, seed=0)
        assert np.all(out.labels == 0)
        assert np.allclose(out.centroids[0], pts.mean(axis=0))

    def test_k_exceeds_n(self):
        with pytest.raises(TooFewSignals):
            sm.kmeans(np.zeros((2, 3)), k=3, seed=0)

    def test_inertia_non_increasing(self):
        pts = np.random.default_rng(2).standard_normal((40, 5))
        out = sm.kmeans(pts, k=4, seed=0)
        hist = out.inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_deterministic(self):
        pts = np.random.default_rng(3).standard_normal((30, 4))
        a = sm.kmeans(pts, k=3, seed=7)
        b = sm.kmeans(pts, k=3, seed=7)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)

    def test_no_empty_clusters(self):
        pts = np.random.default_rng(4).standard_normal((12, 2))
        out = sm.kmeans(pts, k=5, seed=0)
        assert set(out.labels.tolist()) == set(range(5))


class TestAlignment:
    def test_identical_beats_identity_positions(self):
        beat = np.vstack([np.linspace(0, 1, 8), np.random.default_rng(0).standard_normal(8)])
        out = sm.align_cluster([beat.copy(), beat.copy(), beat.copy()])
        assert np.allclose(out.positions, np.arange(8)[None, :])

    def test_singleton_cluster(self):
        beat = np.zeros((2, 6))
        out = sm.align_cluster([beat])
        assert np.array_equal(out.positions, np.arange(6.0)[None, :])

    def test_shifted_peak_pulled_to_reference(self):
        t = np.linspace(0, 1, 16)
        mk = lambda p: np.vstack([t, np.exp(-0.5 * ((np.arange(16) - p) / 1.5) ** 2)])
        beats = [mk(7), mk(7), mk(9)]
        out = sm.align_cluster(beats)
        resampled = sm.resample_homologous(beats[2], out.positions[2])
        # after warping, the shifted beat's peak lands near the reference peak
        assert abs(int(np.argmax(resampled[1])) - 7) <= 1

    def test_positions_monotone(self):
        rng = np.random.default_rng(5)
        beats = [np.vstack([np.linspace(0, 1, 20), rng.standard_normal(20)]) for _ in range(4)]
        out = sm.align_cluster(beats)
        assert np.all(np.diff(out.positions, axis=1) >= 0)

    def test_resample_identity(self):
        beat = np.vstack([np.linspace(0, 1, 10), np.arange(10.0) ** 2])
        assert np.allclose(sm.resample_homologous(beat, np.arange(10.0)), beat)

    def test_resample_midpoints(self):
        beat = np.array([[0.0, 1.0], [2.0, 6.0]])
        out = sm.resample_homologous(beat, np.array([0.5, 0.5]))
        assert np.allclose(out, [[0.5, 0.5], [4.0, 4.0]])


class TestPca:
    def test_two_point_oracle(self):
        # points (-1, 0) and (1, 0): mean 0, eigval ((1)^2 + (-1)^2)/(2-1) = 2
        x = np.array([[-1.0, 0.0], [1.0, 0.0]])
        model = sm.pca_fit(x)
        assert np.allclose(model.mean, [0.0, 0.0])
        assert model.n_components == 1
        assert model.eigvals[0] == pytest.approx(2.0)
        assert np.allclose(np.abs(model.eigvecs[0]), [1.0, 0.0])
        assert model.eigvecs[0][0] > 0  # deterministic sign

    def test_full_rank_reconstruction(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((6, 10))
        model = sm.pca_fit(x, variance=1.0)
        assert model.n_components == 5  # clamped at N - 1
        recon = sm.reconstruct(model, sm.project(model, x))
        assert np.max(np.abs(recon - x)) < 1e-10

    def test_orthonormal_rows(self):
        x = np.random.default_rng(1).standard_normal((8, 12))
        model = sm.pca_fit(x, variance=1.0)
        gram = model.eigvecs @ model.eigvecs.T
        assert np.allclose(gram, np.eye(model.n_components), atol=1e-12)

    def test_eigvals_match_projection_variance(self):
        x = np.random.default_rng(2).standard_normal((20, 6))
        model = sm.pca_fit(x, variance=1.0)
        coeffs = sm.project(model, x)
        var = coeffs.var(axis=0, ddof=1)
        assert np.allclose(var, model.eigvals, rtol=1e-10)

    def test_variance_threshold_selects_fewer(self):
        rng = np.random.default_rng(3)
        # one dominant direction plus tiny noise
        x = np.outer(rng.standard_normal(30), [3.0, 0.0, 0.0]) + 1e-3 * rng.standard_normal((30, 3))
        model = sm.pca_fit(x, variance=0.95)
        assert model.n_components == 1

    def test_eigvals_non_increasing(self):
        x = np.random.default_rng(4).standard_normal((15, 8))
        model = sm.pca_fit(x, variance=1.0)
        assert np.all(np.diff(model.eigvals) <= 1e-12)

    def test_single_sample_rejected(self):
        with pytest.raises(DegenerateCluster):
            sm.pca_fit(np.zeros((1, 4)))


class TestBuildModels:
    def test_structure(self, fixture_dataset, fixture_model_set):
        ms = fixture_model_set
        assert ms.class_labels == [0, 1]
        assert ms.requested_k == 2
        for c in ms.class_labels:
            assert ms.k_of(c) == 2
            for m in ms.models[c]:
                assert m.mean.shape == (2 * T_BEAT,)
                assert m.eigvecs.shape == (m.n_components, 2 * T_BEAT)
                assert m.n_samples >= 2

    def test_cluster_rows_feed_pca(self, fixture_dataset, fixture_model_set):
        rows_of, reduced = sm.cluster_aligned_rows(fixture_dataset, k=2, seed=0)
        assert reduced == {}
        for c, class_rows in rows_of.items():
            assert len(class_rows) == 2
            total = sum(r.shape[0] for r in class_rows)
            assert total == fixture_dataset.class_counts[c]
            for rows, model in zip(class_rows, fixture_model_set.models[c]):
                assert model.n_samples == rows.shape[0]
                assert np.allclose(model.mean, rows.mean(axis=0))

    def test_reduced_k_for_small_class(self):
        ds = synthetic.make_fixture({"N": 20, "V": 3}, seed=1)
        ms = sm.build_shape_models(ds, k=3, seed=0)
        assert ms.k_of(0) == 3
        assert ms.k_of(1) == 1
        assert ms.reduced_k == {1: 1}

    def test_deterministic(self, fixture_dataset):
        a = sm.build_shape_models(fixture_dataset, k=2, seed=0)
        b = sm.build_shape_models(fixture_dataset, k=2, seed=0)
        assert sm.model_set_to_json(a) == sm.model_set_to_json(b)

    def test_empty_dataset(self):
        with pytest.raises(EmptyClass):
            sm.build_shape_models(BeatDataset(), k=2, seed=0)


class TestSynthesize:
    def test_zero_weights_give_means(self, fixture_model_set):
        w = np.zeros((2, fixture_model_set.max_b))
        out = sm.synthesize(fixture_model_set, w, label=0)
        assert np.array_equal(out, fixture_model_set.mean_tensor(0))

    def test_unit_weight_adds_one_eigvec(self, fixture_model_set):
        ms = fixture_model_set
        w = np.zeros((2, ms.max_b))
        w[0, 0] = 2.5
        out = sm.synthesize(ms, w, label=1)
        expect = ms.mean_tensor(1).copy()
        expect[0] += 2.5 * ms.models[1][0].eigvecs[0]
        assert np.allclose(out, expect, atol=1e-12)

    def test_padded_components_inert(self, fixture_model_set):
        ms = fixture_model_set
        # weights on zero-padded rows beyond a cluster's B must not change output
        b0 = ms.models[0][0].n_components
        if b0 == ms.max_b:
            pytest.skip("no padded components in this fixture")
        w = np.zeros((2, ms.max_b))
        w[0, b0:] = 9.0
        out = sm.synthesize(ms, w, label=0)
        assert np.array_equal(out, ms.mean_tensor(0))

    def test_cluster_cycling_for_reduced_class(self):
        ds = synthetic.make_fixture({"N": 20, "V": 3}, seed=1)
        ms = sm.build_shape_models(ds, k=3, seed=0)
        means = ms.mean_tensor(1)
        assert means.shape == (3, 2 * T_BEAT)
        assert np.array_equal(means[0], means[1]) and np.array_equal(means[0], means[2])

    def test_span_matches_reconstruct(self, fixture_model_set):
        ms = fixture_model_set
        rng = np.random.default_rng(0)
        w = rng.standard_normal((2, ms.max_b))
        out = sm.synthesize(ms, w, label=0)
        for k in range(2):
            m = ms.models[0][k]
            expect = sm.reconstruct(m, w[k, : m.n_components])[0]
            assert np.allclose(out[k], expect, atol=1e-12)


class TestModelSerialization:
    def test_round_trip_bitwise(self, fixture_model_set):
        text = sm.model_set_to_json(fixture_model_set)
        back = sm.model_set_from_json(text)
        assert sm.model_set_to_json(back) == text
        for c in fixture_model_set.class_labels:
            for a, b in zip(back.models[c], fixture_model_set.models[c]):
                assert np.array_equal(a.mean, b.mean)
                assert np.array_equal(a.eigvecs, b.eigvecs)
                assert np.array_equal(a.eigvals, b.eigvals)

    def test_save_load(self, fixture_model_set, tmp_path):
        path = tmp_path / "model.json"
        sm.save_model_set(fixture_model_set, path)
        back = sm.load_model_set(path)
        assert sm.model_set_to_json(back) == sm.model_set_to_json(fixture_model_set)

    def test_version_check(self):
        with pytest.raises(ValueError):
            sm.model_set_from_json('{"version": 42}')
