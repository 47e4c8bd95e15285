import numpy as np
import pytest

from gftk import InnerProduct, OperatorKind, VariationOperator, build_operator, gft_basis_hpsd, knn_graph
from gftk.clustering import (
    CONFIGS,
    ClusterConfig,
    Partition,
    c_means,
    indicator_matrix,
    lowpass_indicator_study,
    make_dataset,
    ncut,
    normalize_features,
    run_experiment,
    run_sweep,
    score,
    spectral_embed,
    write_curve_csv,
    write_report_csv,
)
from gftk.errors import DimensionError
from oracles import combinatorial_cut_ncut, dense_adjacency, subspace_projector
from conftest import make_random_graph

SMALL = ClusterConfig(n_sparse=8, n_dense=40, gtv_restarts=2, kmeans_restarts=5)


def lap_basis(g, Q):
    return gft_basis_hpsd(build_operator(g, OperatorKind.COMBINATORIAL_LAPLACIAN), Q)


class TestDataset:
    def test_shapes_and_labels(self):
        pts, y = make_dataset(ClusterConfig())
        assert pts.shape == (330, 2)
        assert (y == 0).sum() == 30 and (y == 1).sum() == 300
        assert np.array_equal(make_dataset(ClusterConfig())[0], pts)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ClusterConfig(n_sparse=1)
        with pytest.raises(ValueError):
            ClusterConfig(sigma=0.0)


class TestCMeans:
    def test_separated_blobs(self, rng):
        X = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(5, 0.1, (30, 2))])
        p = c_means(X, 2, seed=1)
        truth = np.r_[np.zeros(20, int), np.ones(30, int)]
        assert score(p.labels, truth)["accuracy"] == 1.0

    def test_deterministic_and_one_dim(self, rng):
        X = rng.standard_normal(40)
        assert np.array_equal(c_means(X, 3, seed=4).labels, c_means(X, 3, seed=4).labels)

    def test_duplicate_points_no_empty_cluster(self):
        X = np.vstack([np.zeros((10, 2)), np.ones((1, 2))])
        p = c_means(X, 3, seed=0, restarts=3)
        assert len(np.unique(p.labels)) == 3

    def test_bad_c(self):
        with pytest.raises(ValueError):
            c_means(np.zeros((3, 2)), 4)

    def test_partition_validation(self):
        with pytest.raises(ValueError):
            Partition(np.array([0, 2]), 2)


class TestScore:
    def test_perfect_and_swapped(self):
        t = np.array([0, 0, 1, 1, 1])
        assert score(t, t) == {"accuracy": 1.0, "f1_sparse": 1.0}
        assert score(1 - t, t) == {"accuracy": 1.0, "f1_sparse": 1.0}

    def test_f1(self):
        t = np.array([0, 0, 1, 1, 1, 1])
        lab = np.array([0, 1, 1, 1, 1, 0])
        s = score(lab, t)
        assert s["accuracy"] == pytest.approx(4 / 6)
        assert s["f1_sparse"] == pytest.approx(0.5)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            score([0, 1], [0, 1, 1])


class TestNcut:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_combinatorial_cut(self, seed):
        g = make_random_graph(seed)
        r = np.random.default_rng(seed)
        C = 3
        lab = np.r_[np.arange(C), r.integers(0, C, g.n - C)]
        r.shuffle(lab)
        v = ncut(g, Partition(lab, C), VariationOperator.quadratic(g, "L"), InnerProduct.identity(g.n))
        assert v == pytest.approx(combinatorial_cut_ncut(g.adjacency().toarray(), lab), abs=1e-10)

    def test_singleton_split_from_definition(self):
        g = make_random_graph(40, n=10)
        d = g.degrees()
        lab = np.zeros(10, int)
        lab[0] = 1
        L = VariationOperator.quadratic(g, "L")
        v = ncut(g, Partition(lab, 2), L, InnerProduct.identity(10))
        assert v == pytest.approx(d[0] + d[0] / 9, rel=1e-12)

    def test_indicator_orthonormal(self, rng):
        g = make_random_graph(41)
        lab = rng.integers(0, 3, g.n)
        lab[:3] = [0, 1, 2]
        Q = InnerProduct.degree(g)
        H = indicator_matrix(lab, 3, Q)
        assert np.abs(H.T @ (Q.q[:, None] * H) - np.eye(3)).max() <= 1e-12

    def test_requires_nonempty(self):
        from gftk.errors import GraphError

        g = make_random_graph(0)
        with pytest.raises(GraphError):
            ncut(g, Partition(np.zeros(g.n, int), 2), VariationOperator.gtv(g), InnerProduct.identity(g.n))


class TestEmbedding:
    @pytest.mark.parametrize("seed", range(3))
    def test_normalized_vs_random_walk(self, seed):
        pts, _ = make_dataset(ClusterConfig(n_sparse=10, n_dense=40, seed=seed))
        g = knn_graph(pts, 8, 0.5)
        d = g.degrees()
        nl = gft_basis_hpsd(build_operator(g, OperatorKind.NORMALIZED_LAPLACIAN), InnerProduct.identity(g.n))
        ld = lap_basis(g, InnerProduct.degree(g))
        a = spectral_embed(nl, 2)
        b = np.sqrt(d)[:, None] * spectral_embed(ld, 2)
        for c in range(2):
            assert min(np.abs(a[:, c] - b[:, c]).max(), np.abs(a[:, c] + b[:, c]).max()) <= 1e-8

    def test_normalize_features(self):
        f = normalize_features([[3.0, 4.0], [0.0, 2.0]])
        assert np.allclose(f, [[0.6, 0.8], [0, 1]])
        with pytest.raises(ValueError):
            normalize_features([[0.0, 0.0]])


class TestLowpassStudy:
    def test_curve_properties(self):
        pts, y = make_dataset(ClusterConfig(n_sparse=10, n_dense=50))
        g = knn_graph(pts, 8, 0.4)
        b = lap_basis(g, InnerProduct.degree(g))
        rows = lowpass_indicator_study(b, y)
        q = np.array([r["qmse"] for r in rows])
        assert q[-1] <= 1e-20
        assert np.all(np.diff(q) <= 1e-12 * q.max())
        with pytest.raises(IndexError):
            lowpass_indicator_study(b, y, cutoffs=[b.n])


class TestExperiment:
    def test_all_configs_small(self, tmp_path):
        res = run_experiment(SMALL)
        assert [r.config for r in res] == list(CONFIGS)
        for r in res:
            assert 0 <= r.accuracy <= 1 and 0 <= r.f1_sparse <= 1
            assert r.ncut_own >= 0 and r.ncut_gtv_I >= 0
        gtv = res[-1]
        assert gtv.diagnostics["restarts"] == 2
        write_report_csv(tmp_path / "r.csv", res)
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "config,seed,accuracy,f1_sparse,ncut_own,ncut_gtv_I,diagnostics"
        assert len(lines) == 7

    def test_sweep_deterministic(self):
        a = run_sweep(SMALL, [0, 1], ["L,D"])
        b = run_sweep(SMALL, [0, 1], ["L,D"])
        assert [r.seed for r in a] == [0, 1]
        assert all(np.array_equal(x.labels, y.labels) for x, y in zip(a, b))

    def test_unknown_config(self):
        from gftk.clustering import run_config

        pts, y = make_dataset(SMALL)
        with pytest.raises(ValueError):
            run_config("Q,Z", knn_graph(pts, 5, 0.4), pts, y, SMALL)

    def test_curve_csv(self, tmp_path):
        rows = [{"l": 0, "lambda_l": 0.0, "qmse": 1.0, "imse": 2.0}]
        write_curve_csv(tmp_path / "c.csv", rows)
        assert (tmp_path / "c.csv").read_text().splitlines() == ["l,lambda_l,qmse,imse", "0,0.0,1.0,2.0"]
