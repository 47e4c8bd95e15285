import math

import numpy as np
import pytest
import scipy.sparse as sp

from gftk import (
    FormatError,
    Graph,
    GraphError,
    OperatorKind,
    build_operator,
    knn_graph,
    path_graph,
    prenormalize_adjacency,
    read_graph,
    ring_graph,
    write_graph,
)
from gftk.graph import graphs_equal, read_points, spectral_radius, write_points
from oracles import dense_adjacency, dense_laplacian
from conftest import make_random_graph


def dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


class TestGraphType:
    def test_rejects_out_of_range_index(self):
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(0, 2, 1.0)])

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(GraphError):
            Graph.from_edges(2, [(0, 1, 0.0)])

    def test_rejects_duplicate_pair_in_either_order(self):
        with pytest.raises(GraphError):
            Graph.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0)])

    def test_coords_length_checked(self):
        with pytest.raises(GraphError):
            Graph.from_edges(3, [(0, 1, 1.0)], coords=[(0, 0), (1, 1)])

    def test_stored_once_per_pair(self):
        g = Graph.from_edges(3, [(2, 0, 1.5)])
        assert g.edges() == [(0, 2, 1.5)]

    def test_inputs_not_frozen_by_construction(self):
        w = np.array([1.0, 2.0])
        Graph(3, np.array([0, 1]), np.array([1, 2]), w)
        w[0] = 5.0


class TestKnn:
    def test_triangle_weights(self):
        g = knn_graph(np.array([[0, 0], [1, 0], [0, 1.0]]), 2, 0.3)
        W = dense(g.adjacency())
        assert W[0, 1] == pytest.approx(3.8659e-3, rel=1e-4)
        assert W[0, 1] == pytest.approx(math.exp(-1 / 0.18), rel=1e-14)
        assert W[1, 2] == pytest.approx(1.4945e-5, rel=1e-4)
        assert g.n_edges == 3

    def test_coincident_points_weight_one_with_warning(self):
        with pytest.warns(UserWarning):
            g = knn_graph(np.array([[0.3, 0.3], [0.3, 0.3]]), 1, 1.0)
        assert g.edges() == [(0, 1, 1.0)]

    def test_union_gives_at_least_k_neighbours(self, rng):
        g = knn_graph(rng.uniform(size=(500, 2)), 10, 0.3)
        counts = np.bincount(np.concatenate([g.src, g.dst]), minlength=500)
        assert counts.min() >= 10

    def test_union_rule(self):
        # 3 picks 2, but 2's nearest is 1: the pair (2, 3) is still an edge
        pts = np.array([[0, 0], [1, 0], [1.5, 0], [4, 0.0]])
        g = knn_graph(pts, 1, 1.0)
        pairs = {(i, j) for i, j, _ in g.edges()}
        assert pairs == {(0, 1), (1, 2), (2, 3)}

    def test_coords_stored(self, rng):
        pts = rng.uniform(size=(20, 2))
        assert np.array_equal(knn_graph(pts, 3, 0.3).coords, pts)

    def test_errors(self):
        with pytest.raises(GraphError):
            knn_graph(np.array([[0.0, 0.0]]), 1, 1.0)
        with pytest.raises(GraphError):
            knn_graph(np.array([[0, 0], [1, 1.0]]), 2, 1.0)
        with pytest.raises(GraphError):
            knn_graph(np.array([[0, 0], [1, 1.0]]), 1, 0.0)

    def test_large_input_matches_brute_force(self, rng):
        from gftk import graph as graph_mod

        pts = rng.uniform(size=(400, 2))
        a = knn_graph(pts, 6, 0.2)
        old = graph_mod._BRUTE_KNN_MAX
        graph_mod._BRUTE_KNN_MAX = 10
        try:
            b = knn_graph(pts, 6, 0.2)
        finally:
            graph_mod._BRUTE_KNN_MAX = old
        assert graphs_equal(a, b)


class TestOperators:
    def test_path2_laplacian(self):
        L = dense(build_operator(path_graph(2), OperatorKind.COMBINATORIAL_LAPLACIAN))
        assert np.array_equal(L, [[1, -1], [-1, 1]])

    def test_ring4_normalized_adjacency(self):
        g = ring_graph(4)
        An = dense(build_operator(g, OperatorKind.NORMALIZED_ADJACENCY))
        assert np.allclose(An, dense(g.adjacency()) / 2, atol=1e-12)

    def test_triangle_degree(self):
        g = Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
        assert np.array_equal(dense(build_operator(g, "degree")), np.diag([2.0, 2, 2]))

    @pytest.mark.parametrize("seed", range(5))
    def test_laplacians_against_dense_assembly(self, seed):
        g = make_random_graph(seed)
        L = dense(build_operator(g, OperatorKind.COMBINATORIAL_LAPLACIAN))
        assert np.abs(L - dense_laplacian(g.n, g.edges())).max() <= 1e-12
        assert np.abs(L @ np.ones(g.n)).max() <= 1e-12
        d = dense_adjacency(g.n, g.edges()).sum(axis=1)
        NL = dense(build_operator(g, OperatorKind.NORMALIZED_LAPLACIAN))
        s = 1 / np.sqrt(d)
        assert np.abs(NL - s[:, None] * L * s[None, :]).max() <= 1e-12
        RW = dense(build_operator(g, OperatorKind.RANDOM_WALK_LAPLACIAN))
        assert np.abs(RW - L / d[:, None]).max() <= 1e-12
        r = np.sqrt(d)
        assert np.abs(NL - r[:, None] * RW / r[None, :]).max() <= 1e-12

    def test_isolated_vertex_rejected_for_normalized(self):
        g = Graph.from_edges(3, [(0, 1, 1.0)])
        for kind in (OperatorKind.NORMALIZED_LAPLACIAN, OperatorKind.RANDOM_WALK_LAPLACIAN):
            with pytest.raises(GraphError):
                build_operator(g, kind)

    @pytest.mark.parametrize("seed", range(8))
    def test_power_iteration_against_dense(self, seed):
        g = make_random_graph(100 + seed, n=int(np.random.default_rng(seed).integers(3, 51)))
        A = dense(g.adjacency())
        ref = np.abs(np.linalg.eigvalsh(A)).max()
        assert abs(g.mu_max() - ref) <= 1e-8 * max(1, ref)

    def test_power_iteration_large_sparse(self, rng):
        g = knn_graph(rng.uniform(size=(300, 2)), 8, 0.2)
        A = g.adjacency()
        ref = np.abs(np.linalg.eigvalsh(A.toarray())).max()
        assert abs(spectral_radius(A) - ref) <= 1e-8 * ref

    def test_bipartite_spectral_radius(self):
        # +mu and -mu have equal magnitude; the shift keeps the iteration convergent
        A = build_operator(path_graph(80), OperatorKind.ADJACENCY)
        assert spectral_radius(A) == pytest.approx(2 * math.cos(math.pi / 81), rel=1e-9)


class TestPrenormalize:
    def test_triangle(self):
        g = prenormalize_adjacency(Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]))
        assert np.allclose(g.weight, 0.25)
        assert np.allclose(g.degrees(), 0.5)

    def test_single_edge(self):
        g = prenormalize_adjacency(Graph.from_edges(2, [(0, 1, 4.0)]))
        assert g.weight[0] == pytest.approx(0.25)

    def test_regular_graph_uniform_rescale(self):
        g = ring_graph(6, 3.0)
        h = prenormalize_adjacency(g)
        assert np.allclose(h.weight, g.weight / 36)

    def test_zero_degree(self):
        with pytest.raises(GraphError):
            prenormalize_adjacency(Graph.from_edges(3, [(0, 1, 1.0)]))


class TestGraphFiles:
    def test_round_trip_with_coords(self, tmp_path, rng):
        g = knn_graph(rng.uniform(size=(30, 2)), 4, 0.3)
        write_graph(tmp_path / "g.txt", g)
        assert graphs_equal(read_graph(tmp_path / "g.txt"), g)

    def test_round_trip_triangle(self, tmp_path):
        g = Graph.from_edges(3, [(0, 1, 0.1), (1, 2, 1 / 3), (0, 2, 2.0)])
        write_graph(tmp_path / "t.txt", g)
        h = read_graph(tmp_path / "t.txt")
        assert sorted(h.edges()) == sorted(g.edges())
        assert h.coords is None

    def test_index_out_of_range(self, tmp_path):
        (tmp_path / "g.txt").write_text("2 1\n0 2 1.0\n")
        with pytest.raises(FormatError, match="index out of range"):
            read_graph(tmp_path / "g.txt")

    @pytest.mark.parametrize(
        "text",
        ["", "2\n", "2 1\n0 1\n", "2 1\n0 1 x\n", "2 2\n0 1 1.0\n", "2 1\n0 1 -1.0\n", "2 1\n0 1 1\ncoords\n0 0\n"],
    )
    def test_malformed(self, tmp_path, text):
        (tmp_path / "g.txt").write_text(text)
        with pytest.raises(FormatError):
            read_graph(tmp_path / "g.txt")

    def test_points_round_trip(self, tmp_path, rng):
        pts = rng.uniform(size=(7, 2))
        write_points(tmp_path / "p.csv", pts)
        assert (tmp_path / "p.csv").read_text().startswith("x,y\n")
        assert np.array_equal(read_points(tmp_path / "p.csv"), pts)
