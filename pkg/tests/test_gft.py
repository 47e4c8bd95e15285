import math

import numpy as np
import pytest
import scipy.sparse as sp

from gftk import (
    DimensionError,
    InnerProduct,
    NotPositiveDefiniteError,
    OperatorKind,
    VariationOperator,
    build_operator,
    forward,
    fundamental_matrix,
    gft_basis,
    gft_basis_hpsd,
    gft_basis_nonhpsd,
    hilbert_map,
    inverse,
    path_graph,
    ring_graph,
    variation_value,
)
from gftk.gft import degenerate_groups, read_basis, sign_normalize, write_basis
from oracles import generalized_eig, ring_laplacian_eigs, subspace_projector
from conftest import make_random_graph

M2 = np.array([[1.0, -1.0], [-1.0, 1.0]])
Q21 = InnerProduct.custom_diagonal([2.0, 1.0])


def lap(g):
    return build_operator(g, OperatorKind.COMBINATORIAL_LAPLACIAN)


def check_basis(b, tol=1e-10):
    n = b.n
    assert np.abs(b.U.conj().T @ b.q.apply(b.U) - np.eye(n)).max() <= tol
    assert np.abs(b.F @ b.U - np.eye(n)).max() <= tol


class TestHpsdSolver:
    def test_two_by_two(self):
        b = gft_basis_hpsd(M2, Q21)
        assert np.allclose(b.freqs, [0.0, 1.5], atol=1e-12)
        assert np.allclose(b.U[:, 0], np.array([1, 1]) / math.sqrt(3), atol=1e-12)
        assert np.allclose(np.abs(b.U[:, 1]), np.array([1, 2]) / math.sqrt(6), atol=1e-12)
        assert abs(b.U[:, 0] @ Q21.apply(b.U[:, 1])) <= 1e-12

    def test_ring8_frequencies(self):
        b = gft_basis_hpsd(lap(ring_graph(8)), InnerProduct.identity(8))
        assert np.abs(b.freqs - ring_laplacian_eigs(8)).max() <= 1e-10
        assert b.provenance["degenerate_groups"] == [[1, 2], [3, 4], [5, 6]]

    @pytest.mark.parametrize("seed", range(4))
    def test_constant_first_mode_any_diagonal_q(self, seed):
        g = make_random_graph(seed)
        q = np.random.default_rng(seed).uniform(0.2, 3.0, g.n)
        Q = InnerProduct.custom_diagonal(q)
        b = gft_basis_hpsd(lap(g), Q)
        assert abs(b.freqs[0]) <= 1e-10
        assert np.allclose(b.U[:, 0], 1 / math.sqrt(q.sum()), atol=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_against_lapack_generalized_driver(self, seed):
        g = make_random_graph(seed)
        r = np.random.default_rng(seed)
        B = r.standard_normal((g.n, g.n))
        Qm = B @ B.T + g.n * np.eye(g.n)
        L = lap(g).toarray()
        for Q in (InnerProduct.general(Qm), InnerProduct.custom_diagonal(np.diag(Qm))):
            b = gft_basis_hpsd(L, Q)
            w, _ = generalized_eig(L, Q.matrix())
            assert np.abs(b.freqs - np.clip(w, 0, None)).max() <= 1e-9
            check_basis(b, 1e-10)
            for l in range(g.n):
                res = L @ b.U[:, l] - b.freqs[l] * Q.apply(b.U[:, l])
                assert np.linalg.norm(res) <= 1e-8

    def test_frequencies_equal_variations(self):
        g = make_random_graph(11)
        op = VariationOperator.quadratic(g, "GQV")
        b = gft_basis_hpsd(op, InnerProduct.degree(g))
        for l in range(g.n):
            assert b.freqs[l] == pytest.approx(variation_value(op, b.U[:, l]), abs=1e-8)
        assert np.all(np.diff(b.freqs) >= 0)

    def test_no_clamp_on_laplacian(self):
        b = gft_basis_hpsd(lap(make_random_graph(12)), InnerProduct.identity(make_random_graph(12).n))
        assert b.provenance["min_raw_eigenvalue"] >= -1e-12

    def test_rejects_indefinite_and_mismatch(self):
        with pytest.raises(NotPositiveDefiniteError):
            gft_basis_hpsd(np.diag([1.0, -1.0]), InnerProduct.identity(2))
        with pytest.raises(DimensionError):
            gft_basis_hpsd(M2, InnerProduct.identity(3))

    def test_sign_convention(self):
        U = sign_normalize(np.array([[-3.0, 1.0], [1.0, -1.0]]))
        assert U[0, 0] == 3.0
        # tie in magnitude: lowest index decides
        assert U[0, 1] == 1.0 and U[1, 1] == -1.0
        b = gft_basis_hpsd(lap(make_random_graph(3)), InnerProduct.identity(make_random_graph(3).n))
        for l in range(b.n):
            i = int(np.argmax(np.abs(b.U[:, l]) >= np.abs(b.U[:, l]).max() * (1 - 1e-9)))
            assert b.U[i, l] > 0

    def test_degenerate_groups(self):
        assert degenerate_groups([0.0, 1.0, 1.0 + 1e-12, 2.0]) == [[1, 2]]
        assert degenerate_groups([0.0, 1.0]) == []


class TestTransforms:
    def test_p2_forward(self):
        b = gft_basis_hpsd(lap(path_graph(2)), InnerProduct.identity(2))
        assert np.allclose(b.U, np.array([[1, 1], [1, -1]]) / math.sqrt(2), atol=1e-12)
        assert np.allclose(forward(b, np.array([1.0, 0.0])), [1 / math.sqrt(2)] * 2, atol=1e-12)

    def test_mode_to_delta_and_zero(self):
        g = make_random_graph(7)
        b = gft_basis_hpsd(lap(g), InnerProduct.degree(g))
        for l in range(b.n):
            e = forward(b, b.U[:, l])
            assert np.abs(e - np.eye(b.n)[l]).max() <= 1e-10
        assert np.array_equal(forward(b, np.zeros(b.n)), np.zeros(b.n))

    def test_round_trip_and_columns(self, rng):
        g = make_random_graph(8)
        b = gft_basis_hpsd(lap(g), InnerProduct.identity_plus_degree(g))
        X = rng.standard_normal((g.n, 3))
        assert np.allclose(inverse(b, forward(b, X)), X, atol=1e-10)
        assert np.allclose(b.inverse(b.forward(X[:, 0])), X[:, 0], atol=1e-10)

    def test_dimension_errors(self):
        b = gft_basis_hpsd(M2, Q21)
        with pytest.raises(DimensionError):
            forward(b, np.ones(3))
        with pytest.raises(DimensionError):
            inverse(b, np.ones(3))


class TestFundamentalMatrix:
    def test_random_walk_laplacian(self):
        g = make_random_graph(2)
        Z = fundamental_matrix(lap(g), InnerProduct.degree(g))
        assert sp.issparse(Z)
        RW = build_operator(g, OperatorKind.RANDOM_WALK_LAPLACIAN)
        assert abs(Z - RW).max() <= 1e-12

    def test_identity_q(self):
        g = make_random_graph(2)
        assert abs(fundamental_matrix(lap(g), InnerProduct.identity(g.n)) - lap(g)).max() == 0

    def test_two_by_two(self):
        assert np.array_equal(fundamental_matrix(M2, Q21), [[0.5, -0.5], [-1.0, 1.0]])

    def test_basis_form_and_eigenpairs(self, rng):
        g = make_random_graph(5)
        B = rng.standard_normal((g.n, g.n))
        Q = InnerProduct.general(B @ B.T + g.n * np.eye(g.n))
        b = gft_basis_hpsd(lap(g), Q)
        Z = fundamental_matrix(b)
        assert np.allclose(Z, fundamental_matrix(lap(g).toarray(), Q), atol=1e-9)
        for l in range(b.n):
            assert np.linalg.norm(Z @ b.U[:, l] - b.freqs[l] * b.U[:, l]) <= 1e-8

    def test_nonquadratic_needs_basis(self):
        with pytest.raises(ValueError):
            fundamental_matrix(VariationOperator.gtv(ring_graph(4)), InnerProduct.identity(4))


class TestHilbertMap:
    def test_diagonal(self):
        assert np.array_equal(hilbert_map(np.array([1.0, 1.0]), InnerProduct.custom_diagonal([4.0, 9.0])), [2.0, 3.0])

    def test_isometry_and_inverse(self, rng):
        B = rng.standard_normal((6, 6))
        for Q in (InnerProduct.general(B @ B.T + np.eye(6)), InnerProduct.custom_diagonal(rng.uniform(0.1, 4, 6))):
            x = rng.standard_normal(6)
            y = hilbert_map(x, Q)
            assert np.linalg.norm(y) ** 2 == pytest.approx(x @ Q.apply(x), rel=1e-12)
            assert np.allclose(hilbert_map(y, Q, "backward"), x, atol=1e-12)

    def test_normalized_laplacian_to_random_walk(self):
        g = make_random_graph(4)
        D = InnerProduct.degree(g)
        NL = build_operator(g, OperatorKind.NORMALIZED_LAPLACIAN).toarray()
        RW = build_operator(g, OperatorKind.RANDOM_WALK_LAPLACIAN).toarray()
        w, V = np.linalg.eigh(NL)
        for l in range(g.n):
            x = hilbert_map(V[:, l], D, "backward")
            assert np.linalg.norm(RW @ x - w[l] * x) <= 1e-10

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            hilbert_map(np.ones(2), InnerProduct.general(np.eye(2) * 2), "sideways")


class TestRingDemo:
    def test_modes_vanishing_at_reweighted_vertex(self):
        g = ring_graph(8)
        L = lap(g).toarray()
        q = np.ones(8)
        q[0] = 10.0
        b = gft_basis_hpsd(L, InnerProduct.identity(8))
        found = 0
        for grp in [[0], [1, 2], [3, 4], [5, 6], [7]]:
            V = b.U[:, grp]
            _, _, vh = np.linalg.svd(V[:1, :])
            u = V @ vh[-1]
            if abs(u[0]) > 1e-10:
                continue
            u /= np.linalg.norm(u)
            found += 1
            lam = b.freqs[grp[0]]
            assert np.linalg.norm(L @ u - lam * q * u) <= 1e-8
            assert u @ L @ u / (u @ (q * u)) == pytest.approx(lam, abs=1e-10)
        assert found == 3


class TestBasisFiles:
    def test_round_trip(self, tmp_path):
        g = make_random_graph(6)
        b = gft_basis_hpsd(lap(g), InnerProduct.degree(g))
        write_basis(tmp_path / "b", b)
        assert (tmp_path / "b" / "lambda.csv").read_text().startswith("lambda\n")
        meta = (tmp_path / "b" / "meta.txt").read_text()
        assert "variation=M" in meta or "variation=L" in meta
        assert "q_kind=degree" in meta
        c = read_basis(tmp_path / "b")
        assert np.array_equal(c.U, b.U) and np.array_equal(c.freqs, b.freqs)
        assert np.array_equal(c.q.q, b.q.q)


class TestGreedySolver:
    def test_ring4_gtv_constant_first_mode(self):
        b = gft_basis_nonhpsd(VariationOperator.gtv(ring_graph(4)), InnerProduct.identity(4), seed=0)
        assert b.freqs[0] <= 1e-8
        assert np.allclose(b.U[:, 0], 0.5, atol=1e-6)
        check_basis(b, 1e-8)

    @pytest.mark.parametrize("seed", range(3))
    def test_laplacian_trace_identity(self, seed):
        g = make_random_graph(seed, n=8, p=0.5)
        q = np.random.default_rng(seed).uniform(0.5, 2.0, 8)
        Q = InnerProduct.custom_diagonal(q)
        L = VariationOperator.quadratic(g, "L")
        b = gft_basis_nonhpsd(L, Q, seed=seed, warm_start=False)
        ref = float(np.sum(L.matrix.diagonal() / q))
        assert abs(b.freqs.sum() - ref) <= 0.01 * ref
        check_basis(b, 1e-8)

    @pytest.mark.parametrize("name", ["GTV", "GDV", "GQDV"])
    def test_orthonormal_for_every_kind_and_general_q(self, name, rng):
        from gftk import variation_operator

        g = make_random_graph(21, n=9)
        B = rng.standard_normal((9, 9))
        Q = InnerProduct.general(B @ B.T + 9 * np.eye(9))
        b = gft_basis_nonhpsd(variation_operator(g, name), Q, restarts=3, seed=1)
        check_basis(b, 1e-8)
        for l in range(9):
            assert b.freqs[l] == pytest.approx(variation_value(variation_operator(g, name), b.U[:, l]), abs=1e-8)

    def test_partial_basis_completed(self):
        g = make_random_graph(22, n=12)
        b = gft_basis_nonhpsd(VariationOperator.gtv(g), InnerProduct.degree(g), n_modes=3, restarts=2)
        assert b.provenance["completed_from"] == 3
        assert len(b.provenance["mode_objectives"]) == 3
        check_basis(b, 1e-8)

    def test_diagnostics_and_determinism(self):
        g = make_random_graph(23, n=10)
        op = VariationOperator.gdv(g)
        a = gft_basis_nonhpsd(op, InnerProduct.identity(10), restarts=3, seed=5)
        b = gft_basis_nonhpsd(op, InnerProduct.identity(10), restarts=3, seed=5)
        assert np.array_equal(a.U, b.U)
        p = a.provenance
        for key in ("mode_objectives", "restart_spread", "monotone_violations", "sorted_order", "converged"):
            assert key in p
        assert sorted(p["sorted_order"]) == list(range(10))

    def test_hpsd_dispatch(self):
        g = make_random_graph(1)
        b = gft_basis(VariationOperator.quadratic(g, "L"), InnerProduct.identity(g.n))
        assert b.provenance["solver"] == "generalized_eigh"
