"""Undirected weighted graphs and the algebraic operators derived from them."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from ._fmt import fmt
from .errors import ConvergenceError, FormatError, GraphError

# dense pairwise distances up to this many points, KD-tree above
_BRUTE_KNN_MAX = 3000


class OperatorKind(enum.Enum):
    ADJACENCY = "adjacency"
    NORMALIZED_ADJACENCY = "normalized_adjacency"
    DEGREE = "degree"
    COMBINATORIAL_LAPLACIAN = "combinatorial_laplacian"
    NORMALIZED_LAPLACIAN = "normalized_laplacian"
    RANDOM_WALK_LAPLACIAN = "random_walk_laplacian"


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph stored as a list of unordered pairs.

    Each pair is stored once with ``src <= dst``. ``coords`` is an optional
    ``(n, 2)`` array of vertex positions.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    coords: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64).ravel()
        dst = np.asarray(self.dst, dtype=np.int64).ravel()
        w = np.array(self.weight, dtype=float).ravel()
        if not (len(src) == len(dst) == len(w)):
            raise GraphError("edge arrays have different lengths")
        if self.n < 0:
            raise GraphError("negative vertex count")
        if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= self.n):
            raise GraphError("edge index out of range")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise GraphError("edge weights must be finite and positive")
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        if len(lo):
            keys = lo * self.n + hi
            if len(np.unique(keys)) != len(keys):
                raise GraphError("duplicate edge")
        coords = self.coords
        if coords is not None:
            coords = np.array(coords, dtype=float)
            if coords.shape != (self.n, 2):
                raise GraphError(f"coords must have shape ({self.n}, 2), got {coords.shape}")
        for name, val in (("src", lo), ("dst", hi), ("weight", w), ("coords", coords)):
            if val is not None:
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def from_edges(cls, n, edges, coords=None) -> "Graph":
        """Build from an iterable of ``(i, j, w)`` triples."""
        edges = list(edges)
        if not edges:
            return cls(n, np.zeros(0, int), np.zeros(0, int), np.zeros(0), coords)
        i, j, w = zip(*edges)
        return cls(n, np.array(i), np.array(j), np.array(w, dtype=float), coords)

    @classmethod
    def from_adjacency(cls, A, coords=None) -> "Graph":
        A = sp.triu(sp.csr_matrix(A)).tocoo()
        keep = A.data != 0
        return cls(A.shape[0], A.row[keep], A.col[keep], A.data[keep], coords)

    @property
    def n_edges(self) -> int:
        return len(self.weight)

    def edges(self):
        return list(zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()))

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse adjacency matrix (self-loops on the diagonal)."""
        if "A" not in self._cache:
            off = self.src != self.dst
            rows = np.concatenate([self.src, self.dst[off]])
            cols = np.concatenate([self.dst, self.src[off]])
            data = np.concatenate([self.weight, self.weight[off]])
            A = sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
            A.sort_indices()
            self._cache["A"] = A
        return self._cache["A"]

    def degrees(self) -> np.ndarray:
        if "d" not in self._cache:
            self._cache["d"] = np.asarray(self.adjacency().sum(axis=1)).ravel()
        return self._cache["d"]

    def mu_max(self) -> float:
        """Largest-magnitude eigenvalue of the adjacency matrix."""
        if "mu" not in self._cache:
            self._cache["mu"] = spectral_radius(self.adjacency())
        return self._cache["mu"]


def ring_graph(n: int, weight: float = 1.0) -> Graph:
    """Cycle on ``n`` vertices."""
    return Graph.from_edges(n, [(i, (i + 1) % n, weight) for i in range(n)])


def path_graph(n: int, weight: float = 1.0) -> Graph:
    return Graph.from_edges(n, [(i, i + 1, weight) for i in range(n - 1)])


def random_graph(n: int, p: float, rng, connected: bool = True) -> Graph:
    """Erdos-Renyi graph with uniform(0.1, 1) weights; optionally forced connected
    by threading a random Hamiltonian path through it."""
    iu, ju = np.triu_indices(n, 1)
    mask = rng.random(len(iu)) < p
    pairs = set(zip(iu[mask].tolist(), ju[mask].tolist()))
    if connected:
        order = rng.permutation(n)
        for a, b in zip(order[:-1], order[1:]):
            pairs.add((min(a, b), max(a, b)))
    pairs = sorted(pairs)
    w = rng.uniform(0.1, 1.0, len(pairs))
    return Graph.from_edges(n, [(i, j, wij) for (i, j), wij in zip(pairs, w)])


def spectral_radius(A, tol: float = 1e-10, maxiter: int = 10_000) -> float:
    """Largest |eigenvalue| of a symmetric nonnegative matrix by power iteration.

    Iterates on ``A + I`` so that a bipartite spectrum (``-rho`` and ``rho``)
    does not make the iteration oscillate; for a nonnegative matrix the
    Perron root is the eigenvalue of largest magnitude. Stops when the
    residual ``||A v - mu v||`` falls below ``tol * mu``. Without convergence
    the answer comes from a dense solver (n <= 64) or Lanczos.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if n == 0 or A.nnz == 0:
        return 0.0
    v = np.ones(n) / np.sqrt(n)
    for _ in range(maxiter):
        Av = A @ v
        mu = float(v @ Av)
        if np.linalg.norm(Av - mu * v) <= tol * abs(mu):
            return abs(mu)
        w = Av + v
        v = w / np.linalg.norm(w)
    if n <= 64:
        return float(np.max(np.abs(np.linalg.eigvalsh(A.toarray()))))
    try:
        lam = spla.eigsh(A.astype(float), k=1, which="LM", tol=tol, return_eigenvectors=False)
    except spla.ArpackNoConvergence:
        raise ConvergenceError(f"spectral radius did not converge in {maxiter} iterations") from None
    return float(abs(lam[0]))


def _check_positive_degrees(g: Graph) -> np.ndarray:
    d = g.degrees()
    if np.any(d <= 0):
        bad = int(np.flatnonzero(d <= 0)[0])
        raise GraphError(f"vertex {bad} has zero degree")
    return d


def build_operator(g: Graph, kind: OperatorKind | str) -> sp.csr_matrix:
    """Return A, A/mu_max, D, L = D - A, the normalized or the random walk Laplacian."""
    kind = OperatorKind(kind)
    A = g.adjacency()
    if kind is OperatorKind.ADJACENCY:
        return A.copy()
    if kind is OperatorKind.NORMALIZED_ADJACENCY:
        if g.n == 0:
            raise GraphError("empty graph")
        mu = g.mu_max()
        if mu == 0:
            raise GraphError("graph has no edges, cannot normalize the adjacency")
        return (A / mu).tocsr()
    if kind is OperatorKind.DEGREE:
        return sp.diags(g.degrees()).tocsr()
    if kind is OperatorKind.COMBINATORIAL_LAPLACIAN:
        return (sp.diags(g.degrees()) - A).tocsr()
    d = _check_positive_degrees(g)
    L = sp.diags(d) - A
    if kind is OperatorKind.NORMALIZED_LAPLACIAN:
        s = sp.diags(1.0 / np.sqrt(d))
        return (s @ L @ s).tocsr()
    return (sp.diags(1.0 / d) @ L).tocsr()


def knn_graph(points, K: int, sigma: float) -> Graph:
    """Gaussian-weighted K-nearest-neighbour graph.

    An edge joins i and j when either selects the other among its K nearest
    neighbours. Weights are ``exp(-d^2 / (2 sigma^2))``. Distance ties are
    broken by the lower vertex index.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GraphError("points must be an (n, 2) array")
    n = len(pts)
    if n < 2:
        raise GraphError("need at least 2 points")
    if not np.all(np.isfinite(pts)):
        raise GraphError("points must be finite")
    if not 0 < K < n:
        raise GraphError(f"K must satisfy 0 < K < {n}")
    if sigma <= 0:
        raise GraphError("sigma must be positive")

    if n <= _BRUTE_KNN_MAX:
        diff = pts[:, None, :] - pts[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        np.fill_diagonal(d2, np.inf)
        nbr = np.argsort(d2, axis=1, kind="stable")[:, :K]
        nd2 = np.take_along_axis(d2, nbr, axis=1)
    else:
        dist, idx = cKDTree(pts).query(pts, k=K + 1)
        nbr = np.empty((n, K), dtype=np.int64)
        for i in range(n):
            nbr[i] = [j for j in idx[i] if j != i][:K]
        # same arithmetic as the brute-force branch, so both give identical weights
        diff = pts[:, None, :] - pts[nbr]
        nd2 = np.einsum("ijk,ijk->ij", diff, diff)

    rows = np.repeat(np.arange(n), K)
    cols = nbr.ravel()
    d2flat = nd2.ravel()
    if np.any(d2flat == 0):
        warnings.warn("knn_graph: duplicate points at identical coordinates", stacklevel=2)
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    keys, first = np.unique(lo * n + hi, return_index=True)
    w = np.exp(-d2flat[first] / (2.0 * sigma * sigma))
    return Graph(n, keys // n, keys % n, w, pts.copy())


def prenormalize_adjacency(g: Graph) -> Graph:
    """Reweight ``w'(ij) = w(ij) / (d_i d_j)``, i.e. ``A' = D^-1 A D^-1``."""
    d = _check_positive_degrees(g)
    w = g.weight / (d[g.src] * d[g.dst])
    return Graph(g.n, g.src, g.dst, w, g.coords)


def graphs_equal(a: Graph, b: Graph) -> bool:
    if a.n != b.n or a.n_edges != b.n_edges:
        return False
    ka = np.lexsort((a.dst, a.src))
    kb = np.lexsort((b.dst, b.src))
    same = (
        np.array_equal(a.src[ka], b.src[kb])
        and np.array_equal(a.dst[ka], b.dst[kb])
        and np.array_equal(a.weight[ka], b.weight[kb])
    )
    if (a.coords is None) != (b.coords is None):
        return False
    return same and (a.coords is None or np.array_equal(a.coords, b.coords))


def write_graph(path, g: Graph) -> None:
    """Write ``N E`` then ``i j w`` lines, plus an optional ``coords`` section."""
    lines = [f"{g.n} {g.n_edges}"]
    order = np.lexsort((g.dst, g.src))
    for k in order:
        lines.append(f"{g.src[k]} {g.dst[k]} {fmt(g.weight[k])}")
    if g.coords is not None:
        lines.append("coords")
        lines.extend(f"{fmt(x)} {fmt(y)}" for x, y in g.coords.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> Graph:
    raw = [ln.strip() for ln in Path(path).read_text().splitlines()]
    raw = [ln for ln in raw if ln and not ln.startswith("#")]
    if not raw:
        raise FormatError(f"{path}: empty graph file")
    try:
        n, m = (int(t) for t in raw[0].split())
    except ValueError:
        raise FormatError(f"{path}: malformed header {raw[0]!r}, expected 'N E'") from None
    if len(raw) < 1 + m:
        raise FormatError(f"{path}: expected {m} edge lines, found {len(raw) - 1}")
    src, dst, w = [], [], []
    for lineno, ln in enumerate(raw[1 : 1 + m], start=2):
        parts = ln.split()
        try:
            i, j, wij = int(parts[0]), int(parts[1]), float(parts[2])
            if len(parts) != 3:
                raise ValueError
        except (ValueError, IndexError):
            raise FormatError(f"{path}: malformed edge line {lineno}: {ln!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise FormatError(f"{path}: index out of range on line {lineno}")
        if wij < 0:
            raise FormatError(f"{path}: negative weight on line {lineno}")
        src.append(i)
        dst.append(j)
        w.append(wij)
    coords = None
    rest = raw[1 + m :]
    if rest:
        if rest[0] != "coords":
            raise FormatError(f"{path}: unexpected line {rest[0]!r} after edges")
        if len(rest) - 1 != n:
            raise FormatError(f"{path}: coords section needs {n} lines, found {len(rest) - 1}")
        try:
            coords = np.array([[float(t) for t in ln.split()] for ln in rest[1:]])
        except ValueError:
            raise FormatError(f"{path}: malformed coordinate line") from None
        if coords.shape != (n, 2):
            raise FormatError(f"{path}: coordinate lines must hold 'x y'")
    try:
        return Graph(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w), coords)
    except GraphError as exc:
        raise FormatError(f"{path}: {exc}") from None


def read_points(path) -> np.ndarray:
    """Read a CSV with header ``x,y``."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "").lower() != "x,y":
        raise FormatError(f"{path}: points file must start with header 'x,y'")
    try:
        return np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]]).reshape(-1, 2)
    except ValueError:
        raise FormatError(f"{path}: malformed point row") from None


def write_points(path, points) -> None:
    rows = ["x,y"] + [f"{fmt(x)},{fmt(y)}" for x, y in np.asarray(points, dtype=float).tolist()]
    Path(path).write_text("\n".join(rows) + "\n")
