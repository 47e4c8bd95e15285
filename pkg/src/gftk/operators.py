"""Variation operators and inner-product matrices on graph signals."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._fmt import read_matrix_csv, write_matrix_csv
from .errors import DimensionError, GraphError, NotPositiveDefiniteError
from .graph import Graph, OperatorKind, build_operator
from .voronoi import Rectangle, voronoi_areas

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
NORM_CLAMP = 1e-14
# smoothing width used by the descent solver for |t| and [t]_+
SMOOTHING_TAU = 1e-3


class VariationKind(enum.Enum):
    HPSD = "hpsd"
    GTV = "gtv"
    GDV = "gdv"
    GQDV = "gqdv"


# names accepted by variation_matrix / variation_operator
QUADRATIC_NAMES = {
    "L": "L",
    "comb": "L",
    "comblaplacian": "L",
    "combinatorial_laplacian": "L",
    "NL": "NL",
    "norm": "NL",
    "normlaplacian": "NL",
    "normalized_laplacian": "NL",
    "GQV": "GQV",
    "graphquadraticvariation": "GQV",
}


def _as_dense_or_sparse(M):
    return M if sp.issparse(M) else np.asarray(M)


def _norm2(M) -> float:
    if sp.issparse(M):
        M = M.toarray()
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def check_hpsd(M, tol: float = PSD_TOL) -> None:
    """Raise unless ``M`` is Hermitian (to 1e-12) and numerically PSD."""
    dense = M.toarray() if sp.issparse(M) else np.asarray(M)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise DimensionError("variation matrix must be square")
    scale = max(1.0, float(np.abs(dense).max(initial=0.0)))
    if np.abs(dense - dense.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise NotPositiveDefiniteError("variation matrix is not Hermitian")
    if dense.size:
        lo = np.linalg.eigvalsh(dense).min()
        if lo < -tol * max(_norm2(dense), 1e-300):
            raise NotPositiveDefiniteError(f"variation matrix is not PSD (min eigenvalue {lo:.3e})")


def variation_matrix(g: Graph, kind: str) -> sp.csr_matrix:
    """``L``, the normalized Laplacian, or ``(I - A_norm)^H (I - A_norm)`` (graph quadratic variation)."""
    name = QUADRATIC_NAMES.get(kind, QUADRATIC_NAMES.get(str(kind).lower().replace(" ", "")))
    if name == "L":
        return build_operator(g, OperatorKind.COMBINATORIAL_LAPLACIAN)
    if name == "NL":
        return build_operator(g, OperatorKind.NORMALIZED_LAPLACIAN)
    if name == "GQV":
        B = sp.identity(g.n, format="csr") - build_operator(g, OperatorKind.NORMALIZED_ADJACENCY)
        return (B.conj().T @ B).tocsr()
    raise ValueError(f"unknown quadratic variation {kind!r}")


def _huber(t, tau):
    a = np.abs(t)
    val = np.where(a < tau, 0.5 * t * t / tau, a - 0.5 * tau)
    return val, np.clip(t / tau, -1.0, 1.0)


def _huber_plus(t, tau):
    """One-sided Huber: smooth stand-in for ``max(0, t)``."""
    val = np.where(t <= 0, 0.0, np.where(t < tau, 0.5 * t * t / tau, t - 0.5 * tau))
    return val, np.clip(t / tau, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class VariationOperator:
    """A graph variation: either ``x^H M x`` or one of the non-quadratic functionals.

    For the directed functionals the operator holds an arc list ``(tail, head, w)``;
    an undirected graph contributes both orientations of every edge.
    """

    kind: VariationKind
    name: str
    n: int
    matrix: object = None
    anorm: object = None
    arcs: tuple = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def hpsd(cls, M, name: str = "M", check: bool = True) -> "VariationOperator":
        M = _as_dense_or_sparse(M)
        if check:
            check_hpsd(M)
        return cls(VariationKind.HPSD, name, M.shape[0], matrix=M)

    @classmethod
    def quadratic(cls, g: Graph, kind: str) -> "VariationOperator":
        name = QUADRATIC_NAMES.get(kind, kind)
        return cls.hpsd(variation_matrix(g, kind), name=name, check=False)

    @classmethod
    def gtv(cls, g: Graph) -> "VariationOperator":
        anorm = build_operator(g, OperatorKind.NORMALIZED_ADJACENCY)
        return cls(VariationKind.GTV, "GTV", g.n, anorm=anorm)

    @classmethod
    def _directed(cls, kind, name, g, arcs):
        if arcs is None:
            if g is None:
                raise ValueError("need a graph or an arc list")
            off = g.src != g.dst
            tail = np.concatenate([g.src[off], g.dst[off]])
            head = np.concatenate([g.dst[off], g.src[off]])
            w = np.concatenate([g.weight[off], g.weight[off]])
            n = g.n
        else:
            arr = np.asarray(arcs, dtype=float).reshape(-1, 3)
            tail, head, w = arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2]
            n = g.n if g is not None else int(max(tail.max(initial=-1), head.max(initial=-1)) + 1)
            if np.any(w < 0):
                raise GraphError("arc weights must be nonnegative")
        return cls(kind, name, n, arcs=(tail, head, w))

    @classmethod
    def gdv(cls, g: Graph | None = None, arcs=None) -> "VariationOperator":
        return cls._directed(VariationKind.GDV, "GDV", g, arcs)

    @classmethod
    def gqdv(cls, g: Graph | None = None, arcs=None) -> "VariationOperator":
        return cls._directed(VariationKind.GQDV, "GQDV", g, arcs)

    @property
    def is_quadratic(self) -> bool:
        return self.kind is VariationKind.HPSD

    def __call__(self, x) -> float:
        return variation_value(self, x)

    def smoothed(self, x, tau: float = SMOOTHING_TAU):
        """Smoothed value and gradient for real ``x`` (exact for quadratic kinds)."""
        if self.kind is VariationKind.HPSD:
            Mx = self.matrix @ x
            return float(np.real(x @ Mx)), 2.0 * np.real(Mx)
        if self.kind is VariationKind.GTV:
            r = x - self.anorm @ x
            val, psi = _huber(r, tau)
            return float(val.sum()), psi - self.anorm.T @ psi
        tail, head, w = self.arcs
        if self.kind is VariationKind.GDV:
            t = x[tail] - x[head]
            val, psi = _huber_plus(t, tau)
            coef = w * psi
            grad = np.bincount(tail, coef, self.n) - np.bincount(head, coef, self.n)
            return float(w @ val), grad
        # GQDV: sum over arcs tail->head of w * [x_head - x_tail]_+^2
        t = x[head] - x[tail]
        tp = np.maximum(t, 0.0)
        coef = 2.0 * w * tp
        grad = np.bincount(head, coef, self.n) - np.bincount(tail, coef, self.n)
        return float(w @ (tp * tp)), grad


def variation_value(op: VariationOperator, x) -> float:
    """Evaluate the variation of signal ``x``."""
    x = np.asarray(x)
    if x.shape != (op.n,):
        raise DimensionError(f"signal has shape {x.shape}, expected ({op.n},)")
    if op.kind is VariationKind.HPSD:
        return float(np.real(np.vdot(x, op.matrix @ x)))
    if op.kind is VariationKind.GTV:
        return float(np.abs(x - op.anorm @ x).sum())
    tail, head, w = op.arcs
    xr = np.real(x)
    if op.kind is VariationKind.GDV:
        return float(w @ np.maximum(xr[tail] - xr[head], 0.0))
    return float(w @ np.maximum(xr[head] - xr[tail], 0.0) ** 2)


def variation_operator(g: Graph, name: str) -> VariationOperator:
    """Parse a CLI-style name: L, NL, GQV, GTV, GDV, GQDV (case-insensitive)."""
    key = name.strip().upper()
    if key == "GTV":
        return VariationOperator.gtv(g)
    if key == "GDV":
        return VariationOperator.gdv(g)
    if key == "GQDV":
        return VariationOperator.gqdv(g)
    if key in ("L", "NL", "GQV"):
        return VariationOperator.quadratic(g, key)
    raise ValueError(f"unknown variation {name!r}; expected L, NL, GQV, GTV, GDV or GQDV")


class QKind(enum.Enum):
    IDENTITY = "identity"
    DEGREE = "degree"
    IDENTITY_PLUS_DEGREE = "identity_plus_degree"
    VORONOI = "voronoi"
    CUSTOM_DIAGONAL = "custom_diagonal"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class InnerProduct:
    """Hermitian positive definite matrix Q defining ``<x, y>_Q = y^H Q x``.

    Diagonal kinds keep only the diagonal ``q``; the general kind keeps the
    full matrix together with its upper Cholesky factor ``R`` (``Q = R^H R``).
    """

    kind: QKind
    q: np.ndarray | None = None
    Q: np.ndarray | None = None
    R: np.ndarray | None = None

    def __post_init__(self):
        if self.q is not None:
            q = np.array(self.q, dtype=float).ravel()
            if q.size == 0 or not np.all(np.isfinite(q)) or np.any(q <= 0):
                raise NotPositiveDefiniteError("diagonal inner product needs finite q_i > 0")
            q.setflags(write=False)
            object.__setattr__(self, "q", q)
        elif self.Q is not None:
            Q = np.array(self.Q)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
                raise DimensionError("Q must be square")
            scale = max(1.0, float(np.abs(Q).max()))
            if np.abs(Q - Q.conj().T).max() > HERMITIAN_TOL * scale:
                raise NotPositiveDefiniteError("Q is not Hermitian")
            Q = 0.5 * (Q + Q.conj().T)
            try:
                R = sla.cholesky(Q, lower=False)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError("Cholesky factorization of Q failed") from None
            Q.setflags(write=False)
            R.setflags(write=False)
            object.__setattr__(self, "Q", Q)
            object.__setattr__(self, "R", R)
        else:
            raise ValueError("InnerProduct needs either q or Q")

    # constructors

    @classmethod
    def identity(cls, n: int) -> "InnerProduct":
        return cls(QKind.IDENTITY, q=np.ones(n))

    @classmethod
    def degree(cls, g: Graph) -> "InnerProduct":
        return cls(QKind.DEGREE, q=_positive_degrees(g))

    @classmethod
    def identity_plus_degree(cls, g: Graph) -> "InnerProduct":
        return cls(QKind.IDENTITY_PLUS_DEGREE, q=1.0 + g.degrees())

    @classmethod
    def voronoi(cls, points, domain: Rectangle) -> "InnerProduct":
        return cls(QKind.VORONOI, q=voronoi_areas(points, domain))

    @classmethod
    def custom_diagonal(cls, q) -> "InnerProduct":
        return cls(QKind.CUSTOM_DIAGONAL, q=q)

    @classmethod
    def general(cls, Q) -> "InnerProduct":
        return cls(QKind.GENERAL, Q=Q)

    # linear algebra

    @property
    def n(self) -> int:
        return len(self.q) if self.q is not None else self.Q.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.q is not None

    def matrix(self) -> np.ndarray:
        return np.diag(self.q) if self.is_diagonal else np.array(self.Q)

    def sparse(self):
        return sp.diags(self.q).tocsr() if self.is_diagonal else sp.csr_matrix(self.Q)

    def apply(self, x):
        """``Q x`` (works column-wise on matrices)."""
        x = np.asarray(x)
        if self.is_diagonal:
            return self.q.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        return self.Q @ x

    def solve(self, x):
        """``Q^-1 x``."""
        x = np.asarray(x)
        if self.is_diagonal:
            return x / self.q.reshape((-1,) + (1,) * (x.ndim - 1))
        return sla.cho_solve((self.R, False), x)

    def whiten(self, x):
        """Map with ``||whiten(x)||_2 = ||x||_Q``: ``Q^1/2 x`` (diagonal) or ``R x``."""
        x = np.asarray(x)
        if self.is_diagonal:
            return np.sqrt(self.q).reshape((-1,) + (1,) * (x.ndim - 1)) * x
        return self.R @ x

    def unwhiten(self, y):
        y = np.asarray(y)
        if self.is_diagonal:
            return y / np.sqrt(self.q).reshape((-1,) + (1,) * (y.ndim - 1))
        return sla.solve_triangular(self.R, y, lower=False)

    def sqrt_matrix(self) -> np.ndarray:
        """Hermitian square root ``Q^1/2``."""
        if self.is_diagonal:
            return np.diag(np.sqrt(self.q))
        w, V = np.linalg.eigh(self.Q)
        return (V * np.sqrt(w)) @ V.conj().T

    def same_as(self, other: "InnerProduct", tol: float = 1e-12) -> bool:
        if other is self:
            return True
        if self.n != other.n:
            return False
        A, B = self.matrix(), other.matrix()
        return bool(np.abs(A - B).max() <= tol * max(1.0, np.abs(A).max()))


def _positive_degrees(g: Graph) -> np.ndarray:
    d = g.degrees()
    if np.any(d <= 0):
        raise GraphError(f"vertex {int(np.flatnonzero(d <= 0)[0])} has zero degree")
    return d


def inner_product(g: Graph, kind, domain: Rectangle | None = None, q=None) -> InnerProduct:
    """Realize Q for a graph: identity, degree, identity_plus_degree, voronoi, custom_diagonal or general."""
    kind = QKind(kind)
    if kind is QKind.IDENTITY:
        return InnerProduct.identity(g.n)
    if kind is QKind.DEGREE:
        return InnerProduct.degree(g)
    if kind is QKind.IDENTITY_PLUS_DEGREE:
        return InnerProduct.identity_plus_degree(g)
    if kind is QKind.VORONOI:
        if g.coords is None:
            raise GraphError("Voronoi inner product needs vertex coordinates")
        if domain is None:
            raise ValueError("Voronoi inner product needs a domain rectangle")
        return InnerProduct.voronoi(g.coords, domain)
    if q is None:
        raise ValueError(f"{kind.value} inner product needs explicit values")
    if kind is QKind.CUSTOM_DIAGONAL:
        ip = InnerProduct.custom_diagonal(q)
    else:
        ip = InnerProduct.general(q)
    if ip.n != g.n:
        raise DimensionError(f"inner product has size {ip.n}, graph has {g.n} vertices")
    return ip


def _qmat(Q):
    return Q if isinstance(Q, InnerProduct) else None


def q_inner(x, y, Q) -> complex | float:
    """``<x, y>_Q = y^H Q x``; ``Q`` is an InnerProduct or a plain matrix."""
    x, y = np.asarray(x), np.asarray(y)
    ip = _qmat(Q)
    n = ip.n if ip is not None else np.shape(Q)[0]
    if x.shape != (n,) or y.shape != (n,):
        raise DimensionError(f"signals must have shape ({n},)")
    Qx = ip.apply(x) if ip is not None else (Q @ x if sp.issparse(Q) else np.asarray(Q) @ x)
    val = np.vdot(y, Qx)
    return float(val.real) if np.isrealobj(x) and np.isrealobj(y) and np.isrealobj(Qx) else complex(val)


def q_norm_squared(x, Q) -> float:
    return float(np.real(q_inner(x, x, Q)))


def q_norm(x, Q) -> float:
    """Q-norm; a radicand within -1e-14 of zero is clamped."""
    r = q_norm_squared(x, Q)
    if r < 0:
        if r < -NORM_CLAMP:
            raise NotPositiveDefiniteError(f"negative squared Q-norm {r:.3e}; Q is not HPD")
        r = 0.0
    return float(np.sqrt(r))


def write_q_csv(path, ip: InnerProduct) -> None:
    """Diagonal kinds: one value per line. General kind: dense rows."""
    if ip.is_diagonal:
        write_matrix_csv(path, ip.q.reshape(-1, 1))
    else:
        write_matrix_csv(path, ip.Q)


def read_q_csv(path) -> InnerProduct:
    M = read_matrix_csv(path)
    if M.ndim == 2 and M.shape[1] == 1:
        return InnerProduct.custom_diagonal(M.ravel())
    return InnerProduct.general(M)
