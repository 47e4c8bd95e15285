"""Graph Fourier bases for a (variation, inner product) pair.

Quadratic variations ``x^H M x`` are handled exactly through the generalized
eigenproblem ``M u = lambda Q u``; non-quadratic ones (GTV, GDV, GQDV) by a
greedy sequence of constrained minimizations, each solved by quasi-Newton
descent on the Q-unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import minimize

from ._fmt import fmt, read_matrix_csv, write_matrix_csv
from .errors import DimensionError, FormatError, NotPositiveDefiniteError
from .operators import (
    HERMITIAN_TOL,
    PSD_TOL,
    SMOOTHING_TAU,
    InnerProduct,
    QKind,
    VariationKind,
    VariationOperator,
    read_q_csv,
    variation_value,
    write_q_csv,
)

DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GftBasis:
    """Q-orthonormal graph Fourier modes (columns of ``U``) with their frequencies.

    ``F = U^H Q`` is the analysis matrix and ``U`` its inverse.
    """

    U: np.ndarray
    freqs: np.ndarray
    q: InnerProduct
    F: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def forward(self, x):
        return forward(self, x)

    def inverse(self, xhat):
        return inverse(self, xhat)


def _analysis_matrix(U, q: InnerProduct):
    return q.apply(U).conj().T


def sign_normalize(U: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Scale each column so its largest-magnitude entry is positive real.

    Entries within ``rtol`` of the maximum count as ties; the lowest index wins.
    """
    U = np.array(U)
    for k in range(U.shape[1]):
        col = U[:, k]
        mag = np.abs(col)
        m = mag.max()
        if m == 0:
            continue
        i = int(np.flatnonzero(mag >= m * (1 - rtol))[0])
        U[:, k] = col * (np.conj(col[i]) / mag[i])
    return U.real.copy() if np.isrealobj(U) or np.allclose(U.imag, 0) else U


def degenerate_groups(freqs, tol: float = DEGENERACY_TOL):
    """Index groups of (numerically) repeated frequencies, as lists of length >= 2."""
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0:
        return []
    order = np.argsort(freqs, kind="stable")
    thr = tol * max(1.0, float(np.abs(freqs).max()))
    groups, cur = [], [int(order[0])]
    for a, b in zip(order[:-1], order[1:]):
        if freqs[b] - freqs[a] < thr:
            cur.append(int(b))
        else:
            if len(cur) > 1:
                groups.append(cur)
            cur = [int(b)]
    if len(cur) > 1:
        groups.append(cur)
    return groups


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def gft_basis_hpsd(M, Q: InnerProduct, variation: str = "M") -> GftBasis:
    """Solve ``M u = lambda Q u`` with ``||u||_Q = 1`` and ascending ``lambda``.

    The problem is reduced to a Hermitian one by congruence:
    ``Q^-1/2 M Q^-1/2`` for diagonal Q, ``R^-H M R^-1`` with ``Q = R^H R`` otherwise.
    """
    if isinstance(M, VariationOperator):
        variation = M.name
        M = M.matrix
    M = _dense(M)
    n = M.shape[0]
    if M.shape != (n, n) or Q.n != n:
        raise DimensionError(f"M is {M.shape}, Q is {Q.n}x{Q.n}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if np.abs(M - M.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise NotPositiveDefiniteError("variation matrix is not Hermitian")

    if Q.is_diagonal:
        s = 1.0 / np.sqrt(Q.q)
        B = s[:, None] * M * s[None, :]
    else:
        Y = sla.solve_triangular(Q.R, M, trans="C", lower=False)
        B = sla.solve_triangular(Q.R, Y.conj().T, trans="C", lower=False).conj().T
    B = 0.5 * (B + B.conj().T)
    try:
        w, V = np.linalg.eigh(B)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"eigensolver failed: {exc}") from None
    thr = PSD_TOL * max(float(np.abs(w).max(initial=0.0)), 1e-300)
    if w.size and w[0] < -thr:
        raise NotPositiveDefiniteError(f"variation matrix is not PSD (eigenvalue {w[0]:.3e})")
    raw_min = float(w[0]) if w.size else 0.0

    U = s[:, None] * V if Q.is_diagonal else sla.solve_triangular(Q.R, V, lower=False)
    U = sign_normalize(U)
    # frequencies are the variations of the returned modes themselves
    lam = np.real(np.einsum("ij,ij->j", U.conj(), M @ U))
    lam[(lam < 0) & (lam >= -thr)] = 0.0
    lam = np.maximum.accumulate(np.maximum(lam, 0.0))
    prov = {
        "variation": variation,
        "q_kind": Q.kind.value,
        "solver": "generalized_eigh",
        "min_raw_eigenvalue": raw_min,
        "clamped": bool(raw_min < 0),
        "degenerate_groups": degenerate_groups(lam),
    }
    return GftBasis(U, lam, Q, _analysis_matrix(U, Q), prov)


# greedy solver for non-quadratic variations


def _surrogate_matrix(op: VariationOperator, n: int):
    """Quadratic variation used to warm-start and complete the greedy basis."""
    if op.kind is VariationKind.HPSD:
        return op.matrix
    if op.kind is VariationKind.GTV:
        B = sp.identity(n, format="csr") - op.anorm
        return (B.T @ B).tocsr()
    tail, head, w = op.arcs
    A = sp.csr_matrix((w, (tail, head)), shape=(n, n))
    A = 0.5 * (A + A.T)
    d = np.asarray(A.sum(axis=1)).ravel()
    return (sp.diags(d) - A).tocsr()


class _Sphere:
    """Objective on the whitened unit sphere restricted to the complement of ``Y``."""

    def __init__(self, op, Q: InnerProduct, tau):
        self.op, self.Q, self.tau = op, Q, tau
        self.Y = np.zeros((Q.n, 0))

    def project(self, y):
        if self.Y.shape[1]:
            y = y - self.Y @ (self.Y.T @ y)
            y = y - self.Y @ (self.Y.T @ y)
        return y

    def retract(self, y):
        y = self.project(y)
        nrm = np.linalg.norm(y)
        return y / nrm if nrm > 0 else None

    def value_grad(self, y, tau):
        u = self.Q.unwhiten(y)
        val, gu = self.op.smoothed(u, tau)
        if self.Q.is_diagonal:
            gy = gu / np.sqrt(self.Q.q)
        else:
            gy = sla.solve_triangular(self.Q.R, gu, trans="T", lower=False)
        return val, gy

    def true_value(self, y):
        return variation_value(self.op, self.Q.unwhiten(y))


def _descend(sph: _Sphere, y, max_iter, tol, patience, tau):
    """Minimize the smoothed variation of ``project(c) / ||c||`` with L-BFGS.

    The map from ``c`` to the sphere makes the problem unconstrained; the
    gradient is pulled back through the projection and the normalization.
    Stops early once the objective gains less than ``tol`` (relative) over
    ``patience`` iterations.
    """
    history = []

    def fun(c):
        pc = sph.project(c)
        r = np.linalg.norm(pc)
        u = pc / r
        f, gy = sph.value_grad(u, tau)
        gy = sph.project(gy)
        return f, (gy - (u @ gy) * u) / r

    def watch(intermediate_result):
        f = float(intermediate_result.fun)
        history.append(f)
        if len(history) > patience and history[-patience - 1] - f < tol * max(1.0, abs(f)):
            raise StopIteration

    res = minimize(
        fun,
        y,
        jac=True,
        method="L-BFGS-B",
        callback=watch,
        options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 20},
    )
    # status 1 is the iteration cap; line-search stalls at the smoothing floor count as converged
    converged = res.status != 1
    return res.x, len(history), converged


def gft_basis_nonhpsd(
    op: VariationOperator,
    Q: InnerProduct,
    n_modes: int | None = None,
    restarts: int = 10,
    max_iter: int = 5000,
    tau: float = SMOOTHING_TAU,
    tol: float = 1e-9,
    patience: int = 50,
    seed: int = 0,
    warm_start: bool = True,
) -> GftBasis:
    """Greedy Q-orthonormal modes of minimal variation for any variation operator.

    Mode ``l`` minimizes the variation over Q-unit signals Q-orthogonal to modes
    ``0..l-1``. Work happens in the whitened space ``y = Q^1/2 u`` (Cholesky
    factor for non-diagonal Q), where the constraint is the Euclidean unit
    sphere. The nonsmooth ``|t|`` and ``[t]_+`` are Huber-smoothed with width
    ``tau``; candidates are ranked by the exact, unsmoothed variation. Each
    mode takes the best of ``restarts`` descents (ties to the lower restart
    index). With ``warm_start`` the first
    restart starts from the matching mode of a quadratic surrogate.

    When ``n_modes < n`` only the first ``n_modes`` are optimized; the basis is
    completed with the surrogate modes orthonormalized against them, and the
    diagnostics say so. Frequencies are stored in greedy order; departures from
    monotonicity are reported, not corrected.
    """
    n = Q.n
    if op.n != n:
        raise DimensionError(f"operator acts on {op.n} vertices, Q on {n}")
    n_modes = n if n_modes is None else int(n_modes)
    if not 1 <= n_modes <= n:
        raise ValueError(f"n_modes must be in [1, {n}]")
    rng = np.random.default_rng(seed)
    sph = _Sphere(op, Q, tau)

    surrogate = None
    if warm_start or n_modes < n:
        sb = gft_basis_hpsd(_surrogate_matrix(op, n), Q, variation="surrogate")
        surrogate = Q.whiten(sb.U)

    Y = np.zeros((n, 0))
    objectives, spreads, iters_log, conv_log = [], [], [], []
    for L in range(n_modes):
        sph.Y = Y
        best = None
        vals = []
        for r in range(restarts):
            if r == 0 and warm_start:
                y0 = surrogate[:, L]
            else:
                y0 = rng.standard_normal(n)
            y0 = sph.retract(y0)
            if y0 is None:
                y0 = sph.retract(rng.standard_normal(n))
            y, it, conv = _descend(sph, y0, max_iter, tol, patience, tau)
            y = sph.retract(y)
            v = sph.true_value(y)
            vals.append(v)
            if best is None or v < best[0]:
                best = (v, y, it, conv)
        objectives.append(best[0])
        spreads.append(float(max(vals) - min(vals)))
        iters_log.append(best[2])
        conv_log.append(best[3])
        Y = np.column_stack([Y, best[1]])

    completed_from = None
    if n_modes < n:
        completed_from = n_modes
        sph.Y = Y
        for k in range(n):
            if Y.shape[1] == n:
                break
            y = sph.project(surrogate[:, k])
            nrm = np.linalg.norm(y)
            if nrm > 1e-8:
                Y = np.column_stack([Y, y / nrm])
                sph.Y = Y
    # final cleanup: one more Gram-Schmidt pass keeps Y^T Y = I to roundoff
    Yq, Rq = np.linalg.qr(Y)
    Y = Yq * np.sign(np.diag(Rq))[None, :]
    U = Q.unwhiten(Y)
    lam = np.array([variation_value(op, U[:, k]) for k in range(n)])
    violations = [int(k) for k in range(1, n) if lam[k] < lam[k - 1] - 1e-12]
    prov = {
        "variation": op.name,
        "q_kind": Q.kind.value,
        "solver": "greedy_projected_descent",
        "restarts": restarts,
        "max_iter": max_iter,
        "tau": tau,
        "tol": tol,
        "seed": seed,
        "warm_start": warm_start,
        "mode_objectives": objectives,
        "restart_spread": spreads,
        "iterations": iters_log,
        "converged": conv_log,
        "all_converged": bool(all(conv_log)),
        "monotone_violations": violations,
        "sorted_order": [int(i) for i in np.argsort(lam, kind="stable")],
        "completed_from": completed_from,
    }
    return GftBasis(U, lam, Q, _analysis_matrix(U, Q), prov)


def gft_basis(op: VariationOperator, Q: InnerProduct, **solver_opts) -> GftBasis:
    """Dispatch to the exact solver for quadratic variations, the greedy one otherwise."""
    if op.kind is VariationKind.HPSD:
        return gft_basis_hpsd(op.matrix, Q, variation=op.name)
    return gft_basis_nonhpsd(op, Q, **solver_opts)


def forward(b: GftBasis, x):
    """Spectrum ``x_hat = F x = U^H Q x``; works column-wise on matrices."""
    x = np.asarray(x)
    if x.shape[0] != b.n:
        raise DimensionError(f"signal length {x.shape[0]} != {b.n}")
    return b.F @ x


def inverse(b: GftBasis, xhat):
    xhat = np.asarray(xhat)
    if xhat.shape[0] != b.n:
        raise DimensionError(f"spectrum length {xhat.shape[0]} != {b.n}")
    return b.U @ xhat


def fundamental_matrix(obj, Q: InnerProduct | None = None):
    """``Z = Q^-1 M`` for a quadratic variation, ``U diag(lambda) U^H Q`` for a basis.

    With diagonal Q and sparse M the result stays sparse.
    """
    if isinstance(obj, GftBasis):
        return (obj.U * obj.freqs[None, :]) @ obj.F
    if isinstance(obj, VariationOperator):
        if obj.kind is not VariationKind.HPSD:
            raise ValueError("non-quadratic variation: pass a GftBasis instead")
        obj = obj.matrix
    if Q is None:
        raise ValueError("Q is required with a variation matrix")
    if Q.n != obj.shape[0]:
        raise DimensionError("Q and M sizes differ")
    if Q.is_diagonal:
        if sp.issparse(obj):
            return (sp.diags(1.0 / Q.q) @ obj).tocsr()
        return np.asarray(obj) / Q.q[:, None]
    return Q.solve(_dense(obj))


def hilbert_map(x, Q: InnerProduct, direction: str = "forward"):
    """Isometry ``x -> Q^1/2 x`` from the Q-space to the dot-product space, or its inverse."""
    x = np.asarray(x)
    if x.shape[0] != Q.n:
        raise DimensionError(f"signal length {x.shape[0]} != {Q.n}")
    if Q.is_diagonal:
        r = np.sqrt(Q.q).reshape((-1,) + (1,) * (x.ndim - 1))
        return x * r if direction == "forward" else x / r
    S = Q.sqrt_matrix()
    if direction == "forward":
        return S @ x
    if direction == "backward":
        return np.linalg.solve(S, x)
    raise ValueError("direction must be 'forward' or 'backward'")


def write_basis(directory, b: GftBasis, extra_meta: dict | None = None) -> list[Path]:
    """``lambda.csv``, ``U.csv`` (dense rows), ``q.csv`` and a ``meta.txt`` sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lam_path = d / "lambda.csv"
    with open(lam_path, "w", newline="\n") as fh:
        fh.write("lambda\n")
        fh.writelines(fmt(v) + "\n" for v in b.freqs)
    write_matrix_csv(d / "U.csv", np.real(b.U))
    write_q_csv(d / "q.csv", b.q)
    meta = {k: v for k, v in b.provenance.items() if k in ("variation", "q_kind", "solver", "seed", "tau", "tol", "restarts", "max_iter")}
    meta["n"] = b.n
    meta.update(extra_meta or {})
    with open(d / "meta.txt", "w", newline="\n") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")
    return [lam_path, d / "U.csv", d / "q.csv", d / "meta.txt"]


def read_basis(directory) -> GftBasis:
    d = Path(directory)
    try:
        lines = (d / "lambda.csv").read_text().split()
        if lines[0] != "lambda":
            raise FormatError(f"{d}/lambda.csv must start with header 'lambda'")
        lam = np.array([float(t) for t in lines[1:]])
        U = read_matrix_csv(d / "U.csv")
        ip = read_q_csv(d / "q.csv")
    except (OSError, ValueError, IndexError) as exc:
        raise FormatError(f"cannot read basis from {d}: {exc}") from None
    meta = {}
    if (d / "meta.txt").exists():
        for ln in (d / "meta.txt").read_text().splitlines():
            if "=" in ln:
                k, v = ln.split("=", 1)
                meta[k.strip()] = v.strip()
    kind = meta.get("q_kind")
    if ip.is_diagonal and kind in {k.value for k in QKind} and kind != QKind.GENERAL.value:
        ip = InnerProduct(QKind(kind), q=ip.q)
    if U.shape != (len(lam), len(lam)) or ip.n != len(lam):
        raise FormatError(f"inconsistent basis files in {d}")
    return GftBasis(U, lam, ip, _analysis_matrix(U, ip), meta)
