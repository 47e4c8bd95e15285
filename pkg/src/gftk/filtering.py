"""Graph filters, Q-white noise, Q-MSE and the bilateral filter as a graph filter."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, FormatError
from .gft import GftBasis, degenerate_groups, forward, fundamental_matrix, inverse
from .graph import Graph, OperatorKind, build_operator
from .operators import InnerProduct, q_norm_squared


class FilterKind(enum.Enum):
    SPECTRAL = "spectral"
    POLYNOMIAL = "polynomial"
    MATRIX = "matrix"


@dataclass(frozen=True, eq=False)
class FilterSpec:
    kind: FilterKind
    response: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    H: object = None

    @classmethod
    def spectral(cls, response) -> "FilterSpec":
        h = np.array(response, dtype=complex if np.iscomplexobj(response) else float).ravel()
        if not np.all(np.isfinite(h)):
            raise ValueError("spectral response must be finite")
        return cls(FilterKind.SPECTRAL, response=h)

    @classmethod
    def polynomial(cls, coeffs) -> "FilterSpec":
        c = np.array(coeffs, dtype=float).ravel()
        if c.size == 0:
            raise ValueError("polynomial needs at least one coefficient")
        return cls(FilterKind.POLYNOMIAL, coeffs=c)

    @classmethod
    def matrix(cls, H) -> "FilterSpec":
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionError("filter matrix must be square")
        return cls(FilterKind.MATRIX, H=H)


def polynomial_response(coeffs, freqs) -> np.ndarray:
    """``sum_k h_k lambda^k`` at every frequency."""
    out = np.zeros(len(freqs))
    for c in reversed(np.asarray(coeffs, dtype=float)):
        out = out * freqs + c
    return out


def _horner(coeffs, Z, x):
    y = coeffs[-1] * x
    for c in coeffs[-2::-1]:
        y = Z @ y + c * x
    return y


def apply_filter(spec: FilterSpec, x, basis: GftBasis | None = None, Z=None):
    """Filter signal ``x`` (or each column of a matrix ``x``).

    Spectral filters act on the GFT coefficients of ``basis``. Polynomial
    filters evaluate ``sum_k h_k Z^k x`` by Horner's rule, where ``Z`` is given
    or taken from ``basis``; a sparse ``Z`` is never densified.
    """
    x = np.asarray(x)
    if spec.kind is FilterKind.MATRIX:
        if spec.H.shape[1] != x.shape[0]:
            raise DimensionError(f"filter is {spec.H.shape}, signal length {x.shape[0]}")
        return spec.H @ x
    if spec.kind is FilterKind.SPECTRAL:
        if basis is None:
            raise ValueError("a spectral filter needs a GFT basis")
        if len(spec.response) != basis.n:
            raise DimensionError(f"response has {len(spec.response)} entries, basis {basis.n}")
        if np.all(spec.response == 1):
            # U F = I, so skip the round trip and its rounding
            return x.copy()
        xh = forward(basis, x)
        h = spec.response.reshape((-1,) + (1,) * (xh.ndim - 1))
        return inverse(basis, h * xh)
    if Z is None:
        if basis is None:
            raise ValueError("a polynomial filter needs Z or a GFT basis")
        Z = fundamental_matrix(basis)
    if Z.shape[1] != x.shape[0]:
        raise DimensionError(f"Z is {Z.shape}, signal length {x.shape[0]}")
    return _horner(spec.coeffs, Z, x)


def filter_matrix(spec: FilterSpec, basis: GftBasis | None = None, Z=None) -> np.ndarray:
    """Dense matrix of a filter."""
    if spec.kind is FilterKind.MATRIX:
        H = spec.H
        return H.toarray() if sp.issparse(H) else np.asarray(H)
    if spec.kind is FilterKind.SPECTRAL:
        if basis is None:
            raise ValueError("a spectral filter needs a GFT basis")
        if np.all(spec.response == 1):
            return np.eye(basis.n)
        return (basis.U * spec.response[None, :]) @ basis.F
    n = basis.n if basis is not None else Z.shape[0]
    H = apply_filter(spec, np.eye(n), basis=basis, Z=Z)
    return H.toarray() if sp.issparse(H) else np.asarray(H)


def spectral_response(spec: FilterSpec, basis: GftBasis) -> np.ndarray | None:
    """Frequency response in ``basis``, or None for a matrix filter."""
    if spec.kind is FilterKind.SPECTRAL:
        return spec.response
    if spec.kind is FilterKind.POLYNOMIAL:
        return polynomial_response(spec.coeffs, basis.freqs)
    return None


def is_invariance_filter(H, Z, rtol: float = 1e-8):
    """Whether ``H`` commutes with ``Z``: returns ``(ok, ||HZ - ZH||_F)``."""
    H = H.toarray() if sp.issparse(H) else np.asarray(H)
    Z = Z.toarray() if sp.issparse(Z) else np.asarray(Z)
    if H.shape != Z.shape or H.shape[0] != H.shape[1]:
        raise DimensionError(f"H is {H.shape}, Z is {Z.shape}")
    res = float(np.linalg.norm(H @ Z - Z @ H))
    return res <= rtol * np.linalg.norm(H) * np.linalg.norm(Z), res


def polynomial_representable(basis: GftBasis, response, rtol: float = 1e-9):
    """Whether a spectral response is a polynomial in the fundamental matrix.

    Interpolation fails exactly when a repeated frequency carries two
    different response values. Returns ``(ok, worst spread within a group)``.
    """
    response = np.asarray(response)
    if len(response) != basis.n:
        raise DimensionError(f"response has {len(response)} entries, basis {basis.n}")
    scale = max(1.0, float(np.abs(response).max(initial=0.0)))
    spread = 0.0
    for grp in degenerate_groups(basis.freqs):
        vals = response[grp]
        spread = max(spread, float(np.abs(vals - vals[0]).max()))
    return spread <= rtol * scale, spread


def ideal_lowpass(basis: GftBasis, cutoff: int, x):
    """Keep the GFT coefficients ``0..cutoff`` of ``x``."""
    if not 0 <= cutoff < basis.n:
        raise IndexError(f"cutoff {cutoff} outside [0, {basis.n})")
    h = np.zeros(basis.n)
    h[: cutoff + 1] = 1.0
    return apply_filter(FilterSpec.spectral(h), x, basis=basis)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Centered Gaussian noise with covariance ``sigma^2 Q^-1``."""

    sigma: float
    q: InnerProduct
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")


def sample_q_white_noise(model: NoiseModel, draws: int | None = None, rng=None):
    """One draw (shape ``(n,)``) or ``draws`` columns of Q-white noise.

    ``z`` standard normal is mapped through the inverse of the whitening
    factor of Q, so the covariance is exactly ``sigma^2 Q^-1``.
    """
    rng = np.random.default_rng(model.seed) if rng is None else rng
    shape = (model.q.n,) if draws is None else (model.q.n, draws)
    return model.sigma * model.q.unwhiten(rng.standard_normal(shape))


def empirical_spectral_variance(basis: GftBasis, noise) -> np.ndarray:
    """Per-mode sample variance (ddof=1) of the GFT of noise columns."""
    nh = forward(basis, noise)
    return np.var(nh, axis=1, ddof=1)


@dataclass(frozen=True)
class QmseReport:
    total: float
    bias: float
    variance: float
    path: str
    stderr: float = 0.0
    trials: int = 0


def q_mse(
    spec: FilterSpec,
    basis: GftBasis,
    x,
    model: NoiseModel,
    mode: str = "analytic",
    trials: int = 10_000,
    error_q: InnerProduct | None = None,
) -> QmseReport:
    """Expected squared error ``E ||H(x + n) - x||^2`` in the norm of ``error_q``.

    ``error_q`` defaults to the basis Q. The analytic variance is
    ``sigma^2 sum |h(l)|^2`` when the noise is white for the error norm and
    the filter is diagonal in ``basis`` (path ``flat_spectrum``), and
    ``sigma^2 trace(H^H Qe H Qn^-1)`` otherwise (path ``trace``). Monte Carlo
    uses seed ``model.seed + t`` for trial ``t``.
    """
    x = np.asarray(x)
    if x.shape != (basis.n,):
        raise DimensionError(f"signal has shape {x.shape}, expected ({basis.n},)")
    eq = basis.q if error_q is None else error_q
    H = filter_matrix(spec, basis=basis)
    bias = q_norm_squared(H @ x - x, eq)
    if mode == "analytic":
        h = spectral_response(spec, basis)
        if h is not None and model.q.same_as(eq) and eq.same_as(basis.q):
            var = model.sigma**2 * float(np.sum(np.abs(h) ** 2))
            path = "flat_spectrum"
        else:
            var = model.sigma**2 * float(np.real(np.trace(H.conj().T @ eq.apply(H) @ model.q.solve(np.eye(basis.n)))))
            path = "trace"
        return QmseReport(bias + var, bias, var, path)
    if mode != "monte_carlo":
        raise ValueError("mode must be 'analytic' or 'monte_carlo'")
    if trials < 2:
        raise ValueError("monte_carlo needs at least 2 trials")
    noise = np.empty((basis.n, trials))
    for t in range(trials):
        noise[:, t] = sample_q_white_noise(model, rng=np.random.default_rng(model.seed + t))
    Hn = H @ noise
    err = (H @ x - x)[:, None] + Hn
    tot = np.real(np.sum(err.conj() * eq.apply(err), axis=0))
    var = np.real(np.sum(Hn.conj() * eq.apply(Hn), axis=0))
    return QmseReport(
        float(tot.mean()),
        bias,
        float(var.mean()),
        "monte_carlo",
        stderr=float(tot.std(ddof=1) / np.sqrt(trials)),
        trials=trials,
    )


# bilateral filter


def bilateral_graph(image, sigma_d: float, sigma_i: float, radius: int = 2) -> Graph:
    """Pixel graph: distance kernel times intensity kernel over a square window.

    Pixel ``(r, c)`` is vertex ``r * width + c``; coords are ``(c, r)``.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 1:
        img = img[None, :]
    if img.ndim != 2 or img.size == 0:
        raise ValueError("image must be a nonempty 2D grid")
    h, w = img.shape
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if radius > max(h, w) - 1 and max(h, w) > 1:
        raise ValueError(f"radius {radius} exceeds the image size {h}x{w}")
    if not (sigma_d > 0 and sigma_i > 0):
        raise ValueError("sigma_d and sigma_i must be positive")
    rows, cols = np.mgrid[0:h, 0:w]
    idx = (rows * w + cols).ravel()
    src, dst, wt = [], [], []
    for dr in range(0, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc <= 0:
                continue
            r0, r1 = 0, h - dr
            c0, c1 = max(0, -dc), min(w, w - dc)
            if r1 <= r0 or c1 <= c0:
                continue
            a = (rows[r0:r1, c0:c1] * w + cols[r0:r1, c0:c1]).ravel()
            b = a + dr * w + dc
            di = img.ravel()[a] - img.ravel()[b]
            ww = np.exp(-(dr * dr + dc * dc) / (2 * sigma_d**2)) * np.exp(-(di * di) / (2 * sigma_i**2))
            keep = ww > 0
            src.append(a[keep])
            dst.append(b[keep])
            wt.append(ww[keep])
    coords = np.column_stack([cols.ravel(), rows.ravel()]).astype(float)
    if not src:
        return Graph.from_edges(len(idx), [], coords=coords)
    return Graph(h * w, np.concatenate(src), np.concatenate(dst), np.concatenate(wt), coords=coords)


def bilateral_setup(image, sigma_d: float, sigma_i: float, radius: int = 2):
    """``(graph, Q = I + D, Z = (I + D)^-1 L)``; one bilateral pass is ``(I - Z) x``."""
    g = bilateral_graph(image, sigma_d, sigma_i, radius)
    Q = InnerProduct.identity_plus_degree(g)
    L = build_operator(g, OperatorKind.COMBINATORIAL_LAPLACIAN)
    Z = (sp.diags(1.0 / Q.q) @ L).tocsr()
    return g, Q, Z


def bilateral_filter(image, sigma_d: float, sigma_i: float, radius: int = 2) -> np.ndarray:
    """One pass of the bilateral filter, same shape as ``image``."""
    img = np.asarray(image, dtype=float)
    _, _, Z = bilateral_setup(img, sigma_d, sigma_i, radius)
    y = apply_filter(FilterSpec.polynomial([1.0, -1.0]), img.ravel(), Z=Z)
    return y.reshape(img.shape)


# PGM images


def _pgm_tokens(data: bytes):
    """Yield whitespace-separated header tokens with their end offsets, skipping comments."""
    pos, n = 0, len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a plain (P2) or raw (P5) grayscale PGM into a float array."""
    data = Path(path).read_bytes()
    toks = _pgm_tokens(data)
    try:
        magic, _ = next(toks)
        w, _ = next(toks)
        h, _ = next(toks)
        maxval, end = next(toks)
        w, h, maxval = int(w), int(h), int(maxval)
    except (StopIteration, ValueError):
        raise FormatError(f"{path}: malformed PGM header") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad PGM dimensions or maxval")
    if magic == b"P5":
        dtype = ">u1" if maxval < 256 else ">u2"
        raw = data[end + 1 :]
        count = w * h
        if len(raw) < count * np.dtype(dtype).itemsize:
            raise FormatError(f"{path}: truncated PGM data")
        return np.frombuffer(raw, dtype=dtype, count=count).astype(float).reshape(h, w)
    if magic == b"P2":
        try:
            vals = [int(t) for t, _ in toks]
        except ValueError:
            raise FormatError(f"{path}: non-integer pixel") from None
        if len(vals) != w * h:
            raise FormatError(f"{path}: expected {w * h} pixels, got {len(vals)}")
        return np.array(vals, dtype=float).reshape(h, w)
    raise FormatError(f"{path}: unsupported PGM magic {magic!r}")


def write_pgm(path, image, maxval: int = 255, binary: bool = False) -> None:
    """Write a grayscale image, rounding and clipping to ``[0, maxval]``."""
    img = np.clip(np.rint(np.asarray(image, dtype=float)), 0, maxval).astype(np.int64)
    if img.ndim != 2:
        raise ValueError("image must be 2D")
    h, w = img.shape
    if binary:
        dtype = ">u1" if maxval < 256 else ">u2"
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
            fh.write(img.astype(dtype).tobytes())
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(f"P2\n{w} {h}\n{maxval}\n")
        for row in img:
            fh.write(" ".join(str(v) for v in row) + "\n")
