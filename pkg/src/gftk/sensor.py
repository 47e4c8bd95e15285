"""Energy of sampled cosines on random sensor graphs, for several vertex weightings.

Each realization samples points in the unit square, builds a k-NN graph and
measures ``E = ||s||_Q^2`` of ``s_i = cos(2 pi nu x_i + phi)`` for Q equal to
the identity (I), the degree matrix (D) or the Voronoi cell areas (C).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fmt import fmt
from .errors import GraphError
from .graph import knn_graph, prenormalize_adjacency
from .voronoi import UNIT_SQUARE, voronoi_areas

Q_KINDS = ("I", "D", "C")


def default_freqs() -> tuple:
    return tuple(0.5 * k for k in range(1, 17))


def default_phases() -> tuple:
    return tuple(2 * np.pi * k / 8 for k in range(8))


@dataclass(frozen=True)
class SensorConfig:
    distribution: str = "uniform"
    n_vertices: int = 1000
    n_realizations: int = 500
    K: int = 10
    sigma: float = 0.3
    freqs: tuple = field(default_factory=default_freqs)
    phases: tuple = field(default_factory=default_phases)
    q_kinds: tuple = Q_KINDS
    prenormalize: bool = False
    seed: int = 0
    mix_weights: tuple = (0.5, 0.25, 0.25)
    bump_means: tuple = ((0.3, 0.3), (0.7, 0.65))
    bump_std: float = 0.08

    def __post_init__(self):
        if self.distribution not in ("uniform", "nonuniform"):
            raise ValueError("distribution must be 'uniform' or 'nonuniform'")
        if self.n_realizations < 2:
            raise ValueError("need at least 2 realizations")
        if any(nu < 0 for nu in self.freqs):
            raise ValueError("frequencies must be nonnegative")
        if any(not 0 <= p < 2 * np.pi for p in self.phases):
            raise ValueError("phases must lie in [0, 2 pi)")
        bad = set(self.q_kinds) - set(Q_KINDS)
        if bad or not self.q_kinds:
            raise ValueError(f"q_kinds must be a nonempty subset of {Q_KINDS}")
        if len(self.mix_weights) != 1 + len(self.bump_means) or abs(sum(self.mix_weights) - 1) > 1e-12:
            raise ValueError("mix_weights must have one entry per component and sum to 1")


def _inside(p):
    return (p[:, 0] > 0) & (p[:, 0] < 1) & (p[:, 1] > 0) & (p[:, 1] < 1)


def sample_points(cfg: SensorConfig, n: int | None = None, rng=None) -> np.ndarray:
    """Points strictly inside the unit square, pairwise distinct.

    The non-uniform law is a mixture of the uniform law and isotropic
    Gaussian bumps, each bump truncated to the square by rejection.
    """
    n = cfg.n_vertices if n is None else n
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng

    def draw(m):
        if cfg.distribution == "uniform":
            return rng.uniform(size=(m, 2))
        comp = rng.choice(len(cfg.mix_weights), size=m, p=cfg.mix_weights)
        p = rng.uniform(size=(m, 2))
        for k, mean in enumerate(cfg.bump_means, start=1):
            sel = np.flatnonzero(comp == k)
            while sel.size:
                p[sel] = rng.normal(mean, cfg.bump_std, size=(sel.size, 2))
                sel = sel[~_inside(p[sel])]
        return p

    pts = draw(n)
    while True:
        bad = ~_inside(pts)
        _, first = np.unique(pts, axis=0, return_index=True)
        dup = np.ones(n, dtype=bool)
        dup[first] = False
        redo = np.flatnonzero(bad | dup)
        if redo.size == 0:
            return pts
        pts[redo] = draw(redo.size)


def cosine_signal(points, nu: float, phi: float) -> np.ndarray:
    """``cos(2 pi nu x + phi)`` of the horizontal coordinate."""
    return np.cos(2 * np.pi * nu * np.asarray(points, dtype=float)[:, 0] + phi)


def realization_weights(cfg: SensorConfig, r: int):
    """Vertex weights ``{kind: q}`` and points of realization ``r`` (seed ``cfg.seed + r``)."""
    rng = np.random.default_rng(cfg.seed + r)
    resamples = 0
    while True:
        pts = sample_points(cfg, rng=rng)
        try:
            out = {}
            g = None
            if "D" in cfg.q_kinds:
                g = knn_graph(pts, cfg.K, cfg.sigma)
                if cfg.prenormalize:
                    g = prenormalize_adjacency(g)
                out["D"] = g.degrees()
            if "C" in cfg.q_kinds:
                out["C"] = voronoi_areas(pts, UNIT_SQUARE)
            if "I" in cfg.q_kinds:
                out["I"] = np.ones(len(pts))
            return out, pts, resamples
        except GraphError:
            resamples += 1


@dataclass
class EnergyStats:
    """Energies indexed ``[realization, nu, phi, q]`` and the statistics derived from them."""

    freqs: np.ndarray
    phases: np.ndarray
    q_kinds: tuple
    energies: np.ndarray
    resamples: int = 0

    @property
    def mean(self) -> np.ndarray:
        return self.energies.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.energies.std(axis=0, ddof=1)

    @property
    def cv(self) -> np.ndarray:
        """``max over phi of std / mean``, shape ``[nu, q]``."""
        return (self.std / self.mean).max(axis=1)

    @property
    def mean_over_phases(self) -> np.ndarray:
        return self.mean.mean(axis=1)

    @property
    def m(self) -> np.ndarray:
        """``max over phi of |1 - mean / mean over phi|``, shape ``[nu, q]``."""
        mu = self.mean
        return np.abs(1 - mu / mu.mean(axis=1, keepdims=True)).max(axis=1)

    def column(self, kind: str) -> int:
        return self.q_kinds.index(kind)


def run_energy_experiment(cfg: SensorConfig) -> EnergyStats:
    freqs = np.asarray(cfg.freqs, dtype=float)
    phases = np.asarray(cfg.phases, dtype=float)
    kinds = tuple(cfg.q_kinds)
    E = np.empty((cfg.n_realizations, len(freqs), len(phases), len(kinds)))
    resamples = 0
    arg_nu = 2 * np.pi * freqs
    for r in range(cfg.n_realizations):
        qs, pts, extra = realization_weights(cfg, r)
        resamples += extra
        S2 = np.cos(arg_nu[None, :, None] * pts[:, 0, None, None] + phases[None, None, :]) ** 2
        for j, k in enumerate(kinds):
            E[r, :, :, j] = np.tensordot(qs[k], S2, axes=(0, 0))
    return EnergyStats(freqs, phases, kinds, E, resamples)


def write_long_csv(path, stats: EnergyStats) -> None:
    """Columns realization, nu, phi, q_kind, energy."""
    with open(path, "w", newline="\n") as fh:
        fh.write("realization,nu,phi,q_kind,energy\n")
        R = stats.energies.shape[0]
        for r in range(R):
            for a, nu in enumerate(stats.freqs):
                for b, phi in enumerate(stats.phases):
                    for j, k in enumerate(stats.q_kinds):
                        fh.write(f"{r},{fmt(nu)},{fmt(phi)},{k},{fmt(stats.energies[r, a, b, j])}\n")


def write_summary_csv(path, stats: EnergyStats) -> None:
    """Columns nu, q_kind, cv, m, mean_energy."""
    cv, m, mu = stats.cv, stats.m, stats.mean_over_phases
    with open(path, "w", newline="\n") as fh:
        fh.write("nu,q_kind,cv,m,mean_energy\n")
        for a, nu in enumerate(stats.freqs):
            for j, k in enumerate(stats.q_kinds):
                fh.write(f"{fmt(nu)},{k},{fmt(cv[a, j])},{fmt(m[a, j])},{fmt(mu[a, j])}\n")
