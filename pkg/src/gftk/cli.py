"""Command-line front end: ``gftk <subcommand> ...``.

Exit status is 0 on success, 1 when a computation fails and 2 on usage errors.
Every run writes a JSON manifest next to its outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._fmt import fmt
from .clustering import CONFIGS, ClusterConfig, lowpass_indicator_study, make_dataset, run_sweep, write_curve_csv, write_report_csv
from .errors import GftkError
from .filtering import (
    FilterSpec,
    apply_filter,
    bilateral_filter,
    ideal_lowpass,
    read_pgm,
    write_pgm,
)
from .gft import degenerate_groups, fundamental_matrix, gft_basis, gft_basis_hpsd, read_basis, write_basis
from .graph import build_operator, knn_graph, path_graph, prenormalize_adjacency, read_graph, read_points, ring_graph, write_graph
from .operators import InnerProduct, inner_product, read_q_csv, variation_operator
from .sensor import SensorConfig, run_energy_experiment, write_long_csv, write_summary_csv
from .voronoi import Rectangle

VARIATIONS = ("L", "NL", "GQV", "GTV", "GDV", "GQDV")
Q_ALIASES = {
    "identity": "identity",
    "i": "identity",
    "degree": "degree",
    "d": "degree",
    "identity_plus_degree": "identity_plus_degree",
    "i+d": "identity_plus_degree",
    "voronoi": "voronoi",
    "c": "voronoi",
}


class UsageError(Exception):
    pass


# seeds


def root_seed(arg) -> int:
    """``--seed`` if given, else ``$GFTK_SEED``, else 0."""
    if arg is not None:
        return int(arg)
    env = os.environ.get("GFTK_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GFTK_SEED must be an integer, got {env!r}") from None


def derive_seed(root: int, label: str) -> int:
    """Stable 64-bit sub-seed for the subsystem ``label``."""
    h = hashlib.blake2b(f"{root}:{label}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


# files


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_signal(path) -> np.ndarray:
    """Single-column CSV; a non-numeric first line is taken as a header."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines:
        try:
            float(lines[0].split(",")[0])
        except ValueError:
            lines = lines[1:]
    try:
        return np.array([float(ln.split(",")[0]) for ln in lines])
    except ValueError as exc:
        raise GftkError(f"{path}: {exc}") from None


def write_signal(path, x, header: str = "value") -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        fh.writelines(fmt(v) + "\n" for v in np.real(x))


def write_manifest(manifest_path, subcommand, config, seed, inputs, outputs) -> list[str]:
    """Write the run manifest; returns inputs whose digest changed since the last run."""
    manifest_path = Path(manifest_path)
    digests = {str(p): file_digest(p) for p in inputs}
    changed = []
    if manifest_path.exists():
        try:
            old = json.loads(manifest_path.read_text()).get("inputs", {})
            changed = [p for p, d in digests.items() if p in old and old[p] != d]
        except (ValueError, AttributeError):
            pass
    data = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": digests,
        "outputs": [str(p) for p in outputs],
        "changed_inputs": changed,
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    for p in changed:
        print(f"warning: input {p} changed since the previous run", file=sys.stderr)
    return changed


def _file_manifest(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment. Dashes in keys become underscores."""
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise UsageError(f"{path}: expected key=value, got {ln!r}")
        k, v = ln.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _float_list(text) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


# Q and basis resolution


def resolve_q(spec: str, g, domain=None) -> InnerProduct:
    """``identity``, ``degree``, ``identity_plus_degree``, ``voronoi`` or ``diag:FILE`` / ``general:FILE``."""
    low = spec.strip()
    if low.lower().startswith(("diag:", "general:")):
        kind, path = low.split(":", 1)
        ip = read_q_csv(path)
        if kind.lower() == "diag" and not ip.is_diagonal:
            raise GftkError(f"{path}: expected one value per line")
        if ip.n != g.n:
            raise GftkError(f"{path}: Q has size {ip.n}, graph has {g.n} vertices")
        return ip
    key = Q_ALIASES.get(low.lower())
    if key is None:
        raise UsageError(f"unknown --q {spec!r}")
    if key == "voronoi":
        if g.coords is None:
            raise GftkError("voronoi Q needs vertex coordinates in the graph file")
        if domain is None:
            domain = Rectangle(0.0, 0.0, 1.0, 1.0)
        return InnerProduct.voronoi(g.coords, domain)
    return inner_product(g, key)


def _domain(text):
    if text is None:
        return None
    v = _float_list(text)
    if len(v) != 4:
        raise UsageError("--domain needs xmin,ymin,xmax,ymax")
    return Rectangle(*v)


def _q_inputs(spec):
    if ":" in spec:
        return [spec.split(":", 1)[1]]
    return []


# subcommands


def cmd_graph(a):
    if sum(x is not None for x in (a.points, a.ring, a.path)) != 1:
        raise UsageError("give exactly one of --points, --ring, --path")
    inputs = []
    if a.points:
        inputs.append(a.points)
        g = knn_graph(read_points(a.points), int(a.k), float(a.sigma))
    elif a.ring:
        g = ring_graph(int(a.ring))
    else:
        g = path_graph(int(a.path))
    if _bool(a.prenormalize):
        g = prenormalize_adjacency(g)
    write_graph(a.out, g)
    write_manifest(_file_manifest(a.out), "graph", vars_clean(a), None, inputs, [a.out])


def cmd_gft(a):
    g = read_graph(a.graph)
    Q = resolve_q(a.q, g, _domain(a.domain))
    op = variation_operator(g, a.variation)
    seed = root_seed(a.seed)
    opts = {}
    if not op.is_quadratic:
        opts = {"restarts": int(a.restarts), "seed": derive_seed(seed, "gft-restarts") % (2**63)}
        if a.n_modes is not None:
            opts["n_modes"] = int(a.n_modes)
    b = gft_basis(op, Q, **opts)
    outs = write_basis(a.out, b, {"seed": seed})
    write_manifest(Path(a.out) / "manifest.json", "gft", vars_clean(a), seed, [a.graph] + _q_inputs(a.q), outs)
    print(f"lambda_0={fmt(b.freqs[0])} lambda_max={fmt(b.freqs[-1])}")


def cmd_transform(a):
    b = read_basis(a.basis)
    x = read_signal(a.signal)
    if len(x) != b.n:
        raise GftkError(f"signal has {len(x)} entries, basis has {b.n}")
    y = b.inverse(x) if _bool(a.inverse) else b.forward(x)
    write_signal(a.out, y, "x" if _bool(a.inverse) else "xhat")
    write_manifest(_file_manifest(a.out), "transform", vars_clean(a), None, [a.signal, Path(a.basis) / "U.csv"], [a.out])


def cmd_filter(a):
    x = read_signal(a.signal)
    inputs = [a.signal]
    chosen = [v is not None for v in (a.ideal_lowpass, a.response, a.poly)]
    if sum(chosen) != 1:
        raise UsageError("give exactly one of --ideal-lowpass, --response, --poly")
    basis = read_basis(a.basis) if a.basis else None
    if basis is not None:
        inputs.append(str(Path(a.basis) / "U.csv"))
    if a.ideal_lowpass is not None or a.response is not None:
        if basis is None:
            raise UsageError("spectral filters need --basis")
        if a.ideal_lowpass is not None:
            y = ideal_lowpass(basis, int(a.ideal_lowpass), x)
        else:
            inputs.append(a.response)
            y = apply_filter(FilterSpec.spectral(read_signal(a.response)), x, basis=basis)
    else:
        coeffs = _float_list(a.poly)
        if basis is not None:
            Z = fundamental_matrix(basis)
        else:
            if not a.graph:
                raise UsageError("--poly needs --basis or --graph with --variation and --q")
            g = read_graph(a.graph)
            inputs.append(a.graph)
            op = variation_operator(g, a.variation)
            if not op.is_quadratic:
                raise UsageError("--poly with --graph needs a quadratic variation (L, NL, GQV)")
            Z = fundamental_matrix(op, resolve_q(a.q, g, _domain(a.domain)))
            inputs += _q_inputs(a.q)
        if Z.shape[0] != len(x):
            raise GftkError(f"signal has {len(x)} entries, graph has {Z.shape[0]}")
        y = apply_filter(FilterSpec.polynomial(coeffs), x, Z=Z)
    write_signal(a.out, y, "y")
    write_manifest(_file_manifest(a.out), "filter", vars_clean(a), None, inputs, [a.out])


def cmd_bilateral(a):
    img = read_pgm(a.image)
    out = bilateral_filter(img, float(a.sigma_d), float(a.sigma_i), int(a.radius))
    maxval = 255 if img.max(initial=0) < 256 else 65535
    write_pgm(a.out, out, maxval=maxval, binary=_bool(a.binary))
    write_manifest(_file_manifest(a.out), "bilateral", vars_clean(a), None, [a.image], [a.out])


def _parse_gft_token(tok: str):
    name = tok.strip()
    key = name.upper().replace(" ", "")
    for cname in CONFIGS:
        if cname.upper() == key:
            return cname
    var, _, q = key.partition(",")
    q = {"I": "I", "D": "D", "C": "C", "IDENTITY": "I", "DEGREE": "D", "VORONOI": "C"}.get(q.replace("+NORM", ""), q)
    cand = f"{var},{q}" + ("+norm" if key.endswith("+NORM") else "")
    for cname in CONFIGS:
        if cname.upper() == cand.upper():
            return cname
    raise UsageError(f"unknown --gft {tok!r}; expected one of {', '.join(CONFIGS)}")


def _seed_list(text, root):
    if text is None:
        return [root]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def cmd_cluster(a):
    seed = root_seed(a.seed)
    if _bool(a.all_configs):
        names = list(CONFIGS)
    elif a.gft:
        names = [_parse_gft_token(a.gft)]
        if _bool(a.feature_normalize) and names[0] == "NL,I":
            names = ["NL,I+norm"]
    else:
        raise UsageError("give --all-configs or --gft VARIATION,Q")
    cfg = ClusterConfig(seed=seed)
    over = {}
    for k in ("n_sparse", "n_dense", "K", "kmeans_restarts", "gtv_restarts"):
        if getattr(a, k.lower(), None) is not None:
            over[k] = int(getattr(a, k.lower()))
    for k in ("sigma", "std_sparse", "std_dense"):
        if getattr(a, k, None) is not None:
            over[k] = float(getattr(a, k))
    cfg = replace(cfg, **over)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(cfg, _seed_list(a.seeds, seed), names)
    outputs = [out / "report.csv"]
    write_report_csv(outputs[0], results)
    if _bool(a.curve):
        for r in results:
            _, truth = make_dataset(replace(cfg, seed=r.seed))
            rows = lowpass_indicator_study(r.basis, truth) if r.basis.provenance.get("completed_from") is None else None
            if rows is None:
                continue
            p = out / f"curve_{r.config.replace(',', '_').replace('+', '_')}_seed{r.seed}.csv"
            write_curve_csv(p, rows)
            outputs.append(p)
    write_manifest(out / "manifest.json", "cluster", {**vars_clean(a), "resolved": asdict(cfg)}, seed, [], outputs)
    for r in results:
        print(f"{r.config} seed={r.seed} accuracy={fmt(r.accuracy)} f1_sparse={fmt(r.f1_sparse)}")


def cmd_sensor(a):
    if a.dist is None:
        raise UsageError("--dist is required (uniform or nonuniform)")
    seed = root_seed(a.seed)
    kw = {"distribution": a.dist.replace("-", ""), "seed": seed, "prenormalize": _bool(a.prenormalize)}
    if a.n is not None:
        kw["n_vertices"] = int(a.n)
    if a.realizations is not None:
        kw["n_realizations"] = int(a.realizations)
    if a.k is not None:
        kw["K"] = int(a.k)
    if a.sigma is not None:
        kw["sigma"] = float(a.sigma)
    if a.freqs is not None:
        kw["freqs"] = tuple(_float_list(a.freqs))
    if a.n_phases is not None:
        kw["phases"] = tuple(2 * np.pi * k / int(a.n_phases) for k in range(int(a.n_phases)))
    if a.q_kinds is not None:
        kw["q_kinds"] = tuple(t.strip().upper() for t in a.q_kinds.split(",") if t.strip())
    try:
        cfg = SensorConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    stats = run_energy_experiment(cfg)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "energies.csv", out / "summary.csv"]
    write_long_csv(outputs[0], stats)
    write_summary_csv(outputs[1], stats)
    resolved = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    write_manifest(out / "manifest.json", "sensor", {**vars_clean(a), "resolved": resolved, "resamples": stats.resamples}, seed, [], outputs)


def cmd_ring_demo(a):
    """Ring of ``n`` vertices under Q = I and Q = diag(q0, 1, ..., 1)."""
    n = int(a.n)
    g = ring_graph(n)
    L = build_operator(g, "combinatorial_laplacian")
    q = np.ones(n)
    q[0] = float(a.q0)
    out = Path(a.out)
    outputs = []
    bases = {}
    for name, Q in (("identity", InnerProduct.identity(n)), ("weighted", InnerProduct.custom_diagonal(q))):
        b = gft_basis_hpsd(L, Q, variation="L")
        bases[name] = b
        outputs += write_basis(out / name, b)
    # in each eigenspace of the plain ring, the mode vanishing at vertex 0 is
    # also a mode of the reweighted ring with the same variation
    bi = bases["identity"]
    groups = {i: [i] for i in range(n)}
    for grp in degenerate_groups(bi.freqs):
        for i in grp:
            groups[i] = grp
    p = out / "shared_modes.csv"
    with open(p, "w", newline="\n") as fh:
        fh.write("mode,lambda,residual\n")
        for l in range(n):
            grp = groups[l]
            if l != grp[0]:
                continue
            V = bi.U[:, grp]
            if len(grp) == 1:
                if abs(V[0, 0]) > 1e-10:
                    continue
                u = V[:, 0]
            else:
                # unit combination orthogonal to the row of values at vertex 0
                _, _, vh = np.linalg.svd(V[:1, :])
                u = V @ vh[-1]
                u = u / np.linalg.norm(u)
            r = np.linalg.norm(L @ u - bi.freqs[l] * q * u)
            fh.write(f"{l},{fmt(bi.freqs[l])},{fmt(r)}\n")
    outputs.append(p)
    write_manifest(out / "manifest.json", "ring-demo", vars_clean(a), None, [], outputs)


# parser


def vars_clean(a) -> dict:
    return {k: v for k, v in vars(a).items() if k not in ("func",) and not callable(v)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gftk", description="Irregularity-aware graph Fourier transforms.")
    p.add_argument("--version", action="version", version=f"gftk {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key=value file providing defaults for any flag")
        s.set_defaults(func=func)
        return s

    s = add("graph", cmd_graph, "build a graph file")
    s.add_argument("--points")
    s.add_argument("--ring", type=int)
    s.add_argument("--path", type=int)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--sigma", type=float, default=0.3)
    s.add_argument("--prenormalize", action="store_true", default=None)
    s.add_argument("--out", required=True)

    s = add("gft", cmd_gft, "compute a GFT basis")
    s.add_argument("--graph", required=True)
    s.add_argument("--variation", required=True, type=str.upper, choices=VARIATIONS)
    s.add_argument("--q", default="identity")
    s.add_argument("--domain", help="xmin,ymin,xmax,ymax for the Voronoi Q (default unit square)")
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("--n-modes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)

    s = add("transform", cmd_transform, "forward or inverse GFT of a signal")
    s.add_argument("--basis", required=True)
    s.add_argument("--signal", required=True)
    s.add_argument("--inverse", action="store_true", default=None)
    s.add_argument("--out", required=True)

    s = add("filter", cmd_filter, "filter a graph signal")
    s.add_argument("--signal", required=True)
    s.add_argument("--basis")
    s.add_argument("--ideal-lowpass", type=int)
    s.add_argument("--response", help="single-column CSV spectral response")
    s.add_argument("--poly", help="comma-separated coefficients h0,h1,...")
    s.add_argument("--graph")
    s.add_argument("--variation", default="L", type=str.upper, choices=VARIATIONS)
    s.add_argument("--q", default="identity")
    s.add_argument("--domain")
    s.add_argument("--out", required=True)

    s = add("bilateral", cmd_bilateral, "bilateral filter of a PGM image")
    s.add_argument("--image", required=True)
    s.add_argument("--sigma-d", type=float, required=True)
    s.add_argument("--sigma-i", type=float, required=True)
    s.add_argument("--radius", type=int, default=2)
    s.add_argument("--binary", action="store_true", default=None)
    s.add_argument("--out", required=True)

    s = add("cluster", cmd_cluster, "spectral clustering experiment")
    s.add_argument("--all-configs", action="store_true", default=None)
    s.add_argument("--gft", help="VARIATION,Q such as L,D or GTV,I")
    s.add_argument("--feature-normalize", action="store_true", default=None)
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", help="sweep, e.g. 0-19 or 1,5,9")
    s.add_argument("--n-sparse", type=int)
    s.add_argument("--n-dense", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--std-sparse", type=float)
    s.add_argument("--std-dense", type=float)
    s.add_argument("--kmeans-restarts", type=int)
    s.add_argument("--gtv-restarts", type=int)
    s.add_argument("--curve", action="store_true", default=None, help="also write low-pass indicator curves")
    s.add_argument("--out", default="cluster_out")

    s = add("sensor", cmd_sensor, "sensor-network energy experiment")
    s.add_argument("--dist", choices=("uniform", "nonuniform", "non-uniform"))
    s.add_argument("--n", type=int)
    s.add_argument("--realizations", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--freqs")
    s.add_argument("--n-phases", type=int)
    s.add_argument("--q-kinds", help="subset of I,D,C")
    s.add_argument("--prenormalize", action="store_true", default=None)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="sensor_out")

    s = add("ring-demo", cmd_ring_demo, "ring graph with one reweighted vertex")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--q0", type=float, default=10.0)
    s.add_argument("--out", default="ring_demo")
    return p


def _apply_config(parser, argv):
    """Parse, then re-parse with ``--config`` values as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        conf = read_config_file(args.config)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    for k in conf:
        if k not in known or k in ("help", "config"):
            parser.error(f"unknown config key {k!r} for {args.command}")
    defaults = {}
    for k, v in conf.items():
        act = known[k]
        if act.type is not None and v != "":
            try:
                v = act.type(v)
            except ValueError:
                parser.error(f"bad value for {k}: {v!r}")
        if act.choices is not None and v not in act.choices:
            parser.error(f"bad value for {k}: {v!r}")
        defaults[k] = v
    for act in sub._actions:
        if act.dest in defaults:
            act.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gftk: error: {exc}", file=sys.stderr)
        return 2
    except (GftkError, ValueError, IndexError, OSError) as exc:
        print(f"gftk: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
