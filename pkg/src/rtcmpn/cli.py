"""Command-line entry point.

    rtcmpn synth   --out DIR [--n 200 --k 4 ...]
    rtcmpn cluster --edges E --features F [--labels L] [--k K] --out DIR
    rtcmpn eval    --pred P --truth T [--out report.json]
    rtcmpn trace-plot-data --trace trace.csv --out plot.csv

Every option also reads a default from ``RTCMPN_<OPTION>`` (for example
``RTCMPN_MAX_ITERS=50``); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .em import EMConfig, fit
from .evaluation import NMI_VARIANTS, evaluate
from .network import NetworkFormatError, load_edge_list, load_feature_table, load_labels, write_labels
from .similarity import compute_similarities
from .state import NumericalError, save_checkpoint
from .synthetic import EmptyGraphError, SyntheticSpec, generate_network, write_synthetic

ENV_PREFIX = "RTCMPN_"

log = logging.getLogger("rtcmpn")


def _env(name, default, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if cast is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, args, inputs, outputs):
    doc = {
        "tool": "rtcmpn",
        "version": __version__,
        "command": command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _read_label_file(path) -> dict[int, int]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise NetworkFormatError("expected 'vertex label'", path, line_no)
            out[int(parts[0])] = int(parts[1])
    return out


def cmd_cluster(args, parser) -> int:
    for flag in ("edges", "features"):
        path = getattr(args, flag)
        if path is None or not Path(path).exists():
            parser.print_usage(sys.stderr)
            print(f"error: --{flag} file not found: {path}", file=sys.stderr)
            return 2
    net = load_edge_list(args.edges, n_vertices=args.n_vertices)
    net = load_feature_table(args.features, net)
    inputs = [args.edges, args.features]
    if args.labels:
        net = load_labels(args.labels, net)
        inputs.append(args.labels)
    k = args.k if args.k is not None else net.n_clusters
    if k is None:
        parser.print_usage(sys.stderr)
        print("error: --k is required when no --labels are given", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = Path(args.trace) if args.trace else out / "trace.csv"
    try:
        cfg = EMConfig(k_clusters=k, max_iters=args.max_iters, tol=args.tol,
                       tol_mode=args.tol_mode, seed=args.seed,
                       weighted_h=args.weighted_h, guard=not args.no_guard,
                       trace_path=str(trace_path))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sims = compute_similarities(net)
    try:
        result = fit(net, sims, cfg)
    except (NumericalError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1

    outputs = [trace_path, out / "labels.tsv", out / "checkpoint.json"]
    write_labels(out / "labels.tsv", result.labels)
    save_checkpoint(out / "checkpoint.json", result.final_state, sims)
    summary = (f"L_final={result.trace[-1][1]:.6f} iterations={result.iterations_run} "
               f"converged={result.converged}")
    if net.labels:
        truth = net.label_vector()
        mask = truth >= 0
        report = evaluate(result.labels[mask], truth[mask], args.nmi_variant)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        outputs.append(out / "report.json")
        summary += f" NMI={report.nmi:.3f} Acc={report.acc:.3f}"
    _write_manifest(out, "cluster", args, inputs, outputs)
    print(summary)
    return 0


def cmd_synth(args, parser) -> int:
    try:
        spec = SyntheticSpec(n_vertices=args.n, k_clusters=args.k, m_features=args.m,
                             membership_concentration=args.concentration,
                             edge_scale=args.edge_scale, theme_purity=args.purity,
                             noise=args.noise, seed=args.seed)
        net, planted = generate_network(spec)
    except (EmptyGraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    paths = write_synthetic(out, spec, net, planted)
    _write_manifest(out, "synth", args, [], paths.values())
    print(f"N={net.n_vertices} |E|={net.n_edges} M={net.n_features} K={spec.k_clusters} -> {out}")
    return 0


def cmd_eval(args, parser) -> int:
    pred = _read_label_file(args.pred)
    truth = _read_label_file(args.truth)
    if sorted(pred) != sorted(truth):
        print(f"error: label files cover different vertices ({len(pred)} vs {len(truth)})",
              file=sys.stderr)
        return 1
    keys = sorted(truth)
    report = evaluate([pred[k] for k in keys], [truth[k] for k in keys], args.nmi_variant)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


def cmd_trace_plot_data(args, parser) -> int:
    """Trace CSV -> series normalized to [0, 1] plus relative increments."""
    with open(args.trace, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("error: empty trace", file=sys.stderr)
        return 1
    ll = np.array([float(r["loglik"]) for r in rows])
    delta = np.array([float(r["delta"]) for r in rows])
    span = ll.max() - ll.min()
    scaled = (ll - ll.min()) / span if span > 0 else np.ones_like(ll)
    prev = ll - delta
    rel = delta / (1.0 + np.abs(prev))
    dest = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(dest)
        w.writerow(["iteration", "loglik", "delta", "rel_delta", "scaled"])
        for r, a, b, c in zip(rows, ll, rel, scaled):
            w.writerow([r["iteration"], repr(float(a)), r["delta"], repr(float(b)), repr(float(c))])
    finally:
        if args.out:
            dest.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtcmpn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="fit the model and write labels")
    c.add_argument("--edges", default=_env("edges", None))
    c.add_argument("--features", default=_env("features", None))
    c.add_argument("--labels", default=_env("labels", None))
    c.add_argument("--n-vertices", type=int, default=_env("n_vertices", None, int))
    c.add_argument("--k", type=int, default=_env("k", None, int))
    c.add_argument("--max-iters", type=int, default=_env("max_iters", 300, int))
    c.add_argument("--tol", type=float, default=_env("tol", 1e-6, float))
    c.add_argument("--tol-mode", choices=("relative", "absolute"),
                   default=_env("tol_mode", "relative"))
    c.add_argument("--seed", type=int, default=_env("seed", 0, int))
    c.add_argument("--out", default=_env("out", "rtcmpn_out"))
    c.add_argument("--trace", default=_env("trace", None))
    c.add_argument("--nmi-variant", choices=NMI_VARIANTS, default=_env("nmi_variant", "arithmetic"))
    c.add_argument("--weighted-h", action="store_true", default=_env("weighted_h", False, bool))
    c.add_argument("--no-guard", action="store_true", default=_env("no_guard", False, bool),
                   help="apply the raw update rules even when they lower the likelihood")
    c.set_defaults(func=cmd_cluster)

    d = SyntheticSpec()
    s = sub.add_parser("synth", help="sample a planted-cluster network")
    s.add_argument("--n", type=int, default=_env("n", d.n_vertices, int))
    s.add_argument("--k", type=int, default=_env("k", d.k_clusters, int))
    s.add_argument("--m", type=int, default=_env("m", d.m_features, int))
    s.add_argument("--concentration", type=float,
                   default=_env("concentration", d.membership_concentration, float))
    s.add_argument("--edge-scale", type=float, default=_env("edge_scale", d.edge_scale, float))
    s.add_argument("--purity", type=float, default=_env("purity", d.theme_purity, float))
    s.add_argument("--noise", type=float, default=_env("noise", d.noise, float))
    s.add_argument("--seed", type=int, default=_env("seed", d.seed, int))
    s.add_argument("--out", default=_env("out", "rtcmpn_synth"))
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score predicted labels against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--nmi-variant", choices=NMI_VARIANTS, default=_env("nmi_variant", "arithmetic"))
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("trace-plot-data", help="turn a trace CSV into plot-ready columns")
    t.add_argument("--trace", required=True)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_trace_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, parser)
    except (NetworkFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
