"""Command-line interface: ``netrecon {infer,synth,sample,gof}``.

Every command writes one JSON document (or, for ``sample``, a plain-text
sample listing) that embeds a manifest of how it was produced. Exit codes:
0 on success, 1 on any error, 2 when ``infer`` hit ``--max-iter`` without
converging.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .engine import EmConfig
from .estimator import NetworkReconstructor, edge_list
from .exceptions import ContractError, NetReconError, ValidationError
from .gof import chi_squared_gof, observed_histogram, predicted_histogram, select_num_levels
from .models import (
    IIDParams,
    MultiLevelParams,
    MultiModalParams,
    PosteriorEdges,
    n_free_parameters,
    params_from_dict,
)
from .obsdata import (
    NodeUniverse,
    PairClass,
    class_index,
    format_counts,
    pair_endpoints,
    pair_index,
    parse_counts,
    parse_reports,
    parse_snapshot_log,
    read_node_list,
)
from .posterior import edge_count, format_samples, metric_stats, sample_networks
from .synth import SynthSpec, random_pernode_params, synthesize

SEED_ENV = "NETRECON_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


class _UsageError(NetReconError):
    pass


# -- helpers -----------------------------------------------------------------


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _default_seed():
    return int(os.environ.get(SEED_ENV, "0"))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if not np.isfinite(value):
            raise NetReconError("refusing to write a non-finite number")
        return value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(doc):
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


class _Manifest:
    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.inputs = []
        self.started = time.time()

    def add_input(self, path):
        self.inputs.append({"path": path, "sha256": _digest(path)})

    def finish(self, **fields):
        doc = {"command": self.command, "tool": "netrecon", "version": __version__, "inputs": self.inputs}
        doc.update(fields)
        if not self.args.no_timestamp:
            doc["started"] = datetime.fromtimestamp(self.started, timezone.utc).isoformat()
            doc["wall_clock_seconds"] = time.time() - self.started
        return doc


def _load_counts(args, manifest, model=None):
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    manifest.add_input(args.input)
    nodes = None
    if args.nodes:
        with open(args.nodes, encoding="utf-8") as fh:
            nodes = read_node_list(fh.read())
        manifest.add_input(args.nodes)
    trials = _int_list(args.default_trials) if args.default_trials else None
    if args.format == "snapshots":
        if trials:
            raise _UsageError("--default-trials does not apply to snapshot logs")
        return parse_snapshot_log(text, nodes=nodes)
    if args.format == "reports":
        return parse_reports(text, default_N=trials, nodes=nodes)
    modes = args.modes or (len(trials) if trials else 1)
    return parse_counts(text, directed=False, modes=modes, default_N=trials, nodes=nodes)


# -- posterior documents -----------------------------------------------------


def posterior_to_dict(Q: PosteriorEdges):
    labels = Q.universe.labels
    out = {"kind": Q.kind, "levels": Q.levels}
    if Q.by_class:
        classes = []
        for c, cls in enumerate(Q.classes):
            entry = {
                "signature": [list(part) for part in cls.signature],
                "member_count": cls.member_count,
                "q": Q.values[c],
                "members": None,
            }
            if cls.members is not None:
                rows, cols = pair_endpoints(Q.universe.n, cls.members)
                entry["members"] = [[labels[i], labels[j]] for i, j in zip(rows.tolist(), cols.tolist())]
            classes.append(entry)
        out["storage"] = "classes"
        out["classes"] = classes
    else:
        rows, cols = pair_endpoints(Q.universe.n)
        out["storage"] = "pairs"
        out["pairs"] = [[labels[i], labels[j], q] for i, j, q in zip(rows.tolist(), cols.tolist(), Q.values.tolist())]
    return out


def posterior_from_dict(nodes, data) -> PosteriorEdges:
    universe = NodeUniverse(tuple(nodes))
    n = universe.n
    if data.get("storage") == "pairs":
        values = np.zeros(universe.n_pairs)
        for u, v, q in data["pairs"]:
            values[pair_index(universe.index(u), universe.index(v), n)] = q
        return PosteriorEdges(universe, values)
    classes, values = [], []
    for entry in data["classes"]:
        members = entry["members"]
        if members is not None:
            members = np.sort(np.array([pair_index(universe.index(u), universe.index(v), n) for u, v in members],
                                       dtype=np.int64))
            rep = tuple(int(x) for x in pair_endpoints(n, members[0]))
        else:
            rep = (0, 1)
        sig = tuple(tuple(part) for part in entry["signature"])
        classes.append(PairClass(sig, int(entry["member_count"]), rep, members))
        values.append(entry["q"])
    classes = tuple(classes)
    return PosteriorEdges(universe, np.array(values, dtype=float), classes, class_index(classes, universe.n_pairs))


# -- commands ----------------------------------------------------------------


def cmd_infer(args):
    manifest = _Manifest(args, "infer")
    counts = _load_counts(args, manifest)
    est = NetworkReconstructor(model=args.model, n_levels=args.levels, tol_param=args.tol,
                               tol_loglik=args.tol_loglik, max_iter=args.max_iter, restarts=args.restarts,
                               random_state=args.seed)
    est.fit(counts)
    trace = est.trace_
    doc = {
        "model": args.model,
        "nodes": list(counts.universe.labels),
        "parameters": est.params_.to_dict(),
        "parameter_flags": list(est.params_.flags),
        "edges": [{"u": u, "v": v, "q": q} for u, v, q in edge_list(est.posterior_, args.q_threshold)],
        "q_threshold": args.q_threshold,
        "convergence": {
            "converged": trace.converged,
            "iterations": trace.iterations_used,
            "final_loglik": trace.final_loglik,
            "restart_index": trace.restart_index,
            "restart_logliks": list(trace.restart_logliks),
            "max_delta_last": trace.records[-1].max_delta if trace.iterations_used else None,
        },
        "posterior": posterior_to_dict(est.posterior_),
    }
    if args.model != "multilevel":
        doc["rates"] = est.rates().to_dict()
    doc["manifest"] = manifest.finish(
        model=args.model, format=args.format, seed=args.seed, levels=args.levels if args.model == "multilevel" else None,
        config={"tol_param": args.tol, "tol_loglik": args.tol_loglik, "max_iter": args.max_iter,
                "restarts": args.restarts, "seed": args.seed})
    _write(_dump(doc), args.output)
    return 0 if trace.converged else 2


def _synth_params(args):
    kind = args.model
    if kind == "iid":
        return IIDParams(args.alpha[0], args.beta[0], args.rho[0])
    if kind == "multimodal":
        return MultiModalParams(args.alpha, args.beta, args.rho[0])
    if kind == "multilevel":
        return MultiLevelParams(args.alpha, args.rho)
    if len(args.alpha) != 2 or len(args.beta) != 2:
        raise _UsageError("pernode synthesis takes --alpha LO,HI and --beta LO,HI ranges")
    return random_pernode_params(args.n, args.alpha, args.beta, args.rho[0], seed=args.seed)


def cmd_synth(args):
    manifest = _Manifest(args, "synth")
    params = _synth_params(args)
    spec = SynthSpec(args.n, params, tuple(_int_list(args.trials)), args.seed)
    truth, counts = synthesize(spec)
    text = format_counts(counts)
    _write(text, args.output)
    sidecar = {
        "model": spec.kind,
        "n": spec.n,
        "trials": list(spec.trials),
        "seed": spec.seed,
        "parameters": params.to_dict(),
        "truth_edges": [[u, v] for u, v in truth.edges()],
        "manifest": manifest.finish(seed=args.seed),
    }
    if truth.levels is not None:
        sidecar["truth_levels"] = truth.levels.tolist()
    truth_path = args.truth or (None if args.output in (None, "-") else args.output + ".truth.json")
    if truth_path:
        _write(_dump(sidecar), truth_path)
    return 0


def _metric(spec, universe):
    if spec == "edges":
        return edge_count
    if spec.startswith("degree:"):
        node = spec.split(":", 1)[1]
        universe.index(node)
        return lambda s: s.degree(node)
    raise _UsageError(f"unknown metric {spec!r}; use 'edges' or 'degree:NODE'")


def cmd_sample(args):
    if args.count < 1:
        raise _UsageError("--count must be at least 1")
    with open(args.posterior, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        Q = posterior_from_dict(doc["nodes"], doc["posterior"])
    except KeyError as exc:
        raise ValidationError(f"posterior document is missing field {exc}") from None
    metrics = {m: _metric(m, Q.universe) for m in args.metric or ()}
    samples = list(sample_networks(Q, args.count, args.seed))
    stats = {name: metric_stats(samples, fn) for name, fn in metrics.items()}
    _write(format_samples(samples, args.seed, args.count, stats), args.output)
    return 0


def cmd_gof(args):
    manifest = _Manifest(args, "gof")
    counts = _load_counts(args, manifest)
    obs = observed_histogram(counts)
    N = counts.default_N[0]
    if args.select_levels:
        config = EmConfig(restarts=args.restarts, max_iter=args.max_iter, seed=args.seed)
        sel = select_num_levels(counts, args.select_levels, args.significance, config)
        doc = {
            "selected_levels": sel.levels,
            "all_rejected": sel.all_rejected,
            "reports": {str(W): {**rep.to_dict(), "parameters": sel.fits[W].params.to_dict()}
                        for W, rep in sel.reports.items()},
        }
        table_report = sel.reports[sel.levels]
    else:
        if not args.params:
            raise _UsageError("gof needs --params PATH or --select-levels WMAX")
        with open(args.params, encoding="utf-8") as fh:
            fitted = json.load(fh)
        manifest.add_input(args.params)
        params = params_from_dict(fitted["model"], fitted["parameters"])
        pred = predicted_histogram(params, counts.n, N)
        table_report = chi_squared_gof(obs, pred, n_free_parameters(params), args.significance)
        doc = {"model": fitted["model"], "report": table_report.to_dict()}
    if args.table:
        _write(table_report.table(), args.table)
    doc["manifest"] = manifest.finish(seed=args.seed, significance=args.significance)
    _write(_dump(doc), args.output)
    return 0


# -- argument parsing --------------------------------------------------------


def _add_common(p):
    p.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
    p.add_argument("--seed", type=int, default=_default_seed(), help=f"random seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--no-timestamp", action="store_true", help="omit wall-clock fields from the manifest")


def _add_input(p):
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["snapshots", "counts", "reports"], default="counts")
    p.add_argument("--default-trials", default=None, help="trials for unlisted pairs, comma-separated per mode")
    p.add_argument("--modes", type=int, default=None, help="number of modes in a counts table")
    p.add_argument("--nodes", default=None, help="file listing extra (possibly unobserved) nodes")


def build_parser():
    parser = _Parser(prog="netrecon", description="Network reconstruction from noisy edge observations.")
    parser.add_argument("--version", action="version", version=f"netrecon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("infer", help="fit a data model and report the edge posterior")
    _add_input(p)
    _add_common(p)
    p.add_argument("--model", choices=["iid", "pernode", "multilevel", "multimodal"], default="iid")
    p.add_argument("--levels", type=int, default=3, help="edge levels for the multilevel model")
    p.add_argument("--tol", type=float, default=1e-8, help="parameter-change tolerance")
    p.add_argument("--tol-loglik", type=float, default=1e-10, help="relative log-likelihood tolerance")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--q-threshold", type=float, default=0.5, help="list edges with posterior at least this")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("synth", help="simulate a network and noisy observations")
    _add_common(p)
    p.add_argument("--model", choices=["iid", "pernode", "multilevel", "multimodal"], default="iid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=_float_list, required=True)
    p.add_argument("--beta", type=_float_list, default=[0.0])
    p.add_argument("--rho", type=_float_list, required=True)
    p.add_argument("--trials", default="1", help="trials per pair (comma-separated per mode)")
    p.add_argument("--truth", default=None, help="truth sidecar path (default: OUTPUT.truth.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="draw networks from an infer document")
    _add_common(p)
    p.add_argument("--posterior", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--metric", action="append", help="'edges' or 'degree:NODE' (repeatable)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gof", help="chi-squared fit of the observation-count histogram")
    _add_input(p)
    _add_common(p)
    p.add_argument("--params", default=None, help="infer document holding fitted parameters")
    p.add_argument("--select-levels", type=int, default=None, metavar="WMAX")
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--table", default=None, help="write a tab-separated histogram here")
    p.set_defaults(func=cmd_gof)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NetReconError, OSError, ValueError, ContractError) as exc:
        message = str(exc).replace("\n", " ")
        sys.stderr.write(f"netrecon {args.command}: error: {message}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
