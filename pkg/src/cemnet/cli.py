"""Command-line front-end: simulate | infer | baseline | evaluate | stats | feascheck.

Every run writes a manifest JSON next to each output artifact recording the
command, arguments, seed, input digests, tool version, and wall-clock time.
Primary outputs (graphs, reports, traces) are byte-stable for a fixed seed.
Exit codes: 0 success, 1 computational failure, 2 usage/schema errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from . import baselines, community, em, metrics
from .constraints import check_feasibility
from .graph import (
    GraphFormatError,
    InferredGraph,
    read_graph_csv,
    read_labels_csv,
    write_graph_csv,
    write_labels_csv,
)
from .trace import TraceFormatError, parse_trace, trace_to_csv

log = logging.getLogger("cemnet.cli")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    """Bad invocation or malformed input files (exit code 2)."""


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifests(args: argparse.Namespace, argv: list[str],
                     inputs: list[str], outputs: list[str],
                     started: float) -> None:
    manifest = {
        "command": args.command,
        "argv": argv,
        "seed": getattr(args, "seed", None),
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "version": __version__,
        "runtime_seconds": time.time() - started,
    }
    for out in outputs:
        with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_trace(args: argparse.Namespace):
    try:
        return parse_trace(args.trace, drop_orphans=getattr(args, "drop_orphans", False))
    except FileNotFoundError as exc:
        raise UsageError(f"trace file not found: {exc.filename}") from exc
    except TraceFormatError as exc:
        raise UsageError(f"bad trace {args.trace}: {exc}") from exc


def _cmd_simulate(args: argparse.Namespace) -> list[str]:
    from .simulate import SimConfig, simulate

    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        config = SimConfig.from_json(args.config)
    else:
        config = SimConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.n_events:
        config.n_events = args.n_events
    out = simulate(config)
    trace_to_csv(out.trace, args.out_trace)
    write_graph_csv(out.truth_graph, out.trace.users, args.out_truth)
    write_labels_csv(out.truth_labels, out.trace.users, args.out_labels)
    log.info("simulated %d posts / %d reposts over %d users",
             out.n_posts, out.n_reposts, config.n_users)
    return [args.out_trace, args.out_truth, args.out_labels]


def _cmd_infer(args: argparse.Namespace) -> list[str]:
    trace = _load_trace(args)
    if args.head:
        trace = trace.head(args.head)
    prep = em.preprocess(trace, n_threads=args.threads)
    state, graph = em.run_cem(
        prep,
        args.prior,
        args.lam,
        beta_fixed=args.beta_fixed,
        max_iters=args.max_iters,
        epsilon=args.epsilon,
        seed=args.seed,
        dump_lp_path=args.dump_lp,
    )
    write_graph_csv(graph, trace.users, args.out_graph)
    outputs = [args.out_graph]
    if args.out_state:
        payload = state.to_json()
        payload["n_edges"] = graph.n_edges
        payload["feasibility"] = check_feasibility(
            graph, prep.episodes, n_threads=args.threads
        ).fraction
        _write_json(payload, args.out_state)
        outputs.append(args.out_state)
    if args.out_scores:
        # posterior for every active pair, not only thresholded edges
        scored = InferredGraph(
            trace.n_users,
            (tuple(p) for p in prep.table.pairs),
            {tuple(p): float(q) for p, q in zip(prep.table.pairs.tolist(), prep.table.q)},
        )
        write_graph_csv(scored, trace.users, args.out_scores)
        outputs.append(args.out_scores)
    return outputs


def _cmd_baseline(args: argparse.Namespace) -> list[str]:
    trace = _load_trace(args)
    if args.head:
        trace = trace.head(args.head)
    prep = em.preprocess(trace, n_threads=args.threads)
    if args.method == "star":
        graph = baselines.star_graph(prep.episodes, trace.n_users)
    elif args.method == "chain":
        graph = baselines.chain_graph(prep.episodes, trace.n_users)
    elif args.method == "saito":
        graph = baselines.saito_em(prep.episodes, trace.n_users, seed=args.seed).graph
    else:
        graph = baselines.newman_em(prep.episodes, trace.n_users, seed=args.seed).graph
    write_graph_csv(graph, trace.users, args.out_graph)
    return [args.out_graph]


def _cmd_evaluate(args: argparse.Namespace) -> list[str]:
    trace = _load_trace(args)
    if args.head:
        trace = trace.head(args.head)
    users = trace.users
    try:
        inferred = read_graph_csv(args.inferred, users)
        truth = read_graph_csv(args.truth, users)
    except FileNotFoundError as exc:
        raise UsageError(f"graph file not found: {exc.filename}") from exc

    episodes = em.preprocess(trace, n_threads=args.threads).episodes
    feas = check_feasibility(inferred, episodes, n_threads=args.threads)

    scores = None
    if args.scores:
        scored = read_graph_csv(args.scores, users)
        scores = np.zeros((len(users), len(users)))
        for (i, j) in scored.edges:
            scores[i, j] = scored.score_of(i, j)
    report = metrics.classification_scores(
        inferred, truth, scores=scores, feasibility=feas.fraction
    )

    if args.truth_labels:
        lab_true = read_labels_csv(args.truth_labels, users)
    else:
        lab_true = community.louvain_graph(truth, seed=args.seed).labels
    lab_pred = community.louvain_graph(inferred, seed=args.seed).labels
    f1_pairs = community.pairwise_f1(lab_pred, lab_true)
    p_hat, q_hat = community.estimate_block_densities(inferred, lab_pred)

    payload = report.to_json()
    payload["feasibility_detail"] = feas.to_json()
    payload["network"] = metrics.graph_stats(inferred).to_json()
    payload["community"] = {
        "pairwise_f1": f1_pairs,
        "p_hat": p_hat,
        "q_hat": q_hat,
        "n_communities": int(lab_pred.max()) + 1,
    }
    _write_json(payload, args.out)
    return [args.out]


def _cmd_stats(args: argparse.Namespace) -> list[str]:
    trace = _load_trace(args)
    try:
        graph = read_graph_csv(args.graph, trace.users)
    except FileNotFoundError as exc:
        raise UsageError(f"graph file not found: {exc.filename}") from exc
    _write_json(metrics.graph_stats(graph).to_json(), args.out)
    return [args.out]


def _cmd_feascheck(args: argparse.Namespace) -> list[str]:
    trace = _load_trace(args)
    if args.head:
        trace = trace.head(args.head)
    try:
        graph = read_graph_csv(args.graph, trace.users)
    except FileNotFoundError as exc:
        raise UsageError(f"graph file not found: {exc.filename}") from exc
    episodes = em.preprocess(trace, n_threads=args.threads).episodes
    report = check_feasibility(graph, episodes, n_threads=args.threads)
    _write_json(report.to_json(), args.out)
    return [args.out]


def _add_common(p: argparse.ArgumentParser, *, seed: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker cap for pair-level computations")
    p.add_argument("--head", type=int, default=0, metavar="N",
                   help="use only the first N trace rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cemnet",
        description="Feasibility-constrained follower-graph inference from "
                    "post/repost traces",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic trace + ground truth")
    p.add_argument("--config", help="SimConfig JSON; defaults otherwise")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-events", type=int, default=0)
    p.add_argument("--out-trace", required=True)
    p.add_argument("--out-truth", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("infer", help="run constrained EM on a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--prior", choices=[em.PRIOR_ER, em.PRIOR_SBM], required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--beta-fixed", type=float, default=None)
    p.add_argument("--drop-orphans", action="store_true")
    p.add_argument("--dump-lp", default=None, metavar="PATH")
    p.add_argument("--out-graph", required=True)
    p.add_argument("--out-state", default=None)
    p.add_argument("--out-scores", default=None,
                   help="per-active-pair posterior CSV for later evaluation")
    _add_common(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("baseline", help="run a reference method on a trace")
    p.add_argument("--method", choices=["star", "chain", "saito", "newman"],
                   required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--drop-orphans", action="store_true")
    p.add_argument("--out-graph", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("evaluate", help="score an inferred graph against a truth graph")
    p.add_argument("--inferred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--scores", default=None, help="edge CSV with q column")
    p.add_argument("--trace", required=True)
    p.add_argument("--truth-labels", default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("stats", help="network statistics of a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--trace", required=True, help="defines the user universe")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("feascheck", help="feasibility of a trace given a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_feascheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = _LOG_LEVELS.get(os.environ.get("CEM_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    effective_argv = list(argv) if argv is not None else sys.argv[1:]
    args = parser.parse_args(argv)
    started = time.time()
    try:
        outputs = args.func(args)
    except (UsageError, GraphFormatError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    inputs = [
        p for p in (
            getattr(args, "trace", None), getattr(args, "config", None),
            getattr(args, "inferred", None), getattr(args, "truth", None),
            getattr(args, "scores", None), getattr(args, "graph", None),
            getattr(args, "truth_labels", None),
        )
        if p and os.path.exists(p)
    ]
    _write_manifests(args, effective_argv, inputs, outputs, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
