"""Command-line entry point: train models, run attacks, aggregate results,
and generate synthetic SBM datasets."""

from __future__ import annotations

import argparse
import glob as globmod
import json
import os
import sys

import numpy as np

from . import grph
from .attacks import (AttackScope, FitnessSpec, attack_certificate,
                      attack_conformal, attack_dnc, attack_global,
                      attack_local, attack_random_baseline, attack_targeted)
from .ga import GAConfig
from .gnn import TrainConfig, accuracy, forward, train
from .synth import sbm_graph

_OBJECTIVES = {
    "accuracy": "accuracy",
    "ce": "cross_entropy",
    "tanh-margin": "tanh_margin",
    "conformal-coverage": "conformal_coverage",
    "conformal-size": "conformal_set_size",
    "certified-ratio": "certified_ratio",
}


def _results_dir(args):
    return getattr(args, "out_dir", None) or os.environ.get(
        "EVAGRAPH_RESULTS_DIR", ".")


def _load_config_defaults(parser, argv):
    """JSON config file supplies defaults; explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        with open(known.config) as f:
            cfg = json.load(f)
        defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
        parser.set_defaults(**defaults)
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sub in action.choices.values():
                    sub.set_defaults(**defaults)


def cmd_train(args):
    g = grph.load_graph(args.graph)
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, patience=args.patience,
                      seed=args.seed)
    w = train(g, kind=args.model.upper(), cfg=cfg)
    grph.save_weights(args.out, w)
    logits = forward(w, g)
    report = {
        "model": args.model.upper(),
        "seed": args.seed,
        "train_accuracy": accuracy(logits, g.labels,
                                   np.flatnonzero(g.mask_train)),
        "val_accuracy": accuracy(logits, g.labels, np.flatnonzero(g.mask_val)),
        "test_accuracy": accuracy(logits, g.labels,
                                  np.flatnonzero(g.mask_test)),
        "weights": args.out,
    }
    path = os.path.splitext(args.out)[0] + ".train.json"
    with open(path, "w") as f:
        json.dump(report, f, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def _echo_config(args, keys):
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def cmd_attack(args):
    if args.mode == "local" and args.e_loc is None:
        raise SystemExit("--mode local requires --e-loc")
    if args.mode == "targeted" and args.node is None:
        raise SystemExit("--mode targeted requires --node")
    g = grph.load_graph(args.graph)
    w = grph.load_weights(args.weights)
    ga_cfg = GAConfig(pop_size=args.population, steps=args.steps,
                      mutation_rate=args.mutation_rate, n_tour=args.n_tour,
                      k_cross=args.k_cross, mutation=args.mutation,
                      t_warm=args.t_warm, max_copies=args.max_copies)
    spec = FitnessSpec(kind=_OBJECTIVES[args.objective], alpha=args.alpha,
                       p_plus=args.p_plus, p_minus=args.p_minus,
                       m_attack=args.m_attack, m_final=args.m_final,
                       p_bar=args.p_bar)
    v_att = np.flatnonzero(g.mask_test)

    if args.mode == "targeted":
        out = attack_targeted(g, w, args.node, ga_cfg,
                              max_budget=args.max_budget, seed=args.seed)
        doc = {"mode": "targeted", "result": out,
               "config": _echo_config(args, ["objective", "node",
                                             "max_budget", "seed"])}
    else:
        scope = AttackScope.from_epsilon(g, v_att, args.epsilon,
                                         e_loc=args.e_loc)
        if args.mode == "global":
            if args.baseline_trials:
                res = attack_random_baseline(g, w, scope,
                                             args.baseline_trials,
                                             seed=args.seed, spec=spec)
            elif spec.kind in ("conformal_coverage", "conformal_set_size"):
                res = attack_conformal(g, w, scope, spec, ga_cfg,
                                       seed=args.seed)
            elif spec.kind == "certified_ratio":
                res = attack_certificate(g, w, scope, spec, ga_cfg,
                                         seed=args.seed)
            else:
                res = attack_global(g, w, scope, spec, ga_cfg, seed=args.seed)
        elif args.mode == "local":
            res = attack_local(g, w, scope, spec, ga_cfg, seed=args.seed)
        elif args.mode == "dnc":
            res = attack_dnc(g, w, scope, spec, ga_cfg, args.k_dc,
                             seed=args.seed)
        doc = res.to_dict()
        doc["config"].update(_echo_config(
            args, ["objective", "mode", "epsilon", "e_loc", "k_dc", "seed",
                   "population", "steps", "mutation", "mutation_rate",
                   "n_tour", "k_cross"]))
        doc["dataset"] = os.path.basename(args.graph)
        doc["model"] = os.path.basename(args.weights)

    out_path = args.out or os.path.join(
        _results_dir(args), f"attack_{args.mode}_{args.objective}_"
                            f"{args.seed}.json")
    with open(out_path, "w") as f:
        json.dump(doc, f, indent=2)
    print(out_path)
    return 0


def cmd_report(args):
    files = sorted(globmod.glob(args.results))
    if not files:
        raise SystemExit(f"no result files match {args.results!r}")
    rows = []
    series = {}
    for path in files:
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SystemExit(f"malformed result file {path}: {e}")
        cfg = doc.get("config", {})
        obj = cfg.get("objective", "?")
        row = {
            "dataset": doc.get("dataset", "?"),
            "model": doc.get("model", "?"),
            "objective": obj,
            "epsilon": cfg.get("epsilon", ""),
            "seed": doc.get("seed", cfg.get("seed", "")),
            "clean": doc.get("clean_metrics", {}).get("accuracy", ""),
            "attacked": doc.get("attacked_metrics", {}).get("accuracy", ""),
        }
        rows.append(row)
        series.setdefault(obj, []).append(
            {"epsilon": row["epsilon"], "clean": row["clean"],
             "attacked": row["attacked"]})
    cols = ["dataset", "model", "objective", "epsilon", "seed", "clean",
            "attacked"]
    lines = [",".join(cols)]
    lines += [",".join(str(r[c]) for c in cols) for r in rows]
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(csv_text)
        if args.plot_data:
            with open(args.plot_data, "w") as f:
                json.dump(series, f, indent=2)
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_synth(args):
    g = sbm_graph(n_blocks=args.blocks, block_size=args.block_size,
                  p_in=args.p_in, p_out=args.p_out,
                  feature_dim=args.feature_dim, separation=args.separation,
                  seed=args.seed)
    grph.save_graph(args.out, g)
    print(json.dumps({"nodes": g.n, "edges": g.num_edges,
                      "features": g.num_features,
                      "classes": g.num_classes, "out": args.out}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evagraph",
        description="Evolutionary edge-flip attacks on graph classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a GCN or MLP")
    p.add_argument("--config")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", choices=["gcn", "mlp"], default="gcn")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="run an attack")
    p.add_argument("--config")
    p.add_argument("--graph", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--mode", choices=["global", "local", "targeted", "dnc"],
                   default="global")
    p.add_argument("--objective", choices=list(_OBJECTIVES), default="accuracy")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--e-loc", type=float, default=None)
    p.add_argument("--k-dc", type=int, default=1)
    p.add_argument("--node", type=int, default=None)
    p.add_argument("--max-budget", type=int, default=10)
    p.add_argument("--population", type=int, default=1024)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--mutation", choices=["uniform", "targeted", "adaptive"],
                   default="adaptive")
    p.add_argument("--mutation-rate", type=float, default=0.01)
    p.add_argument("--n-tour", type=int, default=2)
    p.add_argument("--k-cross", type=int, default=30)
    p.add_argument("--t-warm", type=int, default=0)
    p.add_argument("--max-copies", type=int, default=256)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--p-plus", type=float, default=0.001)
    p.add_argument("--p-minus", type=float, default=0.4)
    p.add_argument("--m-attack", type=int, default=200)
    p.add_argument("--m-final", type=int, default=1000)
    p.add_argument("--p-bar", type=float, default=0.9)
    p.add_argument("--baseline-trials", type=int, default=0,
                   help="run the random baseline instead of the GA")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="merge attack result JSONs into CSV")
    p.add_argument("--results", required=True, help="glob of result files")
    p.add_argument("--out")
    p.add_argument("--plot-data")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic SBM graph")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--block-size", type=int, default=50)
    p.add_argument("--p-in", type=float, default=0.15)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _load_config_defaults(parser, argv)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
