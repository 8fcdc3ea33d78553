"""Command-line interface: ``modgae <command> [--config FILE] [options]``.

Options may come from a flat ``key = value`` config file (``#`` starts a
comment); command-line flags override the file. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .communities import louvain, modularity
from .datasets import load_cora
from .encoders import ENCODER_KINDS, EncoderConfig
from .graph import (
    Graph,
    GraphFormatError,
    generate_sbm,
    load_edge_list,
    load_features,
    load_labels,
    split_edges,
    write_edge_list,
    write_labels,
    write_pairs,
)
from .metrics import ScoredPairs, ap, auc, evaluate
from .objectives import FastGAEConfig, LossConfig
from .selection import GridSpec, grid_search, rank, save_results
from .spectral import run_suite
from .training import NumericalError, TrainConfig, load_model, save_model, train, write_history


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _s_value(text):
    return None if str(text).strip().lower() in ("full", "none") else int(text)


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _s_list(text):
    return [_s_value(v) for v in str(text).split(",") if v.strip()]


# name -> (type, default, help); None default means "required or optional input"
DATA_OPTS = {
    "graph": (str, None, "edge list TSV (i<TAB>j[<TAB>w]); optional '# n=N' header"),
    "dataset": (str, None, "bundled dataset instead of --graph (cora)"),
    "labels": (str, None, "node labels TSV (node<TAB>label)"),
    "features": (str, None, "dense node features TSV, one row per node"),
    "weighted": (_bool, False, "read a third weight column"),
}
MODEL_OPTS = {
    "encoder": (str, "linear", f"encoder kind {ENCODER_KINDS}"),
    "variational": (_bool, False, "train a VGAE"),
    "dim": (int, 16, "embedding dimension"),
    "hidden": (int, 32, "hidden width of GCN encoders"),
    "dropout": (float, 0.0, "dropout rate"),
    "lambda": (float, 0.0, "weight of the community prior in the operator"),
    "s": (_s_value, None, "sparsification degree ('full' keeps complete blocks)"),
    "beta": (float, 0.0, "soft modularity weight"),
    "gamma": (float, 1.0, "soft modularity distance scale"),
    "lr": (float, 0.01, "Adam learning rate"),
    "iters": (int, 200, "training iterations"),
    "fastgae_nodes": (int, None, "FastGAE subgraph size (default: automatic beyond 20000 nodes)"),
    "fastgae_alpha": (float, 1.0, "FastGAE degree exponent"),
}
RUN_OPTS = {
    "task": (int, 1, "1: community detection only, 2: joint with link prediction"),
    "k": (int, None, "number of k-means clusters (default: label count)"),
    "seed": (int, 0, "seed for every random choice of the command"),
    "val_frac": (float, 0.05, "validation edge fraction"),
    "test_frac": (float, 0.10, "test edge fraction"),
    "out": (str, "out", "output directory"),
}
GRID_OPTS = {
    "grid_lr": (_floats, None, "learning rates"),
    "grid_iters": (_ints, None, "iteration counts"),
    "grid_dropout": (_floats, None, "dropout rates"),
    "grid_lambda": (_floats, None, "lambda values"),
    "grid_beta": (_floats, None, "beta values"),
    "grid_gamma": (_floats, None, "gamma values"),
    "grid_s": (_s_list, None, "sparsification degrees"),
    "grid_dim": (_ints, None, "embedding dimensions"),
    "budget": (int, None, "random subsample size of the grid"),
    "seeds": (_ints, [0], "training seeds averaged per configuration"),
    "workers": (int, None, "parallel trials (capped by MODGAE_THREADS)"),
    "resume": (_bool, False, "skip configurations already in trials.tsv"),
}

COMMANDS = {
    "train": ({**DATA_OPTS, **MODEL_OPTS, **RUN_OPTS}, "train one model and evaluate it", ()),
    "eval": ({**DATA_OPTS, **RUN_OPTS, "model": (str, None, "MODGAE1 model file")}, "evaluate a saved model", ()),
    "grid-search": ({**DATA_OPTS, **MODEL_OPTS, **RUN_OPTS, **GRID_OPTS}, "dual-criterion grid search", ("grid",)),
    "sbm-gen": ({"k": (int, 10, "communities"), "nk": (int, 100, "nodes per community"), "p": (float, 0.05, "within probability"),
                 "q": (float, 0.002, "between probability"), "seed": (int, 0, "seed"), "out": (str, "out", "output directory")},
                "generate a stochastic block model", ("sbm",)),
    "split": ({**DATA_OPTS, "seed": (int, 0, "seed"), "val_frac": (float, 0.05, "validation fraction"),
               "test_frac": (float, 0.10, "test fraction"), "out": (str, "out", "output directory")},
              "mask edges for link prediction", ()),
    "louvain": ({**DATA_OPTS, "seed": (int, 0, "seed"), "out": (str, None, "optional output directory")},
                "run Louvain and print its modularity", ()),
    "spectral-check": ({"suite": (str, "all", "all, prop1, prop2 or prop3"), "seed": (int, 0, "seed")},
                       "numerical checks of the operator spectra", ("spectral",)),
}
ALIASES = {alias: name for name, (_, _, aliases) in COMMANDS.items() for alias in aliases}


def read_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modgae", description="Modularity-aware graph autoencoders")
    parser.add_argument("--version", action="version", version=f"modgae {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (opts, help_text, aliases) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, aliases=list(aliases), argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="key = value config file; flags override it")
        for key, (typ, default, h) in opts.items():
            flag = "--" + key.replace("_", "-")
            if typ is _bool:
                p.add_argument(flag, dest=key, nargs="?", const=True, type=_bool, help=h)
            else:
                p.add_argument(flag, dest=key, type=str, help=f"{h} (default: {default})")
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags; every value converted by its option type."""
    opts = COMMANDS[command][0]
    merged = {key: default for key, (_, default, _) in opts.items()}
    given = vars(args)
    sources = []
    if given.get("config"):
        try:
            sources.append(read_config_file(given["config"]))
        except OSError as err:
            raise UsageError(f"cannot read config file: {err}") from None
    sources.append({k: v for k, v in given.items() if k in opts})
    for src in sources:
        for key, value in src.items():
            if key not in opts:
                raise UsageError(f"unknown option {key!r} for {command}")
            typ = opts[key][0]
            try:
                merged[key] = typ(value) if isinstance(value, str) or typ is _bool else value
            except ValueError as err:
                raise UsageError(f"bad value for {key}: {err}") from None
    return merged


def _load_graph(cfg: dict):
    if cfg.get("dataset"):
        if cfg["dataset"].lower() != "cora":
            raise UsageError(f"unknown dataset {cfg['dataset']!r}")
        g = load_cora()
    elif cfg.get("graph"):
        g = load_edge_list(cfg["graph"], weighted=cfg.get("weighted", False))
    else:
        raise UsageError("--graph (or --dataset) is required")
    if cfg.get("labels"):
        g = g.with_labels(load_labels(cfg["labels"], g.n))
    if cfg.get("features"):
        g = Graph(g.adjacency, load_features(cfg["features"], g.n), g.labels)
    return g


def _train_config(cfg: dict) -> TrainConfig:
    if cfg["encoder"] not in ENCODER_KINDS:
        raise UsageError(f"--encoder must be one of {ENCODER_KINDS}")
    fast = None
    if cfg.get("fastgae_nodes") is not None:
        fast = FastGAEConfig(cfg["fastgae_nodes"], cfg["fastgae_alpha"])
    try:
        enc = EncoderConfig(cfg["encoder"], cfg["variational"], cfg["dim"], cfg["hidden"], cfg["dropout"])
        loss = LossConfig(beta=cfg["beta"], gamma=cfg["gamma"], fastgae=fast)
        return TrainConfig(cfg["lr"], cfg["iters"], cfg["seed"], enc, loss, lam=cfg["lambda"], s=cfg["s"])
    except ValueError as err:
        raise UsageError(str(err)) from None


def _echo(cfg: dict, out: Path) -> None:
    lines = []
    for key in sorted(cfg):
        val = cfg[key]
        if isinstance(val, list):
            val = ",".join("full" if v is None else str(v) for v in val)
        elif val is None:
            val = ""
        lines.append(f"{key} = {val}\n")
    (out / "config.echo").write_text("".join(lines))


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _task_data(cfg, g):
    if cfg["task"] not in (1, 2):
        raise UsageError("--task must be 1 or 2")
    if cfg["task"] == 2:
        return split_edges(g, cfg["val_frac"], cfg["test_frac"], seed=cfg["seed"])
    return g


def cmd_train(cfg: dict) -> int:
    g = _load_graph(cfg)
    tcfg = _train_config(cfg)
    data = _task_data(cfg, g)
    out = _out_dir(cfg)
    _echo(cfg, out)
    try:
        model = train(data, tcfg)
    except NumericalError as err:
        write_history(err.history, out / "loss.tsv")
        raise
    save_model(model, out / "model.bin")
    write_history(model.history, out / "loss.tsv")
    _report(model, data, cfg, out)
    return 0


def _report(model, data, cfg, out: Path) -> None:
    if data_labels(data) is None:
        text = "# no labels given: AMI, ARI and Q skipped\n"
        if cfg["task"] == 2:
            sp = ScoredPairs.from_pairs(model.embedding.point, data.test_pos, data.test_neg)
            text += f"AUC = {auc(sp):.17g}\nAP = {ap(sp):.17g}\n"
    else:
        text = evaluate(model, data, k=cfg.get("k"), seed=cfg["seed"]).to_text()
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)


def data_labels(data):
    g = getattr(data, "train_graph", data)
    return g.labels


def cmd_eval(cfg: dict) -> int:
    if not cfg.get("model"):
        raise UsageError("--model is required")
    g = _load_graph(cfg)
    model = load_model(cfg["model"])
    if model.embedding.Z.shape[0] != g.n:
        raise GraphFormatError(f"model embeds {model.embedding.Z.shape[0]} nodes, graph has {g.n}")
    data = _task_data(cfg, g)
    out = _out_dir(cfg)
    _echo(cfg, out)
    _report(model, data, cfg, out)
    return 0


def cmd_grid(cfg: dict) -> int:
    g = _load_graph(cfg)
    if cfg.get("budget") is not None and cfg["budget"] < 1:
        raise UsageError("--budget must be at least 1")
    if not cfg["seeds"]:
        raise UsageError("--seeds must list at least one seed")
    base = _train_config(cfg)
    fields = {"learning_rate": "grid_lr", "iterations": "grid_iters", "dropout": "grid_dropout", "lam": "grid_lambda",
              "beta": "grid_beta", "gamma": "grid_gamma", "s": "grid_s", "dim": "grid_dim"}
    try:
        grid = GridSpec(**{f: cfg[k] for f, k in fields.items() if cfg.get(k) is not None})
    except ValueError as err:
        raise UsageError(str(err)) from None
    split = split_edges(g, cfg["val_frac"], cfg["test_frac"], seed=cfg["seed"])
    out = _out_dir(cfg)
    _echo(cfg, out)
    trials = out / "trials.tsv"
    if trials.exists() and not cfg["resume"]:
        trials.unlink()
    board = grid_search(split, grid, seeds=cfg["seeds"], budget=cfg.get("budget"), base=base, k=cfg.get("k"),
                        sample_seed=cfg["seed"], workers=cfg.get("workers"), results_path=trials,
                        resume=cfg["resume"], evaluate_test=cfg["task"] == 2)
    path = out / "leaderboard.tsv"
    if path.exists():
        path.unlink()
    save_results(rank(board), path)
    best = board[0]
    print(f"trials = {len(board)}")
    print(f"best dual = {best.dual:.6f} (auc_val = {best.auc_val:.6f}, q = {best.q:.6f})")
    return 0


def cmd_sbm(cfg: dict) -> int:
    try:
        g = generate_sbm(cfg["k"], cfg["nk"], cfg["p"], cfg["q"], seed=cfg["seed"])
    except ValueError as err:
        raise UsageError(str(err)) from None
    out = _out_dir(cfg)
    write_edge_list(g, out / "edges.tsv")
    write_labels(g.labels, out / "labels.tsv")
    print(f"n = {g.n}\nm = {g.m}")
    return 0


def cmd_split(cfg: dict) -> int:
    g = _load_graph(cfg)
    s = split_edges(g, cfg["val_frac"], cfg["test_frac"], seed=cfg["seed"])
    out = _out_dir(cfg)
    write_edge_list(s.train_graph, out / "train_edges.tsv")
    for name in ("val_pos", "val_neg", "test_pos", "test_neg"):
        write_pairs(getattr(s, name), out / f"{name}.tsv")
    print(f"train m = {s.train_graph.m}\nval = {len(s.val_pos)}\ntest = {len(s.test_pos)}")
    return 0


def cmd_louvain(cfg: dict) -> int:
    g = _load_graph(cfg)
    part = louvain(g, seed=cfg["seed"])
    q = modularity(g, part)
    print(f"Q = {q:.17g}\nK = {part.K}")
    if cfg.get("out"):
        out = _out_dir(cfg)
        write_labels(part.assign, out / "partition.tsv")
        (out / "report.txt").write_text(f"Q = {q:.17g}\nK = {part.K}\n")
    return 0


def cmd_spectral(cfg: dict) -> int:
    try:
        reports = run_suite(cfg["suite"], seed=cfg["seed"])
    except ValueError as err:
        raise UsageError(str(err)) from None
    for r in reports:
        print(r.line())
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return 0 if failed == 0 else 1


HANDLERS = {"train": cmd_train, "eval": cmd_eval, "grid-search": cmd_grid, "sbm-gen": cmd_sbm, "split": cmd_split,
            "louvain": cmd_louvain, "spectral-check": cmd_spectral}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    command = ALIASES.get(args.command, args.command)
    try:
        cfg = resolve(command, args)
        return HANDLERS[command](cfg)
    except UsageError as err:
        print(f"modgae {command}: error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError, RuntimeError) as err:
        print(f"modgae {command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
