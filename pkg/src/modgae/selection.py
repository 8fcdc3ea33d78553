"""Grid search with the dual (validation AUC + train-graph modularity) criterion."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .communities import louvain, modularity
from .encoders import EncoderConfig
from .graph import EdgeSplit
from .metrics import ScoredPairs, ami, ap, ari, auc, kmeans
from .objectives import LossConfig
from .training import NumericalError, TrainConfig, train

GRID_FIELDS = ("learning_rate", "iterations", "dropout", "lam", "beta", "gamma", "s", "dim")


class ResultsFormatError(ValueError):
    pass


def _default(values):
    return field(default_factory=lambda: list(values))


@dataclass
class GridSpec:
    """Value lists per hyperparameter; the defaults are the standard search grids."""

    learning_rate: list = _default([0.001, 0.005, 0.01, 0.05, 0.1, 0.2])
    iterations: list = _default(range(100, 900, 100))
    dropout: list = _default([0.0, 0.1, 0.2])
    lam: list = _default([0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    beta: list = _default([0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0])
    gamma: list = _default([0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0])
    s: list = _default([1, 2, 5, 10])
    dim: list = _default([16])

    def __post_init__(self):
        for name in GRID_FIELDS:
            if len(getattr(self, name)) == 0:
                raise ValueError(f"grid for {name} is empty")

    @property
    def size(self) -> int:
        return math.prod(len(getattr(self, name)) for name in GRID_FIELDS)

    def point(self, index: int) -> dict:
        """The ``index``-th point of the Cartesian product (last field varies fastest)."""
        out = {}
        for name in reversed(GRID_FIELDS):
            values = getattr(self, name)
            index, r = divmod(index, len(values))
            out[name] = values[r]
        return {name: out[name] for name in GRID_FIELDS}

    def configs(self, base: TrainConfig, indices=None) -> list[TrainConfig]:
        indices = range(self.size) if indices is None else indices
        return [apply_point(base, self.point(i)) for i in indices]


def apply_point(base: TrainConfig, p: dict) -> TrainConfig:
    enc = replace(base.encoder, dropout=float(p["dropout"]), dim=int(p["dim"]))
    loss = replace(base.loss, beta=float(p["beta"]), gamma=float(p["gamma"]))
    s = p["s"]
    return replace(base, learning_rate=float(p["learning_rate"]), iterations=int(p["iterations"]),
                   lam=float(p["lam"]), s=None if s is None else int(s), encoder=enc, loss=loss)


def dual_score(auc_val: float, q: float) -> float:
    """Plain average of validation AUC and modularity, each on its natural scale."""
    if not 0.0 <= auc_val <= 1.0:
        raise ValueError(f"AUC {auc_val} outside [0, 1]")
    if not -0.5 <= q <= 1.0:
        raise ValueError(f"modularity {q} outside [-0.5, 1]")
    return (auc_val + q) / 2.0


@dataclass
class TrialRecord:
    config: TrainConfig
    auc_val: float
    q: float
    dual: float
    seconds: float
    seeds: tuple
    ami_test: Optional[float] = None
    ari_test: Optional[float] = None
    auc_test: Optional[float] = None
    ap_test: Optional[float] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def config_key(cfg: TrainConfig) -> tuple:
    e, l = cfg.encoder, cfg.loss
    return (e.kind, e.variational, e.dim, e.hidden, e.dropout, cfg.learning_rate, cfg.iterations,
            cfg.lam, l.beta, l.gamma, cfg.s)


def run_trial(split: EdgeSplit, cfg: TrainConfig, seeds: Sequence[int], k: int, evaluate_test: bool = False) -> TrialRecord:
    """Train once per seed and average the validation AUC and the train-graph Q."""
    start = time.perf_counter()
    rows = []
    try:
        for seed in seeds:
            model = train(split, replace(cfg, seed=int(seed)))
            z = model.embedding.point
            clusters = kmeans(z, k, seed=int(seed)).partition
            row = [auc(ScoredPairs.from_pairs(z, split.val_pos, split.val_neg)), modularity(split.train_graph, clusters)]
            if evaluate_test:
                test = ScoredPairs.from_pairs(z, split.test_pos, split.test_neg)
                truth = split.train_graph.labels
                row += [ami(truth, clusters), ari(truth, clusters), auc(test), ap(test)]
            rows.append(row)
    except (NumericalError, FloatingPointError, ValueError) as err:
        nan = float("nan")
        return TrialRecord(cfg, nan, nan, nan, time.perf_counter() - start, tuple(seeds), error=str(err) or type(err).__name__)
    mean = np.mean(np.asarray(rows), axis=0).tolist()
    extra = dict(zip(("ami_test", "ari_test", "auc_test", "ap_test"), mean[2:]))
    return TrialRecord(cfg, mean[0], mean[1], dual_score(mean[0], mean[1]), time.perf_counter() - start, tuple(seeds), **extra)


def _trial_job(args):
    return run_trial(*args)


def worker_count(workers: Optional[int] = None) -> int:
    cap = os.environ.get("MODGAE_THREADS")
    n = workers if workers is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def rank(records) -> list[TrialRecord]:
    """Sort by dual score, failures last; ties keep their input order."""
    order = sorted(range(len(records)), key=lambda i: (not records[i].ok, -records[i].dual if records[i].ok else 0.0, i))
    return [records[i] for i in order]


def grid_search(split: EdgeSplit, grid: GridSpec, seeds: Sequence[int] = (0,), budget: Optional[int] = None,
                base: Optional[TrainConfig] = None, k: Optional[int] = None, sample_seed: int = 0,
                workers: Optional[int] = None, results_path=None, resume: bool = False,
                evaluate_test: bool = False) -> list[TrialRecord]:
    """Evaluate grid points (all, or a seeded random subset of ``budget``) and rank them.

    ``k`` defaults to the number of ground-truth communities, or to the
    Louvain community count of the train graph when labels are absent.
    Records are appended to ``results_path`` in grid order; with ``resume``
    configurations already present there are not retrained.
    """
    if budget is not None and budget < 1:
        raise ValueError("budget must be a positive number of trials")
    if not seeds:
        raise ValueError("at least one seed is required")
    base = base or TrainConfig(encoder=EncoderConfig("linear"))
    if k is None:
        labels = split.train_graph.labels
        k = len(np.unique(labels)) if labels is not None else louvain(split.train_graph, seed=sample_seed).K
    if budget is not None and budget < grid.size:
        rng = np.random.default_rng(sample_seed)
        indices = np.sort(rng.choice(grid.size, size=budget, replace=False)).tolist()
    else:
        indices = list(range(grid.size))
    configs = grid.configs(base, indices)

    done: dict = {}
    if resume and results_path is not None and os.path.exists(results_path):
        for rec in load_results(results_path):
            done[config_key(rec.config)] = rec
    todo = [c for c in configs if config_key(c) not in done]

    n_workers = worker_count(workers)
    jobs = [(split, c, tuple(seeds), k, evaluate_test) for c in todo]
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = pool.map(_trial_job, jobs)
            new = _collect(results, results_path)
    else:
        new = _collect(map(_trial_job, jobs), results_path)
    for rec in new:
        done[config_key(rec.config)] = rec
    return rank([done[config_key(c)] for c in configs])


def _collect(results, path) -> list[TrialRecord]:
    # single writer: records are appended one by one in grid order
    out = []
    for rec in results:
        out.append(rec)
        if path is not None:
            save_results([rec], path)
    return out


COLUMNS = ("encoder", "variational", "dim", "hidden", "dropout", "learning_rate", "iterations", "lambda",
           "beta", "gamma", "s", "auc_val", "q", "dual", "ami_test", "ari_test", "auc_test", "ap_test",
           "seconds", "seed", "error")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _row(rec: TrialRecord) -> list[str]:
    c = rec.config
    vals = [c.encoder.kind, c.encoder.variational, c.encoder.dim, c.encoder.hidden, float(c.encoder.dropout),
            float(c.learning_rate), c.iterations, float(c.lam), float(c.loss.beta), float(c.loss.gamma),
            "full" if c.s is None else c.s, rec.auc_val, rec.q, rec.dual, rec.ami_test, rec.ari_test,
            rec.auc_test, rec.ap_test, float(rec.seconds), ";".join(str(s) for s in rec.seeds),
            rec.error.replace("\t", " ").replace("\n", " ")]
    return [_fmt(v) for v in vals]


def save_results(records, path) -> None:
    """Append records to a TSV, writing the header if the file is new or empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a") as fh:
        if new:
            fh.write("\t".join(COLUMNS) + "\n")
        for rec in records:
            fh.write("\t".join(_row(rec)) + "\n")


def _opt(text: str) -> Optional[float]:
    return float(text) if text else None


def load_results(path) -> list[TrialRecord]:
    out = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != COLUMNS:
            raise ResultsFormatError(f"{path}: row 1: unexpected header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(COLUMNS):
                raise ResultsFormatError(f"{path}: row {lineno}: expected {len(COLUMNS)} fields, got {len(parts)}")
            f = dict(zip(COLUMNS, parts))
            try:
                cfg = TrainConfig(
                    learning_rate=float(f["learning_rate"]),
                    iterations=int(f["iterations"]),
                    encoder=EncoderConfig(f["encoder"], f["variational"] == "1", int(f["dim"]), int(f["hidden"]), float(f["dropout"])),
                    loss=LossConfig(beta=float(f["beta"]), gamma=float(f["gamma"])),
                    lam=float(f["lambda"]),
                    s=None if f["s"] == "full" else int(f["s"]),
                )
                seeds = tuple(int(s) for s in f["seed"].split(";") if s)
                rec = TrialRecord(cfg, float(f["auc_val"]), float(f["q"]), float(f["dual"]), float(f["seconds"]), seeds,
                                  _opt(f["ami_test"]), _opt(f["ari_test"]), _opt(f["auc_test"]), _opt(f["ap_test"]), f["error"])
            except ValueError as err:
                raise ResultsFormatError(f"{path}: row {lineno}: {err}") from None
            out.append(rec)
    return out
