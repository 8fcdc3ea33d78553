import math

import pytest

from conftest import planted_graph
from modgae.encoders import EncoderConfig
from modgae.graph import split_edges
from modgae.selection import (
    COLUMNS, GridSpec, ResultsFormatError, TrialRecord, config_key, dual_score, grid_search, load_results, rank,
    save_results,
)
from modgae.training import TrainConfig


def tiny_grid():
    return GridSpec(learning_rate=[0.01], iterations=[20], dropout=[0.0], lam=[0.0, 0.5], beta=[0.0, 0.5],
                    gamma=[1.0], s=[2, None], dim=[4])


@pytest.fixture(scope="module")
def split():
    return split_edges(planted_graph([15, 15, 15], 0.4, 0.02, 0), 0.1, 0.1, seed=0)


def test_default_grid():
    g = GridSpec()
    assert len(g.lam) == 13 and g.dim == [16]
    assert g.size == 6 * 8 * 3 * 13 * 9 * 7 * 4
    assert g.point(0)["iterations"] == 100 and g.point(g.size - 1)["s"] == 10
    with pytest.raises(ValueError):
        GridSpec(beta=[])


def test_point_enumeration():
    g = tiny_grid()
    pts = [g.point(i) for i in range(g.size)]
    assert len({tuple(p.items()) for p in pts}) == g.size == 8
    assert pts[1]["s"] is None and pts[0]["s"] == 2


def test_dual_score():
    assert dual_score(0.9, 0.5) == 0.7
    with pytest.raises(ValueError):
        dual_score(1.2, 0.5)
    with pytest.raises(ValueError):
        dual_score(0.9, -0.6)


def test_rank_failures_last_and_stable():
    cfg = TrainConfig()
    nan = float("nan")
    recs = [TrialRecord(cfg, nan, nan, nan, 0, (0,), error="boom"), TrialRecord(cfg, 0.8, 0.4, 0.6, 0, (0,)),
            TrialRecord(cfg, 0.9, 0.3, 0.6, 0, (0,)), TrialRecord(cfg, 0.9, 0.5, 0.7, 0, (0,))]
    out = rank(recs)
    assert out == [recs[3], recs[1], recs[2], recs[0]]


def test_grid_search_and_persistence(split, tmp_path):
    path = tmp_path / "trials.tsv"
    base = TrainConfig(encoder=EncoderConfig("linear", dim=4))
    res = grid_search(split, tiny_grid(), seeds=(0, 1), base=base, results_path=path, evaluate_test=True)
    assert len(res) == 8 and all(r.ok for r in res)
    assert all(res[i].dual >= res[i + 1].dual for i in range(7))
    assert all(r.seeds == (0, 1) and r.ami_test is not None for r in res)
    loaded = load_results(path)
    assert len(loaded) == 8
    by_key = {config_key(r.config): r for r in res}
    for rec in loaded:
        assert rec.dual == by_key[config_key(rec.config)].dual
    # resume retrains nothing and appends nothing
    size = path.stat().st_size
    again = grid_search(split, tiny_grid(), seeds=(0, 1), base=base, results_path=path, resume=True, evaluate_test=True)
    assert path.stat().st_size == size
    assert [r.dual for r in again] == [r.dual for r in res]


def test_budget_and_workers_deterministic(split):
    base = TrainConfig(encoder=EncoderConfig("linear", dim=4))
    a = grid_search(split, tiny_grid(), budget=3, base=base, sample_seed=5)
    b = grid_search(split, tiny_grid(), budget=3, base=base, sample_seed=5, workers=2)
    assert len(a) == 3
    assert [config_key(r.config) for r in a] == [config_key(r.config) for r in b]
    assert [r.dual for r in a] == [r.dual for r in b]
    with pytest.raises(ValueError):
        grid_search(split, tiny_grid(), budget=0)


def test_failed_trial_is_recorded(split, tmp_path):
    base = TrainConfig(encoder=EncoderConfig("linear", dim=4))
    grid = GridSpec(learning_rate=[1e200], iterations=[30], dropout=[0.0], lam=[0.0], beta=[0.0], gamma=[1.0],
                    s=[None], dim=[4])
    with pytest.warns(RuntimeWarning):
        res = grid_search(split, grid, base=base, results_path=tmp_path / "t.tsv")
    assert not res[0].ok and math.isnan(res[0].dual)
    assert load_results(tmp_path / "t.tsv")[0].error


def test_load_results_errors(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("\t".join(COLUMNS) + "\n" + "linear\t0\n")
    with pytest.raises(ResultsFormatError, match="row 2"):
        load_results(p)
    p.write_text("nope\n")
    with pytest.raises(ResultsFormatError, match="row 1"):
        load_results(p)
    save_results([], tmp_path / "empty.tsv")
    assert load_results(tmp_path / "empty.tsv") == []
