import pytest

from modgae.cli import main
from modgae.graph import load_edge_list
from modgae.selection import load_results
from modgae.training import load_model


@pytest.fixture
def sbm_dir(tmp_path):
    out = tmp_path / "sbm"
    assert main(["sbm-gen", "--k", "3", "--nk", "20", "--p", "0.4", "--q", "0.02", "--seed", "1", "--out", str(out)]) == 0
    return out


def test_sbm_and_louvain(sbm_dir, capsys):
    g = load_edge_list(sbm_dir / "edges.tsv")
    assert g.n == 60
    code = main(["louvain", "--graph", str(sbm_dir / "edges.tsv"), "--out", str(sbm_dir / "lv")])
    assert code == 0
    assert "Q = " in capsys.readouterr().out
    assert (sbm_dir / "lv" / "partition.tsv").exists()


def test_train_eval_roundtrip(sbm_dir, tmp_path, capsys):
    out = tmp_path / "run"
    args = ["train", "--graph", str(sbm_dir / "edges.tsv"), "--labels", str(sbm_dir / "labels.tsv"), "--task", "2",
            "--lambda", "0.5", "--beta", "0.2", "--s", "2", "--iters", "30", "--dim", "4", "--variational",
            "--out", str(out)]
    assert main(args) == 0
    text = capsys.readouterr().out
    for key in ("AMI = ", "ARI = ", "Q = ", "AUC = ", "AP = "):
        assert key in text
    for name in ("config.echo", "model.bin", "loss.tsv", "report.txt"):
        assert (out / name).exists()
    m = load_model(out / "model.bin")
    assert m.config.encoder.variational and m.config.lam == 0.5 and m.config.s == 2
    assert main(["eval", "--graph", str(sbm_dir / "edges.tsv"), "--labels", str(sbm_dir / "labels.tsv"), "--task", "2",
                 "--model", str(out / "model.bin"), "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "report.txt").read_text() == (out / "report.txt").read_text()


def test_config_file_and_override(sbm_dir, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nlambda = 0.3\niters = 5\ndim = 3\n")
    out = tmp_path / "c"
    assert main(["train", "--config", str(conf), "--graph", str(sbm_dir / "edges.tsv"), "--iters", "7",
                 "--out", str(out)]) == 0
    m = load_model(out / "model.bin")
    assert m.config.lam == 0.3 and m.config.iterations == 7 and m.config.encoder.dim == 3
    assert "AMI = " not in (out / "report.txt").read_text()


def test_grid_search_outputs(sbm_dir, tmp_path):
    out = tmp_path / "g"
    args = ["grid", "--graph", str(sbm_dir / "edges.tsv"), "--labels", str(sbm_dir / "labels.tsv"),
            "--grid-lr", "0.01", "--grid-iters", "10", "--grid-dropout", "0", "--grid-lambda", "0,0.5",
            "--grid-beta", "0", "--grid-gamma", "1", "--grid-s", "full", "--grid-dim", "4", "--out", str(out)]
    assert main(args) == 0
    assert len(load_results(out / "trials.tsv")) == 2
    board = load_results(out / "leaderboard.tsv")
    assert len(board) == 2 and board[0].dual >= board[1].dual
    assert main(args + ["--resume"]) == 0
    assert len(load_results(out / "trials.tsv")) == 2


def test_split_command(sbm_dir, tmp_path):
    out = tmp_path / "s"
    assert main(["split", "--graph", str(sbm_dir / "edges.tsv"), "--out", str(out)]) == 0
    for name in ("train_edges.tsv", "val_pos.tsv", "val_neg.tsv", "test_pos.tsv", "test_neg.tsv"):
        assert (out / name).exists()


def test_spectral_command(capsys):
    assert main(["spectral", "--suite", "prop1"]) == 0
    assert "checks passed" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    assert main(["train"]) == 2
    assert main(["train", "--graph", "x", "--iters", "many"]) == 2
    assert main(["train", "--graph", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "o")]) == 1
    assert main(["nonsense"]) == 2
    assert main([]) == 2
    capsys.readouterr()
