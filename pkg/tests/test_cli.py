import csv
import json
import statistics

import pytest

from rtcmpn.cli import main
from rtcmpn.network import write_edge_list, write_feature_table, write_labels

from conftest import two_cliques


@pytest.fixture
def clique_files(tmp_path):
    net, truth = two_cliques()
    paths = {k: tmp_path / f"{k}.tsv" for k in ("edges", "features", "labels")}
    write_edge_list(paths["edges"], net)
    write_feature_table(paths["features"], net)
    write_labels(paths["labels"], truth)
    return paths


def _cluster(paths, out, *extra):
    return main(["cluster", "--edges", str(paths["edges"]), "--features", str(paths["features"]),
                 "--labels", str(paths["labels"]), "--out", str(out), *extra])


def test_cluster_two_cliques(clique_files, tmp_path, capsys):
    out = tmp_path / "run"
    assert _cluster(clique_files, out) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("L_final=") and "NMI=100.000" in line and "Acc=100.000" in line
    report = json.loads((out / "report.json").read_text())
    assert report["nmi"] == pytest.approx(100.0)
    labels = [int(r.split()[1]) for r in (out / "labels.tsv").read_text().splitlines()
              if r and not r.startswith("#")]
    assert len(set(labels)) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["args"]["max_iters"] == 300
    assert str(clique_files["edges"]) in manifest["inputs"]
    for name in ("trace.csv", "checkpoint.json"):
        assert (out / name).exists()


def test_cluster_missing_features(clique_files, tmp_path, capsys):
    code = main(["cluster", "--edges", str(clique_files["edges"]),
                 "--features", str(tmp_path / "nope.tsv"), "--k", "2", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "usage:" in capsys.readouterr().err


def test_cluster_needs_k_without_labels(clique_files, tmp_path):
    code = main(["cluster", "--edges", str(clique_files["edges"]),
                 "--features", str(clique_files["features"]), "--out", str(tmp_path / "o")])
    assert code == 2


def test_cluster_malformed_input(clique_files, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("0 1\n1 two\n")
    code = main(["cluster", "--edges", str(bad), "--features", str(clique_files["features"]),
                 "--k", "2", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "bad.tsv:2:" in capsys.readouterr().err


def test_env_override(clique_files, tmp_path, monkeypatch):
    monkeypatch.setenv("RTCMPN_MAX_ITERS", "2")
    monkeypatch.setenv("RTCMPN_TOL", "0")
    out = tmp_path / "env"
    assert _cluster(clique_files, out) == 0
    rows = list(csv.reader((out / "trace.csv").open()))
    assert len(rows) == 3
    assert _cluster(clique_files, tmp_path / "flag", "--max-iters", "1") == 0
    assert len(list(csv.reader((tmp_path / "flag" / "trace.csv").open()))) == 2


def test_synth_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    for fname in ("edges.tsv", "features.tsv", "labels.tsv", "planted.json", "manifest.json"):
        a = (tmp_path / "a" / fname).read_bytes()
        b = (tmp_path / "b" / fname).read_bytes()
        if fname == "manifest.json":
            a, b = a.replace(b"/a", b""), b.replace(b"/b", b"")
        assert a == b, fname


def test_synth_empty_graph(tmp_path, capsys):
    assert main(["synth", "--n", "10", "--k", "2", "--edge-scale", "0.0001",
                 "--out", str(tmp_path / "e")]) == 1
    assert "edge_scale" in capsys.readouterr().err


def test_synth_then_cluster(tmp_path, capsys):
    d = tmp_path / "syn"
    assert main(["synth", "--n", "200", "--k", "4", "--seed", "1", "--out", str(d)]) == 0
    paths = {k: d / f"{k}.tsv" for k in ("edges", "features", "labels")}
    assert _cluster(paths, tmp_path / "fit") == 0
    report = json.loads((tmp_path / "fit" / "report.json").read_text())
    assert report["nmi"] >= 80


@pytest.mark.slow
def test_no_signal_gives_low_nmi(tmp_path, capsys):
    scores = []
    for seed in range(3):
        d = tmp_path / str(seed)
        assert main(["synth", "--noise", "1", "--purity", "0", "--seed", str(seed),
                     "--out", str(d)]) == 0
        paths = {k: d / f"{k}.tsv" for k in ("edges", "features", "labels")}
        assert _cluster(paths, d / "fit") == 0
        scores.append(json.loads((d / "fit" / "report.json").read_text())["nmi"])
    assert statistics.median(scores) < 25


def _labels(path, pairs):
    path.write_text("".join(f"{v}\t{c}\n" for v, c in pairs))
    return str(path)


def test_eval_identical_and_permuted(tmp_path, capsys):
    truth = _labels(tmp_path / "t.tsv", [(0, 0), (1, 0), (2, 1), (3, 1), (4, 2)])
    perm = _labels(tmp_path / "p.tsv", [(0, 2), (1, 2), (2, 0), (3, 0), (4, 1)])
    for pred in (truth, perm):
        assert main(["eval", "--pred", pred, "--truth", truth]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["nmi"] == pytest.approx(100.0) and doc["acc"] == 100.0


def test_eval_hand_value(tmp_path, capsys):
    pred = _labels(tmp_path / "p.tsv", [(0, 0), (1, 0), (2, 1), (3, 2)])
    truth = _labels(tmp_path / "t.tsv", [(0, 0), (1, 0), (2, 1), (3, 1)])
    out = tmp_path / "r.json"
    assert main(["eval", "--pred", pred, "--truth", truth, "--out", str(out)]) == 0
    assert abs(json.loads(out.read_text())["nmi"] - 80.0) <= 1e-10


def test_eval_length_mismatch(tmp_path):
    a = _labels(tmp_path / "a.tsv", [(0, 0), (1, 0)])
    b = _labels(tmp_path / "b.tsv", [(0, 0)])
    assert main(["eval", "--pred", a, "--truth", b]) == 1


def test_trace_plot_data(clique_files, tmp_path):
    out = tmp_path / "run"
    assert _cluster(clique_files, out) == 0
    plot = tmp_path / "plot.csv"
    assert main(["trace-plot-data", "--trace", str(out / "trace.csv"), "--out", str(plot)]) == 0
    rows = list(csv.DictReader(plot.open()))
    assert list(rows[0]) == ["iteration", "loglik", "delta", "rel_delta", "scaled"]
    assert float(rows[-1]["scaled"]) == 1.0
    assert all(0.0 <= float(r["scaled"]) <= 1.0 for r in rows)
