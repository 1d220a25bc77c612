import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from archsearch import cli

SMALL = {"n_initial": 20, "iterations": 2, "batch_size": 4, "space": "reduced", "pop_size": 20, "generations": 8}


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(lines[1:]))


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SMALL))
    out = root / "run"
    assert cli.main(["search", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_smoke_subprocess(config, tmp_path):
    out = tmp_path / "run"
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "archsearch", "search", "--config", str(config), "--out", str(out), "--seed", "1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert time.perf_counter() - start < 30
    for name in ("config.json", "archive.csv", "metrics.csv", "front.csv", "front.svg"):
        assert (out / name).is_file()
    h = json.loads((out / "config.json").read_text())["config_hash"]
    assert (out / "archive.csv").read_text().startswith(f"# config_hash={h}")
    assert f"<!-- config_hash={h} -->" in (out / "front.svg").read_text()
    assert "evaluations" in proc.stdout


def test_run_artifacts(finished_run):
    archive = read_rows(finished_run / "archive.csv")
    assert 20 < len(archive) <= 28
    metrics = read_rows(finished_run / "metrics.csv")
    assert [int(r["iteration"]) for r in metrics] == [0, 1, 2]
    hv = [float(r["hypervolume"]) for r in metrics]
    assert hv == sorted(hv)
    surrogates = read_rows(finished_run / "surrogates.csv")
    assert sum(r["selected"] == "True" for r in surrogates) == 2
    assert len(read_rows(finished_run / "front.csv")) >= 1


def test_svg_is_reproducible(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["search", "--config", str(config), "--out", str(out), "--budget", "24"]) == 0
    assert (a / "front.svg").read_bytes() == (b / "front.svg").read_bytes()
    assert (a / "archive.csv").read_bytes() == (b / "archive.csv").read_bytes()


def test_missing_config_is_usage_error(tmp_path, capsys):
    code = cli.main(["search", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "usage"


def test_invalid_config_is_usage_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n_initial": 5}))
    assert cli.main(["search", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE
    path.write_text("{not json")
    assert cli.main(["search", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE


def test_output_collision(config, tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    args = ["search", "--config", str(config), "--out", str(out), "--budget", "20"]
    assert cli.main(args) == cli.EXIT_USAGE
    assert cli.main(args + ["--force"]) == 0


def test_budget_sets_iterations(config, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["search", "--config", str(config), "--out", str(out), "--budget", "25"]) == 0
    cfg = json.loads((out / "config.json").read_text())["config"]
    assert cfg["iterations"] == 2  # ceil((25 - 20) / 4)
    assert cli.main(["search", "--config", str(config), "--out", str(tmp_path / "x"), "--budget", "10"]) == cli.EXIT_USAGE


def test_analyze(finished_run, tmp_path):
    out = tmp_path / "analysis"
    assert cli.main(["analyze", str(finished_run), "--out", str(out)]) == 0
    freq = read_rows(out / "gene_frequencies.csv")
    totals = {}
    for r in freq:
        totals[r["position"]] = totals.get(r["position"], 0.0) + float(r["frequency"])
    assert len(totals) == 46
    assert all(abs(t - 1) <= 1e-9 for t in totals.values())
    corr = read_rows(out / "correlations.csv")
    names = [r[""] for r in corr]
    M = np.array([[float(r[c]) for c in names] for r in corr])
    assert np.allclose(np.diag(M), 1.0)
    assert np.array_equal(M, M.T)
    assert (out / "gene_frequencies.svg").is_file()


def test_analyze_missing_artifacts(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["analyze", str(empty)]) == cli.EXIT_STATE


def test_resume_completes_interrupted_run(config, finished_run, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["search", "--config", str(config), "--out", str(out), "--stop-after", "1"]) == 0
    assert len(read_rows(out / "metrics.csv")) == 2
    assert cli.main(["resume", str(out)]) == 0
    for name in ("archive.csv", "metrics.csv", "front.csv", "surrogates.csv"):
        assert (out / name).read_text() == (finished_run / name).read_text(), name
    assert cli.main(["resume", str(out)]) == cli.EXIT_USAGE  # already complete


def test_resume_corrupt_checkpoint(config, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["search", "--config", str(config), "--out", str(out), "--stop-after", "0"]) == 0
    ckpt = out / "checkpoint.json"
    ckpt.write_text(ckpt.read_text()[:100])
    assert cli.main(["resume", str(out)]) == cli.EXIT_STATE


def test_transfer(finished_run, config, tmp_path):
    out = tmp_path / "transfer"
    assert cli.main(["transfer", "--config", str(config), "--source", str(finished_run), "--out", str(out), "--budget", "20"]) == 0
    dist = json.loads((out / "transfer_distribution.json").read_text())
    assert dist["source"] == str(finished_run)
    assert len(read_rows(out / "archive.csv")) == 20
    assert cli.main(["transfer", "--config", str(config), "--out", str(tmp_path / "t2")]) == cli.EXIT_USAGE


def test_search_scalar(config, tmp_path):
    out = tmp_path / "scalar"
    assert cli.main(["search-scalar", "--config", str(config), "--out", str(out)]) == 0
    traj = [float(r["best_scalarized"]) for r in read_rows(out / "trajectory.csv")]
    assert traj == sorted(traj)
    best = json.loads((out / "best.json").read_text())
    assert best["scalarized"] == pytest.approx(traj[-1])
    assert best["target"] > 0


def test_surrogate_study(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps({"space": "reduced", "study": {"pool": 200, "sizes": [40], "trials": 2, "models": ["CART", "RBF"]}}))
    out = tmp_path / "study"
    assert cli.main(["surrogate-study", "--config", str(path), "--out", str(out)]) == 0
    summary = read_rows(out / "surrogate_study.csv")
    assert [r["model"] for r in summary] == ["CART", "RBF", "AS"]
    assert all(r["trials"] == "2" for r in summary)


def test_efficiency_study(config, tmp_path):
    path = tmp_path / "eff.json"
    path.write_text(json.dumps({**SMALL, "iterations": 1, "study": {"seeds": 2}}))
    out = tmp_path / "eff"
    assert cli.main(["efficiency-study", "--config", str(path), "--out", str(out)]) == 0
    rows = read_rows(out / "hv_curves.csv")
    assert {r["method"] for r in rows} == {"search", "random"}
    assert len(rows) == 2 * 24
    exhaustive = json.loads((out / "config.json").read_text())["exhaustive_hv"]
    final = max(float(r["hv_mean"]) for r in rows)
    assert all(final <= v + 1e-12 for v in exhaustive.values())


def test_external_evaluator_verb(config, tmp_path):
    out = tmp_path / "ext"
    assert cli.main(["search", "--config", str(config), "--out", str(out), "--evaluator", "external", "--budget", "20"]) == 0
    rows = read_rows(out / "archive.csv")
    assert {r["evaluator"] for r in rows} == {"external"}


def test_eval_stub_verb():
    request = json.dumps({"id": 7, "genome": "0-2-1-1-1-1-0-0-0-0" + "-2-1-1-1-1-0-0-0-0" * 4})
    proc = subprocess.run(
        [sys.executable, "-m", "archsearch", "eval-stub", "--variant", "smooth"],
        input=request + "\n",
        capture_output=True,
        text=True,
        timeout=30,
    )
    reply = json.loads(proc.stdout.strip().splitlines()[0])
    assert reply["id"] == 7
    assert reply["accuracy"] == pytest.approx(5.7 / 29.3876)


def test_help_lists_every_verb(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    text = capsys.readouterr().out
    for verb in ("search", "search-scalar", "surrogate-study", "efficiency-study", "analyze", "transfer", "resume", "eval-stub"):
        assert verb in text
