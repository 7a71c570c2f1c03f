import csv
import io

import pytest

from slotstack.cli import main
from slotstack.ingest import parse_run_lines

STAGE_FILES = ("systems.txt", "train_features.tsv", "test_features.tsv", "model.json", "predictions.tsv",
               "final_run.tsv", "score.txt", "score.csv", "budgets.tsv")


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--seed", "5", "--train-queries", "80", "--test-queries", "80",
                 "--unsup-systems", "2", "--out", str(root / "data")]) == 0
    return root


def test_synth_layout(data):
    d = data / "data"
    assert (d / "config.json").is_file()
    for year in "AB":
        assert (d / year / "key.tsv").is_file() and (d / year / "queries.xml").is_file()
        assert len(list((d / year / "runs").glob("*.tsv"))) == 10


def test_validate(data, capsys):
    assert main(["validate", "--dir", str(data / "data" / "A")]) == 0
    out = capsys.readouterr().out
    assert "runs\t10" in out and "warning" not in out


def test_stages_equal_pipeline(data, capsys):
    d, p, m = data / "data", data / "pipe", data / "manual"
    assert main(["pipeline", "--data", str(d), "--train-year", "A", "--test-year", "B",
                 "--features", "conf,dps,op,rel", "--out", str(p)]) == 0
    steps = [
        ["featurize", "--dir", f"{d}/A", "--other-year", f"{d}/B", "--out", f"{m}/train_features.tsv",
         "--write-systems", f"{m}/systems.txt", "--write-budgets", f"{m}/budgets.tsv"],
        ["featurize", "--dir", f"{d}/B", "--budgets", f"{m}/budgets.tsv", "--layout-from",
         f"{m}/train_features.tsv", "--out", f"{m}/test_features.tsv"],
        ["train", "--features", f"{m}/train_features.tsv", "--out", f"{m}/model.json"],
        ["predict", "--model", f"{m}/model.json", "--features", f"{m}/test_features.tsv",
         "--out", f"{m}/predictions.tsv"],
        ["postprocess", "--dir", f"{d}/B", "--budgets", f"{m}/budgets.tsv", "--systems", f"{m}/systems.txt",
         "--predictions", f"{m}/predictions.tsv", "--out", f"{m}/final_run.tsv"],
        ["score", "--run", f"{m}/final_run.tsv", "--key", f"{d}/B/key.tsv", "--out", f"{m}/score.txt",
         "--csv", f"{m}/score.csv"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    for name in STAGE_FILES:
        assert (m / name).read_bytes() == (p / name).read_bytes(), name
    assert "UNSUP_ENSEMBLE" in (p / "systems.txt").read_text()


def test_usage_errors_exit_1(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["score", "--bogus"]) == 1
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(data, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("Q\tper:age\tr\tD:1-2\t5\n")
    assert main(["score", "--run", str(bad), "--key", str(data / "data" / "B" / "key.tsv")]) == 2
    assert main(["validate", "--dir", str(tmp_path / "missing")]) == 2
    assert "data error" in capsys.readouterr().err


def test_score_empty_run(data, tmp_path, capsys):
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    assert main(["score", "--run", str(empty), "--key", str(data / "data" / "B" / "key.tsv")]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1].split()
    assert last[0] == "ALL" and last[1] == "0" and last[-1] == "0.0000"


def test_baselines(data, tmp_path, capsys):
    d = data / "data"
    assert main(["baseline", "union", "--dir", f"{d}/B", "--out", str(tmp_path / "u.tsv")]) == 0
    assert main(["baseline", "vote", "--dir", f"{d}/B", "--k", "2", "--out", str(tmp_path / "v.tsv")]) == 0
    assert main(["baseline", "vote", "--dir", f"{d}/B", "--learn", "--train-dir", f"{d}/A",
                 "--out", str(tmp_path / "l.tsv")]) == 0
    capsys.readouterr()
    assert main(["baseline", "vote", "--dir", f"{d}/B", "--oracle", "--curve", str(tmp_path / "c.csv"),
                 "--out", str(tmp_path / "o.tsv")]) == 0
    assert "oracle" in capsys.readouterr().out
    assert (tmp_path / "c.csv").read_text().startswith("# oracle")
    assert parse_run_lines(tmp_path / "o.tsv")[0].run_id.startswith("ORACLE_")
    assert main(["baseline", "vote", "--dir", f"{d}/B", "--out", str(tmp_path / "x.tsv")]) == 1
    assert main(["baseline", "vote", "--dir", f"{d}/B", "--k", "99", "--out", str(tmp_path / "x.tsv")]) == 1


def test_aggregate(data, tmp_path):
    d = data / "data"
    systems = tmp_path / "sys.txt"
    systems.write_text("".join(f"sys{i:02d}\n" for i in range(1, 9)))
    out = tmp_path / "agg.tsv"
    assert main(["aggregate", "--dir", f"{d}/B", "--systems", str(systems), "--out", str(out)]) == 0
    lines = parse_run_lines(out)
    assert lines and {l.run_id for l in lines} == {"UNSUP_ENSEMBLE"}


def test_postprocess_links(tmp_path):
    links = tmp_path / "links.tsv"
    links.write_text("sysA\tm1\tD1\t0\t2\tNIL1\t1.0\nsysA\tm2\tD2\t0\t2\tNIL1\t1.0\n"
                     "sysB\tm2\tD2\t0\t2\tNIL7\t1.0\nsysB\tm3\tD3\t0\t2\tNIL7\t1.0\n")
    assert main(["postprocess", "--links", str(links), "--out", str(tmp_path / "m.tsv")]) == 0
    ids = {row.split("\t")[5] for row in (tmp_path / "m.tsv").read_text().splitlines()}
    assert ids == {"NIL0001"}


def test_config_file_and_env(data, tmp_path, monkeypatch):
    feats = data / "manual" / "train_features.tsv"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep point\nlam = 0.5\nstandardize=true\n")
    assert main(["train", "--config", str(cfg), "--features", str(feats), "--out", str(tmp_path / "a.json")]) == 0
    assert '"lambda": 0.5' in (tmp_path / "a.json").read_text()
    monkeypatch.setenv("SLOTSTACK_CONFIG", str(cfg))
    assert main(["train", "--lam", "0.2", "--features", str(feats), "--out", str(tmp_path / "b.json")]) == 0
    text = (tmp_path / "b.json").read_text()
    assert '"lambda": 0.2' in text and '"standardize": null' not in text
    cfg.write_text("standardize=maybe\n")
    assert main(["train", "--features", str(feats), "--out", str(tmp_path / "c.json")]) == 1


def test_experiment_shapes(tmp_path):
    out = tmp_path / "exp.csv"
    assert main(["experiment", "--seed", "2", "--train-queries", "80", "--test-queries", "80",
                 "--learning-curve", "0.25,0.5,1", "--incremental", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert sum(r["setting"].startswith("fraction=") for r in rows) == 3
    assert sum(r["setting"].startswith("systems=") for r in rows) == 8
    oracle = [float(r["f1"]) for r in rows if r["method"].startswith("voting_oracle")]
    learned = [float(r["f1"]) for r in rows if r["method"].startswith("voting_learned")]
    assert oracle[0] >= learned[0]


def test_repeated_stage_outputs_identical(data, tmp_path):
    d = data / "data"
    for name in ("one", "two"):
        assert main(["featurize", "--dir", f"{d}/A", "--other-year", f"{d}/B", "--features",
                     "conf,ind,qsim,psim,dps,op,relprov,rel", "--out", str(tmp_path / f"{name}.tsv")]) == 0
    assert (tmp_path / "one.tsv").read_bytes() == (tmp_path / "two.tsv").read_bytes()
