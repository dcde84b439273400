import csv

import pytest

from pgwmatch import io
from pgwmatch.cli import b_grid, main, parse_seeds


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def fixture_dir(tmp_path):
    assert main(["generate", "--kind", "two-node", "--out", str(tmp_path / "fx")]) == 0
    return tmp_path / "fx"


def match_args(d, out, *extra):
    return ["match", str(d / "source.json"), str(d / "target.json"), "--out", str(out),
            "--wasserstein-only", "--cross-cost", str(d / "cross_cost.csv"), *extra]


def test_match_two_node(fixture_dir, tmp_path):
    assert main(match_args(fixture_dir, tmp_path / "m", "--b", "0.5", "--trace")) == 0
    assert io.read_correspondence(tmp_path / "m" / "correspondence.csv")[0][:2] == (0, 1)
    assert io.read_correspondence(tmp_path / "m" / "correspondence.csv")[1][1] is None
    assert read_rows(tmp_path / "m" / "trace.csv")


def test_sweep_b_transitions(fixture_dir, tmp_path):
    args = ["sweep-b", str(fixture_dir / "source.json"), str(fixture_dir / "target.json"), "--out",
            str(tmp_path / "s"), "--wasserstein-only", "--cross-cost", str(fixture_dir / "cross_cost.csv"),
            "--truth", str(fixture_dir / "truth.csv")]
    assert main(args) == 0
    rows = read_rows(tmp_path / "s" / "pairs.csv")
    assert len(rows) == 20
    counts = {round(float(r["b"]), 2): int(r["n_pairs"]) for r in rows}
    assert counts[0.2] == 0 and counts[0.5] == 1 and counts[0.9] == 2
    plans = read_rows(tmp_path / "s" / "plans.csv")
    assert len(plans) == 40 and set(plans[0]) == {"b", "source_id", "t0", "t1", "DUMMY"}


def test_generate_and_eval(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("synth:\n  n_match: 8\nmatch:\n  M: 1\nsolver:\n  outer_iters: 5\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "g"), "--rho", "0.8"]) == 0
    assert len(io.read_ground_truth(tmp_path / "g" / "truth.csv")) == 8
    assert main(["match", str(tmp_path / "g" / "source.json"), str(tmp_path / "g" / "target.json"),
                 "--config", str(cfg), "--out", str(tmp_path / "m"), "--b", "0.8", "--checkpoints"]) == 0
    assert (tmp_path / "m" / "embeddings" / "round000_source.json").exists()
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "e"), "--kinds", "knn,ba",
                 "--rho", "1.0,0.8", "--seeds", "0-1"]) == 0
    assert len(read_rows(tmp_path / "e" / "results.csv")) == 8
    assert [r["dataset"] for r in read_rows(tmp_path / "e" / "summary.csv")] == ["knn", "ba"]


def test_invalid_inputs_exit_one(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--rho", "0"]) == 1
    assert "rho" in capsys.readouterr().err
    assert main(["match", str(tmp_path / "nope.json"), str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("solver:\n  taus: 1\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "taus" in capsys.readouterr().err
    cfg.write_text("plotting: {}\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert main(["frobnicate"]) == 1


def test_numerical_failure_exit_two(fixture_dir, tmp_path):
    (tmp_path / "nan.csv").write_text("nan,0\n0,0\n")
    args = ["match", str(fixture_dir / "source.json"), str(fixture_dir / "target.json"), "--out",
            str(tmp_path / "m"), "--wasserstein-only", "--cross-cost", str(tmp_path / "nan.csv"), "--b", "0.5"]
    assert main(args) == 2


def test_parsers():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,5") == [1, 5]
    assert b_grid(0.05, 1.0, 0.05)[-1] == 1.0
    assert len(b_grid(0.05, 1.0, 0.05)) == 20


def test_repeat_runs_byte_identical(fixture_dir, tmp_path):
    for name in ("a", "b"):
        assert main(match_args(fixture_dir, tmp_path / name, "--b", "0.7", "--trace")) == 0
    for f in ("correspondence.csv", "trace.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    for name in ("ga", "gb"):
        assert main(["generate", "--out", str(tmp_path / name), "--n-match", "8", "--seed", "3"]) == 0
    for f in ("source.json", "target.json", "truth.csv"):
        assert (tmp_path / "ga" / f).read_bytes() == (tmp_path / "gb" / f).read_bytes()


def test_full_mass_on_identical_graphs_has_no_dummy(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "g"), "--n-match", "10", "--rho", "1.0"]) == 0
    src = str(tmp_path / "g" / "source.json")
    assert main(["match", src, src, "--out", str(tmp_path / "m"), "--b", "1.0", "--rounds", "2"]) == 0
    rows = io.read_correspondence(tmp_path / "m" / "correspondence.csv")
    assert all(t is not None for _, t, _ in rows)


def test_sweep_pair_count_monotone_and_single_point(fixture_dir, tmp_path):
    base = ["sweep-b", str(fixture_dir / "source.json"), str(fixture_dir / "target.json"),
            "--wasserstein-only", "--cross-cost", str(fixture_dir / "cross_cost.csv")]
    assert main(base + ["--out", str(tmp_path / "s")]) == 0
    counts = [int(r["n_pairs"]) for r in read_rows(tmp_path / "s" / "pairs.csv")]
    assert counts == sorted(counts)
    assert main(base + ["--out", str(tmp_path / "one"), "--b-start", "0.5", "--b-stop", "0.5"]) == 0
    rows = read_rows(tmp_path / "one" / "pairs.csv")
    assert len(rows) == 1 and rows[0]["pairs"] == "0-1"
