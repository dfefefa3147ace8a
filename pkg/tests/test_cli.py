"""Command-line pipeline: extract, cluster, fit, predict, simulate, report."""

import csv
import json

import numpy as np
import pytest

from driftlane.cli import main
from driftlane.ddm import REFERENCE_PARAMS, save_params
from driftlane.simulation import generate_synthetic_pairs
from driftlane.trajectories import read_pairs, write_pairs

from conftest import HEADER, build_corpus_csv, inverse_gaussian_cdf


@pytest.fixture
def corpus_csv(tmp_path):
    path = tmp_path / "trajectories.csv"
    path.write_text(build_corpus_csv())
    return path


@pytest.fixture
def synthetic_pairs_file(tmp_path):
    pairs, _ = generate_synthetic_pairs(REFERENCE_PARAMS, 12, seed=13)
    path = tmp_path / "pairs.json"
    write_pairs(pairs, path)
    return path


class TestExtract:
    def test_valid_fixture(self, corpus_csv, tmp_path):
        out = tmp_path / "pairs.json"
        assert main(["extract", "--input", str(corpus_csv),
                     "--out", str(out)]) == 0
        pairs = read_pairs(out)
        assert len(pairs) == 6
        outcomes = sorted(p.outcome for p in pairs)
        assert outcomes == ["CENSORED"] * 4 + ["LC_LEFT", "LC_RIGHT"]
        assert all(p.steps for p in pairs)

    def test_missing_column_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("vehicle_id,time_s,lane\nv,0.0,3\n")
        out = tmp_path / "pairs.json"
        assert main(["extract", "--input", str(bad), "--out", str(out)]) == 2
        assert "x_m" in capsys.readouterr().err

    def test_empty_input_exit_0(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text(HEADER + "\n")
        out = tmp_path / "pairs.json"
        assert main(["extract", "--input", str(empty), "--out", str(out)]) == 0
        assert json.loads(out.read_text()) == []

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["extract", "--input", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o.json")]) == 2

    def test_schema_flag(self, tmp_path):
        renamed = tmp_path / "renamed.csv"
        renamed.write_text(build_corpus_csv(
            rename={"vehicle_id": "id", "x_m": "xloc"}))
        out = tmp_path / "pairs.json"
        assert main(["extract", "--input", str(renamed), "--out", str(out),
                     "--schema", "vehicle_id=id,x_m=xloc"]) == 0
        assert len(read_pairs(out)) == 6


class TestClusterFit:
    def test_cluster_output(self, corpus_csv, tmp_path):
        pairs_f = tmp_path / "pairs.json"
        clusters_f = tmp_path / "clusters.json"
        main(["extract", "--input", str(corpus_csv), "--out", str(pairs_f)])
        assert main(["cluster", "--pairs", str(pairs_f),
                     "--out", str(clusters_f), "--grid-points", "3"]) == 0
        cl = json.loads(clusters_f.read_text())
        assert set(cl) >= {"centers", "within_sse", "assignments", "weights",
                           "intention_cluster", "intention_members",
                           "misassigned_lc_pairs", "weight_significance",
                           "pair_ids"}
        assert cl["centers"][0] < cl["centers"][1]
        assert len(cl["assignments"]) == 6
        assert cl["weight_significance"]["heuristic"] is True

    def test_cluster_too_few_pairs(self, tmp_path):
        pairs_f = tmp_path / "one.json"
        pairs, _ = generate_synthetic_pairs(REFERENCE_PARAMS, 1, seed=1)
        write_pairs(pairs, pairs_f)
        assert main(["cluster", "--pairs", str(pairs_f),
                     "--out", str(tmp_path / "c.json")]) == 2

    def test_fit_and_report(self, synthetic_pairs_file, tmp_path, capsys):
        fit_f = tmp_path / "fit.json"
        assert main(["fit", "--pairs", str(synthetic_pairs_file),
                     "--out", str(fit_f), "--max-iter", "3", "--no-se"]) == 0
        d = json.loads(fit_f.read_text())
        assert d["sample_size"] == 12
        assert set(d["parameters"]) == {"alpha", "beta0", "beta1", "beta2",
                                        "beta3", "g_f0", "sigma"}
        capsys.readouterr()
        report_f = tmp_path / "report.txt"
        assert main(["report", "--fit", str(fit_f),
                     "--out-text", str(report_f)]) == 0
        text = report_f.read_text()
        for name in d["parameters"]:
            assert name in text
        assert "Sample size" in text and "Log-likelihood" in text

    def test_fit_convention_flag(self, synthetic_pairs_file, tmp_path):
        out_d = tmp_path / "fit_d.json"
        out_m = tmp_path / "fit_m.json"
        for out, conv in ((out_d, "density"), (out_m, "mass")):
            assert main(["fit", "--pairs", str(synthetic_pairs_file),
                         "--out", str(out), "--max-iter", "2", "--no-se",
                         "--convention", conv]) == 0
        d = json.loads(out_d.read_text())
        m = json.loads(out_m.read_text())
        assert d["convention"] == "density" and m["convention"] == "mass"

    def test_fit_restricted_to_intention_cluster(self, tmp_path):
        pairs, _ = generate_synthetic_pairs(REFERENCE_PARAMS, 10, seed=3)
        pairs_f = tmp_path / "pairs.json"
        write_pairs(pairs, pairs_f)
        members = [i for i, p in enumerate(pairs)][:4]
        clusters_f = tmp_path / "clusters.json"
        clusters_f.write_text(json.dumps({"intention_members": members}))
        fit_f = tmp_path / "fit.json"
        assert main(["fit", "--pairs", str(pairs_f), "--clusters",
                     str(clusters_f), "--out", str(fit_f),
                     "--max-iter", "1", "--no-se"]) == 0
        assert json.loads(fit_f.read_text())["sample_size"] == 4


class TestPredict:
    def test_blocks_per_available_direction(self, tmp_path):
        pairs, _ = generate_synthetic_pairs(REFERENCE_PARAMS, 5, seed=17)
        pairs_f = tmp_path / "pairs.json"
        write_pairs(pairs, pairs_f)
        params_f = tmp_path / "params.json"
        save_params(REFERENCE_PARAMS, params_f)
        out_f = tmp_path / "series.csv"
        sum_f = tmp_path / "summary.csv"
        assert main(["predict", "--pairs", str(pairs_f), "--params",
                     str(params_f), "--out", str(out_f),
                     "--summary", str(sum_f)]) == 0
        with open(sum_f) as fh:
            rows = list(csv.DictReader(fh))
        expected = sum(len(p.lanes_available) for p in pairs)
        assert len(rows) == expected
        for r in rows:
            assert 0.0 <= float(r["total_lc_probability"]) <= 1.0
        with open(out_f) as fh:
            series = list(csv.DictReader(fh))
        # cumulative probability is monotone within each block
        by_block = {}
        for r in series:
            by_block.setdefault((r["pair_index"], r["direction"]),
                                []).append(float(r["cumulative_probability"]))
        for fs in by_block.values():
            assert all(b >= a - 1e-12 for a, b in zip(fs, fs[1:]))

    def test_constant_env_matches_oracle(self, tmp_path):
        from conftest import synthetic_pair
        from driftlane.ddm import DdmParams
        p = DdmParams(alpha=0.0, beta0=0.5, beta1=0.0, beta2=0.0, beta3=0.0,
                      g_f0=0.0, sigma=1.0)
        pair = synthetic_pair(n_steps=601)
        pairs_f = tmp_path / "pairs.json"
        write_pairs([pair], pairs_f)
        params_f = tmp_path / "params.json"
        save_params(p, params_f)
        out_f = tmp_path / "series.csv"
        assert main(["predict", "--pairs", str(pairs_f), "--params",
                     str(params_f), "--out", str(out_f),
                     "--summary", str(tmp_path / "s.csv")]) == 0
        with open(out_f) as fh:
            rows = [r for r in csv.DictReader(fh) if r["direction"] == "1"]
        t = np.array([float(r["t"]) for r in rows])
        F = np.array([float(r["cumulative_probability"]) for r in rows])
        ref = inverse_gaussian_cdf(t, 0.5, 1.0, 10.0)
        assert np.max(np.abs(F - ref)) <= 5e-3

    def test_dt_mismatch_exit_2(self, tmp_path):
        from conftest import synthetic_pair
        pair = synthetic_pair(n_steps=30, dt=0.5)
        pairs_f = tmp_path / "pairs.json"
        write_pairs([pair], pairs_f)
        params_f = tmp_path / "params.json"
        save_params(REFERENCE_PARAMS, params_f)
        assert main(["predict", "--pairs", str(pairs_f), "--params",
                     str(params_f), "--out", str(tmp_path / "o.csv"),
                     "--summary", str(tmp_path / "s.csv")]) == 2


class TestSimulate:
    def test_outputs(self, tmp_path):
        out_f = tmp_path / "paths.csv"
        sum_f = tmp_path / "summary.json"
        assert main(["simulate", "--n-paths", "400", "--seed", "9",
                     "--horizon", "20", "--mu", "0.5", "--a0", "10",
                     "--out", str(out_f), "--summary", str(sum_f)]) == 0
        summary = json.loads(sum_f.read_text())
        assert summary["n_paths"] == 400
        assert len(summary["checkpoint_cdf"]) == 4   # t = 5, 10, 15, 20
        with open(out_f) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 400
        censored = sum(1 for r in rows if r["passage_time_s"] == "")
        assert censored == summary["n_censored"]

    def test_idempotent_bytes(self, tmp_path):
        args = ["simulate", "--n-paths", "300", "--seed", "4",
                "--horizon", "15", "--mu", "0.4", "--a0", "10"]
        a = (tmp_path / "a.csv", tmp_path / "a.json")
        b = (tmp_path / "b.csv", tmp_path / "b.json")
        for out, summ in (a, b):
            assert main(args + ["--out", str(out), "--summary", str(summ)]) == 0
        assert a[0].read_bytes() == b[0].read_bytes()
        assert a[1].read_bytes() == b[1].read_bytes()


class TestConfigMerging:
    def test_flags_override_config(self, corpus_csv, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"min_duration": 1000.0}))
        out = tmp_path / "pairs.json"
        # the config's absurd duration filter is overridden by the flag
        assert main(["extract", "--config", str(cfg), "--input",
                     str(corpus_csv), "--out", str(out),
                     "--min-duration", "5.0"]) == 0
        assert len(read_pairs(out)) == 6
        out2 = tmp_path / "pairs2.json"
        assert main(["extract", "--config", str(cfg), "--input",
                     str(corpus_csv), "--out", str(out2)]) == 0
        assert read_pairs(out2) == []

    def test_bad_config_exit_2(self, corpus_csv, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("[1, 2]")
        assert main(["extract", "--config", str(cfg), "--input",
                     str(corpus_csv), "--out", str(tmp_path / "o.json")]) == 2
