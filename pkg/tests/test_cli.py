from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from medtraj.cli import main
from medtraj.dissim import DissimilarityMatrix
from oracles import om_bruteforce

ALL_STAGES = ("simulate", "ingest", "build", "stats", "dist", "cluster", "fit-cox", "compare", "report")

PIPELINE_ARTIFACTS = (
    "patients.csv", "events.csv", "truth.csv",
    "cohort.csv", "cohort_events.csv", "exclusions.csv",
    "sequences_RAS.csv", "sequences_BB.csv", "sequences_AA.csv", "sequences_combined.csv",
    "state_distribution.json", "transitions.json",
    "distances.bin",
    "clusters.csv", "cluster_quality.json", "dendrogram.json",
    "survival.csv", "cox_report.json",
    "comparison_1_vs_2.csv", "comparison_1_vs_2.json",
    "state_distribution.svg", "sequence_index.svg", "transition_heatmap.svg", "hr_forest.svg",
)


def run_chain(out_dir, n=200, seed=42, extra=()):
    base = ["--out-dir", str(out_dir), "--seed", str(seed)]
    assert main(["simulate", *base, "--n", str(n)]) == 0
    for stage in ("ingest", "build", "stats", "dist", "cluster", "fit-cox", "compare", "report"):
        assert main([stage, *base, *extra]) == 0, stage


@pytest.fixture(scope="module")
def chain_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("chain")
    run_chain(out)
    return out


class TestFullChain:
    def test_all_artifacts_written(self, chain_dir):
        for name in PIPELINE_ARTIFACTS:
            assert (chain_dir / name).exists(), name

    def test_cluster_quality_report_shape(self, chain_dir):
        payload = json.loads((chain_dir / "cluster_quality.json").read_text())
        ks = sorted({e["k"] for e in payload["entries"]})
        assert ks == [2, 3, 4, 5, 6]
        assert len(payload["entries"]) == 10
        for entry in payload["entries"]:
            assert set(entry) == {"k", "method", "pbc", "hc", "asw", "medoid_ids"}
        assert payload["chosen"]["k"] == 3

    def test_cox_report_covariates(self, chain_dir):
        payload = json.loads((chain_dir / "cox_report.json").read_text())
        names = [c["name"] for c in payload["covariates"]]
        assert "age" in names and "sex_female" in names
        assert any(name.startswith("cluster_") for name in names)
        assert payload["converged"] is True
        for c in payload["covariates"]:
            assert c["ci_low"] < c["hr"] < c["ci_high"]

    def test_svgs_are_valid_xml(self, chain_dir):
        for name in PIPELINE_ARTIFACTS:
            if name.endswith(".svg"):
                root = ET.fromstring((chain_dir / name).read_text())
                assert root.tag.endswith("svg")

    def test_exclusion_log_header_only_when_clean(self, chain_dir):
        lines = (chain_dir / "exclusions.csv").read_text().splitlines()
        assert lines[0] == "subject_id,reason"
        assert len(lines) == 1

    def test_survival_csv_schema(self, chain_dir):
        lines = (chain_dir / "survival.csv").read_text().splitlines()
        assert lines[0] == "subject_id,time,event"
        assert len(lines) == 201

    def test_clusters_csv_schema(self, chain_dir):
        lines = (chain_dir / "clusters.csv").read_text().splitlines()
        assert lines[0] == "subject_id,cluster"
        labels = {int(line.split(",")[1]) for line in lines[1:]}
        assert labels == {1, 2, 3}


class TestDeterminism:
    def test_rerun_is_byte_identical(self, chain_dir, tmp_path):
        second = tmp_path / "again"
        run_chain(second)
        for name in PIPELINE_ARTIFACTS:
            assert (chain_dir / name).read_bytes() == (second / name).read_bytes(), name

    def test_dist_thread_flag_does_not_change_bytes(self, chain_dir, tmp_path):
        out = tmp_path / "threads"
        out.mkdir()
        for name in ("sequences_combined.csv",):
            (out / name).write_bytes((chain_dir / name).read_bytes())
        assert main(["dist", "--out-dir", str(out), "--threads", "1"]) == 0
        single = (out / "distances.bin").read_bytes()
        assert main(["dist", "--out-dir", str(out), "--threads", "4"]) == 0
        assert (out / "distances.bin").read_bytes() == single
        assert single == (chain_dir / "distances.bin").read_bytes()


class TestBuildThreshold:
    def write_fixture(self, out):
        out.mkdir(parents=True, exist_ok=True)
        (out / "patients.csv").write_text(
            "subject_id,index_date,sex,age,mcs_score,n_procedures,"
            "days_in_hospital,end_date,end_event,incident_flag\n"
            "p1,2006-01-01,M,70,3,0,5,2008-01-01,censored,1\n"
        )
        # week 1: 4 covered days; week 2: 5; week 3: 3
        (out / "events.csv").write_text(
            "subject_id,drug_class,purchase_date,coverage_days\n"
            "p1,RAS,2006-01-02,4\n"
            "p1,RAS,2006-01-09,5\n"
            "p1,RAS,2006-01-16,3\n"
        )

    def states(self, out):
        row = (out / "sequences_RAS.csv").read_text().splitlines()[1]
        return row.split(",")[1:]

    def test_threshold_semantics(self, tmp_path):
        out = tmp_path / "fixture"
        self.write_fixture(out)
        base = ["--out-dir", str(out)]
        assert main(["ingest", *base]) == 0
        assert main(["build", *base, "--threshold", "4"]) == 0
        at4 = self.states(out)
        assert main(["build", *base, "--threshold", "5"]) == 0
        at5 = self.states(out)
        assert at4[:3] == ["Drug", "Drug", "NoDrug"]
        assert at5[:3] == ["NoDrug", "Drug", "NoDrug"]
        # the two runs differ exactly at the 4-covered-day week
        assert [i for i, (a, b) in enumerate(zip(at4, at5)) if a != b] == [0]


class TestDistFixture:
    def test_three_sequence_matrix_matches_oracle(self, tmp_path):
        out = tmp_path / "fix"
        out.mkdir()
        header = "subject_id," + ",".join(f"w{i}" for i in range(1, 5))
        rows = [
            "a,None,RAS,RAS,RAS+BB",
            "b,None,None,RAS,RAS",
            "c,BB,BB,None,None",
        ]
        (out / "sequences_combined.csv").write_text(header + "\n" + "\n".join(rows) + "\n")
        assert main(
            ["dist", "--out-dir", str(out), "--cost-model", "constant", "--indel", "1"]
        ) == 0
        dm = DissimilarityMatrix.load(out / "distances.bin")
        assert dm.subject_ids == ("a", "b", "c")

        codes = {"None": 0, "RAS": 1, "BB": 2, "RAS+BB": 3, "AA": 4}
        seqs = {
            "a": [codes[c] for c in ["None", "RAS", "RAS", "RAS+BB"]],
            "b": [codes[c] for c in ["None", "None", "RAS", "RAS"]],
            "c": [codes[c] for c in ["BB", "BB", "None", "None"]],
        }
        sub = [[0.0 if i == j else 2.0 for j in range(8)] for i in range(8)]
        expected = [
            om_bruteforce(seqs[x], seqs[y], sub, 1.0)
            for x, y in (("a", "b"), ("a", "c"), ("b", "c"))
        ]
        assert dm.condensed.tolist() == pytest.approx(expected, abs=1e-12)


class TestErrorPaths:
    def test_missing_upstream_exits_2(self, tmp_path, capsys):
        code = main(["dist", "--out-dir", str(tmp_path / "empty")])
        assert code == 2
        err = capsys.readouterr().err
        assert "sequences_combined.csv" in err

    def test_report_lists_missing_stages(self, tmp_path, capsys):
        out = tmp_path / "partial"
        out.mkdir()
        (out / "state_distribution.json").write_text("{}")
        code = main(["report", "--out-dir", str(out)])
        assert code == 2
        err = capsys.readouterr().err
        for missing in ("transitions.json", "clusters.csv", "cox_report.json"):
            assert missing in err
        assert "state_distribution.json" not in err

    def test_parse_error_exits_2(self, tmp_path, capsys):
        out = tmp_path / "bad"
        out.mkdir()
        (out / "patients.csv").write_text("subject_id,oops\n1,2\n")
        (out / "events.csv").write_text("subject_id,drug_class,purchase_date,coverage_days\n")
        assert main(["ingest", "--out-dir", str(out)]) == 2
        assert "missing column" in capsys.readouterr().err

    def test_io_error_exits_3(self, tmp_path):
        out = tmp_path / "io"
        out.mkdir()
        (out / "patients.csv").mkdir()  # a directory where a file is expected
        (out / "events.csv").write_text("subject_id,drug_class,purchase_date,coverage_days\n")
        assert main(["ingest", "--out-dir", str(out)]) == 3

    def test_invalid_config_value_exits_2(self, tmp_path):
        assert main(["build", "--out-dir", str(tmp_path), "--threshold", "9"]) == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus_key": 1}')
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


class TestConfigPrecedence:
    def test_flags_override_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_patients": 5, "seed": 1}))
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(out), "--n", "8"]) == 0
        lines = (out / "patients.csv").read_text().splitlines()
        assert len(lines) == 9  # header + 8 patients

    def test_config_file_used_when_no_flag(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_patients": 5, "seed": 1}))
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(out)]) == 0
        assert len((out / "patients.csv").read_text().splitlines()) == 6


class TestCliSurface:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exit_info:
            main(["--version"])
        assert exit_info.value.code == 0
        assert capsys.readouterr().out.strip() == "medtraj 0.1.0"

    def test_log_format(self, tmp_path, capsys):
        assert main(["simulate", "--out-dir", str(tmp_path), "--n", "3"]) == 0
        err_lines = [l for l in capsys.readouterr().err.splitlines() if l]
        assert err_lines
        for line in err_lines:
            assert line.startswith("level=")
            assert "msg=" in line
