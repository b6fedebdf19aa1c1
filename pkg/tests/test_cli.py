import json
import os

import pytest

from stylecluster.cli import main

SMALL_CFG = {
    "version": 1,
    "seed": 5,
    "synth": {"n_samples": 60, "n_styles": 2},
    "train": {"hidden_dim": 8, "batch_size": 32, "epochs": 2, "patience": 2},
    "cluster": {"k": 2, "n_init": 3, "split_per_cluster": 8,
                "baseline_total": 20},
}


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """One small end-to-end run shared by the read-only assertions below."""
    root = tmp_path_factory.mktemp("pipe")
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL_CFG))
    wd = root / "wd"
    base = ["--config", str(cfg_path), "--workdir", str(wd)]
    for cmd in (["synth"], ["graphs"], ["train"], ["embed"], ["cluster"],
                ["split"], ["motifs"]):
        assert main(base + cmd) == 0, cmd
    return root


def run(pipeline_dir, *extra):
    root = pipeline_dir
    return main(["--config", str(root / "cfg.json"),
                 "--workdir", str(root / "wd"), *extra])


class TestPipelineArtifacts:
    def test_expected_files_exist(self, pipeline_dir):
        wd = pipeline_dir / "wd"
        for name in ["synthetic.jsonl", "labels.csv", "vocab.json",
                     "triplets.jsonl", "checkpoint.ssg", "trainlog.csv",
                     "embeddings.sse", "embeddings.csv", "centroids.ssc",
                     "clusters.csv", "projection.csv", "cluster_report.txt",
                     "cluster_0.txt", "cluster_1.txt", "baseline_0.txt",
                     "baseline_1.txt", "baseline_2.txt", "split_report.txt",
                     "census.csv", "manifest.jsonl"]:
            assert (wd / name).is_file(), name

    def test_validate_round_trip_zero_rejects(self, pipeline_dir, capsys):
        wd = pipeline_dir / "wd"
        assert run(pipeline_dir, "validate", str(wd / "synthetic.jsonl")) == 0
        assert "0 rejected" in capsys.readouterr().out

    def test_manifest_and_reports_record_seed(self, pipeline_dir):
        wd = pipeline_dir / "wd"
        with open(wd / "manifest.jsonl") as f:
            records = [json.loads(line) for line in f if line.strip()]
        assert all(r["seed"] == 5 for r in records)
        assert (wd / "cluster_report.txt").read_text().startswith("seed: 5")
        assert (wd / "split_report.txt").read_text().startswith("seed: 5")

    def test_split_sizes_honour_config(self, pipeline_dir):
        wd = pipeline_dir / "wd"
        ids0 = (wd / "cluster_0.txt").read_text().splitlines()
        assert len(ids0) == 8
        b0 = (wd / "baseline_0.txt").read_text().splitlines()
        assert len(b0) == 20

    def test_sograph_writes_dot(self, pipeline_dir):
        assert run(pipeline_dir, "sograph", "--sample-id", "synth-000001") == 0
        out = pipeline_dir / "wd" / "sograph_synth-000001.dot"
        assert out.read_text().startswith("digraph")

    def test_sograph_unknown_sample_exits_1(self, pipeline_dir, capsys):
        assert run(pipeline_dir, "sograph", "--sample-id", "nope") == 1
        assert "not in corpus" in capsys.readouterr().err

    def test_report_lists_commands(self, pipeline_dir, capsys):
        assert run(pipeline_dir, "report") == 0
        out = capsys.readouterr().out
        assert "synth" in out and "motifs" in out
        assert (pipeline_dir / "wd" / "pipeline_report.txt").is_file()


@pytest.fixture(scope="module")
def runs(pipeline_dir):
    gold_path = pipeline_dir / "run_gold.jsonl"
    lead_path = pipeline_dir / "run_lead.jsonl"
    with open(pipeline_dir / "wd" / "synthetic.jsonl") as f, \
            open(gold_path, "w") as g, open(lead_path, "w") as l:
        for line in f:
            rec = json.loads(line)
            def text(sent):
                return " ".join(t["form"] for t in sent)
            g.write(json.dumps({
                "id": rec["id"],
                "sentences": [text(s) for s in rec["summary"]]}) + "\n")
            l.write(json.dumps({
                "id": rec["id"],
                "sentences": [text(rec["article"][0])]}) + "\n")
    return gold_path, lead_path


class TestEval:
    def test_eval_two_runs_adds_combined(self, pipeline_dir, runs, capsys):
        gold_path, lead_path = runs
        code = run(pipeline_dir, "eval",
                   "--run", f"gold={gold_path}", "--run", f"lead={lead_path}")
        assert code == 0
        out = capsys.readouterr().out
        assert "cluster_best" in out
        data = json.loads(
            (pipeline_dir / "wd" / "eval_report.json").read_text())
        assert [d["system"] for d in data] == ["gold", "lead", "cluster_best"]
        assert data[0]["rouge2"] == 1.0

    def test_eval_report_scales_by_100(self, pipeline_dir):
        text = (pipeline_dir / "wd" / "eval_report.txt").read_text()
        assert text.startswith("seed: 5")
        assert "100.00" in text

    def test_bad_run_spec_exits_1(self, pipeline_dir, capsys):
        assert run(pipeline_dir, "eval", "--run", "missing-equals") == 1
        assert "NAME=PATH" in capsys.readouterr().err


class TestPrerequisites:
    def test_train_without_graphs(self, tmp_path, capsys):
        assert main(["--workdir", str(tmp_path), "train"]) == 1
        assert "run graphs first" in capsys.readouterr().err

    def test_cluster_without_embed(self, tmp_path, capsys):
        assert main(["--workdir", str(tmp_path), "cluster"]) == 1
        assert "run embed first" in capsys.readouterr().err

    def test_graphs_without_corpus(self, tmp_path, capsys):
        assert main(["--workdir", str(tmp_path), "graphs"]) == 1
        assert "run synth first" in capsys.readouterr().err

    def test_no_workdir_anywhere(self, monkeypatch, capsys):
        monkeypatch.delenv("STYLECLUSTER_WORKDIR", raising=False)
        assert main(["synth"]) == 1
        assert "--workdir" in capsys.readouterr().err

    def test_env_var_supplies_workdir(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("STYLECLUSTER_WORKDIR", str(tmp_path))
        assert main(["graphs"]) == 1
        # got far enough to look for a corpus inside the env-provided workdir
        assert "run synth first" in capsys.readouterr().err


class TestValidateCommand:
    def test_rejects_counted_and_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        good = ('{"id":"a","article":[[{"form":"x","upos":"VERB","head":0,'
                '"deprel":"root"}]],"summary":[[{"form":"x","upos":"VERB",'
                '"head":0,"deprel":"root"}]]}')
        bad.write_text(good + "\n" + "not json\n")
        assert main(["validate", str(bad)]) == 1
        out = capsys.readouterr().out
        assert "1 accepted, 1 rejected" in out

    def test_duplicate_id_is_hard_failure(self, tmp_path, capsys):
        p = tmp_path / "dup.jsonl"
        rec = ('{"id":"a","article":[[{"form":"x","upos":"VERB","head":0,'
               '"deprel":"root"}]],"summary":[[{"form":"x","upos":"VERB",'
               '"head":0,"deprel":"root"}]]}')
        p.write_text(rec + "\n" + rec + "\n")
        assert main(["validate", str(p)]) == 1
        assert "duplicate" in capsys.readouterr().err


class TestSeedAndVersioning:
    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"version": 1, "seed": 1,
                                   "synth": {"n_samples": 5}}))
        wd = tmp_path / "wd"
        assert main(["--config", str(cfg), "--workdir", str(wd),
                     "--seed", "42", "synth"]) == 0
        with open(wd / "manifest.jsonl") as f:
            rec = json.loads(f.readline())
        assert rec["seed"] == 42

    def test_second_synth_versions_artifacts(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"version": 1, "synth": {"n_samples": 5}}))
        wd = tmp_path / "wd"
        base = ["--config", str(cfg), "--workdir", str(wd)]
        assert main(base + ["synth"]) == 0
        assert main(base + ["synth"]) == 0
        assert (wd / "synthetic.jsonl").is_file()
        assert (wd / "synthetic.v2.jsonl").is_file()
        # first write untouched by the second
        assert (wd / "synthetic.jsonl").read_text() == \
            (wd / "synthetic.v2.jsonl").read_text()

    def test_same_seed_reruns_are_byte_identical(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "version": 1, "seed": 3,
            "synth": {"n_samples": 30},
            "train": {"hidden_dim": 8, "batch_size": 16, "epochs": 1},
        }))
        outs = []
        for sub in ("a", "b"):
            wd = tmp_path / sub
            base = ["--config", str(cfg), "--workdir", str(wd)]
            for cmd in ("synth", "graphs", "train", "embed"):
                assert main(base + [cmd]) == 0
            outs.append(wd)
        for name in ("synthetic.jsonl", "triplets.jsonl", "embeddings.sse",
                     "manifest.jsonl"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_stale_triplets_detected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "version": 1, "synth": {"n_samples": 10},
            "train": {"hidden_dim": 8, "batch_size": 8, "epochs": 1},
        }))
        wd = tmp_path / "wd"
        base = ["--config", str(cfg), "--workdir", str(wd)]
        assert main(base + ["synth"]) == 0
        assert main(base + ["graphs"]) == 0
        # a different seed invalidates the stored triple picks
        assert main(base + ["--seed", "99", "train"]) == 1
        assert "run graphs first" in capsys.readouterr().err


class TestInternalErrors:
    def test_unexpected_exception_exits_2(self, tmp_path, monkeypatch, capsys):
        from stylecluster import cli as cli_mod

        def boom(ctx):
            raise RuntimeError("wires crossed")

        monkeypatch.setitem(cli_mod.COMMANDS, "synth", boom)
        assert main(["--workdir", str(tmp_path), "synth"]) == 2
        assert "wires crossed" in capsys.readouterr().err
