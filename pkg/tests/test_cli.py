import json

import pytest

from chronograph.cli import main

from conftest import synthetic_novella


@pytest.fixture
def corpus(tmp_path):
    corpus_dir = tmp_path / "corpus"
    corpus_dir.mkdir()
    (corpus_dir / "novella.txt").write_text(
        synthetic_novella(seed=9, target_tokens=1200), encoding="utf-8"
    )
    return corpus_dir


def build_args(tmp_path, corpus, extra=()):
    return [
        "build", str(corpus), "--out", str(tmp_path / "graphs"),
        "--cache-dir", str(tmp_path / "cache"),
        "--chunk-tokens", "40", "--cluster-size", "4",
        *extra,
    ]


@pytest.fixture
def built(tmp_path, corpus):
    assert main(build_args(tmp_path, corpus)) == 0
    return tmp_path / "graphs"


class TestBuild:
    def test_build_succeeds_and_writes_artifacts(self, tmp_path, corpus, capsys):
        assert main(build_args(tmp_path, corpus)) == 0
        out = capsys.readouterr().out
        assert "novella:" in out and "LLM calls" in out
        doc_dir = tmp_path / "graphs" / "novella"
        assert (doc_dir / "graph.jsonl").exists()
        assert (doc_dir / "vectors.jsonl").exists()
        log = [json.loads(l) for l in (doc_dir / "build_log.jsonl").read_text().splitlines()]
        stats = log[0]
        assert stats["llm_calls"] == 2 * stats["clusters"]

    def test_rerun_uses_cache(self, tmp_path, corpus, built):
        assert main(build_args(tmp_path, corpus)) == 0
        log = [json.loads(l) for l in
               (built / "novella" / "build_log.jsonl").read_text().splitlines()]
        assert log[0]["llm_calls"] == 0
        assert log[0]["embed_calls"] == 0

    def test_missing_corpus_dir_is_data_error(self, tmp_path):
        assert main(["build", str(tmp_path / "nope"), "--out", str(tmp_path / "g")]) == 2

    def test_empty_corpus_dir_is_data_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["build", str(empty), "--out", str(tmp_path / "g")]) == 2


class TestQuery:
    def test_deterministic_answer(self, tmp_path, built, capsys):
        args = ["query", str(built), "Who rode to Ashford?",
                "--cache-dir", str(tmp_path / "cache")]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        second = capsys.readouterr().out
        assert first == second
        assert first.strip()

    def test_show_context_and_trace(self, tmp_path, built, capsys):
        trace_path = tmp_path / "trace.jsonl"
        args = [
            "query", str(built), "Who rode to Ashford?", "--show-context",
            "--trace", str(trace_path), "--cache-dir", str(tmp_path / "cache"),
        ]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "\n\n" in out  # context block precedes the answer
        lines = [json.loads(l) for l in trace_path.read_text().splitlines()]
        assert lines[0]["kind"] == "trace_header"
        assert lines[0]["run_config"]["chunk_tokens"] == 40
        assert any(l["kind"] == "anchor" for l in lines)

    def test_mode_changes_context(self, tmp_path, built, capsys):
        base = ["query", str(built), "Who rode to Ashford?", "--show-context",
                "--cache-dir", str(tmp_path / "cache")]
        assert main(base) == 0
        full = capsys.readouterr().out
        assert main(base + ["--mode", "no_assemble"]) == 0
        bare = capsys.readouterr().out
        assert full != bare

    def test_unknown_graph_dir(self, tmp_path):
        assert main(["query", str(tmp_path / "missing"), "Q?"]) == 2


class TestEval:
    def write_dataset(self, tmp_path, rows):
        path = tmp_path / "qa.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        return path

    def good_rows(self, n=6):
        questions = [
            "When does Alric ride to Brookmere?",
            "Who wrote letters near Caldwell?",
            "What happened after the argument?",
            "Who rescued Brenna?",
            "Where did Edwin go?",
            "Who warned Garrick?",
        ]
        return [
            {"question": q, "answers": ["Alric", "a rider"], "document_id": "novella",
             "aux": {"summary": "A story of riders."}}
            for q in questions[:n]
        ]

    def test_eval_prints_table_and_writes_reports(self, tmp_path, built, capsys):
        dataset = self.write_dataset(tmp_path, self.good_rows())
        report_dir = tmp_path / "reports"
        args = ["eval", str(dataset), str(built), "--report-dir", str(report_dir),
                "--cache-dir", str(tmp_path / "cache")]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "Whole Data" in out and "Time Question" in out
        assert "LLM Eval (ACC)" in out
        header = json.loads((report_dir / "report.jsonl").read_text().splitlines()[0])
        assert header["kind"] == "report_header"
        assert header["run_config"]["chunk_tokens"] == 40
        assert (report_dir / "report.txt").exists()

    def test_no_judge_omits_column(self, tmp_path, built, capsys):
        dataset = self.write_dataset(tmp_path, self.good_rows())
        args = ["eval", str(dataset), str(built), "--no-judge",
                "--report-dir", str(tmp_path / "r2"),
                "--cache-dir", str(tmp_path / "cache")]
        assert main(args) == 0
        assert "LLM Eval" not in capsys.readouterr().out

    def test_error_rate_above_threshold_fails(self, tmp_path, built, capsys):
        rows = self.good_rows() + [
            {"question": "Poisoned?", "answers": ["x"], "document_id": "no-such-doc"}
        ]
        dataset = self.write_dataset(tmp_path, rows)
        args = ["eval", str(dataset), str(built), "--report-dir", str(tmp_path / "r3"),
                "--cache-dir", str(tmp_path / "cache")]
        assert main(args) == 2

    def test_bad_dataset_line_cited(self, tmp_path, built, capsys):
        path = tmp_path / "qa.jsonl"
        path.write_text('{"question": "Q?", "document_id": "novella"}\n')
        args = ["eval", str(path), str(built)]
        assert main(args) == 2
        assert "line 1" in capsys.readouterr().err


class TestInspect:
    def test_stats(self, built, capsys):
        assert main(["inspect", str(built), "--stats"]) == 0
        out = capsys.readouterr().out
        assert "layer0_nodes" in out and "layer1_nodes" in out

    def test_node_dump(self, built, capsys):
        assert main(["inspect", str(built), "--node", "L1:0", "--json"]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["layer"] == 1
        assert "neighbors" in info and "chunks" in info

    def test_layer0_dump(self, built, capsys):
        assert main(["inspect", str(built), "--node", "L0:0"]) == 0
        assert "cluster_index" in capsys.readouterr().out

    def test_bad_selector_is_usage_error(self, built, capsys):
        assert main(["inspect", str(built), "--node", "X9"]) == 1

    def test_unknown_node_is_data_error(self, built):
        assert main(["inspect", str(built), "--node", "L1:9999"]) == 2


class TestExitCodes:
    def test_missing_subcommand_is_usage(self, capsys):
        assert main([]) == 1

    def test_unknown_flag_is_usage(self, capsys):
        assert main(["build", "x", "--out", "y", "--bogus"]) == 1

    def test_provider_error_maps_to_3(self, tmp_path, corpus, monkeypatch):
        # An unreachable HTTP endpoint with no retries fails fast as provider error.
        args = build_args(tmp_path, corpus, extra=[
            "--summarizer-url", "http://127.0.0.1:1",
        ])
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "providers": {"summarizer": {
                "base_url": "http://127.0.0.1:1", "max_retries": 0,
                "retry_base_delay": 0.0, "timeout": 0.2,
            }}
        }))
        args = ["build", str(corpus), "--out", str(tmp_path / "g"),
                "--config", str(cfg_file), "--chunk-tokens", "40"]
        assert main(args) == 3

    def test_bad_config_file_is_usage_error(self, tmp_path, corpus):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["build", str(corpus), "--out", str(tmp_path / "g"),
                     "--config", str(bad)]) == 1

    def test_unknown_config_key_rejected(self, tmp_path, corpus):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"chunk_size": 5}))
        assert main(["build", str(corpus), "--out", str(tmp_path / "g"),
                     "--config", str(bad)]) == 1


class TestConfigPrecedence:
    def test_flags_beat_file_beat_defaults(self, tmp_path, corpus):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"chunk_tokens": 60, "cluster_size": 5}))
        args = ["build", str(corpus), "--out", str(tmp_path / "graphs"),
                "--config", str(cfg_file), "--chunk-tokens", "45",
                "--cache-dir", str(tmp_path / "cache")]
        assert main(args) == 0
        meta_line = (tmp_path / "graphs" / "novella" / "graph.jsonl").read_text().splitlines()[0]
        metadata = json.loads(meta_line)["metadata"]
        assert metadata["chunk_tokens"] == 45       # flag wins
        assert metadata["cluster_size"] == 5        # file beats default
        assert metadata["run_config"]["top_k"] == 15  # default preserved
