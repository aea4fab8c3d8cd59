"""Command-line interface: build graphs, run queries, evaluate, inspect.

Exit status contract: 0 success, 1 usage/configuration, 2 data, 3 provider.
Config precedence is flags > config file (--config, JSON) > defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .builder import GRAPH_FILE, build_document, document_dir, load_build, save_build
from .config import STAGES, RunConfig
from .errors import ChronographError, ConfigurationError, ProviderError, TemplateError
from .evaluation import ingest_dataset, run_eval
from .graph import load_graph
from .retrieval import RetrievalEngine, generate_answer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class UsageError(ConfigurationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_CONFIG_FLAGS = [
    ("--chunk-tokens", "chunk_tokens", int, "max tokens per chunk (default 100)"),
    ("--cluster-size", "cluster_size", int, "chunks per summarization cluster (default 10)"),
    ("--summary-max-tokens", "summary_max_tokens", int, "summary completion cap (default 2000)"),
    ("--extraction-max-tokens", "extraction_max_tokens", int, "extraction completion cap (default 2000)"),
    ("--top-k", "top_k", int, "retrieved anchors (default 15)"),
    ("--max-passages", "max_passages", int, "max admitted passages (default 20)"),
    ("--context-token-limit", "context_token_limit", int, "context token budget (default 1500)"),
    ("--link-window", "link_window", int, "ordinal neighbors per side (default 1)"),
    ("--answer-max-tokens", "answer_max_tokens", int, "reader completion cap (default 64)"),
    ("--judge-max-tokens", "judge_max_tokens", int, "judge completion cap (default 8)"),
    ("--workers", "workers", int, "concurrent documents/questions (default 2)"),
    ("--cache-dir", "cache_dir", str, "response cache directory"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    for flag, dest, typ, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)
    parser.add_argument("--mode", choices=["full", "no_assemble", "no_summary_graph", "naive_chunks"],
                        default=None, help="pipeline mode (default full)")
    parser.add_argument("--key-value", dest="key_value", choices=["separated", "merged"],
                        default=None, help="retrieval key variant (default separated)")
    parser.add_argument("--embed-chunks", dest="embed_chunks",
                        action=argparse.BooleanOptionalAction, default=None,
                        help="also embed layer-0 chunks at index time")
    for stage in STAGES:
        parser.add_argument(f"--{stage}-url", dest=f"{stage}_url", default=None,
                            help=f"{stage} provider base URL (mock:// for offline)")
        parser.add_argument(f"--{stage}-model", dest=f"{stage}_model", default=None,
                            help=f"{stage} model name")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for _, dest, _, _ in _CONFIG_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            setattr(cfg, dest, value)
    for dest in ("mode", "key_value", "embed_chunks"):
        value = getattr(args, dest, None)
        if value is not None:
            setattr(cfg, dest, value)
    for stage in STAGES:
        url = getattr(args, f"{stage}_url", None)
        model = getattr(args, f"{stage}_model", None)
        if url is not None:
            cfg.providers[stage].base_url = url
        if model is not None:
            cfg.providers[stage].model_name = model
    return cfg


def _resolve_document(graph_dir: Path, requested: str | None) -> str:
    if requested:
        return requested
    candidates = sorted(
        p.name for p in graph_dir.iterdir()
        if p.is_dir() and (p / GRAPH_FILE).exists()
    ) if graph_dir.is_dir() else []
    if len(candidates) == 1:
        return candidates[0]
    if not candidates:
        raise ChronographError(f"no graphs found under {graph_dir}")
    raise UsageError(
        f"multiple documents under {graph_dir}; pick one with --doc "
        f"({', '.join(candidates)})"
    )


def cmd_build(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise ChronographError(f"corpus directory not found: {corpus}")
    documents = sorted(corpus.glob("*.txt"))
    if not documents:
        raise ChronographError(f"no .txt documents in corpus directory {corpus}")
    out_dir = Path(args.out)

    def build_one(path: Path):
        gateways = cfg.gateways()  # fresh per document so call counts are per-document
        result = build_document(path.stem, path.read_text(encoding="utf-8"), cfg, gateways)
        save_build(result, out_dir)
        return result

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        for result in pool.map(build_one, documents):
            stats = result.stats
            print(
                f"{stats['document_id']}: {stats['chunks']} chunks, "
                f"{stats['clusters']} clusters, {stats['relations']} relations, "
                f"{stats['llm_calls']} LLM calls"
            )
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    graph_dir = Path(args.graph_dir)
    document_id = _resolve_document(graph_dir, args.doc)
    graph, index = load_build(graph_dir, document_id)
    gateways = cfg.gateways()
    engine = RetrievalEngine(graph, index, gateways.embedder, gateways.reader)
    rcfg = cfg.retrieval()
    context, trace = engine.run(args.question, rcfg)
    answer = generate_answer(context, args.question, gateways.reader, cfg.answer_max_tokens)
    if args.show_context:
        print(context.text)
        print()
    print(answer)
    if args.trace:
        trace.run_config = cfg.to_dict()
        trace.write(args.trace)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.no_judge:
        cfg.use_judge = False
    if args.no_cosine:
        cfg.use_cosine = False
    if args.judge_template:
        cfg.judge_template = args.judge_template
    dataset = ingest_dataset(args.dataset)
    report = run_eval(dataset, args.graph_dir, cfg, cfg.gateways(),
                      corpus_dir=args.corpus)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    report.write_jsonl(report_dir / "report.jsonl")
    table = report.summary_table()
    (report_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    if report.error_rate > 0.05:
        print(f"error rate {report.error_rate:.1%} exceeds 5%", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _parse_selector(selector: str) -> tuple[str, int]:
    try:
        layer, _, number = selector.partition(":")
        if layer.upper() not in ("L0", "L1"):
            raise ValueError
        return layer.upper(), int(number)
    except ValueError:
        raise UsageError(
            f"bad node selector {selector!r}; expected L0:<id> or L1:<id>"
        )


def cmd_inspect(args: argparse.Namespace) -> int:
    graph_dir = Path(args.graph_dir)
    document_id = _resolve_document(graph_dir, args.doc)
    graph = load_graph(document_dir(graph_dir, document_id) / GRAPH_FILE)

    if args.node:
        layer, node_id = _parse_selector(args.node)
        try:
            if layer == "L0":
                node = graph.layer0_node(node_id)
                info = {
                    "layer": 0, "node_id": node.node_id,
                    "cluster_index": node.cluster_index,
                    "token_count": node.token_count, "text": node.text,
                }
            else:
                node = graph.layer1_node(node_id)
                info = {
                    "layer": 1, "node_id": node.node_id,
                    "cluster_index": node.cluster_index,
                    "emission_rank": node.emission_rank,
                    "text": node.text,
                    "neighbors": graph.neighbors(node_id, args.window),
                    "chunks": [c.node_id for c in graph.chunks_of(node_id)],
                }
        except KeyError as exc:
            raise ChronographError(str(exc))
        if args.json:
            print(json.dumps(info, ensure_ascii=False, indent=2))
        else:
            for key, value in info.items():
                print(f"{key}: {value}")
        return EXIT_OK

    per_cluster: dict[int, int] = {}
    for node in graph.layer1:
        per_cluster[node.cluster_index] = per_cluster.get(node.cluster_index, 0) + 1
    stats = {
        "document_id": document_id,
        "layer0_nodes": len(graph.layer0),
        "layer1_nodes": len(graph.layer1),
        "down_edges": sum(len(v) for v in graph.down_edges.values()),
        "relations_per_cluster": {str(k): v for k, v in sorted(per_cluster.items())},
        "mode": graph.metadata.get("mode"),
        "content_hash": graph.content_hash(),
    }
    if args.json:
        print(json.dumps(stats, ensure_ascii=False, indent=2))
    else:
        for key, value in stats.items():
            print(f"{key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chronograph",
                     description="Narrative RAG over a two-layer chronological graph")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build graphs + indexes for a corpus directory")
    p_build.add_argument("corpus", help="directory of <document_id>.txt files")
    p_build.add_argument("--out", required=True, help="output graph directory")
    _add_config_flags(p_build)
    p_build.set_defaults(func=cmd_build)

    p_query = sub.add_parser("query", help="answer one question against a built graph")
    p_query.add_argument("graph_dir", help="graph directory from `build`")
    p_query.add_argument("question")
    p_query.add_argument("--doc", help="document id (needed when the dir holds several)")
    p_query.add_argument("--show-context", action="store_true",
                         help="print the assembled context before the answer")
    p_query.add_argument("--trace", help="write a retrieval trace (JSON lines) here")
    _add_config_flags(p_query)
    p_query.set_defaults(func=cmd_query)

    p_eval = sub.add_parser("eval", help="run a QA dataset and score the answers")
    p_eval.add_argument("dataset", help="qa_jsonl dataset file")
    p_eval.add_argument("graph_dir")
    p_eval.add_argument("--corpus", help="corpus directory for on-demand builds")
    p_eval.add_argument("--report-dir", default="reports")
    p_eval.add_argument("--no-judge", action="store_true", help="skip the LLM judge")
    p_eval.add_argument("--no-cosine", action="store_true", help="skip cosine scoring")
    p_eval.add_argument("--judge-template", choices=["narrative", "guten"], default=None)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_inspect = sub.add_parser("inspect", help="dump nodes, edges, and stats")
    p_inspect.add_argument("graph_dir")
    p_inspect.add_argument("--doc")
    p_inspect.add_argument("--node", help="node selector, e.g. L1:4 or L0:7")
    p_inspect.add_argument("--window", type=int, default=1)
    p_inspect.add_argument("--stats", action="store_true",
                           help="print graph statistics (default when no --node)")
    p_inspect.add_argument("--json", action="store_true")
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, TemplateError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ChronographError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
