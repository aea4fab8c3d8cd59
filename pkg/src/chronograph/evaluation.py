"""Scoring and the QA evaluation harness.

Answers are scored with token-level ROUGE-L (F1, max over references),
embedding cosine similarity (max over references), and an LLM judge that
must answer exactly [Correct] or [Wrong].  Questions containing a temporal
keyword (when/while/during/after/before, whole word) form the Time subset
reported next to the whole-set aggregates.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .builder import build_document, load_build, save_build
from .config import GatewaySet, RunConfig
from .errors import ChronographError, ConfigurationError, DatasetError
from .gateway import ChatRequest, Gateway
from .prompts import render_prompt
from .retrieval import RetrievalEngine
from .tokenizers import DEFAULT_TOKENIZER

logger = logging.getLogger(__name__)

TIME_KEYWORDS = ("When", "While", "During", "After", "Before")

_TIME_RE = re.compile(r"\b(?:when|while|during|after|before)\b", re.IGNORECASE)
_TIME_RE_STRICT = re.compile(r"\b(?:When|While|During|After|Before)\b")

JUDGE_OUTCOMES = ("correct", "wrong", "unparsed")


@dataclass
class QARecord:
    question: str
    gold_answers: list[str]
    document_id: str
    aux: dict = field(default_factory=dict)


def is_time_question(question: str, case_sensitive: bool = False) -> bool:
    """True iff the question contains a temporal keyword as a whole word."""
    pattern = _TIME_RE_STRICT if case_sensitive else _TIME_RE
    return pattern.search(question) is not None


def _tokens(text: str) -> list[str]:
    return [t.lower() for t in DEFAULT_TOKENIZER.tokenize(text)]


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, single-row dynamic program."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    row = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = row[j]
            if x == y:
                row[j] = prev_diag + 1
            elif row[j - 1] > row[j]:
                row[j] = row[j - 1]
            prev_diag = prev_row
    return row[len(b)]


def rouge_l(candidate: str, references: list[str]) -> float:
    """Token-level ROUGE-L F-measure (beta = 1), maximum over references."""
    cand = _tokens(candidate)
    best = 0.0
    for reference in references:
        ref = _tokens(reference)
        if not cand and not ref:
            score = 1.0
        elif not cand or not ref:
            score = 0.0
        else:
            lcs = lcs_length(cand, ref)
            if lcs == 0:
                score = 0.0
            else:
                precision = lcs / len(cand)
                recall = lcs / len(ref)
                score = 2 * precision * recall / (precision + recall)
        best = max(best, score)
    return best


def cosine_metric(candidate: str, references: list[str], gateway: Gateway) -> float:
    """Cosine of the unit embeddings, maximum over references."""
    vectors = gateway.embed([candidate, *references])
    cand = vectors[0]
    return float(max(cand @ ref for ref in vectors[1:]))


def render_gold(gold_answers: list[str]) -> str:
    return gold_answers[0] if len(gold_answers) == 1 else json.dumps(gold_answers)


def llm_judge(record: QARecord, model_answer: str, gateway: Gateway,
              template: str = "narrative", max_output_tokens: int = 8) -> str:
    """Ask the judge model for [Correct]/[Wrong]; first occurrence wins,
    anything else is 'unparsed' (counted, never dropped)."""
    slots = {
        "question": record.question,
        "gold_answer": render_gold(record.gold_answers),
        "model_answer": model_answer,
    }
    if template == "narrative":
        slots["summary"] = record.aux.get("summary", "")
        template_id = "judge_narrative"
    elif template == "guten":
        slots["context"] = record.aux.get("gold_passage", "")
        template_id = "judge_guten"
    else:
        raise ConfigurationError(f"unknown judge template {template!r}")
    system, user = render_prompt(template_id, slots)
    completion = gateway.chat(ChatRequest(system, user, max_output_tokens))
    correct_at = completion.find("[Correct]")
    wrong_at = completion.find("[Wrong]")
    if correct_at == -1 and wrong_at == -1:
        return "unparsed"
    if wrong_at == -1 or (correct_at != -1 and correct_at < wrong_at):
        return "correct"
    return "wrong"


def ingest_dataset(path: str | Path, format: str = "qa_jsonl") -> list[QARecord]:
    """Read a line-delimited JSON QA dataset, validating each line.

    Required fields: question (non-empty string), answers (non-empty list
    of strings), document_id (string).  Optional: aux (object).  Errors
    cite the offending line; duplicate questions are allowed and logged.
    """
    if format != "qa_jsonl":
        raise ConfigurationError(f"unknown dataset format {format!r}")
    records: list[QARecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: invalid JSON (line {line_no}): {exc}")
            if not isinstance(obj, dict):
                raise DatasetError(f"{path}: record is not an object (line {line_no})")
            question = obj.get("question")
            if not isinstance(question, str) or not question.strip():
                raise DatasetError(f"{path}: missing or empty question (line {line_no})")
            answers = obj.get("answers")
            if (
                not isinstance(answers, list)
                or not answers
                or not all(isinstance(a, str) for a in answers)
            ):
                raise DatasetError(
                    f"{path}: answers must be a non-empty list of strings (line {line_no})"
                )
            document_id = obj.get("document_id")
            if not isinstance(document_id, str) or not document_id:
                raise DatasetError(f"{path}: missing document_id (line {line_no})")
            aux = obj.get("aux", {})
            if not isinstance(aux, dict):
                raise DatasetError(f"{path}: aux must be an object (line {line_no})")
            if question in seen:
                logger.info("duplicate question at line %d: %r", line_no, question)
            seen.add(question)
            records.append(QARecord(question, list(answers), document_id, aux))
    return records


@dataclass
class QuestionScore:
    index: int
    question: str
    document_id: str
    is_time: bool
    answer: str = ""
    rouge_l: float | None = None
    cosine: float | None = None
    judge: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "question": self.question,
            "document_id": self.document_id,
            "is_time": self.is_time,
            "answer": self.answer,
            "rouge_l": self.rouge_l,
            "cosine": self.cosine,
            "judge": self.judge,
            "error": self.error,
        }


def _aggregate(rows: list[QuestionScore]) -> dict:
    scored = [r for r in rows if r.error is None]
    agg: dict = {"count": len(rows), "errors": len(rows) - len(scored)}
    rouges = [r.rouge_l for r in scored if r.rouge_l is not None]
    if rouges:
        agg["rouge_l"] = sum(rouges) / len(rouges)
    cosines = [r.cosine for r in scored if r.cosine is not None]
    if cosines:
        agg["cosine"] = sum(cosines) / len(cosines)
    judged = [r.judge for r in scored if r.judge is not None]
    if judged:
        agg["judge_counts"] = {o: judged.count(o) for o in JUDGE_OUTCOMES}
        agg["judge_accuracy"] = judged.count("correct") / len(judged)
    return agg


@dataclass
class ScoreReport:
    per_question: list[QuestionScore]
    aggregates: dict
    run_config: dict = field(default_factory=dict)

    @property
    def error_rate(self) -> float:
        if not self.per_question:
            return 0.0
        errored = sum(1 for r in self.per_question if r.error is not None)
        return errored / len(self.per_question)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({
                "kind": "report_header",
                "aggregates": self.aggregates,
                "run_config": self.run_config,
            }, ensure_ascii=False) + "\n")
            for row in self.per_question:
                fh.write(json.dumps({"kind": "question", **row.to_dict()},
                                    ensure_ascii=False) + "\n")

    def summary_table(self) -> str:
        def cell(subset: str, key: str) -> str:
            value = self.aggregates.get(subset, {}).get(key)
            return f"{value:.3f}" if isinstance(value, float) else "-"

        whole, time = self.aggregates.get("whole", {}), self.aggregates.get("time", {})
        headers = ["Metric", "Whole Data", "Time Question"]
        rows = [
            ["Questions", str(whole.get("count", 0)), str(time.get("count", 0))],
            ["ROUGE-L", cell("whole", "rouge_l"), cell("time", "rouge_l")],
            ["CosineSim", cell("whole", "cosine"), cell("time", "cosine")],
        ]
        if "judge_accuracy" in whole or "judge_accuracy" in time:
            rows.append(["LLM Eval (ACC)", cell("whole", "judge_accuracy"),
                         cell("time", "judge_accuracy")])
        rows.append(["Errors", str(whole.get("errors", 0)), str(time.get("errors", 0))])
        widths = [max(len(r[i]) for r in [headers, *rows]) for i in range(3)]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        lines = [fmt.format(*headers), fmt.format(*["-" * w for w in widths])]
        lines += [fmt.format(*row) for row in rows]
        return "\n".join(lines)


def run_eval(dataset: list[QARecord], graph_dir: str | Path, cfg: RunConfig,
             gateways: GatewaySet, corpus_dir: str | Path | None = None) -> ScoreReport:
    """Answer and score every question; failures are recorded per question
    and the run continues.  Graphs load from ``graph_dir`` and are built on
    demand when ``corpus_dir`` holds the document source."""
    engines: dict[str, RetrievalEngine] = {}
    engine_errors: dict[str, str] = {}
    lock = threading.Lock()

    def engine_for(document_id: str) -> RetrievalEngine:
        with lock:
            if document_id in engine_errors:
                raise ChronographError(engine_errors[document_id])
            if document_id not in engines:
                try:
                    try:
                        graph, index = load_build(graph_dir, document_id)
                    except FileNotFoundError:
                        graph, index = _build_on_demand(
                            document_id, graph_dir, cfg, corpus_dir
                        )
                    engines[document_id] = RetrievalEngine(
                        graph, index, gateways.embedder, gateways.reader
                    )
                except ChronographError as exc:
                    engine_errors[document_id] = str(exc)
                    raise
            return engines[document_id]

    rcfg = cfg.retrieval()
    rows: list[QuestionScore | None] = [None] * len(dataset)

    def score_one(idx: int) -> None:
        record = dataset[idx]
        row = QuestionScore(
            index=idx,
            question=record.question,
            document_id=record.document_id,
            is_time=is_time_question(record.question, cfg.time_filter_case_sensitive),
        )
        try:
            engine = engine_for(record.document_id)
            answer = engine.answer(record.question, rcfg)
            row.answer = answer
            row.rouge_l = rouge_l(answer, record.gold_answers)
            if cfg.use_cosine:
                row.cosine = cosine_metric(answer, record.gold_answers, gateways.embedder)
            if cfg.use_judge:
                row.judge = llm_judge(
                    record, answer, gateways.judge,
                    template=cfg.judge_template,
                    max_output_tokens=cfg.judge_max_tokens,
                )
        except ChronographError as exc:
            logger.error("question %d failed: %s", idx, exc)
            row.error = str(exc)
        rows[idx] = row

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        list(pool.map(score_one, range(len(dataset))))

    final = [r for r in rows if r is not None]
    aggregates = {
        "whole": _aggregate(final),
        "time": _aggregate([r for r in final if r.is_time]),
    }
    return ScoreReport(per_question=final, aggregates=aggregates,
                       run_config=cfg.to_dict())


def _build_on_demand(document_id: str, graph_dir, cfg: RunConfig, corpus_dir):
    if corpus_dir is None:
        raise ChronographError(
            f"no graph for document {document_id!r} in {graph_dir} "
            "and no corpus directory to build from"
        )
    source = Path(corpus_dir) / f"{document_id}.txt"
    if not source.exists():
        raise ChronographError(
            f"no graph for document {document_id!r} and no source at {source}"
        )
    logger.info("building graph on demand for %s", document_id)
    result = build_document(document_id, source.read_text(encoding="utf-8"),
                            cfg, cfg.gateways())
    save_build(result, graph_dir)
    return result.graph, result.index
