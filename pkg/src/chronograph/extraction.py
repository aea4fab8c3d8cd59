"""Parse the delimited entity/relationship grammar out of LLM completions.

The extraction prompt asks for records of the form::

    ("entity"|<name>|<type>|<description>)
    ("relationship"|<source>|<target>|<description>|<strength>)

joined by ``&`` and terminated by ``<End>``.  Real completions drift, so the
parser is total: it scans for well-formed records anywhere in the text,
skips and logs malformed ones, and never raises.  Field content may contain
any character except the record delimiters ``(``, ``)`` and ``|``; keeping
``(`` out of record bodies guarantees that a malformed opening earlier in
the text can never swallow a later well-formed record.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
import re

from .errors import ChronographError
from .gateway import ChatRequest, Gateway
from .prompts import render_prompt
from .summarize import ClusterSummary

logger = logging.getLogger(__name__)

_RECORD_RE = re.compile(r'\(\s*"?(entity|relationship)"?\s*\|([^()]*)\)', re.IGNORECASE)


@dataclass
class EntityRecord:
    name: str
    entity_type: str
    description: str


@dataclass
class RelationRecord:
    source_entity: str
    target_entity: str
    description: str
    strength: float


@dataclass
class ExtractionResult:
    cluster_index: int
    entities: list[EntityRecord] = field(default_factory=list)
    relations: list[RelationRecord] = field(default_factory=list)
    parse_diagnostics: list[tuple[int, str]] = field(default_factory=list)


def parse_extraction(completion: str) -> ExtractionResult:
    """Recover every well-formed record from ``completion``.

    Relations keep their emission order (it becomes chronological index
    order downstream).  Malformed records are skipped with a diagnostic of
    (character position, message); a completion with content but no records
    yields one diagnostic.  Never raises.
    """
    result = ExtractionResult(cluster_index=-1)
    for match in _RECORD_RE.finditer(completion):
        tag = match.group(1).lower()
        fields = [f.strip() for f in match.group(2).split("|")]
        pos = match.start()
        if tag == "entity":
            if len(fields) != 3:
                result.parse_diagnostics.append(
                    (pos, f"entity record has {len(fields)} fields, expected 3")
                )
                continue
            name, entity_type, description = fields
            if not name:
                result.parse_diagnostics.append((pos, "entity record has empty name"))
                continue
            result.entities.append(EntityRecord(name, entity_type, description))
        else:
            if len(fields) != 4:
                result.parse_diagnostics.append(
                    (pos, f"relationship record has {len(fields)} fields, expected 4")
                )
                continue
            source, target, description, strength_text = fields
            if not source or not target or not description:
                result.parse_diagnostics.append(
                    (pos, "relationship record has an empty field")
                )
                continue
            try:
                strength = float(strength_text)
            except ValueError:
                result.parse_diagnostics.append(
                    (pos, f"relationship strength {strength_text!r} is not numeric")
                )
                continue
            result.relations.append(
                RelationRecord(source, target, description, strength)
            )
    if not result.entities and not result.relations and completion.strip():
        result.parse_diagnostics.append((0, "no well-formed records found"))
    return result


def serialize_extraction(result: ExtractionResult) -> str:
    """Emit records back in the delimited grammar; a parse fixed point."""
    lines = [
        f'("entity"|{e.name}|{e.entity_type}|{e.description})'
        for e in result.entities
    ]
    lines += [
        f'("relationship"|{r.source_entity}|{r.target_entity}|{r.description}'
        f"|{format(r.strength, 'g')})"
        for r in result.relations
    ]
    if not lines:
        return "<End>"
    return "\n& ".join(lines) + "\n<End>"


def relation_node_text(record: RelationRecord) -> str:
    """The retrieval-unit text for a relation: the description sentence alone."""
    return record.description.strip()


def extract_cluster(
    summary: ClusterSummary,
    gateway: Gateway,
    max_output_tokens: int = 2000,
) -> ExtractionResult:
    """Run the one-shot extraction prompt over one cluster summary."""
    if not summary.summary_text.strip():
        raise ChronographError(
            f"cluster {summary.cluster_index} has an empty summary"
        )
    system, user = render_prompt("extract", {"summary": summary.summary_text})
    completion = gateway.chat(ChatRequest(system, user, max_output_tokens))
    result = parse_extraction(completion)
    result.cluster_index = summary.cluster_index
    if not result.relations:
        logger.warning(
            "cluster %d produced no relations (%d diagnostics)",
            summary.cluster_index, len(result.parse_diagnostics),
        )
    for pos, message in result.parse_diagnostics:
        logger.debug("cluster %d parse: %s at %d", summary.cluster_index, message, pos)
    return result
