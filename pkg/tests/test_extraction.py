import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronograph.errors import ChronographError
from chronograph.extraction import (
    RelationRecord,
    extract_cluster,
    parse_extraction,
    relation_node_text,
    serialize_extraction,
)
from chronograph.summarize import ClusterSummary

from conftest import ScriptedChatProvider, make_gateway

# The one-shot example output exactly as the extraction prompt shows it.
VERDANTIS_OUTPUT = (
    '("entity"|CENTRAL INSTITUTION|ETC|The Central Institution is the Federal '
    "Reserve of Verdantis, setting interest rates on Monday and Thursday)\n"
    '& ("entity"|MARTIN SMITH|PERSON|Chair of the Central Institution)\n'
    '& ("entity"|MARKET STRATEGY COMMITTEE|ORGANIZATION|Committee making key '
    "decisions about interest rates)\n"
    '& ("relationship"|MARTIN SMITH|CENTRAL INSTITUTION|Chair will answer '
    "questions at a press conference|9)\n"
    "<End>"
)


class TestParse:
    def test_verdantis_golden(self):
        result = parse_extraction(VERDANTIS_OUTPUT)
        assert [e.name for e in result.entities] == [
            "CENTRAL INSTITUTION", "MARTIN SMITH", "MARKET STRATEGY COMMITTEE",
        ]
        assert [e.entity_type for e in result.entities] == ["ETC", "PERSON", "ORGANIZATION"]
        assert len(result.relations) == 1
        rel = result.relations[0]
        assert rel.source_entity == "MARTIN SMITH"
        assert rel.target_entity == "CENTRAL INSTITUTION"
        assert rel.strength == 9
        assert result.parse_diagnostics == []

    def test_empty_and_terminator_only(self):
        assert parse_extraction("").entities == []
        assert parse_extraction("").parse_diagnostics == []
        result = parse_extraction("<End>")
        assert result.entities == [] and result.relations == []
        assert len(result.parse_diagnostics) <= 1

    def test_malformed_records_skipped_with_diagnostics(self):
        completion = (
            'noise ("relationship"|A|B|they meet at dusk|3) more noise\n'
            '("relationship"|A|B) & ("relationship"|A|B|odd|strong) <End>'
        )
        result = parse_extraction(completion)
        assert len(result.relations) == 1
        assert result.relations[0].description == "they meet at dusk"
        assert len(result.parse_diagnostics) == 2
        positions = [p for p, _ in result.parse_diagnostics]
        assert positions == sorted(positions)

    def test_prose_tolerated(self):
        completion = (
            "Here are the results you asked for:\n"
            '("entity"|AVA|PERSON|a sailor) &\n'
            'Some commentary. ("relationship"|AVA|PORT|Ava sails home|2)\nDone! <End>'
        )
        result = parse_extraction(completion)
        assert len(result.entities) == 1
        assert len(result.relations) == 1

    def test_relation_order_preserved(self):
        completion = " ".join(
            f'("relationship"|S{i}|T{i}|event number {i}|{i})' for i in range(8)
        )
        result = parse_extraction(completion)
        assert [r.description for r in result.relations] == [
            f"event number {i}" for i in range(8)
        ]

    def test_unquoted_tag_and_case_tolerated(self):
        result = parse_extraction("(Entity|BO|PERSON|a guard) (RELATIONSHIP|BO|GATE|Bo guards the gate|4)")
        assert len(result.entities) == 1
        assert len(result.relations) == 1

    def test_float_strength(self):
        result = parse_extraction('("relationship"|A|B|close allies|7.5)')
        assert result.relations[0].strength == 7.5

    def test_never_raises_on_noise(self):
        rng = random.Random(99)
        alphabet = '()|"&<>End entity relationship \n\t0123456789abc'
        for _ in range(200):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 120)))
            parse_extraction(text)  # must not raise


class TestRoundTrip:
    def test_serialize_then_parse_is_fixed_point(self):
        first = parse_extraction(VERDANTIS_OUTPUT)
        second = parse_extraction(serialize_extraction(first))
        assert second.entities == first.entities
        assert second.relations == first.relations
        assert second.parse_diagnostics == []

    def test_empty_result_round_trip(self):
        result = parse_extraction("")
        assert serialize_extraction(result) == "<End>"


def _well_formed_records(rng: random.Random, n: int) -> list[str]:
    field_alphabet = "abcdefgh XYZ,.'-!?&<>;:0123456789"

    def field_text():
        text = "".join(rng.choice(field_alphabet) for _ in range(rng.randint(1, 18)))
        cleaned = text.strip()
        return cleaned if cleaned else "x"

    records = []
    for _ in range(n):
        if rng.random() < 0.5:
            records.append(f'("entity"|{field_text()}|{field_text()}|{field_text()})')
        else:
            strength = rng.choice(["1", "9", "3.5", "-2", "10"])
            records.append(
                f'("relationship"|{field_text()}|{field_text()}|{field_text()}|{strength})'
            )
    return records


def test_injected_records_always_recovered():
    rng = random.Random(4242)
    noise_alphabet = '()|"&<>End entity relationship \nqwerty'
    for _ in range(500):
        records = _well_formed_records(rng, rng.randint(0, 5))
        pieces = []
        for record in records:
            pieces.append("".join(rng.choice(noise_alphabet) for _ in range(rng.randint(0, 30))))
            pieces.append(record)
        pieces.append("".join(rng.choice(noise_alphabet) for _ in range(rng.randint(0, 30))))
        parsed = parse_extraction("".join(pieces))
        expected = parse_extraction("\n".join(records))
        assert parsed.entities == expected.entities
        assert len(parsed.relations) >= len(expected.relations)
        # Injected relations appear, in order, within the parse.
        texts = [r.description for r in parsed.relations]
        it = iter(texts)
        assert all(r.description in it for r in expected.relations)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=200))
def test_parser_total(text):
    result = parse_extraction(text)
    assert result.relations is not None and result.entities is not None


class TestExtractCluster:
    def summary(self, text="Alric warned Brenna at the mill."):
        return ClusterSummary(2, text, [20, 21], "mock-model")

    def test_passthrough_with_cluster_index(self):
        completion = (
            '("relationship"|ALRIC|BRENNA|Alric warns Brenna at the mill|8)\n<End>'
        )
        gw = make_gateway(provider=ScriptedChatProvider(lambda r: completion))
        result = extract_cluster(self.summary(), gw)
        assert result.cluster_index == 2
        assert len(result.relations) == 1

    def test_node_text_is_description_alone(self):
        record = RelationRecord("ALRIC", "BRENNA", "Alric warns Brenna at the mill", 8.0)
        assert relation_node_text(record) == "Alric warns Brenna at the mill"
        assert "(" not in relation_node_text(record)

    def test_empty_summary_rejected(self):
        gw = make_gateway(provider=ScriptedChatProvider(lambda r: ""))
        with pytest.raises(ChronographError):
            extract_cluster(self.summary("   "), gw)

    def test_zero_relations_flagged_not_fatal(self, caplog):
        gw = make_gateway(provider=ScriptedChatProvider(lambda r: "nothing here <End>"))
        with caplog.at_level("WARNING"):
            result = extract_cluster(self.summary(), gw)
        assert result.relations == []
        assert any("no relations" in m for m in caplog.messages)
