"""Parser and grounding tests."""

from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from procex import corpus, parser
from procex.corpus import Token, Document
from procex.parser import (
    ParsedCluster,
    ParsedConstraint,
    ParsedMention,
    ParsedRelation,
    ground,
    ground_clusters,
    ground_relations,
    ground_report,
    parse,
)
from procex.prompt import render_gold

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="module")
def pet_schema():
    return corpus.load_schema("pet")


@pytest.fixture(scope="module")
def decon_schema():
    return corpus.load_schema("decon")


@pytest.fixture(scope="module")
def pet():
    return corpus.load_pet(DATA / "pet.jsonl")


def make_doc(words, doc_id="t"):
    tokens = tuple(Token(w, i, 0) for i, w in enumerate(words))
    return Document(id=doc_id, raw_text=" ".join(words), tokens=tokens,
                    mentions=(), entities=(), relations=(), constraints=())


# ---------------------------------------------------------------------------
# parse

def test_parse_valid_relation_line(pet_schema):
    report = parse("flow|register the claim|examine the claim", "RE", pet_schema)
    assert report.items == (
        ParsedRelation("flow", "register the claim", "examine the claim"),
    )
    assert report.error_count == 0 and report.ignored_line_count == 0


def test_parse_bad_field_count(pet_schema):
    report = parse("flow|register the claim", "RE", pet_schema)
    assert report.items == ()
    assert report.error_count == 1
    assert report.error_lines[0].reason == "bad field count"
    assert report.error_lines[0].line_number == 1


def test_parse_fact_section_then_items_then_unknown(pet_schema):
    raw = "\n".join([
        "Facts:",
        "- the clerk handles the order",
        "- nothing else happens",
        "",
        "activity|registers",
        "actor|the clerk",
        "activity data|the order",
        "gateway_xyz|if",
    ])
    report = parse(raw, "MD", pet_schema)
    assert len(report.items) == 3
    assert report.error_count == 1
    assert report.error_lines[0].reason == "unknown type"
    assert report.ignored_line_count == 4
    total = len(raw.splitlines())
    assert len(report.items) + report.error_count + report.ignored_line_count == total


def test_parse_type_canonicalization(pet_schema):
    report = parse("ACTIVITY_DATA|the file", "MD", pet_schema)
    assert report.items == (ParsedMention("Activity Data", "the file"),)
    report = parse("Actor_Performer|registers|the clerk", "RE", pet_schema)
    assert report.items[0].relation_type == "actor performer"


def test_parse_er_lines(pet_schema):
    report = parse("entity|the clerk|he\ncluster|a|b\nentity|alone", "ER", pet_schema)
    assert report.items == (
        ParsedCluster(("the clerk", "he")),
        ParsedCluster(("alone",)),
    )
    assert report.error_count == 1
    assert report.error_lines[0].reason == "unknown type"


def test_parse_er_empty_member(pet_schema):
    report = parse("entity|the clerk|", "ER", pet_schema)
    assert report.items == ()
    assert report.error_lines[0].reason == "empty field"


def test_parse_ce_lines(decon_schema):
    raw = "\n".join([
        "precedence||receive payment|ship order",
        "response|not|issue refund|charge card",
        "init||open case",
        "init||open case|close case",
        "precedence||only one",
        "precedence|maybe|a|b",
        "precedence||a|",
        "frobnicate||a|b",
    ])
    report = parse(raw, "CE", decon_schema)
    assert report.items == (
        ParsedConstraint("precedence", False, ("receive payment", "ship order")),
        ParsedConstraint("response", True, ("issue refund", "charge card")),
        ParsedConstraint("init", False, ("open case",)),
    )
    reasons = [e.reason for e in report.error_lines]
    assert reasons == [
        "bad field count",
        "bad field count",
        "bad negation flag",
        "empty field",
        "unknown type",
    ]


def test_parse_preamble_ignored_when_items_exist(pet_schema):
    raw = "Sure, here are the mentions you asked for.\n\nactivity|registers"
    report = parse(raw, "MD", pet_schema)
    assert len(report.items) == 1
    assert report.error_count == 0
    assert report.ignored_line_count == 2


def test_parse_no_conforming_line_all_errors(pet_schema):
    raw = "I could not find any process elements.\nSorry about that."
    report = parse(raw, "MD", pet_schema)
    assert report.items == ()
    assert report.error_count == 2


def test_parse_reflection_section_ignored(pet_schema):
    raw = "activity|registers\nReflection:\nI am fairly confident overall."
    report = parse(raw, "MD", pet_schema)
    assert len(report.items) == 1
    assert report.error_count == 0
    assert report.ignored_line_count == 2


def test_parse_empty_string(pet_schema):
    report = parse("", "MD", pet_schema)
    assert report.items == () and report.error_count == 0
    assert report.ignored_line_count == 0


@given(st.text(max_size=400))
def test_parse_total_and_accounting(raw):
    schema = corpus.load_schema("pet")
    for task in ("MD", "ER", "RE", "CE"):
        report = parse(raw, task, schema)
        total = len(raw.splitlines())
        assert len(report.items) + report.error_count + report.ignored_line_count == total
        assert report.error_count == len(report.error_lines)


# ---------------------------------------------------------------------------
# ground

def test_ground_case_fold_match():
    doc = make_doc(["A", "claims", "officer", "registers", "."])
    used = set()
    hit = ground(ParsedMention("Actor", "a claims officer"), doc, used)
    assert hit.token_indices == (0, 1, 2)
    assert hit.matched_surface == "A claims officer"
    assert used == {(0, 1, 2)}


def test_ground_repeated_surface_uses_next_window():
    doc = make_doc(["he", "pays", "then", "he", "leaves"])
    used = set()
    first = ground(ParsedMention("Actor", "he"), doc, used)
    second = ground(ParsedMention("Actor", "he"), doc, used)
    assert first.token_indices == (0,)
    assert second.token_indices == (3,)
    third = ground(ParsedMention("Actor", "he"), doc, used)
    assert third is None


def test_ground_absent_surface():
    doc = make_doc(["nothing", "relevant", "here"])
    assert ground(ParsedMention("Activity", "approves the claim"), doc, set()) is None


def test_ground_strips_edge_punctuation():
    doc = make_doc(["sent", "back", "."])
    hit = ground(ParsedMention("Activity", "sent back."), doc, set())
    assert hit.token_indices == (0, 1)


def test_ground_rejects_punctuation_edges():
    doc = make_doc(["checks", ",", "then", "files"])
    hit = ground(ParsedMention("Activity", "checks ,"), doc, set())
    assert hit.token_indices == (0,)


def test_ground_never_overlaps_used():
    doc = make_doc(["the", "claim", "is", "valid"])
    used = {(1, 2)}
    hit = ground(ParsedMention("X", "the claim"), doc, used)
    assert hit is None  # only window overlaps a used span


def test_ground_report_partition(pet, pet_schema):
    doc = pet.document("doc-1.1")
    raw = "activity|receives\nactivity|does not exist"
    grounded, ungrounded = ground_report(parse(raw, "MD", pet_schema), doc)
    assert len(grounded) == 1 and len(ungrounded) == 1
    assert ungrounded[0].surface == "does not exist"


# ---------------------------------------------------------------------------
# round-trip law over every shipped document

def all_datasets():
    yield corpus.load_pet(DATA / "pet.jsonl"), ("MD", "ER", "RE")
    yield corpus.load_canonical(DATA / "decon.jsonl"), ("MD", "CE")
    yield corpus.load_canonical(DATA / "atdp.jsonl"), ("MD", "CE")


def test_gold_round_trip_md():
    for ds, tasks in all_datasets():
        for doc in ds.documents:
            raw = "\n".join(render_gold(doc, "MD"))
            report = parse(raw, "MD", ds.schema)
            assert report.error_count == 0, (doc.id, report.error_lines)
            grounded, ungrounded = ground_report(report, doc)
            assert not ungrounded, (doc.id, ungrounded)
            got = {(g.mention_type, g.token_indices) for g in grounded}
            want = {(m.mention_type, m.token_indices) for m in doc.mentions}
            assert got == want, doc.id


def test_gold_round_trip_er():
    ds = corpus.load_pet(DATA / "pet.jsonl")
    for doc in ds.documents:
        raw = "\n".join(render_gold(doc, "ER"))
        report = parse(raw, "ER", ds.schema)
        assert report.error_count == 0, doc.id
        clusters, ungrounded = ground_clusters(report, doc)
        assert not ungrounded, doc.id
        got = {frozenset(g.token_indices for g in members) for members in clusters}
        mmap = doc.mention_map()
        clustered = {mid for e in doc.entities for mid in e.mention_ids}
        want = {
            frozenset(mmap[mid].token_indices for mid in e.mention_ids)
            for e in doc.entities
        }
        want |= {
            frozenset([m.token_indices]) for m in doc.mentions if m.id not in clustered
        }
        assert got == want, doc.id


def test_gold_round_trip_re():
    ds = corpus.load_pet(DATA / "pet.jsonl")
    for doc in ds.documents:
        raw = "\n".join(render_gold(doc, "RE"))
        report = parse(raw, "RE", ds.schema)
        assert report.error_count == 0, doc.id
        grounded = ground_relations(report, doc)
        assert all(g.source_indices and g.target_indices for g in grounded), doc.id
        got = {(g.relation_type, g.source_indices, g.target_indices) for g in grounded}
        mmap = doc.mention_map()
        want = {
            (
                r.relation_type,
                mmap[r.source_mention_id].token_indices,
                mmap[r.target_mention_id].token_indices,
            )
            for r in doc.relations
        }
        assert got == want, doc.id


def test_gold_round_trip_ce():
    for ds, tasks in all_datasets():
        if "CE" not in tasks:
            continue
        for doc in ds.documents:
            raw = "\n".join(render_gold(doc, "CE"))
            report = parse(raw, "CE", ds.schema)
            assert report.error_count == 0, doc.id
            got = {
                (i.constraint_type, i.negated, i.actions) for i in report.items
            }
            want = {
                (
                    c.constraint_type,
                    c.negated,
                    (c.first_action,) if c.second_action is None
                    else (c.first_action, c.second_action),
                )
                for c in doc.constraints
            }
            assert got == want, doc.id


def test_report_serialization_round_trip(pet_schema):
    raw = "activity|registers\nbroken line\nFacts:\nprose"
    report = parse(raw, "MD", pet_schema)
    record = parser.report_to_record(report)
    assert record["error_count"] == report.error_count
    assert record["items"][0] == {
        "kind": "mention", "type": "Activity", "surface": "registers",
    }
    assert record["error_lines"][0]["reason"] == "bad field count"
