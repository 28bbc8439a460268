"""Parsing and grounding of model output.

The output grammar is pipe-delimited, one record per line. Parsing is
total: malformed input becomes error accounting, never an exception.
Grounding maps surface strings back to token spans of the source
document by scanning left to right for the first unused window whose
normalized text matches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .corpus import Document, SchemaDescriptor, normalize_phrase


@dataclass(frozen=True)
class ParsedMention:
    mention_type: str
    surface: str


@dataclass(frozen=True)
class ParsedCluster:
    surfaces: tuple


@dataclass(frozen=True)
class ParsedRelation:
    relation_type: str
    source_surface: str
    target_surface: str


@dataclass(frozen=True)
class ParsedConstraint:
    constraint_type: str
    negated: bool
    actions: tuple


@dataclass(frozen=True)
class ErrorLine:
    line_number: int
    raw: str
    reason: str


@dataclass(frozen=True)
class ParseReport:
    items: tuple
    error_lines: tuple
    ignored_line_count: int

    @property
    def error_count(self) -> int:
        return len(self.error_lines)


@dataclass(frozen=True)
class GroundedMention:
    mention_type: str
    token_indices: tuple
    matched_surface: str


@dataclass(frozen=True)
class GroundedRelation:
    relation_type: str
    source_indices: tuple | None
    source_surface: str
    target_indices: tuple | None
    target_surface: str


_HEADER = re.compile(r"[A-Za-z][^|]{0,59}:")

BAD_FIELD_COUNT = "bad field count"
UNKNOWN_TYPE = "unknown type"
EMPTY_FIELD = "empty field"
BAD_NEGATION = "bad negation flag"


def _try_parse(line: str, task: str, schema: SchemaDescriptor):
    """Return (item, None) when the line conforms, else (None, reason)."""
    fields = [f.strip() for f in line.split("|")]
    if task == "MD":
        if len(fields) != 2:
            return None, BAD_FIELD_COUNT
        mtype = schema.canonical_mention_type(fields[0])
        if mtype is None:
            return None, UNKNOWN_TYPE
        if not fields[1]:
            return None, EMPTY_FIELD
        return ParsedMention(mtype, fields[1]), None
    if task == "ER":
        if len(fields) < 2:
            return None, BAD_FIELD_COUNT
        if fields[0].casefold() != "entity":
            return None, UNKNOWN_TYPE
        if any(not f for f in fields[1:]):
            return None, EMPTY_FIELD
        return ParsedCluster(tuple(fields[1:])), None
    if task == "RE":
        if len(fields) != 3:
            return None, BAD_FIELD_COUNT
        rtype = schema.canonical_relation_type(fields[0])
        if rtype is None:
            return None, UNKNOWN_TYPE
        if not fields[1] or not fields[2]:
            return None, EMPTY_FIELD
        return ParsedRelation(rtype, fields[1], fields[2]), None
    if task == "CE":
        if len(fields) not in (3, 4):
            return None, BAD_FIELD_COUNT
        ctype = schema.canonical_constraint_type(fields[0])
        if ctype is None:
            return None, UNKNOWN_TYPE
        expected = 3 if schema.is_unary(ctype) else 4
        if len(fields) != expected:
            return None, BAD_FIELD_COUNT
        flag = fields[1].casefold()
        if flag not in ("", "not"):
            return None, BAD_NEGATION
        actions = fields[2:]
        if any(not a for a in actions):
            return None, EMPTY_FIELD
        return ParsedConstraint(ctype, flag == "not", tuple(actions)), None
    raise ValueError(f"unknown task {task!r}")


def parse(raw: str, task: str, schema: SchemaDescriptor) -> ParseReport:
    """Parse a raw model response into items, errors, and ignored lines.

    Blank lines, prose sections opened by header lines such as
    ``Facts:`` or ``Reflection:``, and any preamble before the first
    conforming line (when one exists) are ignored. Everything else
    either parses or is recorded as an error with a reason.
    """
    lines = raw.splitlines()
    attempts = [_try_parse(line, task, schema) for line in lines]
    any_conform = any(item is not None for item, _ in attempts)

    items: list = []
    errors: list = []
    ignored = 0
    in_prose = False
    seen_item = False
    for number, (line, (item, reason)) in enumerate(zip(lines, attempts), start=1):
        stripped = line.strip()
        if not stripped:
            ignored += 1
            continue
        if item is not None:
            items.append(item)
            in_prose = False
            seen_item = True
            continue
        if _HEADER.fullmatch(stripped):
            in_prose = True
            ignored += 1
            continue
        if in_prose or (not seen_item and any_conform):
            ignored += 1
            continue
        errors.append(ErrorLine(number, line, reason))
    return ParseReport(items=tuple(items), error_lines=tuple(errors),
                       ignored_line_count=ignored)


def _is_wordlike(text: str) -> bool:
    return any(ch.isalnum() for ch in text)


def ground(parsed: ParsedMention, doc: Document, used: set):
    """Ground one surface to the first unused matching token window."""
    target = normalize_phrase(parsed.surface)
    if not target:
        return None
    width = len(target.split())
    words = [t.text for t in doc.tokens]
    for start in range(len(words) - width + 1):
        window = words[start:start + width]
        if not _is_wordlike(window[0]) or not _is_wordlike(window[-1]):
            continue
        if normalize_phrase(" ".join(window)) != target:
            continue
        span = tuple(range(start, start + width))
        if any(set(span) & set(u) for u in used):
            continue
        used.add(span)
        return GroundedMention(
            mention_type=parsed.mention_type,
            token_indices=span,
            matched_surface=" ".join(window),
        )
    return None


def ground_report(report: ParseReport, doc: Document):
    """Ground every ParsedMention item with one shared used set."""
    used: set = set()
    grounded: list = []
    ungrounded: list = []
    for item in report.items:
        if not isinstance(item, ParsedMention):
            continue
        hit = ground(item, doc, used)
        if hit is None:
            ungrounded.append(item)
        else:
            grounded.append(hit)
    return grounded, ungrounded


def ground_clusters(report: ParseReport, doc: Document):
    """Ground ER clusters; all clusters share one used set."""
    used: set = set()
    clusters: list = []
    ungrounded: list = []
    for item in report.items:
        if not isinstance(item, ParsedCluster):
            continue
        members: list = []
        for surface in item.surfaces:
            hit = ground(ParsedMention("entity", surface), doc, used)
            if hit is None:
                ungrounded.append(surface)
            else:
                members.append(hit)
        clusters.append(tuple(members))
    return clusters, ungrounded


def ground_relations(report: ParseReport, doc: Document):
    """Ground RE endpoints; each relation gets a fresh used set."""
    out: list = []
    for item in report.items:
        if not isinstance(item, ParsedRelation):
            continue
        used: set = set()
        src = ground(ParsedMention("", item.source_surface), doc, used)
        tgt = ground(ParsedMention("", item.target_surface), doc, used)
        out.append(
            GroundedRelation(
                relation_type=item.relation_type,
                source_indices=None if src is None else src.token_indices,
                source_surface=item.source_surface,
                target_indices=None if tgt is None else tgt.token_indices,
                target_surface=item.target_surface,
            )
        )
    return out


def item_to_record(item) -> dict:
    if isinstance(item, ParsedMention):
        return {"kind": "mention", "type": item.mention_type, "surface": item.surface}
    if isinstance(item, ParsedCluster):
        return {"kind": "cluster", "surfaces": list(item.surfaces)}
    if isinstance(item, ParsedRelation):
        return {
            "kind": "relation",
            "type": item.relation_type,
            "source": item.source_surface,
            "target": item.target_surface,
        }
    if isinstance(item, ParsedConstraint):
        return {
            "kind": "constraint",
            "type": item.constraint_type,
            "negated": item.negated,
            "actions": list(item.actions),
        }
    raise TypeError(f"not a parsed item: {item!r}")


def item_from_record(record: dict):
    """Inverse of item_to_record, for reloading persisted predictions."""
    kind = record.get("kind")
    if kind == "mention":
        return ParsedMention(record["type"], record["surface"])
    if kind == "cluster":
        return ParsedCluster(tuple(record["surfaces"]))
    if kind == "relation":
        return ParsedRelation(record["type"], record["source"], record["target"])
    if kind == "constraint":
        return ParsedConstraint(
            record["type"], bool(record["negated"]), tuple(record["actions"])
        )
    raise ValueError(f"unknown item kind {kind!r}")


def report_to_record(report: ParseReport) -> dict:
    return {
        "items": [item_to_record(i) for i in report.items],
        "error_lines": [
            {"line": e.line_number, "raw": e.raw, "reason": e.reason}
            for e in report.error_lines
        ],
        "error_count": report.error_count,
        "ignored_line_count": report.ignored_line_count,
    }
