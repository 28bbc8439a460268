"""Modular prompt assembly.

A prompt is a fixed-order sequence of toggleable components in three
blocks (context, task description, restrictions), followed by the
target text under an ``Input:`` delimiter. Component wording lives in
a plain-text template file with one named section per component;
schema-derived content is substituted into ``{placeholders}``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import Document, SchemaDescriptor, TASKS


class PromptError(ValueError):
    pass


class PromptComponentKind(enum.Enum):
    PERSONA = "Persona"
    CONTEXT_MANAGER = "ContextManager"
    META_LANGUAGE = "MetaLanguage"
    CHAIN_OF_THOUGHT = "ChainOfThought"
    FACT_LIST = "FactList"
    REFLECTION = "Reflection"
    ADDITIONAL_CONSIDERATIONS = "AdditionalConsiderations"
    DISAMBIGUATION = "Disambiguation"
    FORMAT_SPEC = "FormatSpec"
    FORMAT_EXAMPLE = "FormatExample"
    FEW_SHOT = "FewShot"


K = PromptComponentKind

# Block A: context, block B: task description, block C: restrictions.
COMPONENT_ORDER = (
    K.PERSONA,
    K.CONTEXT_MANAGER,
    K.META_LANGUAGE,
    K.CHAIN_OF_THOUGHT,
    K.FACT_LIST,
    K.REFLECTION,
    K.ADDITIONAL_CONSIDERATIONS,
    K.DISAMBIGUATION,
    K.FORMAT_SPEC,
    K.FORMAT_EXAMPLE,
    K.FEW_SHOT,
)

ALL_COMPONENTS = frozenset(COMPONENT_ORDER)

TASK_GOALS = {
    "MD": "finding every mention of a process element in the text",
    "ER": "grouping mentions that refer to the same process element",
    "RE": "extracting relations between process elements",
    "CE": "extracting the declarative constraints the text states",
}


@dataclass(frozen=True)
class PromptConfig:
    task: str
    schema: SchemaDescriptor
    enabled: frozenset = ALL_COMPONENTS
    shot_count: int = 0
    shot_seed: int = 0
    brevity: str = "full"

    def validate(self) -> None:
        if self.task not in TASKS:
            raise PromptError(f"unknown task {self.task!r}")
        if self.brevity not in ("full", "very_short"):
            raise PromptError(f"unknown brevity {self.brevity!r}")
        if self.shot_count < 0:
            raise PromptError("shot_count must be >= 0")
        if K.FORMAT_SPEC not in self.enabled:
            raise PromptError("FormatSpec can not be disabled")
        if self.shot_count > 0 and K.FEW_SHOT not in self.enabled:
            raise PromptError("shot_count > 0 requires the FewShot component")
        unknown = {k for k in self.enabled if not isinstance(k, PromptComponentKind)}
        if unknown:
            raise PromptError(f"unknown components: {unknown}")

    def replace(self, **changes) -> "PromptConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def to_record(self) -> dict:
        return {
            "task": self.task,
            "schema": self.schema.dataset_name,
            "enabled": sorted(k.value for k in self.enabled),
            "shot_count": self.shot_count,
            "shot_seed": self.shot_seed,
            "brevity": self.brevity,
        }


@dataclass(frozen=True)
class FewShotExample:
    source_document_id: str
    input_text: str
    expected_output_lines: tuple


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    component_spans: dict = field(compare=False)
    config_fingerprint: str = ""
    shot_ids: tuple = ()


def load_template(source: str | Path | None = None) -> dict:
    """Read a sectioned template file into {kind: text}."""
    if source is None:
        raw = (
            resources.files("procex")
            .joinpath("data", "templates", "default.txt")
            .read_text(encoding="utf-8")
        )
    else:
        raw = Path(source).read_text(encoding="utf-8")
    by_name = {k.value: k for k in PromptComponentKind}
    sections: dict = {}
    current = None
    buf: list[str] = []
    for line in raw.splitlines():
        m = re.fullmatch(r"\[([A-Za-z]+)\]", line.strip())
        if m:
            if current is not None:
                sections[current] = "\n".join(buf).strip()
            name = m.group(1)
            if name not in by_name:
                raise PromptError(f"unknown template section [{name}]")
            current = by_name[name]
            buf = []
        elif current is not None:
            buf.append(line)
    if current is not None:
        sections[current] = "\n".join(buf).strip()
    missing = ALL_COMPONENTS - set(sections)
    if missing:
        names = ", ".join(sorted(k.value for k in missing))
        raise PromptError(f"template is missing sections: {names}")
    return sections


def first_sentence(text: str) -> str:
    m = re.search(r"(?<=[.!?])\s", text)
    return text[: m.start()].strip() if m else text.strip()


def _type_definitions(config: PromptConfig) -> str:
    schema = config.schema
    short = config.brevity == "very_short"
    lines = []
    for name in schema.types_for_task(config.task):
        definition = schema.definitions[name]
        if short:
            definition = first_sentence(definition)
        lines.append(f"{name}: {definition}")
    return "\n".join(lines)


def _disambiguation_hints(config: PromptConfig) -> str:
    schema = config.schema
    short = config.brevity == "very_short"
    lines = []
    for name in schema.types_for_task(config.task):
        hints = schema.hints.get(name, ())
        if not hints:
            continue
        if short:
            hints = tuple(first_sentence(h) for h in hints)
        lines.append(f"{name}: {' '.join(hints)}")
    return "\n".join(lines)


def _format_rules(config: PromptConfig) -> str:
    schema = config.schema
    task = config.task
    if task == "MD":
        types = ", ".join(t.lower() for t in schema.mention_types)
        return (
            "Answer with one line per mention, in reading order. Each line is "
            "the mention type, a pipe, and the exact words of the mention:\n"
            "<type>|<words>\n"
            f"Valid types: {types}. Copy the words exactly as they appear in "
            "the input. Write nothing after the output lines."
        )
    if task == "ER":
        return (
            "Answer with one line per entity. A line starts with the word "
            "entity, followed by the words of every mention of that entity in "
            "reading order, separated by pipes:\n"
            "entity|<words>|<words>|...\n"
            "Entities with a single mention get a line too. Copy mention "
            "words exactly as they appear in the input."
        )
    if task == "RE":
        types = ", ".join(t.lower() for t in schema.relation_types)
        return (
            "Answer with one line per relation. Each line is the relation "
            "type, the words of the source mention, and the words of the "
            "target mention:\n"
            "<type>|<source words>|<target words>\n"
            f"Valid types: {types}. Copy mention words exactly as they appear "
            "in the input."
        )
    unary = [t for t in schema.constraint_types if schema.is_unary(t)]
    binary = [t for t in schema.constraint_types if not schema.is_unary(t)]
    parts = [
        "Answer with one line per constraint. The second field is the word "
        "not for a negated constraint and empty otherwise."
    ]
    if unary:
        parts.append(
            f"Unary types ({', '.join(unary)}) take one action:\n"
            "<type>|<not or empty>|<action>"
        )
    if binary:
        parts.append(
            f"Binary types ({', '.join(binary)}) take two actions:\n"
            "<type>|<not or empty>|<first action>|<second action>"
        )
    parts.append("Write actions in base verb form without articles.")
    return "\n".join(parts)


def _format_example_lines(config: PromptConfig) -> str:
    schema = config.schema
    task = config.task
    if task == "MD":
        types = schema.mention_types
        lines = [f"{types[0].lower()}|records"]
        if len(types) > 1:
            lines.append(f"{types[1].lower()}|the analyst")
        return "\n".join(lines)
    if task == "ER":
        return "entity|the analyst|she\nentity|records"
    if task == "RE":
        types = schema.relation_types
        lines = [f"{types[0]}|records|files"]
        if len(types) > 1:
            lines.append(f"{types[1]}|records|the report")
        return "\n".join(lines)
    unary = [t for t in schema.constraint_types if schema.is_unary(t)]
    binary = [t for t in schema.constraint_types if not schema.is_unary(t)]
    lines = []
    if unary:
        lines.append(f"{unary[0]}||open case")
    if binary:
        lines.append(f"{binary[0]}||open case|close case")
        lines.append(f"{binary[0]}|not|open case|close case")
    return "\n".join(lines)


def _render_examples(shots: list) -> str:
    blocks = []
    for shot in shots:
        lines = "\n".join(shot.expected_output_lines)
        blocks.append(
            f"Example input:\n{shot.input_text}\nExpected output:\n{lines}"
        )
    return "\n\n".join(blocks)


def render_gold(doc: Document, task: str) -> list:
    """Serialize gold annotations as output-grammar lines.

    Ordered so that grounding the lines over the same document gives
    back exactly the gold spans.
    """
    if task == "MD":
        ordered = sorted(doc.mentions, key=lambda m: m.token_indices[0])
        return [f"{m.mention_type.lower()}|{doc.surface(m)}" for m in ordered]
    if task == "ER":
        mmap = doc.mention_map()
        clustered = {mid for e in doc.entities for mid in e.mention_ids}
        groups = [
            sorted((mmap[mid] for mid in e.mention_ids),
                   key=lambda m: m.token_indices[0])
            for e in doc.entities
        ]
        groups.extend([m] for m in doc.mentions if m.id not in clustered)
        groups.sort(key=lambda ms: ms[0].token_indices[0])
        return ["|".join(["entity"] + [doc.surface(m) for m in ms]) for ms in groups]
    if task == "RE":
        mmap = doc.mention_map()
        return [
            f"{r.relation_type}|{doc.surface(mmap[r.source_mention_id])}"
            f"|{doc.surface(mmap[r.target_mention_id])}"
            for r in doc.relations
        ]
    if task == "CE":
        lines = []
        for c in doc.constraints:
            fields = [c.constraint_type, "not" if c.negated else "", c.first_action]
            if c.second_action is not None:
                fields.append(c.second_action)
            lines.append("|".join(fields))
        return lines
    raise PromptError(f"unknown task {task!r}")


def select_shots(pool: list, n: int, exclude: str, seed: int, task: str) -> list:
    """Draw n few-shot examples from pool minus the excluded document."""
    eligible = sorted((d for d in pool if d.id != exclude), key=lambda d: d.id)
    if n > len(eligible):
        raise PromptError(
            f"requested {n} shots but only {len(eligible)} documents are available"
        )
    rng = random.Random(seed)
    picked = rng.sample(eligible, n)
    return [
        FewShotExample(
            source_document_id=d.id,
            input_text=d.raw_text,
            expected_output_lines=tuple(render_gold(d, task)),
        )
        for d in picked
    ]


def assemble(
    config: PromptConfig,
    target: Document,
    shot_pool: list = (),
    template: dict | None = None,
) -> RenderedPrompt:
    """Build the prompt for one document."""
    config.validate()
    if template is None:
        template = load_template()

    shots: list = []
    if config.shot_count > 0:
        shots = select_shots(
            list(shot_pool), config.shot_count, target.id, config.shot_seed, config.task
        )

    values = {
        "task_goal": TASK_GOALS[config.task],
        "type_definitions": _type_definitions(config),
        "considerations": "\n".join(config.schema.considerations),
        "disambiguation_hints": _disambiguation_hints(config),
        "format_rules": _format_rules(config),
        "format_example_lines": _format_example_lines(config),
        "examples": _render_examples(shots),
    }

    spans: dict = {}
    chunks: list[str] = []
    offset = 0
    for kind in COMPONENT_ORDER:
        if kind not in config.enabled:
            continue
        if kind is K.FEW_SHOT and not shots:
            continue
        body = template[kind].format(**values).strip()
        if not body:
            continue
        chunk = body + "\n\n"
        size = len(chunk.encode("utf-8"))
        spans[kind] = (offset, size)
        chunks.append(chunk)
        offset += size
    chunks.append(f"Input: {target.raw_text}\nOutput:\n")

    fingerprint = hashlib.sha256(
        json.dumps(
            {
                "config": config.to_record(),
                "target": target.id,
                "shots": [s.source_document_id for s in shots],
            },
            sort_keys=True,
        ).encode("utf-8")
    ).hexdigest()

    return RenderedPrompt(
        text="".join(chunks),
        component_spans=spans,
        config_fingerprint=fingerprint,
        shot_ids=tuple(s.source_document_id for s in shots),
    )


ABLATION_ROWS = (
    ("Baseline", None),
    ("No Format Examples", K.FORMAT_EXAMPLE),
    ("No Context Manager", K.CONTEXT_MANAGER),
    ("No Persona", K.PERSONA),
    ("No Meta Language", K.META_LANGUAGE),
    ("No Chain of Thought", K.CHAIN_OF_THOUGHT),
    ("No Disambiguation", K.DISAMBIGUATION),
    ("No Reflection", K.REFLECTION),
    ("No Fact Check List", K.FACT_LIST),
    ("Very Short Prompt", "very_short"),
)


def ablation_variants(base: PromptConfig) -> list:
    """The ten ablation configurations, each one change away from base."""
    base.validate()
    if base.enabled != ALL_COMPONENTS:
        raise PromptError("ablation base must have every component enabled")
    if base.brevity != "full":
        raise PromptError("ablation base must use full brevity")
    out = []
    for label, change in ABLATION_ROWS:
        if change is None:
            out.append((label, base))
        elif change == "very_short":
            out.append((label, base.replace(brevity="very_short")))
        else:
            out.append((label, base.replace(enabled=base.enabled - {change})))
    return out
