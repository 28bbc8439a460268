"""Precision/recall/F1 scoring for the four extraction tasks.

Correct counts come from a maximum one-to-one matching between
predictions and gold items (greedy matching is order-dependent and can
undercount). Aggregation across documents is micro: counts are summed
first, then the formulas applied once.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import (
    Constraint,
    Document,
    Entity,
    Mention,
    Relation,
    SchemaDescriptor,
    normalize_phrase,
    normalize_type_name,
)
from .parser import GroundedMention, GroundedRelation, ParsedConstraint, ParsedMention


@dataclass(frozen=True)
class ConfusionCounts:
    correct: int = 0
    predicted: int = 0
    gold: int = 0

    def __post_init__(self):
        if not 0 <= self.correct <= min(self.predicted, self.gold):
            raise ValueError(f"inconsistent counts: {self}")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.correct + other.correct,
            self.predicted + other.predicted,
            self.gold + other.gold,
        )


@dataclass(frozen=True)
class TaskScores:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts


@dataclass(frozen=True)
class MatchPolicy:
    span_mode: str = "exact_span"
    type_sensitive: bool = True
    constraint_normalization: str = "verbatim"

    def __post_init__(self):
        if self.span_mode not in ("exact_span", "text_match"):
            raise ValueError(f"unknown span_mode {self.span_mode!r}")
        if self.constraint_normalization not in ("verbatim", "lemma_like"):
            raise ValueError(
                f"unknown constraint_normalization {self.constraint_normalization!r}"
            )

    @classmethod
    def from_schema(cls, schema: SchemaDescriptor) -> "MatchPolicy":
        raw = dict(schema.match_policy)
        return cls(
            span_mode=raw.get("span_mode", "exact_span"),
            type_sensitive=bool(raw.get("type_sensitive", True)),
            constraint_normalization=raw.get("constraint_normalization", "verbatim"),
        )


def scores_from_counts(counts: ConfusionCounts) -> TaskScores:
    """Apply the P/R/F1 formulas with the zero-denominator convention.

    A document with nothing predicted and nothing to find scores
    perfectly; otherwise an empty side scores zero.
    """
    if counts.predicted == 0:
        precision = 1.0 if counts.gold == 0 else 0.0
    else:
        precision = counts.correct / counts.predicted
    if counts.gold == 0:
        recall = 1.0 if counts.predicted == 0 else 0.0
    else:
        recall = counts.correct / counts.gold
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return TaskScores(precision=precision, recall=recall, f1=f1, counts=counts)


def aggregate(per_doc: list) -> TaskScores:
    """Micro-aggregate per-document counts. No documents means zero scores."""
    if not per_doc:
        return TaskScores(0.0, 0.0, 0.0, ConfusionCounts(0, 0, 0))
    total = ConfusionCounts(0, 0, 0)
    for c in per_doc:
        total = total + c
    return scores_from_counts(total)


def max_matching(pairs: list, n_pred: int, n_gold: int) -> int:
    """Size of a maximum bipartite matching given admissible (pred, gold) pairs."""
    adj: list = [[] for _ in range(n_pred)]
    for p, g in pairs:
        adj[p].append(g)
    match_of_gold = [-1] * n_gold

    def augment(p: int, seen: list) -> bool:
        for g in adj[p]:
            if seen[g]:
                continue
            seen[g] = True
            if match_of_gold[g] == -1 or augment(match_of_gold[g], seen):
                match_of_gold[g] = p
                return True
        return False

    size = 0
    for p in range(n_pred):
        if augment(p, [False] * n_gold):
            size += 1
    return size


def _score_by_predicate(pred: list, gold: list, matches) -> TaskScores:
    pairs = [
        (i, j)
        for i, p in enumerate(pred)
        for j, g in enumerate(gold)
        if matches(p, g)
    ]
    correct = max_matching(pairs, len(pred), len(gold))
    return scores_from_counts(ConfusionCounts(correct, len(pred), len(gold)))


# ---------------------------------------------------------------------------
# MD

def score_md(pred: list, gold: list, policy: MatchPolicy | None = None,
             doc: Document | None = None) -> TaskScores:
    """Score mention predictions (grounded and ungrounded together)."""
    policy = policy or MatchPolicy()
    if policy.span_mode == "text_match" and doc is None:
        raise ValueError("text_match scoring needs the source document")

    def matches(p, g: Mention) -> bool:
        if policy.type_sensitive:
            p_type = getattr(p, "mention_type", "")
            if normalize_type_name(p_type) != normalize_type_name(g.mention_type):
                return False
        if policy.span_mode == "exact_span":
            return (
                isinstance(p, GroundedMention)
                and p.token_indices == tuple(g.token_indices)
            )
        p_surface = p.matched_surface if isinstance(p, GroundedMention) else p.surface
        return normalize_phrase(p_surface) == normalize_phrase(doc.surface(g))

    return _score_by_predicate(list(pred), list(gold), matches)


# ---------------------------------------------------------------------------
# ER

def gold_entity_span_sets(doc: Document) -> list:
    """Entity universe as span sets: declared clusters plus singletons."""
    mmap = doc.mention_map()
    clustered = {mid for e in doc.entities for mid in e.mention_ids}
    sets = [
        frozenset(mmap[mid].token_indices for mid in e.mention_ids)
        for e in doc.entities
    ]
    sets.extend(
        frozenset([m.token_indices]) for m in doc.mentions if m.id not in clustered
    )
    return sets


def score_er(pred_clusters: list, gold: list, doc: Document,
             policy: MatchPolicy | None = None) -> TaskScores:
    """Score entity clusters by exact span-set equality.

    gold is the document's declared entity list; mentions outside any
    declared entity are counted as singleton entities.
    """
    mmap = doc.mention_map()
    declared = [
        frozenset(mmap[mid].token_indices for mid in e.mention_ids) for e in gold
    ]
    clustered = {mid for e in gold for mid in e.mention_ids}
    declared.extend(
        frozenset([m.token_indices]) for m in doc.mentions if m.id not in clustered
    )

    pred_sets = []
    for cluster in pred_clusters:
        if isinstance(cluster, frozenset):
            pred_sets.append(cluster)
        else:
            pred_sets.append(
                frozenset(m.token_indices for m in cluster)
            )

    def matches(p: frozenset, g: frozenset) -> bool:
        return p == g

    return _score_by_predicate(pred_sets, declared, matches)


# ---------------------------------------------------------------------------
# RE

def score_re(pred: list, gold: list, doc: Document,
             policy: MatchPolicy | None = None) -> TaskScores:
    """Score directed relations; reversed endpoints do not count."""
    policy = policy or MatchPolicy()
    mmap = doc.mention_map()

    def endpoint_matches(indices, surface, gold_mention: Mention) -> bool:
        if policy.span_mode == "exact_span":
            return indices is not None and indices == tuple(gold_mention.token_indices)
        return normalize_phrase(surface) == normalize_phrase(doc.surface(gold_mention))

    def matches(p: GroundedRelation, g: Relation) -> bool:
        if policy.type_sensitive and normalize_type_name(p.relation_type) != \
                normalize_type_name(g.relation_type):
            return False
        return endpoint_matches(
            p.source_indices, p.source_surface, mmap[g.source_mention_id]
        ) and endpoint_matches(
            p.target_indices, p.target_surface, mmap[g.target_mention_id]
        )

    return _score_by_predicate(list(pred), list(gold), matches)


# ---------------------------------------------------------------------------
# CE

_DETERMINERS = {
    "the", "a", "an", "this", "that", "these", "those", "every", "each",
    "any", "some", "all", "its", "his", "her", "their", "our", "your", "my",
}
_AUXILIARIES = {
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does",
    "did", "have", "has", "had", "will", "would", "shall", "should", "may",
    "might", "must", "can", "could", "not", "to",
}


def normalize_action(text: str, mode: str) -> object:
    if mode == "verbatim":
        return " ".join(text.split())
    words = [
        w for w in normalize_phrase(text).split()
        if w not in _DETERMINERS and w not in _AUXILIARIES
    ]
    return frozenset(words)


def score_constraints(pred: list, gold: list,
                      policy: MatchPolicy | None = None) -> TaskScores:
    policy = policy or MatchPolicy()
    mode = policy.constraint_normalization

    def gold_actions(g: Constraint) -> tuple:
        if g.second_action is None:
            return (g.first_action,)
        return (g.first_action, g.second_action)

    def matches(p: ParsedConstraint, g: Constraint) -> bool:
        if normalize_type_name(p.constraint_type) != \
                normalize_type_name(g.constraint_type):
            return False
        if p.negated != g.negated:
            return False
        gactions = gold_actions(g)
        if len(p.actions) != len(gactions):
            return False
        return all(
            normalize_action(a, mode) == normalize_action(b, mode)
            for a, b in zip(p.actions, gactions)
        )

    return _score_by_predicate(list(pred), list(gold), matches)
