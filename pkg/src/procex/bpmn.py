"""Compiling extracted process information into BPMN 2.0.

Three stages. Consolidation repairs the annotation level: conditions
are attached to their decision gateway, gateway mentions naming one
decision point are merged, and activities without a performer get the
closest actor to their left. The vertex stage turns mentions and
entities into lanes and nodes. Linking adds sequence flows, message
flows, and data associations, synthesizing start and end events.

The compiler reproduces what the annotations say, including their
mistakes; a missing performer can put a step into the wrong lane.
"""

from __future__ import annotations

import hashlib
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from xml.sax.saxutils import escape, quoteattr

from .corpus import Document, Entity, Relation, SchemaDescriptor

TASK = "task"
XOR = "xor_gateway"
AND = "and_gateway"
START = "start_event"
END = "end_event"
DATA = "data_object"

NODE_KINDS = (TASK, XOR, AND, START, END, DATA)

UNASSIGNED_LANE_LABEL = "unassigned"


@dataclass(frozen=True)
class Lane:
    id: str
    label: str
    actor_entity_id: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    label: str
    lane_id: str | None = None


@dataclass(frozen=True)
class SequenceFlow:
    id: str
    source: str
    target: str
    condition_label: str | None = None


@dataclass(frozen=True)
class MessageFlow:
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class DataAssociation:
    id: str
    data_object: str
    task: str
    direction: str = "input"


@dataclass(frozen=True)
class ProcessGraph:
    lanes: tuple
    nodes: tuple
    sequence_flows: tuple = ()
    message_flows: tuple = ()
    data_associations: tuple = ()
    warnings: tuple = field(default=(), compare=False)
    maps: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class LayoutedModel:
    graph: ProcessGraph
    positions: dict = field(compare=False)
    lane_extents: dict = field(compare=False)


class _Ids:
    def __init__(self):
        self.counters: dict = {}

    def make(self, prefix: str, *parts: str) -> str:
        basis = "|".join(parts)
        ordinal = self.counters.get((prefix, basis), 0)
        self.counters[(prefix, basis)] = ordinal + 1
        digest = hashlib.sha1(f"{prefix}|{basis}|{ordinal}".encode("utf-8")).hexdigest()
        return f"{prefix}_{digest[:8]}"


# ---------------------------------------------------------------------------
# role helpers

def _mentions_of_role(doc: Document, schema: SchemaDescriptor, role: str):
    return [
        m for m in doc.mentions if schema.mention_role_of(m.mention_type) == role
    ]


def _gateway_mentions(doc: Document, schema: SchemaDescriptor):
    return [
        m for m in doc.mentions
        if schema.mention_role_of(m.mention_type) in ("xor_gateway", "and_gateway")
    ]


def _relation_type_for(schema: SchemaDescriptor, role: str) -> str | None:
    names = schema.role_types("relation", role)
    return names[0] if names else None


def _relations_of_role(doc: Document, schema: SchemaDescriptor, role: str):
    return [
        r for r in doc.relations if schema.relation_role_of(r.relation_type) == role
    ]


def nearest_left_actor(doc: Document, schema: SchemaDescriptor, token_index: int):
    """Closest actor mention fully left of token_index.

    Closeness is the mention's last token; ties (overlapping
    candidates) break toward the later start index.
    """
    best = None
    for m in _mentions_of_role(doc, schema, "actor"):
        if m.token_indices[-1] >= token_index:
            continue
        if best is None or (
            (m.token_indices[-1], m.token_indices[0])
            > (best.token_indices[-1], best.token_indices[0])
        ):
            best = m
    return best


# ---------------------------------------------------------------------------
# consolidation

def _gateway_groups(doc: Document, schema: SchemaDescriptor):
    """Merged gateway groups as ordered lists of mention ids."""
    gateways = _gateway_mentions(doc, schema)
    ids = [m.id for m in gateways]
    if not ids:
        return []
    parent = {mid: mid for mid in ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    gateway_ids = set(ids)
    touched = False
    for r in _relations_of_role(doc, schema, "same_gateway"):
        if r.source_mention_id in gateway_ids and r.target_mention_id in gateway_ids:
            union(r.source_mention_id, r.target_mention_id)
            touched = True
    for e in doc.entities:
        members = [mid for mid in e.mention_ids if mid in gateway_ids]
        for a, b in zip(members, members[1:]):
            union(a, b)
        if len(members) > 1:
            touched = True
    if not touched:
        # no explicit merge information anywhere: gateways in one
        # sentence are taken to name the same decision point
        by_sentence: dict = {}
        for m in gateways:
            sent = doc.tokens[m.token_indices[0]].sentence_index
            by_sentence.setdefault(sent, []).append(m.id)
        for members in by_sentence.values():
            for a, b in zip(members, members[1:]):
                union(a, b)

    mmap = doc.mention_map()
    grouped: dict = {}
    for mid in ids:
        grouped.setdefault(find(mid), []).append(mid)
    groups = [
        sorted(members, key=lambda mid: mmap[mid].token_indices[0])
        for members in grouped.values()
    ]
    groups.sort(key=lambda members: mmap[members[0]].token_indices[0])
    return groups


def consolidate(doc: Document, schema: SchemaDescriptor) -> Document:
    """Attach conditions, merge gateways, complete performers."""
    relations = list(doc.relations)
    entities = list(doc.entities)

    # 1. conditions -> nearest preceding gateway
    attach_type = _relation_type_for(schema, "condition_attachment")
    if attach_type is not None:
        attached = {
            r.target_mention_id
            for r in _relations_of_role(doc, schema, "condition_attachment")
        }
        gateways = _gateway_mentions(doc, schema)
        counter = 0
        for cond in _mentions_of_role(doc, schema, "condition"):
            if cond.id in attached:
                continue
            preceding = [
                g for g in gateways
                if g.token_indices[-1] < cond.token_indices[0]
            ]
            if not preceding:
                continue
            nearest = max(
                preceding, key=lambda g: (g.token_indices[-1], g.token_indices[0])
            )
            relations.append(
                Relation(f"r-cond-{counter}", attach_type, nearest.id, cond.id)
            )
            counter += 1

    # 2. gateway mentions naming one decision point become one entity
    groups = [g for g in _gateway_groups(doc, schema) if len(g) > 1]
    existing = {frozenset(e.mention_ids) for e in entities}
    gateway_ids = {m.id for m in _gateway_mentions(doc, schema)}
    counter = 0
    for group in groups:
        key = frozenset(group)
        if key in existing:
            continue
        entities = [
            e for e in entities
            if not (set(e.mention_ids) <= gateway_ids
                    and set(e.mention_ids) < key)
        ]
        entities.append(Entity(f"e-gw-{counter}", key))
        counter += 1

    # 3. performer completion by the nearest-left rule
    perf_type = _relation_type_for(schema, "performer")
    if perf_type is not None:
        performed = {
            r.source_mention_id for r in _relations_of_role(doc, schema, "performer")
        }
        counter = 0
        for activity in _mentions_of_role(doc, schema, "activity"):
            if activity.id in performed:
                continue
            actor = nearest_left_actor(doc, schema, activity.token_indices[0])
            if actor is None:
                continue
            relations.append(
                Relation(f"r-perf-{counter}", perf_type, activity.id, actor.id)
            )
            counter += 1

    return replace(
        doc, relations=tuple(relations), entities=tuple(entities)
    )


# ---------------------------------------------------------------------------
# vertices

def _clusters_of_role(doc: Document, schema: SchemaDescriptor, role: str):
    """Entities of one role plus singletons, ordered by first occurrence.

    Returns lists of mentions; an entity belongs to the role iff all
    its members do.
    """
    mmap = doc.mention_map()
    role_ids = {m.id for m in _mentions_of_role(doc, schema, role)}
    clusters = []
    clustered: set = set()
    for e in doc.entities:
        if e.mention_ids and set(e.mention_ids) <= role_ids:
            members = sorted(
                (mmap[mid] for mid in e.mention_ids),
                key=lambda m: m.token_indices[0],
            )
            clusters.append((e.id, members))
            clustered |= set(e.mention_ids)
    for m in doc.mentions:
        if m.id in role_ids and m.id not in clustered:
            clusters.append((m.id, [m]))
    clusters.sort(key=lambda pair: pair[1][0].token_indices[0])
    return clusters


def _longest_surface(doc: Document, members) -> str:
    # members arrive ordered by first occurrence, so a length tie
    # resolves to the earliest mention
    return max((doc.surface(m) for m in members), key=len)


def build_vertices(doc: Document, schema: SchemaDescriptor) -> ProcessGraph:
    """Lanes and nodes for a consolidated document."""
    ids = _Ids()
    mmap = doc.mention_map()

    lanes: list = []
    lane_of_actor_mention: dict = {}
    for entity_id, members in _clusters_of_role(doc, schema, "actor"):
        label = _longest_surface(doc, members)
        lane = Lane(ids.make("lane", label), label, actor_entity_id=entity_id)
        lanes.append(lane)
        for m in members:
            lane_of_actor_mention[m.id] = lane.id

    performer_of: dict = {}
    for r in _relations_of_role(doc, schema, "performer"):
        performer_of.setdefault(r.source_mention_id, r.target_mention_id)

    activities = _mentions_of_role(doc, schema, "activity")
    gateway_clusters = _clusters_of_role(doc, schema, "xor_gateway")
    gateway_clusters += _clusters_of_role(doc, schema, "and_gateway")
    # mixed-kind merged groups appear under both roles; deduplicate
    seen_keys: set = set()
    merged_gateways = []
    for key, members in sorted(
        gateway_clusters, key=lambda pair: pair[1][0].token_indices[0]
    ):
        if key not in seen_keys:
            seen_keys.add(key)
            merged_gateways.append((key, members))

    needs_unassigned = any(
        performer_of.get(a.id) not in lane_of_actor_mention for a in activities
    )
    gateway_lane_mention: dict = {}
    for key, members in merged_gateways:
        anchor = nearest_left_actor(doc, schema, members[0].token_indices[0])
        if anchor is None:
            needs_unassigned = True
        else:
            gateway_lane_mention[key] = anchor.id
    if not lanes:
        needs_unassigned = True

    unassigned_lane = None
    if needs_unassigned:
        unassigned_lane = Lane(
            ids.make("lane", UNASSIGNED_LANE_LABEL), UNASSIGNED_LANE_LABEL
        )
        lanes.append(unassigned_lane)

    first_lane = lanes[0]
    nodes: list = []
    mention_nodes: dict = {}
    data_nodes: dict = {}

    start = Node(ids.make("start", ""), START, "", first_lane.id)
    nodes.append(start)

    for m in activities:
        lane_id = lane_of_actor_mention.get(performer_of.get(m.id))
        if lane_id is None:
            lane_id = unassigned_lane.id
        node = Node(ids.make("task", doc.surface(m)), TASK, doc.surface(m), lane_id)
        nodes.append(node)
        mention_nodes[m.id] = node.id

    for key, members in merged_gateways:
        role = schema.mention_role_of(members[0].mention_type)
        kind = AND if role == "and_gateway" else XOR
        lane_id = lane_of_actor_mention.get(gateway_lane_mention.get(key))
        if lane_id is None:
            lane_id = unassigned_lane.id
        node = Node(
            ids.make("gate", doc.surface(members[0])), kind,
            doc.surface(members[0]), lane_id,
        )
        nodes.append(node)
        for m in members:
            mention_nodes[m.id] = node.id

    for key, members in _clusters_of_role(doc, schema, "data"):
        label = _longest_surface(doc, members)
        node = Node(ids.make("data", label), DATA, label, None)
        nodes.append(node)
        for m in members:
            data_nodes[m.id] = node.id

    end = Node(ids.make("end", ""), END, "", first_lane.id)
    nodes.append(end)

    return ProcessGraph(
        lanes=tuple(lanes),
        nodes=tuple(nodes),
        maps={
            "mention_nodes": mention_nodes,
            "data_nodes": data_nodes,
            "start": start.id,
            "end": end.id,
        },
    )


# ---------------------------------------------------------------------------
# linking

def link(graph: ProcessGraph, doc: Document, schema: SchemaDescriptor) -> ProcessGraph:
    """Connect the vertices with flows and data associations."""
    ids = _Ids()
    mmap = doc.mention_map()
    mention_nodes = graph.maps["mention_nodes"]
    data_nodes = graph.maps["data_nodes"]
    node_by_id = {n.id: n for n in graph.nodes}
    warnings: list = []

    condition_ids = {m.id for m in _mentions_of_role(doc, schema, "condition")}
    attachment: dict = {}
    for r in _relations_of_role(doc, schema, "condition_attachment"):
        if r.target_mention_id in condition_ids:
            attachment.setdefault(r.target_mention_id, r.source_mention_id)

    flow_rels = _relations_of_role(doc, schema, "flow")
    into_condition: dict = {}
    out_of_condition: dict = {}
    plain: list = []
    for r in flow_rels:
        src_is_cond = r.source_mention_id in condition_ids
        tgt_is_cond = r.target_mention_id in condition_ids
        if tgt_is_cond and not src_is_cond:
            into_condition.setdefault(r.target_mention_id, r.source_mention_id)
        elif src_is_cond and not tgt_is_cond:
            out_of_condition.setdefault(r.source_mention_id, []).append(
                r.target_mention_id
            )
        elif src_is_cond and tgt_is_cond:
            warnings.append(f"skipped link {r.id}: both endpoints are conditions")
        else:
            plain.append((r.id, r.source_mention_id, r.target_mention_id, None))

    edges: list = []
    for rel_id, src, tgt, label in plain:
        edges.append((rel_id, src, tgt, label))
    for cond_id in sorted(
        out_of_condition, key=lambda c: mmap[c].token_indices[0]
    ):
        source = into_condition.get(cond_id, attachment.get(cond_id))
        label = doc.surface(mmap[cond_id])
        if source is None:
            warnings.append(
                f"skipped link: condition {cond_id!r} has no gateway to attach to"
            )
            continue
        for target in out_of_condition[cond_id]:
            edges.append((None, source, target, label))

    sequence_flows: list = []
    message_flows: list = []

    def add_edge(source_node: str, target_node: str, label: str | None) -> None:
        src, tgt = node_by_id[source_node], node_by_id[target_node]
        if src.lane_id == tgt.lane_id:
            sequence_flows.append(
                SequenceFlow(
                    ids.make("flow", source_node, target_node),
                    source_node, target_node, label,
                )
            )
        else:
            if label is not None:
                warnings.append(
                    f"condition label {label!r} dropped on cross-lane flow"
                )
            message_flows.append(
                MessageFlow(
                    ids.make("mflow", source_node, target_node),
                    source_node, target_node,
                )
            )

    for rel_id, src, tgt, label in edges:
        source_node = mention_nodes.get(src)
        target_node = mention_nodes.get(tgt)
        if source_node is None or target_node is None:
            name = rel_id if rel_id is not None else f"{src}->{tgt}"
            warnings.append(
                f"skipped link {name}: endpoint is not an activity or gateway"
            )
            continue
        add_edge(source_node, target_node, label)

    # data associations, with label composition
    associations: list = []
    relabel: dict = {}
    uses_type_exists = _relation_type_for(schema, "uses") is not None
    if uses_type_exists:
        for r in _relations_of_role(doc, schema, "uses"):
            task_node = mention_nodes.get(r.source_mention_id)
            data_node = data_nodes.get(r.target_mention_id)
            if task_node is None or data_node is None:
                warnings.append(
                    f"skipped link {r.id}: not an activity-to-data pair"
                )
                continue
            associations.append(
                DataAssociation(
                    ids.make("assoc", task_node, data_node),
                    data_object=data_node, task=task_node, direction="input",
                )
            )
            task = node_by_id[task_node]
            data_label = node_by_id[data_node].label
            current = relabel.get(task_node, task.label)
            if data_label.casefold() not in current.casefold():
                relabel[task_node] = f"{current} {data_label}"

    nodes = tuple(
        n if n.id not in relabel else replace(n, label=relabel[n.id])
        for n in graph.nodes
    )
    node_by_id = {n.id: n for n in nodes}

    # start and end synthesis over nodes that can carry flow
    linkable = [n for n in nodes if n.kind in (TASK, XOR, AND)]
    has_incoming = {f.target for f in sequence_flows} | {
        f.target for f in message_flows
    }
    has_outgoing = {f.source for f in sequence_flows} | {
        f.source for f in message_flows
    }
    start_id, end_id = graph.maps["start"], graph.maps["end"]
    for n in linkable:
        if n.id not in has_incoming:
            add_edge(start_id, n.id, None)
    for n in linkable:
        if n.id not in has_outgoing:
            add_edge(n.id, end_id, None)

    return ProcessGraph(
        lanes=graph.lanes,
        nodes=nodes,
        sequence_flows=tuple(sequence_flows),
        message_flows=tuple(message_flows),
        data_associations=tuple(associations),
        warnings=tuple(warnings),
        maps=graph.maps,
    )


def compile_document(doc: Document, schema: SchemaDescriptor) -> ProcessGraph:
    """Consolidate, build vertices, and link in one step."""
    consolidated = consolidate(doc, schema)
    return link(build_vertices(consolidated, schema), consolidated, schema)


# ---------------------------------------------------------------------------
# validation

def validate_graph(graph: ProcessGraph) -> list:
    problems: list = []
    node_ids = [n.id for n in graph.nodes]
    if len(set(node_ids)) != len(node_ids):
        problems.append("duplicate node ids")
    lane_ids = {l.id for l in graph.lanes}
    node_by_id = {n.id: n for n in graph.nodes}
    for n in graph.nodes:
        if n.kind not in NODE_KINDS:
            problems.append(f"node {n.id}: unknown kind {n.kind!r}")
        if n.kind == DATA:
            if n.lane_id is not None:
                problems.append(f"data object {n.id} must not sit in a lane")
        elif n.lane_id not in lane_ids:
            problems.append(f"node {n.id}: unresolved lane {n.lane_id!r}")
    for f in graph.sequence_flows:
        if f.source not in node_by_id or f.target not in node_by_id:
            problems.append(f"sequence flow {f.id}: unresolved endpoint")
        elif node_by_id[f.source].lane_id != node_by_id[f.target].lane_id:
            problems.append(f"sequence flow {f.id} crosses lanes")
    for f in graph.message_flows:
        if f.source not in node_by_id or f.target not in node_by_id:
            problems.append(f"message flow {f.id}: unresolved endpoint")
        elif node_by_id[f.source].lane_id == node_by_id[f.target].lane_id:
            problems.append(f"message flow {f.id} stays inside one lane")
    for a in graph.data_associations:
        if node_by_id.get(a.data_object, Node("", TASK, "")).kind != DATA:
            problems.append(f"association {a.id}: {a.data_object!r} is not a data object")
        if a.task not in node_by_id or node_by_id[a.task].kind != TASK:
            problems.append(f"association {a.id}: {a.task!r} is not a task")
        if a.direction not in ("input", "output"):
            problems.append(f"association {a.id}: bad direction {a.direction!r}")
    starts = [n for n in graph.nodes if n.kind == START]
    ends = [n for n in graph.nodes if n.kind == END]
    if len(starts) != 1:
        problems.append(f"expected exactly one start event, found {len(starts)}")
    if not ends:
        problems.append("expected at least one end event")
    return problems


# ---------------------------------------------------------------------------
# layout

COLUMN_WIDTH = 160
LANE_HEIGHT = 140
LANE_X = 40
LANE_TOP = 40
NODE_SIZES = {
    TASK: (120, 60),
    XOR: (50, 50),
    AND: (50, 50),
    START: (36, 36),
    END: (36, 36),
    DATA: (40, 55),
}


def _topological_order(graph: ProcessGraph):
    """Kahn's algorithm over all flows; None when the graph has a cycle."""
    flow_nodes = [n.id for n in graph.nodes if n.kind != DATA]
    incoming: dict = {nid: 0 for nid in flow_nodes}
    successors: dict = {nid: [] for nid in flow_nodes}
    for f in list(graph.sequence_flows) + list(graph.message_flows):
        if f.source in incoming and f.target in incoming:
            successors[f.source].append(f.target)
            incoming[f.target] += 1
    creation_rank = {nid: i for i, nid in enumerate(flow_nodes)}
    ready = sorted(
        (nid for nid in flow_nodes if incoming[nid] == 0), key=creation_rank.get
    )
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        freshly = []
        for succ in successors[nid]:
            incoming[succ] -= 1
            if incoming[succ] == 0:
                freshly.append(succ)
        ready = sorted(ready + freshly, key=creation_rank.get)
    if len(order) != len(flow_nodes):
        return None
    return order


def layout(graph: ProcessGraph) -> LayoutedModel:
    """Grid placement: x follows flow order, y the lane row."""
    order = _topological_order(graph)
    if order is None:
        order = [n.id for n in graph.nodes if n.kind != DATA]
    column = {nid: i for i, nid in enumerate(order)}
    lane_row = {lane.id: i for i, lane in enumerate(graph.lanes)}

    positions: dict = {}
    for n in graph.nodes:
        w, h = NODE_SIZES[n.kind]
        if n.kind == DATA:
            continue
        x = LANE_X + 40 + column[n.id] * COLUMN_WIDTH
        y = LANE_TOP + lane_row[n.lane_id] * LANE_HEIGHT + (LANE_HEIGHT - h) // 2
        positions[n.id] = (x, y, w, h)

    data_nodes = [n for n in graph.nodes if n.kind == DATA]
    strip_y = LANE_TOP + len(graph.lanes) * LANE_HEIGHT + 30
    for i, n in enumerate(data_nodes):
        w, h = NODE_SIZES[DATA]
        positions[n.id] = (LANE_X + 40 + i * COLUMN_WIDTH, strip_y, w, h)

    width = LANE_X + 80 + COLUMN_WIDTH * max(
        [len(order)] + [len(data_nodes)] + [1]
    )
    lane_extents = {
        lane.id: (LANE_X, LANE_TOP + i * LANE_HEIGHT, width, LANE_HEIGHT)
        for i, lane in enumerate(graph.lanes)
    }
    return LayoutedModel(graph=graph, positions=positions, lane_extents=lane_extents)


# ---------------------------------------------------------------------------
# serialization

NS_MODEL = "http://www.omg.org/spec/BPMN/20100524/MODEL"
NS_DI = "http://www.omg.org/spec/BPMN/20100524/DI"
NS_DC = "http://www.omg.org/spec/DD/20100524/DC"
NS_DDI = "http://www.omg.org/spec/DD/20100524/DI"

_KIND_TAGS = {
    TASK: "task",
    XOR: "exclusiveGateway",
    AND: "parallelGateway",
    START: "startEvent",
    END: "endEvent",
}


def serialize_bpmn(model: LayoutedModel) -> str:
    graph = model.graph
    out: list = []
    push = out.append
    push('<?xml version="1.0" encoding="UTF-8"?>\n')
    push(
        f'<bpmn:definitions xmlns:bpmn="{NS_MODEL}" xmlns:bpmndi="{NS_DI}" '
        f'xmlns:dc="{NS_DC}" xmlns:di="{NS_DDI}" id="definitions_1" '
        'targetNamespace="urn:procex:bpmn">\n'
    )
    push('  <bpmn:collaboration id="collaboration_1">\n')
    push('    <bpmn:participant id="pool_1" processRef="process_1"/>\n')
    for f in graph.message_flows:
        push(
            f'    <bpmn:messageFlow id={quoteattr(f.id)} '
            f'sourceRef={quoteattr(f.source)} targetRef={quoteattr(f.target)}/>\n'
        )
    push('  </bpmn:collaboration>\n')
    push('  <bpmn:process id="process_1">\n')
    push('    <bpmn:laneSet id="laneset_1">\n')
    members: dict = {}
    for n in graph.nodes:
        if n.kind != DATA and n.lane_id is not None:
            members.setdefault(n.lane_id, []).append(n.id)
    for lane in graph.lanes:
        push(f'      <bpmn:lane id={quoteattr(lane.id)} name={quoteattr(lane.label)}>\n')
        for nid in members.get(lane.id, []):
            push(f'        <bpmn:flowNodeRef>{escape(nid)}</bpmn:flowNodeRef>\n')
        push('      </bpmn:lane>\n')
    push('    </bpmn:laneSet>\n')

    assoc_by_task: dict = {}
    for a in graph.data_associations:
        assoc_by_task.setdefault(a.task, []).append(a)
    for n in graph.nodes:
        if n.kind == DATA:
            push(
                f'    <bpmn:dataObjectReference id={quoteattr(n.id)} '
                f'name={quoteattr(n.label)} dataObjectRef={quoteattr("obj_" + n.id)}/>\n'
            )
            push(f'    <bpmn:dataObject id={quoteattr("obj_" + n.id)}/>\n')
            continue
        tag = _KIND_TAGS[n.kind]
        name_attr = f" name={quoteattr(n.label)}" if n.label else ""
        associations = assoc_by_task.get(n.id, [])
        if not associations:
            push(f'    <bpmn:{tag} id={quoteattr(n.id)}{name_attr}/>\n')
        else:
            push(f'    <bpmn:{tag} id={quoteattr(n.id)}{name_attr}>\n')
            for a in associations:
                if a.direction == "input":
                    push(
                        f'      <bpmn:dataInputAssociation id={quoteattr(a.id)}>\n'
                        f'        <bpmn:sourceRef>{escape(a.data_object)}</bpmn:sourceRef>\n'
                        '      </bpmn:dataInputAssociation>\n'
                    )
                else:
                    push(
                        f'      <bpmn:dataOutputAssociation id={quoteattr(a.id)}>\n'
                        f'        <bpmn:targetRef>{escape(a.data_object)}</bpmn:targetRef>\n'
                        '      </bpmn:dataOutputAssociation>\n'
                    )
            push(f'    </bpmn:{tag}>\n')
    for f in graph.sequence_flows:
        label = (
            f' name={quoteattr(f.condition_label)}'
            if f.condition_label is not None else ""
        )
        push(
            f'    <bpmn:sequenceFlow id={quoteattr(f.id)} '
            f'sourceRef={quoteattr(f.source)} targetRef={quoteattr(f.target)}{label}/>\n'
        )
    push('  </bpmn:process>\n')

    push('  <bpmndi:BPMNDiagram id="diagram_1">\n')
    push('    <bpmndi:BPMNPlane id="plane_1" bpmnElement="collaboration_1">\n')
    push(
        '      <bpmndi:BPMNShape id="shape_pool_1" bpmnElement="pool_1" '
        'isHorizontal="true">\n'
    )
    all_extents = list(model.lane_extents.values())
    if all_extents:
        x = min(e[0] for e in all_extents)
        y = min(e[1] for e in all_extents)
        w = max(e[2] for e in all_extents)
        h = sum(e[3] for e in all_extents)
    else:
        x, y, w, h = LANE_X, LANE_TOP, 400, LANE_HEIGHT
    push(f'        <dc:Bounds x="{x}" y="{y}" width="{w}" height="{h}"/>\n')
    push('      </bpmndi:BPMNShape>\n')
    for lane in graph.lanes:
        lx, ly, lw, lh = model.lane_extents[lane.id]
        push(
            f'      <bpmndi:BPMNShape id={quoteattr("shape_" + lane.id)} '
            f'bpmnElement={quoteattr(lane.id)} isHorizontal="true">\n'
            f'        <dc:Bounds x="{lx}" y="{ly}" width="{lw}" height="{lh}"/>\n'
            '      </bpmndi:BPMNShape>\n'
        )
    for n in graph.nodes:
        nx, ny, nw, nh = model.positions[n.id]
        push(
            f'      <bpmndi:BPMNShape id={quoteattr("shape_" + n.id)} '
            f'bpmnElement={quoteattr(n.id)}>\n'
            f'        <dc:Bounds x="{nx}" y="{ny}" width="{nw}" height="{nh}"/>\n'
            '      </bpmndi:BPMNShape>\n'
        )
    push('    </bpmndi:BPMNPlane>\n')
    push('  </bpmndi:BPMNDiagram>\n')
    push('</bpmn:definitions>\n')
    return "".join(out)


def parse_bpmn(xml_text: str) -> LayoutedModel:
    """Read serialized output back into a layouted model."""
    ns = {"bpmn": NS_MODEL, "bpmndi": NS_DI, "dc": NS_DC}
    root = ET.fromstring(xml_text)

    message_flows = tuple(
        MessageFlow(el.get("id"), el.get("sourceRef"), el.get("targetRef"))
        for el in root.findall("bpmn:collaboration/bpmn:messageFlow", ns)
    )
    process = root.find("bpmn:process", ns)

    lane_of_node: dict = {}
    lanes: list = []
    for lane_el in process.findall("bpmn:laneSet/bpmn:lane", ns):
        lane = Lane(lane_el.get("id"), lane_el.get("name", ""))
        lanes.append(lane)
        for ref in lane_el.findall("bpmn:flowNodeRef", ns):
            lane_of_node[ref.text] = lane.id

    tag_kinds = {f"{{{NS_MODEL}}}{tag}": kind for kind, tag in _KIND_TAGS.items()}
    data_tag = f"{{{NS_MODEL}}}dataObjectReference"
    seq_tag = f"{{{NS_MODEL}}}sequenceFlow"

    nodes: list = []
    sequence_flows: list = []
    associations: list = []
    for el in process:
        if el.tag in tag_kinds:
            node_id = el.get("id")
            nodes.append(
                Node(node_id, tag_kinds[el.tag], el.get("name", ""),
                     lane_of_node.get(node_id))
            )
            for assoc in el.findall("bpmn:dataInputAssociation", ns):
                associations.append(
                    DataAssociation(
                        assoc.get("id"),
                        assoc.find("bpmn:sourceRef", ns).text,
                        node_id, "input",
                    )
                )
            for assoc in el.findall("bpmn:dataOutputAssociation", ns):
                associations.append(
                    DataAssociation(
                        assoc.get("id"),
                        assoc.find("bpmn:targetRef", ns).text,
                        node_id, "output",
                    )
                )
        elif el.tag == data_tag:
            nodes.append(Node(el.get("id"), DATA, el.get("name", ""), None))
        elif el.tag == seq_tag:
            sequence_flows.append(
                SequenceFlow(
                    el.get("id"), el.get("sourceRef"), el.get("targetRef"),
                    el.get("name"),
                )
            )

    positions: dict = {}
    lane_extents: dict = {}
    lane_ids = {lane.id for lane in lanes}
    node_ids = {n.id for n in nodes}
    for shape in root.findall(
        "bpmndi:BPMNDiagram/bpmndi:BPMNPlane/bpmndi:BPMNShape", ns
    ):
        element = shape.get("bpmnElement")
        bounds = shape.find("dc:Bounds", ns)
        box = tuple(int(bounds.get(k)) for k in ("x", "y", "width", "height"))
        if element in lane_ids:
            lane_extents[element] = box
        elif element in node_ids:
            positions[element] = box

    graph = ProcessGraph(
        lanes=tuple(lanes),
        nodes=tuple(nodes),
        sequence_flows=tuple(sequence_flows),
        message_flows=message_flows,
        data_associations=tuple(associations),
    )
    return LayoutedModel(graph=graph, positions=positions, lane_extents=lane_extents)
