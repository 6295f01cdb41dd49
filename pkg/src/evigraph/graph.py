"""In-memory two-tier knowledge hypergraph.

Entities are nodes.  Evidence items are lower-tier hyperedges (each joins
the entities extracted from its text); topics are upper-tier hyperedges
that aggregate all same-label evidence around one anchor entity.  A topic
and an entity are linked by the fraction of the topic's evidence that
mentions the entity; only strictly positive fractions are stored, as exact
integer ratios, so equality checks never depend on float tolerances.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AuditError,
    CorruptFile,
    DuplicateId,
    DuplicateName,
    EmptyTopic,
    IllegalLabelPair,
    VersionMismatch,
)
from .relations import DEFAULT_ENTITY_TYPES, HyperRelationMap

logger = logging.getLogger(__name__)

FILE_VERSION = 1


@dataclass
class Entity:
    """A normalized-term node; ``evidence_ids`` is every evidence mentioning it."""

    id: str
    name: str
    entity_type: str
    evidence_ids: set[str] = field(default_factory=set)

    @property
    def name_key(self) -> str:
        return self.name.casefold()


@dataclass
class Evidence:
    """A label-typed statement extracted from one document chunk."""

    id: str
    description: str
    label: str
    anchor_keyword: str
    anchor_type: str
    doc_id: str
    chunk_index: int

    @property
    def provenance(self) -> tuple[str, int]:
        return (self.doc_id, self.chunk_index)


@dataclass
class Topic:
    """Summary hyperedge over one entity's same-label evidence."""

    id: str
    description: str
    label: str
    anchor_entity: str
    evidence_ids: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class EdgeWeight:
    """Topic-entity link strength as an exact fraction."""

    num: int
    den: int

    @property
    def value(self) -> float:
        return self.num / self.den


@dataclass(frozen=True)
class Violation:
    rule: str
    kind: str
    record_id: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}[{self.kind}:{self.record_id}] {self.detail}"


def entity_id_for(name: str) -> str:
    return f"m:{name.casefold()}"


def topic_id_for(entity_id: str, label: str) -> str:
    return f"t:{entity_id[2:]}:{label}"


class Hypergraph:
    """Mutable during build; treated as frozen once queries begin."""

    def __init__(
        self,
        relation_map: HyperRelationMap | None = None,
        entity_types: tuple[str, ...] | None = None,
    ):
        self.relation_map = relation_map or HyperRelationMap.default()
        self.entity_types: tuple[str, ...] = tuple(
            sorted(entity_types or DEFAULT_ENTITY_TYPES)
        )
        self.entities: dict[str, Entity] = {}
        self.topics: dict[str, Topic] = {}
        self.evidence: dict[str, Evidence] = {}
        self.topic_entity_weights: dict[tuple[str, str], EdgeWeight] = {}
        self._name_index: dict[str, str] = {}  # casefolded name -> entity id

    # --- population -------------------------------------------------------

    @property
    def labels(self) -> tuple[str, ...]:
        return self.relation_map.labels

    def add_entity(self, entity: Entity) -> str:
        if entity.id in self.entities:
            raise DuplicateId(f"entity {entity.id}")
        if not entity.name:
            raise ValueError("entity name must be non-empty")
        if entity.entity_type not in self.entity_types:
            raise ValueError(
                f"entity type {entity.entity_type!r} not in catalog {self.entity_types}"
            )
        key = entity.name_key
        if key in self._name_index:
            raise DuplicateName(f"entity name {entity.name!r}")
        self.entities[entity.id] = entity
        self._name_index[key] = entity.id
        return entity.id

    def entity_by_name(self, name: str) -> Entity | None:
        eid = self._name_index.get(name.casefold())
        return self.entities[eid] if eid else None

    def add_evidence(self, ev: Evidence) -> str:
        if ev.id in self.evidence:
            raise DuplicateId(f"evidence {ev.id}")
        if not ev.description:
            raise ValueError("evidence description must be non-empty")
        if ev.label not in self.labels:
            raise IllegalLabelPair(f"unknown label {ev.label!r}")
        if not self.relation_map.is_legal(ev.anchor_type, ev.label):
            raise IllegalLabelPair(
                f"label {ev.label!r} not allowed for keyword type {ev.anchor_type!r}"
            )
        self.evidence[ev.id] = ev
        return ev.id

    def add_topic(self, topic: Topic) -> str:
        if topic.id in self.topics:
            raise DuplicateId(f"topic {topic.id}")
        if not topic.evidence_ids:
            raise EmptyTopic(f"topic {topic.id} has no evidence")
        anchor = self.entities.get(topic.anchor_entity)
        if anchor is None:
            raise KeyError(f"unknown anchor entity {topic.anchor_entity}")
        for eid in topic.evidence_ids:
            ev = self.evidence.get(eid)
            if ev is None:
                raise KeyError(f"topic {topic.id} references unknown evidence {eid}")
            if ev.label != topic.label:
                raise IllegalLabelPair(
                    f"evidence {eid} has label {ev.label!r}, topic wants {topic.label!r}"
                )
            if eid not in anchor.evidence_ids:
                raise ValueError(
                    f"evidence {eid} is not in anchor entity {anchor.id}'s evidence set"
                )
        self.topics[topic.id] = topic
        return topic.id

    def attach_evidence_to_entity(self, entity_id: str, evidence_id: str) -> None:
        if evidence_id not in self.evidence:
            raise KeyError(f"unknown evidence {evidence_id}")
        self.entities[entity_id].evidence_ids.add(evidence_id)

    # --- weights ------------------------------------------------------------

    def weight_fraction(self, topic_id: str, entity_id: str) -> tuple[int, int]:
        """Exact (numerator, denominator) of the topic-entity link strength."""
        topic = self.topics[topic_id]
        entity = self.entities[entity_id]
        if not topic.evidence_ids:
            raise EmptyTopic(topic_id)
        num = len(topic.evidence_ids & entity.evidence_ids)
        return num, len(topic.evidence_ids)

    def compute_topic_entity_weight(self, topic_id: str, entity_id: str) -> float:
        num, den = self.weight_fraction(topic_id, entity_id)
        return num / den

    def link_all_topics(self) -> int:
        """Recompute all positive topic-entity weights; idempotent."""
        entity_of_evidence: dict[str, list[str]] = {}
        for entity in self.entities.values():
            for eid in entity.evidence_ids:
                entity_of_evidence.setdefault(eid, []).append(entity.id)
        weights: dict[tuple[str, str], EdgeWeight] = {}
        for tid, topic in self.topics.items():
            den = len(topic.evidence_ids)
            counts: dict[str, int] = {}
            for eid in topic.evidence_ids:
                for mid in entity_of_evidence.get(eid, ()):
                    counts[mid] = counts.get(mid, 0) + 1
            for mid, num in counts.items():
                weights[(tid, mid)] = EdgeWeight(num, den)
        self.topic_entity_weights = weights
        return len(weights)

    def bipartite_view(self) -> "BipartiteView":
        return BipartiteView(self)

    # --- audit ---------------------------------------------------------------

    def audit(self) -> list[Violation]:
        """Check every structural invariant; reports, never raises."""
        out: list[Violation] = []

        seen_names: dict[str, str] = {}
        for mid in sorted(self.entities):
            entity = self.entities[mid]
            if not entity.name:
                out.append(Violation("EmptyName", "entity", mid, "name is empty"))
                continue
            if entity.entity_type not in self.entity_types:
                out.append(
                    Violation(
                        "UnknownEntityType", "entity", mid,
                        f"type {entity.entity_type!r} not in catalog",
                    )
                )
            key = entity.name_key
            if key in seen_names:
                out.append(
                    Violation(
                        "DuplicateName", "entity", mid,
                        f"name collides with {seen_names[key]}",
                    )
                )
            seen_names[key] = mid
            for eid in sorted(entity.evidence_ids):
                if eid not in self.evidence:
                    out.append(
                        Violation(
                            "DanglingReference", "entity", mid,
                            f"unknown evidence {eid}",
                        )
                    )

        labels = set(self.labels)
        for eid in sorted(self.evidence):
            ev = self.evidence[eid]
            if not ev.description:
                out.append(Violation("EmptyDescription", "evidence", eid, "empty text"))
            if ev.label not in labels:
                out.append(
                    Violation("UnknownLabel", "evidence", eid, f"label {ev.label!r}")
                )
            elif not self.relation_map.is_legal(ev.anchor_type, ev.label):
                out.append(
                    Violation(
                        "IllegalLabelPair", "evidence", eid,
                        f"({ev.anchor_type!r}, {ev.label!r})",
                    )
                )

        for tid in sorted(self.topics):
            topic = self.topics[tid]
            if not topic.evidence_ids:
                out.append(Violation("EmptyTopic", "topic", tid, "no evidence"))
                continue
            anchor = self.entities.get(topic.anchor_entity)
            if anchor is None:
                out.append(
                    Violation(
                        "DanglingReference", "topic", tid,
                        f"unknown anchor {topic.anchor_entity}",
                    )
                )
            for eid in sorted(topic.evidence_ids):
                ev = self.evidence.get(eid)
                if ev is None:
                    out.append(
                        Violation(
                            "DanglingReference", "topic", tid,
                            f"unknown evidence {eid}",
                        )
                    )
                    continue
                if ev.label != topic.label:
                    out.append(
                        Violation(
                            "LabelMismatch", "topic", tid,
                            f"evidence {eid} label {ev.label!r} != {topic.label!r}",
                        )
                    )
                if anchor is not None and eid not in anchor.evidence_ids:
                    out.append(
                        Violation(
                            "AnchorMismatch", "topic", tid,
                            f"evidence {eid} not in anchor's evidence set",
                        )
                    )

        for (tid, mid) in sorted(self.topic_entity_weights):
            stored = self.topic_entity_weights[(tid, mid)]
            key = f"{tid}~{mid}"
            if tid not in self.topics or mid not in self.entities:
                out.append(Violation("DanglingReference", "edge", key, "unknown endpoint"))
                continue
            num, den = self.weight_fraction(tid, mid)
            if stored.num * den != num * stored.den:
                out.append(
                    Violation(
                        "WeightMismatch", "edge", key,
                        f"stored {stored.num}/{stored.den}, recomputed {num}/{den}",
                    )
                )
            elif num == 0:
                out.append(Violation("ZeroWeightEdge", "edge", key, "weight is zero"))
            if not (0 < stored.num <= stored.den):
                out.append(
                    Violation(
                        "WeightRange", "edge", key,
                        f"{stored.num}/{stored.den} outside (0, 1]",
                    )
                )
        return out

    # --- persistence ----------------------------------------------------------

    def counts(self) -> dict[str, int]:
        return {
            "entities": len(self.entities),
            "topics": len(self.topics),
            "evidence": len(self.evidence),
            "edges": len(self.topic_entity_weights),
        }

    def save(self, path: str | Path) -> None:
        """Write the newline-delimited JSON snapshot; requires a clean audit."""
        violations = self.audit()
        if violations:
            raise AuditError(violations)
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            meta = {
                "kind": "meta",
                "version": FILE_VERSION,
                "counts": self.counts(),
                "labels": list(self.labels),
                "entity_types": list(self.entity_types),
                "relation_map": self.relation_map.to_dict(),
            }
            fh.write(_dump(meta))
            for mid in sorted(self.entities):
                entity = self.entities[mid]
                fh.write(
                    _dump(
                        {
                            "kind": "entity",
                            "id": entity.id,
                            "name": entity.name,
                            "entity_type": entity.entity_type,
                            "evidence_ids": sorted(entity.evidence_ids),
                        }
                    )
                )
            for eid in sorted(self.evidence):
                ev = self.evidence[eid]
                fh.write(
                    _dump(
                        {
                            "kind": "evidence",
                            "id": ev.id,
                            "description": ev.description,
                            "label": ev.label,
                            "anchor_keyword": ev.anchor_keyword,
                            "anchor_type": ev.anchor_type,
                            "doc_id": ev.doc_id,
                            "chunk_index": ev.chunk_index,
                        }
                    )
                )
            for tid in sorted(self.topics):
                topic = self.topics[tid]
                fh.write(
                    _dump(
                        {
                            "kind": "topic",
                            "id": topic.id,
                            "description": topic.description,
                            "label": topic.label,
                            "anchor_entity": topic.anchor_entity,
                            "evidence_ids": sorted(topic.evidence_ids),
                        }
                    )
                )
            for (tid, mid) in sorted(self.topic_entity_weights):
                w = self.topic_entity_weights[(tid, mid)]
                fh.write(
                    _dump(
                        {
                            "kind": "edge",
                            "topic_id": tid,
                            "entity_id": mid,
                            "num": w.num,
                            "den": w.den,
                        }
                    )
                )

    @classmethod
    def load(cls, path: str | Path) -> "Hypergraph":
        path = Path(path)
        graph: Hypergraph | None = None
        expected: dict[str, int] = {}
        lineno = 0
        with path.open("r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    record = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise CorruptFile(f"invalid JSON ({exc.msg})", lineno) from exc
                kind = record.get("kind")
                if lineno == 1:
                    if kind != "meta":
                        raise CorruptFile("first record must be the manifest", lineno)
                    if record.get("version") != FILE_VERSION:
                        raise VersionMismatch(
                            f"file version {record.get('version')!r}, "
                            f"supported {FILE_VERSION}"
                        )
                    graph = cls(
                        relation_map=HyperRelationMap(record["relation_map"]),
                        entity_types=tuple(record["entity_types"]),
                    )
                    expected = dict(record["counts"])
                    continue
                if graph is None:
                    raise CorruptFile("missing manifest", lineno)
                try:
                    if kind == "entity":
                        graph.add_entity(
                            Entity(
                                id=record["id"],
                                name=record["name"],
                                entity_type=record["entity_type"],
                                evidence_ids=set(record["evidence_ids"]),
                            )
                        )
                    elif kind == "evidence":
                        graph.add_evidence(
                            Evidence(
                                id=record["id"],
                                description=record["description"],
                                label=record["label"],
                                anchor_keyword=record["anchor_keyword"],
                                anchor_type=record["anchor_type"],
                                doc_id=record["doc_id"],
                                chunk_index=record["chunk_index"],
                            )
                        )
                    elif kind == "topic":
                        graph.add_topic(
                            Topic(
                                id=record["id"],
                                description=record["description"],
                                label=record["label"],
                                anchor_entity=record["anchor_entity"],
                                evidence_ids=set(record["evidence_ids"]),
                            )
                        )
                    elif kind == "edge":
                        graph.topic_entity_weights[
                            (record["topic_id"], record["entity_id"])
                        ] = EdgeWeight(int(record["num"]), int(record["den"]))
                    else:
                        raise VersionMismatch(f"unknown record kind {kind!r}")
                except KeyError as exc:
                    raise CorruptFile(f"missing field {exc}", lineno) from exc
        if graph is None:
            raise CorruptFile("empty file", max(lineno, 1))
        if graph.counts() != expected:
            raise CorruptFile(
                f"manifest counts {expected} do not match records {graph.counts()}",
                lineno,
            )
        return graph

    # --- equality ---------------------------------------------------------------

    def canonical(self) -> dict:
        """Order-independent structural form used for equality checks."""
        return {
            "entities": {
                mid: (m.name, m.entity_type, tuple(sorted(m.evidence_ids)))
                for mid, m in self.entities.items()
            },
            "evidence": {
                eid: (
                    e.description,
                    e.label,
                    e.anchor_keyword,
                    e.anchor_type,
                    e.doc_id,
                    e.chunk_index,
                )
                for eid, e in self.evidence.items()
            },
            "topics": {
                tid: (t.description, t.label, t.anchor_entity, tuple(sorted(t.evidence_ids)))
                for tid, t in self.topics.items()
            },
            "edges": {key: (w.num, w.den) for key, w in self.topic_entity_weights.items()},
            "labels": self.labels,
            "entity_types": self.entity_types,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return self.canonical() == other.canonical()


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n"


class BipartiteView:
    """Read-only topic/entity projection with weight-sorted adjacency.

    Neighbor lists are sorted by (descending weight, ascending id) so every
    iteration order, and therefore every seeded walk, is reproducible.
    """

    def __init__(self, graph: Hypergraph):
        self._topic_ids = tuple(sorted(graph.topics))
        self._entity_ids = tuple(sorted(graph.entities))
        by_topic: dict[str, list[tuple[str, float]]] = {}
        by_entity: dict[str, list[tuple[str, float]]] = {}
        for (tid, mid), w in graph.topic_entity_weights.items():
            by_topic.setdefault(tid, []).append((mid, w.value))
            by_entity.setdefault(mid, []).append((tid, w.value))
        self._neighbors: dict[str, tuple[tuple[str, float], ...]] = {}
        self._cumulative: dict[str, tuple[float, ...]] = {}
        for node, adj in list(by_topic.items()) + list(by_entity.items()):
            adj.sort(key=lambda item: (-item[1], item[0]))
            self._neighbors[node] = tuple(adj)
            total = 0.0
            cum = []
            for _, w in adj:
                total += w
                cum.append(total)
            self._cumulative[node] = tuple(cum)
        self._edge_count = len(graph.topic_entity_weights)

    @property
    def topic_ids(self) -> tuple[str, ...]:
        return self._topic_ids

    @property
    def entity_ids(self) -> tuple[str, ...]:
        return self._entity_ids

    @property
    def node_count(self) -> int:
        return len(self._topic_ids) + len(self._entity_ids)

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def neighbors(self, node_id: str) -> tuple[tuple[str, float], ...]:
        return self._neighbors.get(node_id, ())

    def degree(self, node_id: str) -> int:
        return len(self._neighbors.get(node_id, ()))

    def pick_neighbor(self, node_id: str, r: float, uniform: bool = False) -> str | None:
        """Map r in [0,1) onto a neighbor, proportional to weight (or uniformly)."""
        adj = self._neighbors.get(node_id)
        if not adj:
            return None
        if uniform:
            return adj[min(int(r * len(adj)), len(adj) - 1)][0]
        cum = self._cumulative[node_id]
        idx = bisect_left(cum, r * cum[-1])
        return adj[min(idx, len(adj) - 1)][0]
