"""Corpus-to-hypergraph construction.

Pipeline per document: split into overlapping token windows, pull typed
keywords from the title/abstract, extract labeled evidence for every legal
(keyword, label) pair per window, extract and normalize entities from each
evidence statement, then group every entity's evidence by label into topic
summaries and link topic-entity edges.

Documents are independent work items and run concurrently; everything that
merges global state happens afterwards in a deterministic order, so a build
with the offline backends is bit-identical run to run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .backends.base import ChatBackend, ChatRequest, chat_json
from .errors import (
    AuditError,
    BackendError,
    ConfigError,
    EmptyDocument,
    IllegalLabelPair,
    NoKeywords,
)
from .graph import Entity, Evidence, Hypergraph, Topic, entity_id_for, topic_id_for
from .relations import DEFAULT_ENTITY_TYPES, KEYWORD_TYPES, HyperRelationMap

logger = logging.getLogger(__name__)


@dataclass
class Document:
    id: str
    title: str
    abstract: str
    body: str
    lang: str = "en"


@dataclass
class TextUnit:
    doc_id: str
    chunk_index: int
    content: str
    keywords: tuple[tuple[str, str], ...] = ()


@dataclass
class IngestionConfig:
    window: int = 1024
    overlap: int = 200
    tokenizer: str = "whitespace"  # or "character"
    batch_size: int = 10
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.window <= 0:
            raise ConfigError("window must be positive")
        if not (0 <= self.overlap < self.window):
            raise ConfigError("overlap must satisfy 0 <= overlap < window")
        if self.tokenizer not in ("whitespace", "character"):
            raise ConfigError(f"unknown tokenizer mode {self.tokenizer!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")

    @property
    def stride(self) -> int:
        return self.window - self.overlap


def tokenize(text: str, mode: str) -> list[str]:
    if mode == "whitespace":
        return text.split()
    return list(text)


def token_joiner(mode: str) -> str:
    return " " if mode == "whitespace" else ""


def split_document(doc: Document, cfg: IngestionConfig) -> list[TextUnit]:
    """Fixed-window chunks with overlap; the final window may run short.

    Chunk i covers tokens [i*stride, i*stride + window); chunking stops with
    the first window that reaches the end of the document.
    """
    tokens = tokenize(doc.body, cfg.tokenizer)
    if not tokens:
        raise EmptyDocument(doc.id)
    joiner = token_joiner(cfg.tokenizer)
    units = []
    index = 0
    for start in range(0, len(tokens), cfg.stride):
        window = tokens[start : start + cfg.window]
        units.append(TextUnit(doc.id, index, joiner.join(window)))
        index += 1
        if start + cfg.window >= len(tokens):
            break
    return units


def load_normalization_table(path: str | Path) -> dict[str, list[str]]:
    """TSV ``raw<TAB>normalized``; a raw term may map to several rows."""
    table: dict[str, list[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        raw, _, normalized = line.partition("\t")
        table.setdefault(raw.strip().casefold(), []).append(normalized.strip())
    return table


def normalize_mention(name: str, table: Mapping[str, list[str]] | None) -> list[str]:
    key = re.sub(r"\s+", " ", name).strip().casefold()
    if table and key in table:
        return list(table[key])
    return [key]


def extract_document_keywords(
    doc: Document, backend: ChatBackend
) -> list[tuple[str, str]]:
    """Typed keywords from title+abstract; drops types outside the anchor catalog."""
    payload = chat_json(
        backend,
        ChatRequest(
            template_id="doc_keywords",
            bindings={"title": doc.title, "abstract": doc.abstract},
        ),
    )
    keywords: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for row in payload if isinstance(payload, list) else []:
        try:
            name = str(row["keyword"]).strip()
            ktype = str(row["type"]).strip()
        except (KeyError, TypeError):
            continue
        if ktype not in KEYWORD_TYPES:
            logger.warning(
                "doc %s: dropping keyword %r with unknown type %r", doc.id, name, ktype
            )
            continue
        key = (name.casefold(), ktype)
        if name and key not in seen:
            seen.add(key)
            keywords.append((name, ktype))
    if not keywords:
        raise NoKeywords(doc.id)
    return keywords


def evidence_id_for(keyword: str, label: str, description: str) -> str:
    payload = "\x1f".join((keyword.casefold(), label, description.casefold()))
    return "e:" + hashlib.blake2b(payload.encode("utf-8"), digest_size=8).hexdigest()


def extract_evidence(
    unit: TextUnit,
    keyword: str,
    keyword_type: str,
    label: str,
    backend: ChatBackend,
    relation_map: HyperRelationMap,
) -> list[Evidence]:
    if not relation_map.is_legal(keyword_type, label):
        raise IllegalLabelPair(f"({keyword_type!r}, {label!r})")
    payload = chat_json(
        backend,
        ChatRequest(
            template_id="evidence_extract",
            bindings={"keyword": keyword, "label": label, "chunk": unit.content},
        ),
    )
    out = []
    for row in payload if isinstance(payload, list) else []:
        description = re.sub(r"\s+", " ", str(row.get("description", ""))).strip()
        if not description:
            continue
        out.append(
            Evidence(
                id=evidence_id_for(keyword, label, description),
                description=description,
                label=label,
                anchor_keyword=keyword,
                anchor_type=keyword_type,
                doc_id=unit.doc_id,
                chunk_index=unit.chunk_index,
            )
        )
    return out


def extract_entities(
    ev: Evidence,
    entity_types: Sequence[str],
    normalization: Mapping[str, list[str]] | None,
    backend: ChatBackend,
) -> list[tuple[str, str]]:
    """Normalized (name, type) pairs mentioned in the evidence text."""
    payload = chat_json(
        backend,
        ChatRequest(
            template_id="entity_extract",
            bindings={"evidence": ev.description, "types": ", ".join(entity_types)},
        ),
    )
    mentions: list[tuple[str, str]] = []
    seen: set[str] = set()
    allowed = set(entity_types)
    for row in payload if isinstance(payload, list) else []:
        try:
            raw = str(row["name"]).strip()
            etype = str(row["type"]).strip()
        except (KeyError, TypeError):
            continue
        if not raw or etype not in allowed:
            continue
        for name in normalize_mention(raw, normalization):
            if name not in seen:
                seen.add(name)
                mentions.append((name, etype))
    return mentions


def generate_topics(
    entity: Entity,
    evidence_by_id: Mapping[str, Evidence],
    backend: ChatBackend,
    cfg: IngestionConfig,
) -> list[Topic]:
    """One topic per distinct label in the entity's evidence set.

    Oversized groups are summarized batch-wise and the partial summaries
    merged; membership is unaffected by batching.
    """
    by_label: dict[str, list[str]] = {}
    for eid in sorted(entity.evidence_ids):
        by_label.setdefault(evidence_by_id[eid].label, []).append(eid)
    topics = []
    for label in sorted(by_label):
        eids = by_label[label]
        descriptions = [evidence_by_id[eid].description for eid in eids]
        if len(descriptions) <= cfg.batch_size:
            summary = _summarize(entity.name, label, descriptions, backend)
        else:
            partials = [
                _summarize(entity.name, label, descriptions[i : i + cfg.batch_size], backend)
                for i in range(0, len(descriptions), cfg.batch_size)
            ]
            summary = backend.chat(
                ChatRequest(
                    template_id="topic_merge",
                    bindings={
                        "entity": entity.name,
                        "label": label,
                        "summaries": "\n".join(f"- {s}" for s in partials),
                    },
                )
            )
        topics.append(
            Topic(
                id=topic_id_for(entity.id, label),
                description=re.sub(r"\s+", " ", summary).strip(),
                label=label,
                anchor_entity=entity.id,
                evidence_ids=set(eids),
            )
        )
    return topics


def _summarize(
    entity_name: str, label: str, descriptions: Sequence[str], backend: ChatBackend
) -> str:
    return backend.chat(
        ChatRequest(
            template_id="topic_summarize",
            bindings={
                "entity": entity_name,
                "label": label,
                "evidence": "\n".join(f"- {d}" for d in descriptions),
            },
        )
    )


@dataclass
class BuildReport:
    documents_processed: int = 0
    documents_skipped: list[tuple[str, str]] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    usage: dict[str, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "documents_processed": self.documents_processed,
            "documents_skipped": [list(item) for item in self.documents_skipped],
            "counts": dict(self.counts),
            "usage": dict(self.usage),
            "config": dict(self.config),
        }


def _process_document(
    doc: Document,
    cfg: IngestionConfig,
    backend: ChatBackend,
    relation_map: HyperRelationMap,
    entity_types: Sequence[str],
    normalization: Mapping[str, list[str]] | None,
) -> list[tuple[Evidence, list[tuple[str, str]]]]:
    """Everything per-document: split, keywords, evidence, entity mentions."""
    units = split_document(doc, cfg)
    keywords = extract_document_keywords(doc, backend)
    for unit in units:
        unit.keywords = tuple(keywords)

    rows: list[tuple[Evidence, list[tuple[str, str]]]] = []
    seen_ids: set[str] = set()  # overlap windows re-extract; dedup here
    for unit in units:
        for keyword, ktype in unit.keywords:
            for label in relation_map.labels_for(ktype):
                for ev in extract_evidence(unit, keyword, ktype, label, backend, relation_map):
                    if ev.id in seen_ids:
                        continue
                    seen_ids.add(ev.id)
                    mentions = extract_entities(ev, entity_types, normalization, backend)
                    rows.append((ev, mentions))
    return rows


def build_graph(
    docs: Sequence[Document],
    cfg: IngestionConfig,
    backend: ChatBackend,
    normalization: Mapping[str, list[str]] | None = None,
    relation_map: HyperRelationMap | None = None,
    entity_types: Sequence[str] | None = None,
) -> tuple[Hypergraph, BuildReport]:
    if not docs:
        raise ConfigError("corpus is empty")
    relation_map = relation_map or HyperRelationMap.default()
    entity_types = tuple(entity_types or DEFAULT_ENTITY_TYPES)
    graph = Hypergraph(relation_map=relation_map, entity_types=entity_types)
    report = BuildReport(
        config={
            "window": cfg.window,
            "overlap": cfg.overlap,
            "tokenizer": cfg.tokenizer,
            "batch_size": cfg.batch_size,
        }
    )
    usage_before = backend.usage.snapshot()

    def worker(doc: Document):
        return _process_document(doc, cfg, backend, relation_map, entity_types, normalization)

    results: list[list[tuple[Evidence, list[tuple[str, str]]]] | None] = [None] * len(docs)
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        futures = [pool.submit(worker, doc) for doc in docs]
        for i, future in enumerate(futures):
            try:
                results[i] = future.result()
            except (BackendError, NoKeywords, EmptyDocument) as exc:
                reason = f"{type(exc).__name__}: {exc}"
                logger.warning("skipping document %s (%s)", docs[i].id, reason)
                report.documents_skipped.append((docs[i].id, reason))

    # Deterministic global merge, in corpus order.
    for rows in results:
        if rows is None:
            continue
        report.documents_processed += 1
        for ev, mentions in rows:
            if ev.id in graph.evidence:
                continue  # cross-document duplicate statement
            graph.add_evidence(ev)
            for name, etype in mentions:
                mid = entity_id_for(name)
                if mid not in graph.entities:
                    graph.add_entity(Entity(id=mid, name=name, entity_type=etype))
                elif graph.entities[mid].entity_type != etype:
                    logger.debug(
                        "entity %s keeps type %r (saw %r)",
                        mid,
                        graph.entities[mid].entity_type,
                        etype,
                    )
                graph.attach_evidence_to_entity(mid, ev.id)

    entity_ids = sorted(graph.entities)
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        topic_lists = list(
            pool.map(
                lambda mid: generate_topics(graph.entities[mid], graph.evidence, backend, cfg),
                entity_ids,
            )
        )
    for topics in topic_lists:
        for topic in topics:
            graph.add_topic(topic)

    graph.link_all_topics()
    violations = graph.audit()
    if violations:
        raise AuditError(violations)

    after = backend.usage.snapshot()
    report.usage = {key: after[key] - usage_before.get(key, 0) for key in after}
    report.counts = graph.counts()
    return graph, report


def load_corpus(path: str | Path) -> list[Document]:
    """Directory of ``*.json`` documents -> Documents sorted by id."""
    path = Path(path)
    if not path.is_dir():
        raise ConfigError(f"corpus directory not found: {path}")
    docs = []
    for file in sorted(path.glob("*.json")):
        data = json.loads(file.read_text(encoding="utf-8"))
        docs.append(
            Document(
                id=str(data["id"]),
                title=str(data.get("title", "")),
                abstract=str(data.get("abstract", "")),
                body=str(data["body"]),
                lang=str(data.get("lang", "en")),
            )
        )
    docs.sort(key=lambda d: d.id)
    if not docs:
        raise ConfigError(f"no documents in corpus directory: {path}")
    return docs
