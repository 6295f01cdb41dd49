"""Flat-chunk vector retrieval baseline.

Shares the hypergraph pipeline's document splitter so comparisons use the
same underlying text. The scan is exact (no approximate index): desk-scale
corpora are small and evaluation needs exactness.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends.base import EmbeddingBackend
from .errors import ConfigError, CorruptFile, VersionMismatch
from .graph import FILE_VERSION
from .ingest import Document, IngestionConfig, split_document

logger = logging.getLogger(__name__)


@dataclass
class ChunkRecord:
    doc_id: str
    chunk_index: int
    text: str
    vector: np.ndarray


class ChunkIndex:
    """Immutable list of embedded chunks, ordered by (doc id, chunk index)."""

    def __init__(self, records: Sequence[ChunkRecord]):
        self.records = sorted(records, key=lambda r: (r.doc_id, r.chunk_index))
        dims = {r.vector.shape[0] for r in self.records}
        if len(dims) > 1:
            raise ValueError(f"mixed embedding dimensions: {sorted(dims)}")
        self.dimensions = dims.pop() if dims else 0
        self._matrix = (
            np.stack([r.vector for r in self.records])
            if self.records
            else np.zeros((0, 1))
        )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            meta = {
                "kind": "meta",
                "version": FILE_VERSION,
                "counts": {"chunks": len(self.records)},
                "dimensions": self.dimensions,
            }
            fh.write(_dump(meta))
            for record in self.records:
                fh.write(
                    _dump(
                        {
                            "kind": "chunk",
                            "doc_id": record.doc_id,
                            "chunk_index": record.chunk_index,
                            "text": record.text,
                            "embedding": record.vector.tolist(),
                        }
                    )
                )

    @classmethod
    def load(cls, path: str | Path) -> "ChunkIndex":
        path = Path(path)
        records = []
        expected = -1
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
                            f"file version {record.get('version')!r}, supported {FILE_VERSION}"
                        )
                    expected = int(record["counts"]["chunks"])
                    continue
                if kind != "chunk":
                    raise VersionMismatch(f"unknown record kind {kind!r}")
                try:
                    vector = np.asarray(record["embedding"], dtype=float)
                    records.append(
                        ChunkRecord(
                            doc_id=record["doc_id"],
                            chunk_index=int(record["chunk_index"]),
                            text=record["text"],
                            vector=vector,
                        )
                    )
                except (KeyError, TypeError) as exc:
                    raise CorruptFile(f"bad chunk record ({exc})", lineno) from exc
        if expected < 0:
            raise CorruptFile("empty file", max(lineno, 1))
        if len(records) != expected:
            raise CorruptFile(
                f"manifest says {expected} chunks, found {len(records)}", lineno
            )
        return cls(records)


def index_corpus(
    docs: Sequence[Document], cfg: IngestionConfig, embedder: EmbeddingBackend
) -> ChunkIndex:
    if not docs:
        raise ConfigError("corpus is empty")
    records = []
    for doc in docs:
        for unit in split_document(doc, cfg):
            records.append(
                ChunkRecord(
                    doc_id=unit.doc_id,
                    chunk_index=unit.chunk_index,
                    text=unit.content,
                    vector=embedder.embed(unit.content),
                )
            )
    return ChunkIndex(records)


def query_topk(
    query: str,
    index: ChunkIndex,
    embedder: EmbeddingBackend,
    k: int,
    context_budget: int = 8_000,
) -> list[tuple[ChunkRecord, float]]:
    """Exact top-k by cosine, ties by (doc id, chunk index), budget-truncated."""
    if not len(index):
        raise ConfigError("index is empty")
    vec = embedder.embed(query)
    cosines = index.matrix @ vec
    order = sorted(
        range(len(index)),
        key=lambda i: (-cosines[i], index.records[i].doc_id, index.records[i].chunk_index),
    )
    out: list[tuple[ChunkRecord, float]] = []
    words = 0
    for i in order[:k]:
        record = index.records[i]
        cost = len(record.text.split())
        if words + cost > context_budget:
            continue
        words += cost
        out.append((record, float(cosines[i])))
    return out


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n"
