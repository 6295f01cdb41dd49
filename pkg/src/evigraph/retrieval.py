"""Query path over a frozen hypergraph.

Two stages: locate topics (search-term extraction, embedding-based entity
linking, seeded random walks over the topic-entity bipartite graph), then
rank evidence (shuffle retained topics into packages, extract query-relevant
features with usefulness scores from each package, and score every candidate
evidence by a usefulness-weighted softmax over its cosine similarity to the
features).  Every random choice derives from one request seed, so identical
inputs produce identical traces.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .backends.base import ChatBackend, ChatRequest, EmbeddingBackend, chat_json
from .errors import (
    BackendError,
    ConfigError,
    EmptyResult,
    IsolatedSeeds,
    NoFeatures,
)
from .graph import BipartiteView, Evidence, Hypergraph, Topic

logger = logging.getLogger(__name__)

PROFILE_NAMES = ("default", "medqa", "nlpec", "cmhd", "dda", "cmb-clin")

SAMPLING_MODES = ("random_walk", "neighbor")
RANKING_MODES = ("attention", "cosine")
TRANSITION_MODES = ("weighted", "uniform")


@dataclass
class RetrievalConfig:
    entities_per_term: int = 3  # n_m
    topics_retained: int = 20  # n_t
    packages: int = 4  # n_p
    walk_length: int = 2  # max entity->topic->entity rounds per walk
    walk_iterations: int = 10_000
    top_k: int = 20
    context_budget: int = 8_000  # words
    sampling: str = "random_walk"
    ranking: str = "attention"
    transition: str = "weighted"

    def __post_init__(self) -> None:
        for name in (
            "entities_per_term",
            "topics_retained",
            "packages",
            "walk_length",
            "walk_iterations",
            "top_k",
            "context_budget",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}")
        if self.ranking not in RANKING_MODES:
            raise ConfigError(f"ranking must be one of {RANKING_MODES}")
        if self.transition not in TRANSITION_MODES:
            raise ConfigError(f"transition must be one of {TRANSITION_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SearchCondition:
    """Task-profile rule text injected into the feature-extraction prompt."""

    name: str
    rules: str

    def __post_init__(self) -> None:
        if not self.rules.strip():
            raise ConfigError("search condition rules must be non-empty")


def load_profile(name: str) -> SearchCondition:
    if name not in PROFILE_NAMES:
        raise ConfigError(f"unknown profile {name!r}; available: {', '.join(PROFILE_NAMES)}")
    text = (
        resources.files("evigraph")
        .joinpath("profiles", f"{name}.txt")
        .read_text(encoding="utf-8")
    )
    return SearchCondition(name=name, rules=text.strip())


@dataclass(frozen=True)
class EvidenceFeature:
    text: str
    usefulness: float
    package_index: int

    def __post_init__(self) -> None:
        if not (0 <= self.usefulness <= 10):
            raise ValueError("usefulness must be within [0, 10]")


@dataclass
class RankedEvidence:
    id: str
    score: float
    description: str
    label: str
    anchor_keyword: str
    doc_id: str
    chunk_index: int


@dataclass
class RetrievalResult:
    query: str
    profile: str
    search_condition: str
    seed: int
    config: dict
    terms: list[str]
    linked_entities: list[str]
    topic_scores: dict[str, float]
    retained_topics: list[str]
    packages: list[list[str]]
    features: list[EvidenceFeature]
    evidence: list[RankedEvidence]
    truncation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "profile": self.profile,
            "search_condition": self.search_condition,
            "seed": self.seed,
            "config": self.config,
            "terms": list(self.terms),
            "linked_entities": list(self.linked_entities),
            "topic_scores": dict(self.topic_scores),
            "retained_topics": list(self.retained_topics),
            "packages": [list(p) for p in self.packages],
            "features": [
                {"text": f.text, "usefulness": f.usefulness, "package_index": f.package_index}
                for f in self.features
            ],
            "evidence": [asdict(e) for e in self.evidence],
            "truncation": dict(self.truncation),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)


def derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{tag}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# --- stage 1: topic locating --------------------------------------------------


def extract_search_words(query: str, backend: ChatBackend) -> list[str]:
    """At least five short terms when the model cooperates; degrades with a warning."""
    if not query.strip():
        raise ValueError("query must be non-empty")

    def ask() -> list[str]:
        payload = chat_json(
            backend, ChatRequest(template_id="search_words", bindings={"query": query})
        )
        terms = []
        seen = set()
        for item in payload if isinstance(payload, list) else []:
            term = re.sub(r"\s+", " ", str(item)).strip()
            key = term.casefold()
            if term and key not in seen:
                seen.add(key)
                terms.append(term)
        return terms

    terms = ask()
    if len(terms) < 5:
        logger.warning("only %d search terms; reprompting once", len(terms))
        retry = ask()
        if len(retry) > len(terms):
            terms = retry
        if len(terms) < 5:
            logger.warning("proceeding with %d search terms (degraded)", len(terms))
    return terms


class EntityIndex:
    """Entity-name embeddings for cosine linking, precomputed once per graph."""

    def __init__(self, graph: Hypergraph, embedder: EmbeddingBackend):
        self.ids: tuple[str, ...] = tuple(sorted(graph.entities))
        self.names = tuple(graph.entities[mid].name for mid in self.ids)
        if self.ids:
            self.matrix = np.stack([embedder.embed(name) for name in self.names])
        else:
            self.matrix = np.zeros((0, 1))
        self._embedder = embedder

    def top_entities(self, term: str, n: int) -> list[tuple[str, float]]:
        """Top-n entity ids by cosine; ties broken by ascending id."""
        if not self.ids:
            return []
        vec = self._embedder.embed(term)
        cos = self.matrix @ vec
        order = sorted(range(len(self.ids)), key=lambda i: (-cos[i], self.ids[i]))
        return [(self.ids[i], float(cos[i])) for i in order[:n]]


def link_entities(
    terms: Sequence[str], index: EntityIndex, entities_per_term: int
) -> tuple[str, ...]:
    """Union of per-term top matches, as a sorted tuple of entity ids."""
    linked: set[str] = set()
    for term in terms:
        linked.update(mid for mid, _ in index.top_entities(term, entities_per_term))
    return tuple(sorted(linked))


def random_walk_topics(
    view: BipartiteView,
    seed_entities: Sequence[str],
    walk_length: int,
    walk_iterations: int,
    seed: int,
    transition: str = "weighted",
) -> dict[str, int]:
    """Per-topic count of walks that visited it at least once.

    Each iteration starts at a uniformly chosen seed entity and performs up
    to ``walk_length`` entity->topic->entity rounds, picking each hop with
    probability proportional to edge weight (or uniformly).  A topic at
    bipartite distance > 2*walk_length from every seed can never be counted.
    """
    if not seed_entities:
        raise ValueError("seed entity set is empty")
    if walk_length < 1:
        raise ValueError("walk_length must be >= 1")
    seeds = tuple(sorted(set(seed_entities)))
    if not any(view.degree(mid) for mid in seeds):
        raise IsolatedSeeds(f"none of {len(seeds)} seed entities has edges")
    uniform = transition == "uniform"
    rng = random.Random(seed)
    freq: dict[str, int] = {}
    for _ in range(walk_iterations):
        node = seeds[rng.randrange(len(seeds))]
        visited: set[str] = set()
        for _ in range(walk_length):
            topic = view.pick_neighbor(node, rng.random(), uniform)
            if topic is None:
                break
            visited.add(topic)
            entity = view.pick_neighbor(topic, rng.random(), uniform)
            if entity is None:
                break
            node = entity
        for topic in visited:
            freq[topic] = freq.get(topic, 0) + 1
    return freq


def neighbor_topics(
    view: BipartiteView, seed_entities: Sequence[str]
) -> dict[str, float]:
    """One-hop alternative to walking: topic -> sum of weights to the seeds."""
    scores: dict[str, float] = {}
    for mid in sorted(set(seed_entities)):
        for tid, weight in view.neighbors(mid):
            scores[tid] = scores.get(tid, 0.0) + weight
    return scores


def select_topics(scores: Mapping[str, float], topics_retained: int) -> list[str]:
    """Top-n topic ids by score, ties by ascending id."""
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [tid for tid, _ in ranked[:topics_retained]]


def package_topics(
    topic_ids: Sequence[str], packages: int, seed: int
) -> list[list[str]]:
    """Seeded shuffle, then a contiguous split into near-equal packages."""
    if not topic_ids:
        raise ValueError("no topics to package")
    shuffled = list(topic_ids)
    random.Random(seed).shuffle(shuffled)
    base, extra = divmod(len(shuffled), packages)
    out = []
    start = 0
    for i in range(packages):
        size = base + (1 if i < extra else 0)
        if size == 0:
            continue
        out.append(shuffled[start : start + size])
        start += size
    return out


# --- stage 2: evidence ranking -------------------------------------------------


def render_package(topics: Sequence[Topic]) -> str:
    lines = []
    for topic in topics:
        description = re.sub(r"\s+", " ", topic.description).strip()
        lines.append(f"- [{topic.id}] {description}")
    return "\n".join(lines)


def extract_features(
    query: str,
    packages: Sequence[Sequence[Topic]],
    condition: SearchCondition,
    backend: ChatBackend,
    max_in_flight: int = 4,
) -> list[EvidenceFeature]:
    """Query-relevant aspects with usefulness scores, per package.

    Packages are independent and processed concurrently; a failed package is
    skipped with a warning rather than failing the query.
    """

    def one(package_index: int) -> list[EvidenceFeature]:
        request = ChatRequest(
            template_id="feature_extract",
            bindings={
                "query": query,
                "rules": condition.rules,
                "topics": render_package(packages[package_index]),
            },
        )
        payload = chat_json(backend, request)
        features = []
        for row in payload if isinstance(payload, list) else []:
            try:
                text = re.sub(r"\s+", " ", str(row["feature"])).strip()
                usefulness = float(row["usefulness"])
            except (KeyError, TypeError, ValueError):
                logger.warning("package %d: dropping malformed feature row", package_index)
                continue
            if not text:
                continue
            if not (0 <= usefulness <= 10):
                clamped = min(10.0, max(0.0, usefulness))
                logger.warning(
                    "package %d: usefulness %.3g clamped to %.3g",
                    package_index,
                    usefulness,
                    clamped,
                )
                usefulness = clamped
            features.append(EvidenceFeature(text, usefulness, package_index))
        return features

    results: list[list[EvidenceFeature]] = [[] for _ in packages]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = {i: pool.submit(one, i) for i in range(len(packages))}
        for i, future in futures.items():
            try:
                results[i] = future.result()
            except BackendError as exc:
                logger.warning("package %d failed (%s); skipped", i, exc)
    return [feature for bundle in results for feature in bundle]


def attention_scores(cosines: np.ndarray, usefulness: np.ndarray) -> np.ndarray:
    """Row-wise softmax over cosines, weighted by feature usefulness.

    ``cosines`` is (n_evidence, n_features).  Each output lies in
    [min(usefulness), max(usefulness)] because softmax weights are convex.
    """
    if cosines.ndim != 2 or cosines.shape[1] != usefulness.shape[0]:
        raise ValueError("cosine matrix and usefulness vector disagree")
    if cosines.shape[1] == 0:
        raise NoFeatures("no features to score against")
    shifted = cosines - cosines.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ usefulness


def score_evidence(
    evidence: Evidence | str,
    features: Sequence[EvidenceFeature],
    embedder: EmbeddingBackend,
) -> float:
    """Usefulness-weighted attention score of one evidence item."""
    if not features:
        raise NoFeatures("cannot score without features")
    text = evidence.description if isinstance(evidence, Evidence) else evidence
    vec = embedder.embed(text)
    feature_matrix = np.stack([embedder.embed(f.text) for f in features])
    cosines = (feature_matrix @ vec)[np.newaxis, :]
    usefulness = np.array([f.usefulness for f in features], dtype=float)
    return float(attention_scores(cosines, usefulness)[0])


# --- composition ---------------------------------------------------------------


def retrieve(
    query: str,
    graph: Hypergraph,
    cfg: RetrievalConfig,
    condition: SearchCondition,
    chat_backend: ChatBackend,
    embedder: EmbeddingBackend,
    seed: int = 0,
    entity_index: EntityIndex | None = None,
    view: BipartiteView | None = None,
) -> RetrievalResult:
    """Full two-stage retrieval; raises EmptyResult with a machine-readable reason."""
    index = entity_index or EntityIndex(graph, embedder)
    view = view or graph.bipartite_view()

    terms = extract_search_words(query, chat_backend)
    linked = link_entities(terms, index, cfg.entities_per_term)
    if not linked:
        raise EmptyResult("no_entities_linked")

    if cfg.sampling == "random_walk":
        try:
            raw_scores: Mapping[str, float] = random_walk_topics(
                view,
                linked,
                cfg.walk_length,
                cfg.walk_iterations,
                derive_seed(seed, "walk"),
                cfg.transition,
            )
        except IsolatedSeeds:
            raise EmptyResult("no_topics_visited") from None
    else:
        raw_scores = neighbor_topics(view, linked)
    if not raw_scores:
        raise EmptyResult("no_topics_visited")

    retained = select_topics(raw_scores, cfg.topics_retained)
    package_ids = package_topics(retained, cfg.packages, derive_seed(seed, "package"))
    package_objs = [[graph.topics[tid] for tid in pkg] for pkg in package_ids]
    features = extract_features(query, package_objs, condition, chat_backend)
    if not features:
        raise EmptyResult("no_features")

    candidate_ids = sorted(
        {eid for tid in retained for eid in graph.topics[tid].evidence_ids}
    )
    candidates = [graph.evidence[eid] for eid in candidate_ids]
    evidence_matrix = np.stack([embedder.embed(ev.description) for ev in candidates])

    if cfg.ranking == "attention":
        feature_matrix = np.stack([embedder.embed(f.text) for f in features])
        usefulness = np.array([f.usefulness for f in features], dtype=float)
        scores = attention_scores(evidence_matrix @ feature_matrix.T, usefulness)
    else:
        query_vec = embedder.embed(query)
        scores = evidence_matrix @ query_vec

    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidate_ids[i]))
    ranked_all = [
        RankedEvidence(
            id=candidates[i].id,
            score=float(scores[i]),
            description=candidates[i].description,
            label=candidates[i].label,
            anchor_keyword=candidates[i].anchor_keyword,
            doc_id=candidates[i].doc_id,
            chunk_index=candidates[i].chunk_index,
        )
        for i in order
    ]
    top = ranked_all[: cfg.top_k]
    kept: list[RankedEvidence] = []
    words = 0
    for item in top:
        cost = len(item.description.split())
        if words + cost > cfg.context_budget:
            break  # drop the whole tail; items are never split
        words += cost
        kept.append(item)
    dropped_by_budget = len(top) - len(kept)
    truncation = {
        "candidates": len(candidates),
        "dropped_by_top_k": max(0, len(ranked_all) - cfg.top_k),
        "dropped_by_budget": dropped_by_budget,
        "kept": len(kept),
        "words": words,
    }

    return RetrievalResult(
        query=query,
        profile=condition.name,
        search_condition=condition.rules,
        seed=seed,
        config=cfg.to_dict(),
        terms=list(terms),
        linked_entities=list(linked),
        topic_scores={tid: float(v) for tid, v in sorted(raw_scores.items())},
        retained_topics=list(retained),
        packages=[list(p) for p in package_ids],
        features=features,
        evidence=kept,
        truncation=truncation,
    )


def result_context_text(result: RetrievalResult) -> str:
    """Flatten ranked evidence into the context block handed to a generator."""
    return "\n".join(f"- {item.description}" for item in result.evidence)
