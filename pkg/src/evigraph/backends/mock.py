"""Deterministic offline backends driven by fixture annotations.

Annotated corpora carry two inline marker forms inside document text:

    [[kw amoxicillin : drug]]
    [[ev amoxicillin | treatment | Amoxicillin resolves most episodes ... ]]

The mock chat backend answers extraction prompts by parsing those markers
out of whatever text was bound into the prompt, so the fixture file itself
is the ground truth.  Entity extraction and search-term extraction scan the
bound text against a fixture lexicon (term -> entity type) instead of using
markers, which keeps evidence descriptions natural.  Everything is a pure
function of (template id, bindings, construction-time fixtures), so full
pipeline runs are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..errors import BadResponse
from .base import (
    BackendUsage,
    ChatRequest,
    CompareVerdict,
    KeypointJudgement,
    approx_tokens,
)

KW_MARKER = re.compile(r"\[\[kw\s+(.+?)\s*\]\]")
EV_MARKER = re.compile(r"\[\[ev\s+(.+?)\s*\]\]")
PACKAGE_LINE = re.compile(r"^- \[(?P<tid>[^\]]+)\] (?P<desc>.+)$", re.MULTILINE)

_STOPWORDS = frozenset(
    """a an and are as at be been by can do does for from has have how in is it its
    may more most of on or should that the their this to was were what when which
    who with would you your""".split()
)


def normalize_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def content_words(text: str) -> set[str]:
    words = re.findall(r"[a-z0-9]+", text.lower())
    return {w for w in words if len(w) >= 3 and w not in _STOPWORDS}


def parse_keyword_markers(text: str) -> list[tuple[str, str]]:
    """All ``[[kw name : type]]`` markers, in order of appearance."""
    out = []
    for inner in KW_MARKER.findall(normalize_ws(text)):
        if " : " not in inner:
            continue
        name, ktype = inner.rsplit(" : ", 1)
        out.append((normalize_ws(name), ktype.strip()))
    return out


def parse_evidence_markers(text: str) -> list[tuple[str, str, str]]:
    """All ``[[ev keyword | label | description]]`` markers, in order."""
    out = []
    for inner in EV_MARKER.findall(normalize_ws(text)):
        fields = inner.split(" | ")
        if len(fields) != 3:
            continue
        keyword, label, description = (normalize_ws(f) for f in fields)
        out.append((keyword, label, description))
    return out


def load_lexicon(path: str | Path) -> dict[str, str]:
    """TSV ``term<TAB>type`` -> {lowercased term: type}."""
    lexicon: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        term, _, ttype = line.partition("\t")
        lexicon[term.strip().lower()] = ttype.strip()
    return lexicon


class LexiconScanner:
    """Whole-word, case-insensitive scan for fixture lexicon terms.

    Matches are independent: overlapping lexicon terms would each match, so
    fixture lexicons are authored substring-free.
    """

    def __init__(self, lexicon: Mapping[str, str]):
        self.lexicon = {term.lower(): ttype for term, ttype in lexicon.items()}
        self._patterns = [
            (term, re.compile(rf"\b{re.escape(term)}\b", re.IGNORECASE))
            for term in sorted(self.lexicon, key=lambda t: (-len(t), t))
        ]

    def scan(self, text: str) -> list[tuple[str, str]]:
        """(term, type) pairs ordered by first appearance, deduplicated."""
        found: list[tuple[int, str]] = []
        for term, pattern in self._patterns:
            match = pattern.search(text)
            if match:
                found.append((match.start(), term))
        found.sort()
        return [(term, self.lexicon[term]) for _, term in found]


class MockChatBackend:
    """Fixture-driven chat backend; see the module docstring."""

    def __init__(self, lexicon: Mapping[str, str] | None = None, seed: int = 0):
        self.seed = seed
        self.scanner = LexiconScanner(lexicon or {})
        self.usage = BackendUsage()

    def chat(self, request: ChatRequest) -> str:
        system, user = request.render()
        handler = getattr(self, f"_handle_{request.template_id}", None)
        if handler is None:
            raise BadResponse(f"mock has no handler for template {request.template_id!r}")
        response = handler(request.bindings)
        self.usage.add(approx_tokens(system) + approx_tokens(user), approx_tokens(response))
        return response

    # --- construction-side templates ---------------------------------------

    def _handle_doc_keywords(self, b: Mapping[str, str]) -> str:
        markers = parse_keyword_markers(b["title"] + "\n" + b["abstract"])
        return json.dumps([{"keyword": name, "type": ktype} for name, ktype in markers])

    def _handle_evidence_extract(self, b: Mapping[str, str]) -> str:
        want_kw = b["keyword"].casefold()
        want_label = b["label"]
        rows = [
            {"description": desc}
            for keyword, label, desc in parse_evidence_markers(b["chunk"])
            if keyword.casefold() == want_kw and label == want_label
        ]
        return json.dumps(rows)

    def _handle_entity_extract(self, b: Mapping[str, str]) -> str:
        allowed = {t.strip() for t in b["types"].split(",")}
        rows = [
            {"name": term, "type": ttype}
            for term, ttype in self.scanner.scan(b["evidence"])
            if ttype in allowed
        ]
        return json.dumps(rows)

    def _handle_topic_summarize(self, b: Mapping[str, str]) -> str:
        snippets = _statement_snippets(b["evidence"])
        return _compose_summary(b["entity"], b["label"], snippets)

    def _handle_topic_merge(self, b: Mapping[str, str]) -> str:
        parts = []
        prefix = f"{b['entity']} {b['label']} overview:"
        for line in b["summaries"].splitlines():
            line = line.strip().removeprefix("- ").strip()
            if line.startswith(prefix):
                line = line[len(prefix):].strip()
            if line:
                parts.append(line)
        return _compose_summary(b["entity"], b["label"], parts)

    # --- query-side templates ------------------------------------------------

    def _handle_search_words(self, b: Mapping[str, str]) -> str:
        # Lexicon hits only: fabricating extra terms from arbitrary query
        # words would link unrelated entities and poison fixture retrieval.
        terms = [term for term, _ in self.scanner.scan(b["query"])]
        return json.dumps(terms)

    def _handle_feature_extract(self, b: Mapping[str, str]) -> str:
        query_words = content_words(b["query"])
        rows = []
        for match in PACKAGE_LINE.finditer(b["topics"]):
            desc = match.group("desc").strip()
            overlap = len(query_words & content_words(desc))
            usefulness = min(10, 2 * overlap)
            if usefulness > 0:
                rows.append({"feature": desc, "usefulness": usefulness})
        return json.dumps(rows)


def _statement_snippets(block: str, width: int = 12) -> list[str]:
    out = []
    for line in block.splitlines():
        line = line.strip().removeprefix("- ").strip()
        if line:
            out.append(" ".join(line.split()[:width]))
    return out


def _compose_summary(entity: str, label: str, parts: Iterable[str], cap: int = 120) -> str:
    body = " ; ".join(parts)
    words = f"{entity} {label} overview: {body}".split()
    return " ".join(words[:cap])


class MockEmbedder:
    """Seeded feature hashing of word 1/2-grams onto the unit sphere.

    Texts sharing vocabulary share hash buckets, so cosine geometry is
    non-degenerate: synonym-ish strings score high, unrelated strings hover
    near zero.  Identical text always embeds identically (cached).
    """

    def __init__(self, dimensions: int = 256, seed: int = 0):
        self.dimensions = dimensions
        self.seed = seed
        self._key = seed.to_bytes(8, "little", signed=True)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.usage = BackendUsage()

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        vec = np.zeros(self.dimensions)
        for gram in self._grams(text):
            digest = hashlib.blake2b(
                gram.encode("utf-8"), digest_size=8, key=self._key
            ).digest()
            h = int.from_bytes(digest, "little")
            idx = h % self.dimensions
            sign = 1.0 if (h >> 32) & 1 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # all-punctuation input: fall back to a stable one-hot
            vec[0] = 1.0
            norm = 1.0
        vec = vec / norm
        vec.setflags(write=False)
        with self._lock:
            self._cache[text] = vec
        self.usage.add(approx_tokens(text), 0)
        return vec

    @staticmethod
    def _grams(text: str) -> list[str]:
        words = re.findall(r"[a-z0-9]+", text.lower())
        grams = list(words)
        grams.extend(f"{a} {b}" for a, b in zip(words, words[1:]))
        return grams


class MockJudge:
    """Substring/negation matching against fixture annotations.

    ``reference`` for the compare rubrics is a JSON object
    ``{"gold": [...], "noise": [...]}``; for keypoint coverage it is the
    keypoint list, one per line.  Compare rubrics take ``candidate`` as an
    (answer_a, answer_b) pair.
    """

    def judge(self, question: str, reference: str, candidate, rubric: str):
        if rubric == "keypoint-coverage":
            return self._keypoints(reference, candidate)
        if rubric == "recall-compare":
            return self._compare(reference, candidate, axis="gold")
        if rubric == "precision-compare":
            return self._compare(reference, candidate, axis="noise")
        if rubric == "usefulness-0-10":
            return self._usefulness(question, candidate)
        raise ValueError(f"unknown rubric {rubric!r}")

    @staticmethod
    def _keypoints(reference: str, candidate: str) -> list[KeypointJudgement]:
        text = normalize_ws(candidate).casefold()
        verdicts = []
        for line in reference.splitlines():
            kp = normalize_ws(line.removeprefix("- "))
            if not kp:
                continue
            key = kp.casefold()
            covered = key in text
            contradicted = f"not {key}" in text
            verdicts.append(KeypointJudgement(kp, covered, contradicted))
        return verdicts

    @staticmethod
    def _compare(reference: str, candidate, axis: str) -> CompareVerdict:
        a_text, b_text = candidate
        try:
            ref = json.loads(reference)
        except json.JSONDecodeError:
            ref = {"gold": [reference], "noise": []}
        items = ref.get(axis, [])
        a_norm = normalize_ws(a_text).casefold()
        b_norm = normalize_ws(b_text).casefold()
        a_hits = sum(1 for item in items if normalize_ws(item).casefold() in a_norm)
        b_hits = sum(1 for item in items if normalize_ws(item).casefold() in b_norm)
        if axis == "noise":
            a_hits, b_hits = -a_hits, -b_hits
        if a_hits > b_hits:
            return CompareVerdict("win")
        if a_hits < b_hits:
            return CompareVerdict("loss")
        return CompareVerdict("tie")

    @staticmethod
    def _usefulness(question: str, candidate: str) -> int:
        if not candidate.strip():
            return 0
        return min(10, len(content_words(question) & content_words(candidate)))


class ScriptedChatBackend:
    """Replays a fixed list of responses; for transcript-style tests."""

    def __init__(self, responses: Iterable[str]):
        self._responses = list(responses)
        self._next = 0
        self.requests: list[ChatRequest] = []
        self.usage = BackendUsage()

    def chat(self, request: ChatRequest) -> str:
        if self._next >= len(self._responses):
            raise BadResponse("scripted backend exhausted")
        self.requests.append(request)
        response = self._responses[self._next]
        self._next += 1
        system, user = request.render()
        self.usage.add(approx_tokens(system) + approx_tokens(user), approx_tokens(response))
        return response
