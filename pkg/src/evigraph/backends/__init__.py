from .base import (
    JUDGE_RUBRICS,
    BackendUsage,
    ChatBackend,
    ChatRequest,
    CompareVerdict,
    EmbeddingBackend,
    JudgeBackend,
    KeypointJudgement,
    approx_tokens,
    call_with_retries,
    chat_json,
)
from .http import HttpChatBackend, HttpEmbeddingBackend, LlmJudge
from .mock import (
    LexiconScanner,
    MockChatBackend,
    MockEmbedder,
    MockJudge,
    ScriptedChatBackend,
    load_lexicon,
    parse_evidence_markers,
    parse_keyword_markers,
)
from .prompts import TEMPLATES, PromptTemplate, get_template

__all__ = [
    "JUDGE_RUBRICS",
    "BackendUsage",
    "ChatBackend",
    "ChatRequest",
    "CompareVerdict",
    "EmbeddingBackend",
    "JudgeBackend",
    "KeypointJudgement",
    "approx_tokens",
    "call_with_retries",
    "chat_json",
    "HttpChatBackend",
    "HttpEmbeddingBackend",
    "LlmJudge",
    "LexiconScanner",
    "MockChatBackend",
    "MockEmbedder",
    "MockJudge",
    "ScriptedChatBackend",
    "load_lexicon",
    "parse_evidence_markers",
    "parse_keyword_markers",
    "TEMPLATES",
    "PromptTemplate",
    "get_template",
]
