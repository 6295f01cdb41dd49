"""Prompt template catalog.

Each template names its slots; requests are validated against them before
any transport is touched.  All structured outputs are requested as JSON so
responses can be parsed strictly.
"""

from __future__ import annotations

from dataclasses import dataclass
from string import Formatter


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    user: str
    system: str = ""

    @property
    def slots(self) -> frozenset[str]:
        names = {
            name
            for _, name, _, _ in Formatter().parse(self.user)
            if name
        }
        if self.system:
            names |= {
                name
                for _, name, _, _ in Formatter().parse(self.system)
                if name
            }
        return frozenset(names)

    def render(self, bindings: dict[str, str]) -> tuple[str, str]:
        return (
            self.system.format(**bindings) if self.system else "",
            self.user.format(**bindings),
        )


_TEMPLATES = [
    PromptTemplate(
        id="doc_keywords",
        system="You identify the main drugs and diseases a medical document is about.",
        user=(
            "Title: {title}\n"
            "Abstract: {abstract}\n\n"
            "List the core drugs and diseases this document is about. Respond with a "
            'JSON array of objects, each {{"keyword": string, "type": "drug" or '
            '"disease"}}. JSON only.'
        ),
    ),
    PromptTemplate(
        id="evidence_extract",
        user=(
            "You are reading an excerpt from a medical document.\n"
            "Subject keyword: {keyword}\n"
            "Relation type: {label}\n\n"
            "Excerpt:\n{chunk}\n\n"
            "Extract every self-contained statement about the subject keyword that "
            'expresses a "{label}" relation. Copy the facts faithfully; do not add '
            "outside knowledge. Respond with a JSON array of objects "
            '{{"description": string}}; use [] when the excerpt has nothing '
            "relevant. JSON only."
        ),
    ),
    PromptTemplate(
        id="entity_extract",
        user=(
            "Statement: {evidence}\n"
            "Entity types: {types}\n\n"
            "List every medical entity in the statement whose type is in the list. "
            "Use standard vocabulary names. Respond with a JSON array of "
            '{{"name": string, "type": string}}. JSON only.'
        ),
    ),
    PromptTemplate(
        id="topic_summarize",
        user=(
            "Write a concise summary of what the following statements say about "
            "{entity} regarding {label}.\n"
            "Statements:\n{evidence}\n\n"
            "Respond with the summary text only."
        ),
    ),
    PromptTemplate(
        id="topic_merge",
        user=(
            "Combine the following partial summaries about {entity} regarding "
            "{label} into one concise summary.\n"
            "Partial summaries:\n{summaries}\n\n"
            "Respond with the summary text only."
        ),
    ),
    PromptTemplate(
        id="search_words",
        user=(
            "Query: {query}\n\n"
            "Produce at least five short search terms covering the drugs, diseases, "
            "symptoms and other medical concepts needed to answer the query. "
            "Respond with a JSON array of strings. JSON only."
        ),
    ),
    PromptTemplate(
        id="feature_extract",
        user=(
            "Query: {query}\n\n"
            "Rules: {rules}\n\n"
            "Topic summaries:\n{topics}\n\n"
            "From these topics, extract the aspects most relevant to the query, "
            "following the rules. For each aspect give a usefulness score from 0 to "
            '10. Respond with a JSON array of {{"feature": string, "usefulness": '
            "number}}. Use [] if nothing is relevant. JSON only."
        ),
    ),
    PromptTemplate(
        id="judge_keypoints",
        user=(
            "Question: {question}\n"
            "Key points of the reference answer:\n{keypoints}\n\n"
            "Candidate answer:\n{candidate}\n\n"
            "For each key point, state whether the candidate covers it and whether "
            "the candidate contradicts it. Respond with a JSON array of "
            '{{"keypoint": string, "covered": bool, "contradicted": bool}}. '
            "JSON only."
        ),
    ),
    PromptTemplate(
        id="judge_compare_recall",
        user=(
            "Question: {question}\n"
            "Reference material: {reference}\n\n"
            "Passage A:\n{answer_a}\n\n"
            "Passage B:\n{answer_b}\n\n"
            "Which passage covers more of the information needed to answer the "
            'question? Respond with a JSON object {{"winner": "A" | "B" | "tie"}}. '
            "JSON only."
        ),
    ),
    PromptTemplate(
        id="judge_compare_precision",
        user=(
            "Question: {question}\n"
            "Reference material: {reference}\n\n"
            "Passage A:\n{answer_a}\n\n"
            "Passage B:\n{answer_b}\n\n"
            "Which passage contains less irrelevant or misleading content? Respond "
            'with a JSON object {{"winner": "A" | "B" | "tie"}}. JSON only.'
        ),
    ),
    PromptTemplate(
        id="judge_usefulness",
        user=(
            "Question: {question}\n\n"
            "Retrieved material:\n{candidate}\n\n"
            "Rate from 0 to 10 how useful the material is for answering the "
            'question. Respond with a JSON object {{"score": integer}}. JSON only.'
        ),
    ),
]

TEMPLATES: dict[str, PromptTemplate] = {t.id: t for t in _TEMPLATES}


def get_template(template_id: str) -> PromptTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown prompt template {template_id!r}") from None
