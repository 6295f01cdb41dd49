"""Keyword-type/label catalogs and the legality map between them.

Evidence is typed by a relation label, and every piece of evidence is
anchored to a keyword of a known type.  Not every (keyword type, label)
combination is meaningful, so extraction and insertion are restricted to
the pairs declared legal here.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .errors import ConfigError

# Default legality map: which relation labels make sense for which kind of
# anchor keyword.
DEFAULT_RELATION_MAP: dict[str, tuple[str, ...]] = {
    "disease": ("symptoms", "causes", "diagnosis", "treatment", "prognosis"),
    "drug": (
        "treatment",
        "usage",
        "adverse reactions",
        "contraindications",
        "drug interactions",
        "precautions",
    ),
}

# Entity types recognised during entity extraction.  Keyword extraction is
# restricted to drug/disease, but entities found inside evidence text may be
# of any of these types.
DEFAULT_ENTITY_TYPES: tuple[str, ...] = (
    "disease",
    "drug",
    "symptom",
    "procedure",
    "test",
    "population",
)

# Keyword types eligible as evidence anchors.
KEYWORD_TYPES: tuple[str, ...] = ("disease", "drug")


class HyperRelationMap:
    """Legal (keyword type, label) pairs governing evidence extraction."""

    def __init__(self, mapping: Mapping[str, Iterable[str]]):
        if not mapping:
            raise ConfigError("relation map must be non-empty")
        self._map: dict[str, tuple[str, ...]] = {
            ktype: tuple(labels) for ktype, labels in mapping.items()
        }
        for ktype, labels in self._map.items():
            if not labels:
                raise ConfigError(f"relation map entry {ktype!r} has no labels")

    @classmethod
    def default(cls) -> "HyperRelationMap":
        return cls(DEFAULT_RELATION_MAP)

    @property
    def keyword_types(self) -> tuple[str, ...]:
        return tuple(sorted(self._map))

    @property
    def labels(self) -> tuple[str, ...]:
        """The full label catalog (sorted union over keyword types)."""
        out: set[str] = set()
        for labels in self._map.values():
            out.update(labels)
        return tuple(sorted(out))

    def labels_for(self, keyword_type: str) -> tuple[str, ...]:
        return self._map.get(keyword_type, ())

    def is_legal(self, keyword_type: str, label: str) -> bool:
        return label in self._map.get(keyword_type, ())

    def legal_pairs(self) -> list[tuple[str, str]]:
        return [
            (ktype, label)
            for ktype in sorted(self._map)
            for label in self._map[ktype]
        ]

    def to_dict(self) -> dict[str, list[str]]:
        return {ktype: list(labels) for ktype, labels in sorted(self._map.items())}
