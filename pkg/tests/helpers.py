"""Shared builders for randomized graph tests."""

from __future__ import annotations

import random

from evigraph.graph import Entity, Evidence, Hypergraph, Topic, entity_id_for, topic_id_for

DRUG_LABELS = ("treatment", "usage", "adverse reactions", "contraindications",
               "drug interactions", "precautions")


def random_hypergraph(rng: random.Random, max_evidence: int = 50) -> Hypergraph:
    """A structurally valid random graph built only through module operations."""
    graph = Hypergraph()
    n_entities = rng.randint(1, 12)
    names = [f"entity {i}" for i in range(n_entities)]
    for name in names:
        graph.add_entity(Entity(id=entity_id_for(name), name=name, entity_type="drug"))

    n_evidence = rng.randint(1, max_evidence)
    for i in range(n_evidence):
        label = rng.choice(DRUG_LABELS)
        ev = Evidence(
            id=f"e:{i:04d}",
            description=f"statement {i} about {label}",
            label=label,
            anchor_keyword="anchor drug",
            anchor_type="drug",
            doc_id=f"doc{rng.randint(0, 3)}",
            chunk_index=rng.randint(0, 5),
        )
        graph.add_evidence(ev)
        mentioned = rng.sample(names, rng.randint(1, n_entities))
        for name in mentioned:
            graph.attach_evidence_to_entity(entity_id_for(name), ev.id)

    # Topics exactly as ingestion would build them: one per (entity, label).
    for name in names:
        entity = graph.entities[entity_id_for(name)]
        by_label: dict[str, set[str]] = {}
        for eid in entity.evidence_ids:
            by_label.setdefault(graph.evidence[eid].label, set()).add(eid)
        for label, eids in sorted(by_label.items()):
            graph.add_topic(
                Topic(
                    id=topic_id_for(entity.id, label),
                    description=f"{name} {label} summary",
                    label=label,
                    anchor_entity=entity.id,
                    evidence_ids=set(eids),
                )
            )
    graph.link_all_topics()
    return graph
