"""Core domain types: triples, vocabularies, datasets, and the ontology schema.

Entity and relation ids are dense non-negative integers assigned in
first-appearance order, so identical input files always produce identical
encodings. All types here are immutable after construction and safe to share
across evaluation or scoring workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

from .errors import (
    DuplicateLabelError,
    EmptyInputError,
    SplitOverlapError,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)

EntityId = int
RelationId = int


class Triple(NamedTuple):
    """A (head, relation, tail) fact over integer ids."""

    head: EntityId
    relation: RelationId
    tail: EntityId


class VocabPolicy(Enum):
    """How :func:`encode_triples` treats labels absent from the vocabulary."""

    GROW = "grow"
    FROZEN = "frozen"


class Vocabulary:
    """Bidirectional label<->id maps for entities and relations.

    Ids are dense in ``[0, n)`` and follow first-appearance order of the
    labels used to build the vocabulary.
    """

    def __init__(self, entity_labels: Sequence[str], relation_labels: Sequence[str]):
        self.entity_labels = tuple(entity_labels)
        self.relation_labels = tuple(relation_labels)
        self.entity_ids = {label: i for i, label in enumerate(self.entity_labels)}
        self.relation_ids = {label: i for i, label in enumerate(self.relation_labels)}
        if len(self.entity_ids) != len(self.entity_labels):
            raise DuplicateLabelError("duplicate entity label in vocabulary")
        if len(self.relation_ids) != len(self.relation_labels):
            raise DuplicateLabelError("duplicate relation label in vocabulary")

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    def entity_id(self, label: str) -> EntityId:
        try:
            return self.entity_ids[label]
        except KeyError:
            raise UnknownLabelError(f"unknown entity label: {label!r}") from None

    def relation_id(self, label: str) -> RelationId:
        try:
            return self.relation_ids[label]
        except KeyError:
            raise UnknownLabelError(f"unknown relation label: {label!r}") from None

    def decode(self, t: Triple) -> tuple[str, str, str]:
        """Map a triple of ids back to its labels."""
        return (
            self.entity_labels[t.head],
            self.relation_labels[t.relation],
            self.entity_labels[t.tail],
        )

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.entity_labels == other.entity_labels
            and self.relation_labels == other.relation_labels
        )

    def __repr__(self) -> str:
        return f"Vocabulary(entities={self.num_entities}, relations={self.num_relations})"


def encode_triples(
    raw: Sequence[tuple[str, str, str]],
    policy: VocabPolicy = VocabPolicy.GROW,
    vocab: Vocabulary | None = None,
) -> tuple[Vocabulary, list[Triple]]:
    """Encode string triples into dense integer ids.

    Under ``GROW``, ids are assigned in first-appearance order (heads and
    tails share the entity id space). Under ``FROZEN``, ``vocab`` must be
    supplied and every label must already exist in it.

    Raises
    ------
    EmptyInputError
        If ``raw`` is empty.
    UnknownLabelError
        Under ``FROZEN``, if a label is absent from ``vocab``.
    """
    if not raw:
        raise EmptyInputError("cannot encode an empty triple list")

    if policy is VocabPolicy.FROZEN:
        if vocab is None:
            raise ValueError("FROZEN policy requires an existing vocabulary")
        triples = [
            Triple(vocab.entity_id(h), vocab.relation_id(r), vocab.entity_id(t))
            for h, r, t in raw
        ]
        return vocab, triples

    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    triples = []
    for h, r, t in raw:
        hid = entity_ids.setdefault(h, len(entity_ids))
        rid = relation_ids.setdefault(r, len(relation_ids))
        tid = entity_ids.setdefault(t, len(entity_ids))
        triples.append(Triple(hid, rid, tid))
    new_vocab = Vocabulary(tuple(entity_ids), tuple(relation_ids))
    return new_vocab, triples


def _validate_split(name: str, triples: Iterable[Triple], vocab: Vocabulary) -> list[Triple]:
    """Deduplicate one split and check id validity against the vocabulary."""
    seen: set[Triple] = set()
    out: list[Triple] = []
    dupes = 0
    for t in triples:
        if t.head >= vocab.num_entities or t.tail >= vocab.num_entities:
            raise UnknownLabelError(f"{name}: entity id out of range in {t}")
        if t.relation >= vocab.num_relations:
            raise UnknownLabelError(f"{name}: relation id out of range in {t}")
        if t.head < 0 or t.relation < 0 or t.tail < 0:
            raise UnknownLabelError(f"{name}: negative id in {t}")
        if t in seen:
            dupes += 1
            continue
        seen.add(t)
        out.append(t)
    if dupes:
        logger.info("%s split: dropped %d duplicate triples", name, dupes)
    return out


@dataclass(frozen=True)
class Dataset:
    """A vocabulary plus pairwise-disjoint train/dev/test triple splits.

    Construct via :meth:`build`, which deduplicates within each split
    (logged) and raises :class:`SplitOverlapError` on any cross-split
    overlap.
    """

    vocab: Vocabulary
    train: tuple[Triple, ...]
    dev: tuple[Triple, ...]
    test: tuple[Triple, ...]

    @classmethod
    def build(
        cls,
        vocab: Vocabulary,
        train: Iterable[Triple],
        dev: Iterable[Triple] = (),
        test: Iterable[Triple] = (),
    ) -> "Dataset":
        train_u = _validate_split("train", train, vocab)
        dev_u = _validate_split("dev", dev, vocab)
        test_u = _validate_split("test", test, vocab)
        train_set, dev_set, test_set = set(train_u), set(dev_u), set(test_u)
        for a, b, names in (
            (train_set, dev_set, "train/dev"),
            (train_set, test_set, "train/test"),
            (dev_set, test_set, "dev/test"),
        ):
            overlap = a & b
            if overlap:
                raise SplitOverlapError(
                    f"{names} splits share {len(overlap)} triples, e.g. {next(iter(overlap))}"
                )
        return cls(vocab, tuple(train_u), tuple(dev_u), tuple(test_u))

    def all_triples(self) -> tuple[Triple, ...]:
        return self.train + self.dev + self.test


def dataset_stats(d: Dataset) -> tuple[int, int, int, int, int]:
    """Return (num_entities, num_relations, num_train, num_dev, num_test)."""
    return (
        d.vocab.num_entities,
        d.vocab.num_relations,
        len(d.train),
        len(d.dev),
        len(d.test),
    )


def coverage_report(d: Dataset) -> dict[str, int]:
    """Count dev/test triples whose entities or relations never occur in train.

    Unseen-entity triples are reported, not rejected; the evaluator still
    ranks them (their embedding rows exist, just untrained).
    """
    ents = {t.head for t in d.train} | {t.tail for t in d.train}
    rels = {t.relation for t in d.train}
    report = {}
    for name, split in (("dev", d.dev), ("test", d.test)):
        report[f"{name}_unseen_entity_triples"] = sum(
            1 for t in split if t.head not in ents or t.tail not in ents
        )
        report[f"{name}_unseen_relation_triples"] = sum(
            1 for t in split if t.relation not in rels
        )
    return report


class NodeKind(Enum):
    """Ontology role of a vocabulary entity."""

    CLASS = "class"
    CONCEPT = "concept"
    INSTANCE = "instance"
    LITERAL = "literal"


class RelationKind(Enum):
    """Ontology role of a relation: entity<->entity, entity<->literal, or axiom."""

    OBJECT = "object"
    DATA = "data"
    META = "meta"


#: The only relation labels admissible as meta-properties.
META_PROPERTY_LABELS = frozenset(
    {
        "subClassOf",
        "broader",
        "type",
        "equivalentClass",
        "subPropertyOf",
        "equivalentPropertyOf",
    }
)


@dataclass(frozen=True)
class RelationDecl:
    """Declared kind plus domain/range node-kind constraints for one relation."""

    kind: RelationKind
    domain: frozenset[NodeKind]
    range: frozenset[NodeKind]


@dataclass(frozen=True)
class OntologySchema:
    """Node kinds, relation declarations, and taxonomy edges for validation.

    ``taxonomy_edges`` are (child, parent) pairs drawn from subClassOf /
    broader facts; ``property_edges`` are (child, parent) pairs over relation
    ids drawn from subPropertyOf / equivalentPropertyOf declarations. The
    schema itself may be constructed with cyclic edges so the validator can
    report them; a *conforming* schema is acyclic (see
    :func:`kgbench.ontology.check_taxonomy`).
    """

    node_kinds: dict[EntityId, NodeKind]
    relations: dict[RelationId, RelationDecl]
    taxonomy_edges: tuple[tuple[EntityId, EntityId], ...]
    property_edges: tuple[tuple[RelationId, RelationId], ...] = field(default=())

    def __post_init__(self):
        for rid, decl in self.relations.items():
            if not decl.domain or not decl.range:
                raise EmptyInputError(
                    f"relation {rid}: domain and range sets must be non-empty"
                )

    @staticmethod
    def check_meta_label(label: str, kind: RelationKind) -> None:
        """Reject META declarations for labels outside the six known axioms."""
        if kind is RelationKind.META and label not in META_PROPERTY_LABELS:
            raise UnknownLabelError(
                f"{label!r} cannot be declared a meta-property; "
                f"allowed: {sorted(META_PROPERTY_LABELS)}"
            )
