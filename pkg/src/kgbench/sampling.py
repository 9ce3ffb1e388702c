"""Three-stage benchmark construction: relation refinement, head-entity
filtering, and triple sampling, plus a coverage-guaranteed dataset split.

All randomness is counter-based: a decision for element ``x`` in stage ``s``
is made by hashing (seed, s, x) into a uniform u in [0, 1) and accepting when
u < rate. This makes runs byte-identical across platforms, independent of
input ordering, parallelizable without coordination, and monotone in the
rate (raising a rate never drops a previously accepted element).
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import Dataset, EntityId, RelationId, Triple, Vocabulary, VocabPolicy, encode_triples
from .errors import EmptyInputError, EmptyResultError, InfeasibleSplitError

_MASK64 = (1 << 64) - 1


def _u64(seed: int, tag: str, payload: bytes) -> int:
    key = (seed & _MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(
        tag.encode("utf-8") + b"\x00" + payload, digest_size=8, key=key
    ).digest()
    return int.from_bytes(digest, "little")


def unit_uniform(seed: int, tag: str, payload: bytes) -> float:
    """Deterministic uniform in [0, 1) keyed by (seed, stage tag, element)."""
    return _u64(seed, tag, payload) / 2.0**64


def _entity_payload(e: EntityId) -> bytes:
    return e.to_bytes(8, "little")


def _triple_payload(t: Triple) -> bytes:
    return t.head.to_bytes(8, "little") + t.relation.to_bytes(8, "little") + t.tail.to_bytes(8, "little")


def accept_entity(seed: int, tag: str, e: EntityId, rate: float) -> bool:
    return unit_uniform(seed, tag, _entity_payload(e)) < rate


def accept_triple(seed: int, tag: str, t: Triple, rate: float) -> bool:
    return unit_uniform(seed, tag, _triple_payload(t)) < rate


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for the three sampling stages and the split.

    The published benchmarks never state their rates, so the defaults here
    aim at reproducing the long-tail shape: the top (1 - quantile) share of
    relations by frequency are "head-relations" whose head entities are
    sampled at ``alpha_head``, the rest at ``alpha_low``; surviving triples
    are kept at ``alpha_triple``.
    """

    allowlist: frozenset[RelationId] | None = None
    min_frequency: int = 1
    quantile: float = 0.8
    alpha_head: float = 0.5
    alpha_low: float = 0.1
    alpha_triple: float = 0.5
    dev_size: int = 0
    test_size: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha_head", "alpha_low", "alpha_triple"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        # The paper requires alpha_head > alpha_low; equality is allowed so
        # the degenerate all-or-nothing settings remain expressible.
        if self.alpha_head < self.alpha_low:
            raise ValueError("alpha_head must be >= alpha_low")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must be in (0, 1), got {self.quantile}")
        if self.dev_size < 0 or self.test_size < 0:
            raise ValueError("split sizes must be non-negative")
        if self.min_frequency < 1:
            raise ValueError("min_frequency must be >= 1")


def refine_relations(full: Sequence[Triple], cfg: SamplerConfig) -> set[RelationId]:
    """Stage 1: keep allowlisted relations, or those at/above the frequency
    threshold. Raises :class:`EmptyResultError` when nothing qualifies."""
    if not full:
        raise EmptyInputError("cannot refine relations of an empty triple set")
    freq = Counter(t.relation for t in full)
    if cfg.allowlist is not None:
        result = set(cfg.allowlist) & set(freq)
    else:
        result = {r for r, c in freq.items() if c >= cfg.min_frequency}
    if not result:
        raise EmptyResultError("no relation passed refinement")
    return result


def head_relation_split(
    full: Sequence[Triple], rels: set[RelationId], quantile: float
) -> tuple[set[RelationId], set[RelationId]]:
    """Split refined relations into head-relations (frequency at or above the
    nearest-rank quantile of refined-relation frequencies) and tail-relations."""
    freq = Counter(t.relation for t in full if t.relation in rels)
    counts = sorted(freq.values())
    threshold = counts[min(len(counts) - 1, int(quantile * len(counts)))]
    head_rels = {r for r in rels if freq[r] >= threshold}
    return head_rels, rels - head_rels


def filter_head_entities(
    full: Sequence[Triple], rels: set[RelationId], cfg: SamplerConfig
) -> set[EntityId]:
    """Stage 2: union of two Bernoulli samples over the head-entity sets of
    the head-relation and tail-relation groups, at rates alpha_head and
    alpha_low respectively. Set semantics: an entity drawn from either group
    appears once."""
    head_rels, low_rels = head_relation_split(full, rels, cfg.quantile)
    heads_of_high = {t.head for t in full if t.relation in head_rels}
    heads_of_low = {t.head for t in full if t.relation in low_rels}
    sampled = {
        e for e in heads_of_high if accept_entity(cfg.seed, "heads-high", e, cfg.alpha_head)
    }
    sampled.update(
        e for e in heads_of_low if accept_entity(cfg.seed, "heads-low", e, cfg.alpha_low)
    )
    return sampled


def sample_triples(
    full: Sequence[Triple],
    heads: set[EntityId],
    rels: set[RelationId],
    cfg: SamplerConfig,
) -> list[Triple]:
    """Stage 3: filter triples to (heads, rels) and Bernoulli-keep each at
    ``alpha_triple``. Output preserves input order and is always a subset of
    the input (no synthesis)."""
    filtered = (t for t in full if t.head in heads and t.relation in rels)
    return [t for t in filtered if accept_triple(cfg.seed, "triples", t, cfg.alpha_triple)]


def split_dataset(
    triples: Sequence[Triple], cfg: SamplerConfig, vocab: Vocabulary
) -> Dataset:
    """Split into train/dev/test with no unseen-entity/relation leakage.

    Triples are visited in a seeded hash order (a deterministic uniform
    shuffle); each is moved into dev, then test, only if every entity and
    relation it references still occurs at least once in the remaining pool,
    so dev/test vocabulary is always a subset of train vocabulary. Triples
    that cannot move are resampled into train.

    Raises :class:`InfeasibleSplitError` when the quotas cannot be met.
    """
    unique: list[Triple] = list(dict.fromkeys(triples))
    if cfg.dev_size + cfg.test_size >= len(unique) and cfg.dev_size + cfg.test_size > 0:
        raise InfeasibleSplitError(
            f"dev+test ({cfg.dev_size}+{cfg.test_size}) must be smaller than "
            f"the {len(unique)} unique triples"
        )

    ent_count: Counter = Counter()
    rel_count: Counter = Counter()
    for t in unique:
        ent_count[t.head] += 1
        ent_count[t.tail] += 1
        rel_count[t.relation] += 1

    order = sorted(unique, key=lambda t: _u64(cfg.seed, "split", _triple_payload(t)))
    dev: list[Triple] = []
    test: list[Triple] = []
    train: list[Triple] = []
    for t in order:
        want_dev = len(dev) < cfg.dev_size
        want_test = len(test) < cfg.test_size
        movable = (
            (want_dev or want_test)
            and ent_count[t.head] >= 2
            and rel_count[t.relation] >= 2
            and ent_count[t.tail] >= 2
            # A self-loop head==tail consumes two counts of one entity.
            and (t.head != t.tail or ent_count[t.head] >= 3)
        )
        if movable:
            ent_count[t.head] -= 1
            ent_count[t.tail] -= 1
            rel_count[t.relation] -= 1
            (dev if want_dev else test).append(t)
        else:
            train.append(t)
    if len(dev) < cfg.dev_size or len(test) < cfg.test_size:
        raise InfeasibleSplitError(
            f"coverage guarantee left only dev={len(dev)}, test={len(test)} "
            f"of requested {cfg.dev_size}/{cfg.test_size}"
        )
    return Dataset.build(vocab, train, dev, test)


def relation_histogram(triples: Iterable[Triple]) -> list[tuple[RelationId, int]]:
    """Relation frequencies, descending by count, ties by id ascending."""
    freq = Counter(t.relation for t in triples)
    return sorted(freq.items(), key=lambda rc: (-rc[1], rc[0]))


def split_audit(dataset: Dataset) -> dict:
    """Disjointness and leakage audit over a split dataset."""
    train_set = set(dataset.train)
    dev_set = set(dataset.dev)
    test_set = set(dataset.test)
    train_ents = {t.head for t in dataset.train} | {t.tail for t in dataset.train}
    train_rels = {t.relation for t in dataset.train}

    def covered(split):
        return all(
            t.head in train_ents and t.tail in train_ents and t.relation in train_rels
            for t in split
        )

    return {
        "disjoint": not (train_set & dev_set or train_set & test_set or dev_set & test_set),
        "dev_vocab_in_train": covered(dataset.dev),
        "test_vocab_in_train": covered(dataset.test),
        "n_train": len(dataset.train),
        "n_dev": len(dataset.dev),
        "n_test": len(dataset.test),
        "n_entities": dataset.vocab.num_entities,
        "n_relations": dataset.vocab.num_relations,
    }


def compact_dataset(dataset: Dataset) -> Dataset:
    """Re-encode onto a vocabulary covering exactly the dataset's triples,
    ids in first-appearance order over train, dev, test."""
    raw = [dataset.vocab.decode(t) for t in dataset.all_triples()]
    vocab, _ = encode_triples(raw, VocabPolicy.GROW)
    splits = {}
    for name in ("train", "dev", "test"):
        split = getattr(dataset, name)
        if split:
            _, triples = encode_triples(
                [dataset.vocab.decode(t) for t in split], VocabPolicy.FROZEN, vocab
            )
        else:
            triples = []
        splits[name] = triples
    return Dataset.build(vocab, splits["train"], splits["dev"], splits["test"])


def build_benchmark(
    full: Sequence[Triple], vocab: Vocabulary, cfg: SamplerConfig
) -> tuple[Dataset, list[tuple[RelationId, int]], dict]:
    """Run all three stages plus the split; returns the compacted dataset,
    the relation histogram of the sampled triples (ids on the compact
    vocabulary), and the split audit."""
    rels = refine_relations(full, cfg)
    heads = filter_head_entities(full, rels, cfg)
    sampled = sample_triples(full, heads, rels, cfg)
    if not sampled:
        raise EmptyResultError("sampling produced no triples")
    dataset = compact_dataset(split_dataset(sampled, cfg, vocab))
    hist = relation_histogram(dataset.all_triples())
    return dataset, hist, split_audit(dataset)
