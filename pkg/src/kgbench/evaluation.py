"""Link-prediction evaluation: raw/filtered ranking, Hits@K, MR, MRR.

The filtered protocol removes every candidate that would form a known true
triple (train + dev + test) other than the one being ranked, the standard
filtered-setting convention. Ties are resolved by mean rank so that a
constant-score model receives expected-random metrics instead of gaming
Hits@K: rank = 1 + #better + #ties/2, where #ties counts *other* candidates
with exactly the target's score. Ranks are therefore real-valued.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Dataset, EntityId, RelationId, Triple
from .errors import EmptyReportError, EmptyTestSetError, UnseenEntityError
from .models import ModelParams, candidate_scores, tail_scores


class Protocol(Enum):
    RAW = "raw"
    FILTERED = "filtered"


class Sides(Enum):
    TAIL_ONLY = "tail"
    HEAD_AND_TAIL = "both"


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol knobs. Tie policy is fixed to mean rank."""

    protocol: Protocol = Protocol.FILTERED
    sides: Sides = Sides.HEAD_AND_TAIL
    cutoffs: tuple[int, ...] = (1, 3, 10)
    relation: RelationId | None = None
    transe_p: int = 2

    def __post_init__(self):
        if list(self.cutoffs) != sorted(self.cutoffs) or any(k < 1 for k in self.cutoffs):
            raise ValueError("hits cutoffs must be ascending and >= 1")


class FilterIndex:
    """Known-triple lookup: which entities complete (h, r, ?) or (?, r, t)."""

    def __init__(self, triples):
        self._tails: dict[tuple[int, int], set[int]] = {}
        self._heads: dict[tuple[int, int], set[int]] = {}
        for h, r, t in triples:
            self._tails.setdefault((h, r), set()).add(t)
            self._heads.setdefault((r, t), set()).add(h)

    @classmethod
    def from_dataset(cls, d: Dataset) -> "FilterIndex":
        return cls(d.all_triples())

    def known_tails(self, head: int, rel: int) -> set[int]:
        return self._tails.get((head, rel), set())

    def known_heads(self, rel: int, tail: int) -> set[int]:
        return self._heads.get((rel, tail), set())

    def contains(self, t: Triple) -> bool:
        return t.tail in self._tails.get((t.head, t.relation), ())


@dataclass
class EvalReport:
    """Aggregated ranking metrics plus the per-rank raw material.

    Invariants checked on construction: hits@K non-decreasing in K,
    MRR >= hits@1, MRR >= 1/MR (Jensen), MR >= 1.
    """

    ranks: list[float]
    hits: dict[int, float]
    mr: float
    mrr: float
    protocol: str
    sides: str
    n_test: int
    per_side_ranks: dict[str, list[float]] = field(default_factory=dict)

    @classmethod
    def from_ranks(
        cls,
        ranks: list[float],
        cutoffs: tuple[int, ...] = (1, 3, 10),
        protocol: str = Protocol.FILTERED.value,
        sides: str = Sides.HEAD_AND_TAIL.value,
        n_test: int | None = None,
        per_side_ranks: dict[str, list[float]] | None = None,
    ) -> "EvalReport":
        if not ranks:
            raise EmptyReportError("cannot aggregate an empty rank list")
        arr = np.asarray(ranks, dtype=np.float64)
        hits = {k: float(np.mean(arr <= k)) for k in cutoffs}
        report = cls(
            ranks=list(map(float, ranks)),
            hits=hits,
            mr=float(arr.mean()),
            mrr=float((1.0 / arr).mean()),
            protocol=protocol,
            sides=sides,
            n_test=len(ranks) if n_test is None else n_test,
            per_side_ranks=per_side_ranks or {},
        )
        report.check_invariants()
        return report

    def check_invariants(self) -> None:
        ks = sorted(self.hits)
        for lo, hi in zip(ks, ks[1:]):
            assert self.hits[lo] <= self.hits[hi] + 1e-12, "hits@K must be monotone"
        assert self.mr >= 1.0 - 1e-12, "MR must be >= 1"
        if 1 in self.hits:
            assert self.mrr >= self.hits[1] - 1e-12, "MRR must dominate hits@1"
        assert self.mrr >= 1.0 / self.mr - 1e-12, "MRR must dominate 1/MR"

    def to_dict(self) -> dict:
        out = {f"hits{k}": v for k, v in sorted(self.hits.items())}
        out.update(
            mr=self.mr,
            mrr=self.mrr,
            protocol=self.protocol,
            sides=self.sides,
            n_test=self.n_test,
        )
        return out


def rank_one(
    t: Triple,
    side: str,
    params: ModelParams,
    filter_index: FilterIndex | None,
    cfg: EvalConfig = EvalConfig(),
) -> float:
    """Mean-tie rank of the true entity among all candidates for ``side``.

    Under the filtered protocol, candidates completing a known triple other
    than ``t`` itself are removed before counting.
    """
    n_ent = params.num_entities
    if t.head >= n_ent or t.tail >= n_ent or t.relation >= params.num_relations:
        raise UnseenEntityError(f"{t} references an id with no trained row")
    scores = candidate_scores(params, side, t, transe_p=cfg.transe_p)
    target = t.tail if side == "tail" else t.head
    target_score = scores[target]

    if cfg.protocol is Protocol.FILTERED:
        if filter_index is None:
            raise ValueError("filtered protocol requires a filter index")
        if side == "tail":
            drop = filter_index.known_tails(t.head, t.relation) - {target}
        else:
            drop = filter_index.known_heads(t.relation, t.tail) - {target}
        if drop:
            keep = np.ones(n_ent, dtype=bool)
            keep[list(drop)] = False
            scores = scores[keep]

    better = int(np.sum(scores > target_score))
    ties = int(np.sum(scores == target_score)) - 1
    return 1.0 + better + ties / 2.0


def _rank_sides(args) -> list[tuple[str, float]]:
    t, params, filter_index, cfg = args
    sides = ["tail"] if cfg.sides is Sides.TAIL_ONLY else ["tail", "head"]
    return [(s, rank_one(t, s, params, filter_index, cfg)) for s in sides]


def evaluate(
    dataset: Dataset,
    params: ModelParams,
    cfg: EvalConfig = EvalConfig(),
    workers: int = 1,
) -> EvalReport:
    """Rank every test triple on the configured sides and aggregate.

    With ``cfg.relation`` set, only test triples of that relation are
    evaluated (relation-restricted link prediction, e.g. category
    prediction). Parallel evaluation (workers > 1) yields a report identical
    to serial: per-triple ranks are independent and the reduction order is
    fixed by test-split order.
    """
    test = list(dataset.test)
    if cfg.relation is not None:
        test = [t for t in test if t.relation == cfg.relation]
    if not test:
        raise EmptyTestSetError("no test triples to evaluate")

    filter_index = None
    if cfg.protocol is Protocol.FILTERED:
        filter_index = FilterIndex.from_dataset(dataset)

    jobs = [(t, params, filter_index, cfg) for t in test]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rank_sides, jobs, chunksize=64))
    else:
        results = [_rank_sides(j) for j in jobs]

    ranks: list[float] = []
    per_side: dict[str, list[float]] = {}
    for triple_result in results:
        for side, rank in triple_result:
            ranks.append(rank)
            per_side.setdefault(side, []).append(rank)

    return EvalReport.from_ranks(
        ranks,
        cutoffs=cfg.cutoffs,
        protocol=cfg.protocol.value,
        sides=cfg.sides.value,
        n_test=len(test),
        per_side_ranks=per_side,
    )


def category_predict(
    item: EntityId,
    relation: RelationId,
    k: int,
    params: ModelParams,
    filter_index: FilterIndex | None = None,
    transe_p: int = 2,
) -> list[tuple[EntityId, float]]:
    """Top-k tail candidates for (item, relation, ?), best first.

    Candidates completing a known triple in ``filter_index`` are excluded
    (filtered protocol); ties are broken by entity id ascending. ``k = 0``
    returns an empty list; ``k >= |E|`` returns all surviving candidates.
    """
    if item >= params.num_entities or relation >= params.num_relations:
        raise UnseenEntityError(f"({item}, {relation}, ?) references an untrained id")
    if k <= 0:
        return []
    scores = tail_scores(params, item, relation, transe_p=transe_p)
    candidates = np.arange(params.num_entities)
    if filter_index is not None:
        drop = filter_index.known_tails(item, relation)
        if drop:
            keep = np.ones(params.num_entities, dtype=bool)
            keep[list(drop)] = False
            candidates = candidates[keep]
            scores = scores[keep]
    # Sort by score descending, then id ascending.
    order = np.lexsort((candidates, -scores))
    top = order[:k]
    return [(int(candidates[i]), float(scores[i])) for i in top]
