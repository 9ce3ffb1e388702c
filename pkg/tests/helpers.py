"""Shared test fixtures: toy graphs, independent oracles, and the synthetic
block-structured KG used by the learning-signal tests.

Everything here is deliberately written straight-line (loops, sorting,
brute force) so it stays independent of the library code it checks.
"""

from __future__ import annotations

import numpy as np

from kgbench.core import Dataset, Triple, Vocabulary
from kgbench.models import ModelParams, score


def tiny_vocab(n_ent: int, n_rel: int) -> Vocabulary:
    return Vocabulary(
        [f"e{i}" for i in range(n_ent)], [f"r{i}" for i in range(n_rel)]
    )


def brute_force_rank(
    params: ModelParams,
    t: Triple,
    side: str,
    known: set[Triple],
    filtered: bool,
    transe_p: int = 2,
) -> float:
    """Materialize every candidate score, drop filtered competitors, and
    count better/tied candidates by explicit comparison."""
    n_ent = params.num_entities
    target = t.tail if side == "tail" else t.head
    scored = []
    for e in range(n_ent):
        cand = (
            Triple(t.head, t.relation, e) if side == "tail" else Triple(e, t.relation, t.tail)
        )
        if filtered and e != target and cand in known:
            continue
        scored.append((e, score(params, cand, transe_p=transe_p)))
    target_score = [s for e, s in scored if e == target][0]
    better = sum(1 for e, s in scored if s > target_score)
    ties = sum(1 for e, s in scored if s == target_score) - 1
    return 1.0 + better + ties / 2.0


def straight_line_metrics(ranks: list[float]) -> tuple[dict[int, float], float, float]:
    """Recompute hits@{1,3,10}, MR, MRR with explicit loops."""
    n = len(ranks)
    hits = {}
    for k in (1, 3, 10):
        hits[k] = sum(1.0 for r in ranks if r <= k) / n
    mr = sum(ranks) / n
    mrr = sum(1.0 / r for r in ranks) / n
    return hits, mr, mrr


def random_kg(
    rng: np.random.Generator, n_ent: int, n_rel: int, n_triples: int
) -> tuple[Vocabulary, list[Triple]]:
    """A random multigraph without duplicate triples."""
    seen = set()
    triples = []
    while len(triples) < n_triples:
        t = Triple(
            int(rng.integers(0, n_ent)),
            int(rng.integers(0, n_rel)),
            int(rng.integers(0, n_ent)),
        )
        if t in seen:
            continue
        seen.add(t)
        triples.append(t)
    return tiny_vocab(n_ent, n_rel), triples


def block_kg(
    n_blocks: int = 10, block_size: int = 20, n_rel: int = 10, holdout: float = 0.10, seed: int = 7
) -> Dataset:
    """Deterministic composition pattern: entity (b, i) relates via relation
    r to entity ((b + r + 1) mod n_blocks, i). One bijection per relation, so
    every (head, relation) has exactly one true tail. A seeded fraction is
    held out as the test split (coverage-safe: entities recur across
    relations)."""
    n_ent = n_blocks * block_size
    triples = []
    for r in range(n_rel):
        for b in range(n_blocks):
            for i in range(block_size):
                h = b * block_size + i
                t = ((b + r + 1) % n_blocks) * block_size + i
                triples.append(Triple(h, r, t))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(triples))
    n_test = int(len(triples) * holdout)
    test_idx = set(map(int, perm[:n_test]))
    train = [t for i, t in enumerate(triples) if i not in test_idx]
    test = [t for i, t in enumerate(triples) if i in test_idx]
    return Dataset.build(tiny_vocab(n_ent, n_rel), train, test=test)


def fd_loss_gradient(loss_fn, params: ModelParams, name: str, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar loss over one whole tensor."""
    arr = getattr(params, name)
    flat = arr.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = loss_fn()
        flat[i] = orig - h
        fm = loss_fn()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(arr.shape)


def dense_gradient(grads, params: ModelParams, name: str) -> np.ndarray:
    """Expand a sparse gradient slice to the full tensor shape (zeros where
    untouched)."""
    arr = getattr(params, name)
    out = np.zeros_like(arr)
    if name not in grads.slices:
        return out
    rows, values = grads.slices[name]
    if rows is None:
        return values.astype(arr.dtype, copy=True).reshape(arr.shape)
    out[rows] = values
    return out


def assert_close_grad(analytic: np.ndarray, numeric: np.ndarray, rel: float = 1e-5, floor: float = 1e-7):
    """Per-coordinate |a - n| <= rel * max(|a|, |n|) + floor; the floor
    absorbs finite-difference roundoff on exactly-zero coordinates."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    bad = diff > rel * scale + floor
    assert not bad.any(), (
        f"gradient mismatch at {np.argwhere(bad)[:5]}: "
        f"analytic {analytic[bad][:5]} vs numeric {numeric[bad][:5]}"
    )
