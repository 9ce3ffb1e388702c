"""Training: negative sampling, losses, SGD/AdaGrad, the epoch loop, and the
published hyperparameter presets.

Loss conventions follow the OpenKE lineage: margin ranking for the
translational models, logistic loss with L2 regularization for DistMult and
ComplEx, and 1-N binary cross-entropy with label smoothing for TuckER.
"num batches" style presets mean batches per epoch; the batch size is then
ceil(|train| / num_batches).
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Dataset, Triple
from .errors import (
    DimMismatchError,
    InvalidKError,
    KgBenchError,
    NonFiniteGradientError,
    UnknownPresetError,
)
from .models import (
    GradAccumulator,
    ModelParams,
    SparseGrads,
    grads_for,
    init_params,
    project_constraints,
    scores_for,
    tail_scores,
    touched_rows,
    validate_params,
)

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-8

LOSSES = ("margin", "logistic", "bce")
OPTIMIZERS = ("sgd", "adagrad")
CORRUPTIONS = ("uniform", "bernoulli")


@dataclass(frozen=True)
class TrainConfig:
    """Everything the trainer needs; serializes to flat JSON.

    Exactly one of ``num_batches`` / ``batch_size`` must be set.
    """

    model: str
    epochs: int
    learning_rate: float
    dim_e: int = 200
    dim_r: int | None = None
    num_batches: int | None = None
    batch_size: int | None = None
    optimizer: str = "sgd"
    loss: str = "margin"
    margin: float = 1.0
    reg_lambda: float = 1e-5
    label_smoothing: float = 0.1
    dropout: tuple[float, float, float] = (0.0, 0.0, 0.0)
    negatives: int = 1
    corruption: str = "uniform"
    transe_p: int = 2
    seed: int = 0

    def __post_init__(self):
        if (self.num_batches is None) == (self.batch_size is None):
            raise ValueError("set exactly one of num_batches / batch_size")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label smoothing must be in [0, 1)")
        if self.negatives < 1:
            raise InvalidKError("negatives per positive must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.corruption not in CORRUPTIONS:
            raise ValueError(f"corruption must be one of {CORRUPTIONS}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self) -> dict:
        out = {
            "model": self.model,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "dim_e": self.dim_e,
            "dim_r": self.dim_r,
            "num_batches": self.num_batches,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "loss": self.loss,
            "margin": self.margin,
            "reg_lambda": self.reg_lambda,
            "label_smoothing": self.label_smoothing,
            "dropout": list(self.dropout),
            "negatives": self.negatives,
            "corruption": self.corruption,
            "transe_p": self.transe_p,
            "seed": self.seed,
        }
        return {k: v for k, v in out.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "dropout" in d:
            d["dropout"] = tuple(d["dropout"])
        return cls(**d)


# Default loss pairing per model; the margin / regularization / smoothing
# values are unpublished and chosen here (see README).
_MODEL_LOSS = {
    "transe": ("margin", "sgd"),
    "transh": ("margin", "sgd"),
    "transd": ("margin", "sgd"),
    "distmult": ("logistic", "adagrad"),
    "complex": ("logistic", "adagrad"),
    "tucker": ("bce", "adagrad"),
}

# (model, dataset) -> (num_batches, batch_size, epochs, learning_rate, optimizer)
_PRESETS: dict[tuple[str, str], tuple[int | None, int | None, int, float, str]] = {
    ("transe", "openbg-img"): (100, None, 1000, 0.5, "sgd"),
    ("transh", "openbg-img"): (100, None, 1000, 0.5, "sgd"),
    ("transd", "openbg-img"): (100, None, 1000, 1.0, "sgd"),
    ("distmult", "openbg-img"): (100, None, 1000, 0.5, "adagrad"),
    ("complex", "openbg-img"): (100, None, 1000, 0.5, "adagrad"),
    ("tucker", "openbg-img"): (None, 200, 500, 5e-4, "adagrad"),
    ("transe", "openbg500"): (100, None, 1000, 0.5, "sgd"),
    ("transh", "openbg500"): (100, None, 1000, 0.5, "sgd"),
    ("transd", "openbg500"): (100, None, 1000, 1.0, "sgd"),
    ("distmult", "openbg500"): (100, None, 1000, 0.5, "adagrad"),
    ("complex", "openbg500"): (100, None, 1000, 0.5, "adagrad"),
    ("tucker", "openbg500"): (None, 200, 500, 5e-4, "adagrad"),
    ("transe", "openbg500-l"): (500, None, 100, 0.5, "sgd"),
    ("transh", "openbg500-l"): (1000, None, 1000, 0.5, "sgd"),
    ("transd", "openbg500-l"): (1000, None, 1000, 1.0, "sgd"),
    ("distmult", "openbg500-l"): (500, None, 200, 0.5, "adagrad"),
    ("complex", "openbg500-l"): (1500, None, 200, 0.5, "adagrad"),
}

PRESET_DIM = 200


def preset(model: str, dataset: str) -> TrainConfig:
    """Published hyperparameters for a (model, dataset) pair, dim 200.

    Raises :class:`UnknownPresetError` for pairs without published settings
    (e.g. TuckER on openbg500-l was omitted for resource reasons).
    """
    key = (model, dataset)
    if key not in _PRESETS:
        raise UnknownPresetError(f"no published preset for model={model!r} dataset={dataset!r}")
    num_batches, batch_size, epochs, lr, optimizer = _PRESETS[key]
    loss, _default_opt = _MODEL_LOSS[model]
    dropout = (0.3, 0.4, 0.5) if loss == "bce" else (0.0, 0.0, 0.0)
    return TrainConfig(
        model=model,
        epochs=epochs,
        learning_rate=lr,
        dim_e=PRESET_DIM,
        dim_r=PRESET_DIM,
        num_batches=num_batches,
        batch_size=batch_size,
        optimizer=optimizer,
        loss=loss,
        dropout=dropout,
    )


def preset_table() -> list[tuple[str, str, TrainConfig]]:
    """All published presets as (model, dataset, config) rows."""
    return [(m, d, preset(m, d)) for (m, d) in sorted(_PRESETS)]


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------


class BernoulliStats:
    """Per-relation tph/hpt statistics for Bernoulli corruption.

    The head of a triple is corrupted with probability tph / (tph + hpt),
    where tph is the mean number of tails per head and hpt the mean number
    of heads per tail for the relation.
    """

    def __init__(self, triples: Sequence[Triple]):
        heads = defaultdict(set)
        tails = defaultdict(set)
        counts = defaultdict(int)
        for h, r, t in triples:
            heads[r].add(h)
            tails[r].add(t)
            counts[r] += 1
        self.p_head = {
            r: (counts[r] / len(heads[r]))
            / (counts[r] / len(heads[r]) + counts[r] / len(tails[r]))
            for r in counts
        }

    def head_probability(self, relation: int) -> float:
        return self.p_head.get(relation, 0.5)


def sample_negatives(
    t: Triple,
    k: int,
    scheme: str,
    known: set[Triple],
    n_entities: int,
    rng: np.random.Generator,
    stats: BernoulliStats | None = None,
    retry_cap: int = 100,
) -> list[Triple]:
    """Draw k corrupted triples, filtering out known true ones.

    Each negative replaces the head or the tail (never the relation) with a
    different entity. After ``retry_cap`` collisions with the known-triple
    index a colliding candidate is accepted with a logged warning, so the
    sampler cannot stall on dense graphs; the positive triple itself is never
    returned.
    """
    if k < 1:
        raise InvalidKError(f"k must be >= 1, got {k}")
    if n_entities < 2:
        raise KgBenchError("need at least 2 entities to corrupt a triple")
    if scheme == "bernoulli" and stats is not None:
        p_head = stats.head_probability(t.relation)
    else:
        p_head = 0.5

    out = []
    for _ in range(k):
        corrupt_head = rng.random() < p_head
        original = t.head if corrupt_head else t.tail
        candidate = None
        for attempt in range(retry_cap):
            e = int(rng.integers(0, n_entities))
            if e == original:
                continue
            cand = Triple(e, t.relation, t.tail) if corrupt_head else Triple(t.head, t.relation, e)
            if cand in known:
                continue
            candidate = cand
            break
        if candidate is None:
            # Accept a collision rather than stall; never the positive itself.
            e = int(rng.integers(0, n_entities))
            while e == original:
                e = int(rng.integers(0, n_entities))
            candidate = (
                Triple(e, t.relation, t.tail) if corrupt_head else Triple(t.head, t.relation, e)
            )
            logger.warning(
                "negative sampling exhausted %d retries for %s; accepting known triple",
                retry_cap,
                t,
            )
        out.append(candidate)
    return out


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _ids(triples: Sequence[Triple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def margin_loss_and_grads(
    positives: Sequence[Triple],
    negatives: Sequence[Triple],
    params: ModelParams,
    margin: float,
    transe_p: int = 2,
) -> tuple[float, SparseGrads]:
    """Pairwise margin ranking: sum over pairs of max(0, margin - f(pos) + f(neg)).

    ``negatives`` must hold k negatives per positive, grouped so that
    ``negatives[i*k + j]`` belongs to ``positives[i]``.
    """
    if len(negatives) % len(positives) != 0:
        raise DimMismatchError("negatives must be a multiple of positives")
    k = len(negatives) // len(positives)
    ph, pr, pt = _ids(positives)
    nh, nr, nt = _ids(negatives)
    ph, pr, pt = np.repeat(ph, k), np.repeat(pr, k), np.repeat(pt, k)

    f_pos = scores_for(params, ph, pr, pt, transe_p=transe_p)
    f_neg = scores_for(params, nh, nr, nt, transe_p=transe_p)
    terms = margin - f_pos + f_neg
    active = terms > 0
    loss = float(terms[active].sum())

    acc = GradAccumulator()
    weights = active.astype(params.dtype)
    grads_for(params, ph, pr, pt, -weights, transe_p=transe_p, acc=acc)
    grads_for(params, nh, nr, nt, weights, transe_p=transe_p, acc=acc)
    return loss, acc.finalize()


def logistic_loss_and_grads(
    positives: Sequence[Triple],
    negatives: Sequence[Triple],
    params: ModelParams,
    reg_lambda: float,
    transe_p: int = 2,
) -> tuple[float, SparseGrads]:
    """Pointwise logistic loss sum(softplus(-y f)) with y = +1 / -1, plus
    L2 regularization over the touched parameter rows (each counted once)."""
    h, r, t = _ids(list(positives) + list(negatives))
    y = np.concatenate(
        [np.ones(len(positives)), -np.ones(len(negatives))]
    ).astype(params.dtype)
    f = scores_for(params, h, r, t, transe_p=transe_p)
    loss = float(_softplus(-y * f).sum())
    dldf = -y * _sigmoid(-y * f)

    acc = GradAccumulator()
    grads_for(params, h, r, t, dldf, transe_p=transe_p, acc=acc)
    grads = acc.finalize()

    if reg_lambda > 0:
        for name, (rows, values) in grads.slices.items():
            block = getattr(params, name) if rows is None else getattr(params, name)[rows]
            loss += reg_lambda * float((block * block).sum())
            values += 2.0 * reg_lambda * block
    return loss, grads


def bce_1n_loss_and_grads(
    positives: Sequence[Triple],
    params: ModelParams,
    label_smoothing: float,
    dropout: tuple[float, float, float] = (0.0, 0.0, 0.0),
    rng: np.random.Generator | None = None,
    transe_p: int = 2,
) -> tuple[float, SparseGrads]:
    """1-N binary cross-entropy: for each distinct (head, relation) in the
    batch, sigmoid scores against every entity are pushed toward the
    multi-hot tail labels of the batch, smoothed as (1-eps)*y + eps/|E|.
    The per-group loss is the mean over entities; groups are summed.

    Dropout (TuckER convention: input / core-matrix / pre-score stages) is
    applied only for the tucker model and requires ``rng``.
    """
    n_ent = params.num_entities
    groups: dict[tuple[int, int], list[int]] = {}
    for h, r, t in positives:
        groups.setdefault((h, r), []).append(t)

    use_dropout = params.tag == "tucker" and any(p > 0 for p in dropout)
    if use_dropout and rng is None:
        raise ValueError("dropout requires an rng")

    total = 0.0
    acc = GradAccumulator()
    for (h, r), tails_true in sorted(groups.items()):
        y = np.zeros(n_ent, dtype=params.dtype)
        y[tails_true] = 1.0
        y = (1.0 - label_smoothing) * y + label_smoothing / n_ent

        if params.tag == "tucker":
            # Specialized 1-N kernel: the generic per-candidate path would
            # contract the core tensor once per entity.
            f, backward = _tucker_1n_forward(
                params, h, r, dropout if use_dropout else (0.0, 0.0, 0.0), rng
            )
        else:
            f = tail_scores(params, h, r, transe_p=transe_p)
            backward = None

        # loss_e = y*softplus(-f) + (1-y)*softplus(f), the stable BCE form.
        total += float((y * _softplus(-f) + (1.0 - y) * _softplus(f)).mean())
        g = (_sigmoid(f) - y) / n_ent
        if backward is not None:
            backward(g.astype(params.dtype), acc)
        else:
            grads_for(
                params,
                np.full(n_ent, h, dtype=np.int64),
                np.full(n_ent, r, dtype=np.int64),
                np.arange(n_ent, dtype=np.int64),
                g,
                transe_p=transe_p,
                acc=acc,
            )
    return total, acc.finalize()


def _tucker_1n_forward(params, h, r, rates, rng):
    """TuckER scores against all tail candidates in O(d^3 + |E| d), with
    optional inverted dropout on the input embedding, the relation-contracted
    core matrix, and the pre-score vector. Returns the candidate scores and a
    closure accumulating gradients for them."""
    hv = params.ent[h]
    rv = params.rel[r]
    W = params.core
    d_e = params.dim_e
    keep = [1.0 - p for p in rates]
    m_in = (rng.random(d_e) < keep[0]).astype(params.dtype) / keep[0] if rates[0] > 0 else None
    m_core = (
        (rng.random((d_e, d_e)) < keep[1]).astype(params.dtype) / keep[1]
        if rates[1] > 0
        else None
    )
    m_out = (rng.random(d_e) < keep[2]).astype(params.dtype) / keep[2] if rates[2] > 0 else None

    v0 = hv * m_in if m_in is not None else hv
    Wr = np.einsum("ijk,j->ik", W, rv)
    Wrd = Wr * m_core if m_core is not None else Wr
    v1 = v0 @ Wrd
    v2 = v1 * m_out if m_out is not None else v1
    scores = params.ent @ v2

    def backward(g: np.ndarray, acc: GradAccumulator) -> None:
        # dL/dE rows: g_e * v2; dL/dv2 = E^T g.
        acc.add("ent", np.arange(params.num_entities), g[:, None] * v2[None, :])
        dv2 = params.ent.T @ g
        dv1 = dv2 * m_out if m_out is not None else dv2
        dWrd = np.outer(v0, dv1)
        dWr = dWrd * m_core if m_core is not None else dWrd
        dv0 = Wrd @ dv1
        dh = dv0 * m_in if m_in is not None else dv0
        acc.add("ent", np.array([h]), dh[None, :])
        acc.add("rel", np.array([r]), np.einsum("ijk,ik->j", W, dWr)[None, :])
        acc.add_dense("core", np.einsum("ik,j->ijk", dWr, rv))

    return scores, backward


def loss_and_grads(
    positives: Sequence[Triple],
    negatives: Sequence[Triple],
    params: ModelParams,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[float, SparseGrads]:
    """Dispatch to the configured loss; see the specific functions."""
    if cfg.loss == "margin":
        return margin_loss_and_grads(positives, negatives, params, cfg.margin, cfg.transe_p)
    if cfg.loss == "logistic":
        return logistic_loss_and_grads(positives, negatives, params, cfg.reg_lambda, cfg.transe_p)
    if cfg.loss == "bce":
        return bce_1n_loss_and_grads(
            positives, params, cfg.label_smoothing, cfg.dropout, rng, cfg.transe_p
        )
    raise ValueError(f"unknown loss {cfg.loss!r}")


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """AdaGrad squared-gradient accumulators per tensor; empty for SGD."""

    acc: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: ModelParams,
    grads: SparseGrads,
    state: OptimizerState,
    cfg: TrainConfig,
) -> None:
    """Apply one sparse descent step, then re-impose model constraints on the
    touched rows. SGD: theta -= lr*g. AdaGrad: acc += g^2 and
    theta -= lr*g/(sqrt(acc)+1e-8)."""
    for name, (rows, values) in grads.slices.items():
        if not np.all(np.isfinite(values)):
            raise NonFiniteGradientError(f"gradient for {name!r} is not finite")
    lr = params.dtype.type(cfg.learning_rate)
    if lr == 0:
        return
    for name, (rows, values) in grads.slices.items():
        arr = getattr(params, name)
        if cfg.optimizer == "adagrad":
            if name not in state.acc:
                state.acc[name] = np.zeros_like(arr)
            acc = state.acc[name]
            if rows is None:
                acc += values * values
                arr -= lr * values / (np.sqrt(acc) + ADAGRAD_EPS)
            else:
                acc[rows] += values * values
                arr[rows] -= lr * values / (np.sqrt(acc[rows]) + ADAGRAD_EPS)
        else:
            if rows is None:
                arr -= lr * values
            else:
                arr[rows] -= lr * values
    project_constraints(params, touched_rows(grads))


# ---------------------------------------------------------------------------
# The epoch loop
# ---------------------------------------------------------------------------


def batch_size_for(n_train: int, cfg: TrainConfig) -> int:
    if cfg.batch_size is not None:
        return min(cfg.batch_size, n_train)
    return -(-n_train // cfg.num_batches)  # ceil division


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    params: ModelParams | None = None,
    dtype=np.float32,
) -> tuple[ModelParams, list[float]]:
    """Run the full training loop; returns final params and per-epoch mean
    loss (total loss / |train|). Deterministic for a fixed seed."""
    train_triples = list(dataset.train)
    if not train_triples:
        raise KgBenchError("cannot train on an empty train split")
    n_ent = dataset.vocab.num_entities
    n_rel = dataset.vocab.num_relations
    if params is None:
        params = init_params(
            cfg.model, n_ent, n_rel, cfg.dim_e, cfg.dim_r, seed=cfg.seed, dtype=dtype
        )
    validate_params(params)

    rng = np.random.default_rng(cfg.seed)
    known = set(train_triples)
    stats = BernoulliStats(train_triples) if cfg.corruption == "bernoulli" else None
    bs = batch_size_for(len(train_triples), cfg)
    state = OptimizerState()
    curve: list[float] = []

    for _epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_triples))
        epoch_loss = 0.0
        for start in range(0, len(train_triples), bs):
            batch = [train_triples[i] for i in perm[start : start + bs]]
            if cfg.loss == "bce":
                negatives: list[Triple] = []
            else:
                negatives = []
                for t in batch:
                    negatives.extend(
                        sample_negatives(
                            t, cfg.negatives, cfg.corruption, known, n_ent, rng, stats
                        )
                    )
            loss, grads = loss_and_grads(batch, negatives, params, cfg, rng)
            optimizer_step(params, grads, state, cfg)
            epoch_loss += loss
        curve.append(epoch_loss / len(train_triples))
    return params, curve
