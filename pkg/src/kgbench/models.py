"""The six single-modal scoring models: TransE, TransH, TransD, DistMult,
ComplEx, TuckER.

Scores are oriented so that higher means more plausible for every model;
translational distances are negated. Gradients are analytic and sparse: only
the parameter rows touched by a triple are returned. All heavy paths are
vectorized over batches of triples; the single-triple ``score`` / ``grad``
operations are thin wrappers over the batch kernels.

Parameter tensors per model, in checkpoint serialization order:

=========  ==========================================================
transe     ent (|E|, d_e), rel (|R|, d_r)
transh     ent, rel, norm (|R|, d_r) -- unit hyperplane normals
transd     ent, rel, ent_proj (|E|, d_e), rel_proj (|R|, d_r)
distmult   ent, rel
complex    ent, ent_im, rel, rel_im -- real/imaginary parts
tucker     ent, rel, core (d_e, d_r, d_e)
=========  ==========================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Triple
from .errors import DimMismatchError, UnknownModelError

MODEL_TAGS = ("transe", "transh", "transd", "distmult", "complex", "tucker")

#: Models whose entity rows are constrained to L2 norm <= 1 after updates.
NORM_CONSTRAINED = ("transe", "transh", "transd")


@dataclass
class ModelParams:
    """Embedding tensors for one model.

    ``ent`` is (|E|, d_e) and ``rel`` is (|R|, d_r); the optional tensors are
    model-specific (see module docstring). Arrays may be float32 or float64
    but must all share one dtype.
    """

    tag: str
    ent: np.ndarray
    rel: np.ndarray
    norm: np.ndarray | None = None
    ent_proj: np.ndarray | None = None
    rel_proj: np.ndarray | None = None
    ent_im: np.ndarray | None = None
    rel_im: np.ndarray | None = None
    core: np.ndarray | None = None

    @property
    def num_entities(self) -> int:
        return self.ent.shape[0]

    @property
    def num_relations(self) -> int:
        return self.rel.shape[0]

    @property
    def dim_e(self) -> int:
        return self.ent.shape[1]

    @property
    def dim_r(self) -> int:
        return self.rel.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.ent.dtype

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in canonical serialization order."""
        return [(name, getattr(self, name)) for name in tensor_names(self.tag)]

    def copy(self) -> "ModelParams":
        kwargs = {name: arr.copy() for name, arr in self.tensors()}
        return ModelParams(tag=self.tag, **kwargs)


def tensor_names(tag: str) -> tuple[str, ...]:
    """Canonical tensor order per model, used by checkpoints and init."""
    try:
        return {
            "transe": ("ent", "rel"),
            "transh": ("ent", "rel", "norm"),
            "transd": ("ent", "rel", "ent_proj", "rel_proj"),
            "distmult": ("ent", "rel"),
            "complex": ("ent", "ent_im", "rel", "rel_im"),
            "tucker": ("ent", "rel", "core"),
        }[tag]
    except KeyError:
        raise UnknownModelError(f"unknown model tag: {tag!r}") from None


def tensor_shapes(
    tag: str, n_ent: int, n_rel: int, dim_e: int, dim_r: int
) -> list[tuple[str, tuple[int, ...]]]:
    """Expected (name, shape) pairs for a model of the given sizes."""
    shapes = {
        "ent": (n_ent, dim_e),
        "rel": (n_rel, dim_r),
        "norm": (n_rel, dim_r),
        "ent_proj": (n_ent, dim_e),
        "rel_proj": (n_rel, dim_r),
        "ent_im": (n_ent, dim_e),
        "rel_im": (n_rel, dim_r),
        "core": (dim_e, dim_r, dim_e),
    }
    return [(name, shapes[name]) for name in tensor_names(tag)]


def validate_params(params: ModelParams) -> None:
    """Check tensor presence and shape consistency for the model tag.

    Raises :class:`DimMismatchError` on any inconsistency. Models that add
    entity and relation vectors (or multiply them elementwise) additionally
    require d_e == d_r.
    """
    tag = params.tag
    if tag not in MODEL_TAGS:
        raise UnknownModelError(f"unknown model tag: {tag!r}")
    expected = tensor_shapes(
        tag, params.num_entities, params.num_relations, params.dim_e, params.dim_r
    )
    for name, shape in expected:
        arr = getattr(params, name)
        if arr is None:
            raise DimMismatchError(f"{tag}: missing tensor {name!r}")
        if arr.shape != shape:
            raise DimMismatchError(
                f"{tag}: tensor {name!r} has shape {arr.shape}, expected {shape}"
            )
    if tag in ("transe", "transh", "distmult", "complex") and params.dim_e != params.dim_r:
        raise DimMismatchError(f"{tag}: requires d_e == d_r, got {params.dim_e} != {params.dim_r}")


def init_params(
    tag: str,
    n_ent: int,
    n_rel: int,
    dim_e: int,
    dim_r: int | None = None,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Initialize embeddings uniformly in [-6/sqrt(d), 6/sqrt(d)].

    The TuckER core is drawn uniformly from [-1, 1] and scaled by 1/d_r.
    Entity rows of the norm-constrained models (and TransH hyperplane
    normals) are normalized to unit L2 norm once at init. Deterministic for
    a fixed seed.
    """
    if dim_r is None:
        dim_r = dim_e
    if dim_e <= 0 or dim_r <= 0:
        raise DimMismatchError("embedding dims must be positive")
    rng = np.random.default_rng(seed)
    kwargs = {}
    for name, shape in tensor_shapes(tag, n_ent, n_rel, dim_e, dim_r):
        if name == "core":
            arr = rng.uniform(-1.0, 1.0, size=shape) / dim_r
        else:
            bound = 6.0 / np.sqrt(shape[-1])
            arr = rng.uniform(-bound, bound, size=shape)
        kwargs[name] = arr.astype(dtype)
    params = ModelParams(tag=tag, **kwargs)
    if tag in NORM_CONSTRAINED:
        _normalize_rows(params.ent)
    if tag == "transh":
        _normalize_rows(params.norm)
    validate_params(params)
    return params


def _normalize_rows(arr: np.ndarray) -> None:
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    np.divide(arr, norms, out=arr, where=norms > 0)


def _ident_project(x: np.ndarray, d_out: int) -> np.ndarray:
    """Apply the rectangular identity eye(d_out, d_in) to rows of x."""
    d_in = x.shape[-1]
    if d_out == d_in:
        return x
    if d_out < d_in:
        return x[..., :d_out]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, d_out - d_in)]
    return np.pad(x, pad)


def _ident_project_t(g: np.ndarray, d_out: int) -> np.ndarray:
    """Transpose of :func:`_ident_project`: map d_in-vectors back to d_out."""
    return _ident_project(g, d_out)


# ---------------------------------------------------------------------------
# Batch scoring
# ---------------------------------------------------------------------------


def scores_for(
    params: ModelParams,
    heads: np.ndarray,
    rels: np.ndarray,
    tails: np.ndarray,
    transe_p: int = 2,
) -> np.ndarray:
    """Score a batch of triples given as parallel id arrays. Returns (B,)."""
    validate_params(params)
    tag = params.tag
    h = params.ent[heads]
    r = params.rel[rels]
    t = params.ent[tails]

    if tag == "transe":
        u = h + r - t
        if transe_p == 1:
            return -np.abs(u).sum(axis=1)
        return -np.sqrt((u * u).sum(axis=1))

    if tag == "transh":
        w = params.norm[rels]
        hp = h - (h * w).sum(axis=1, keepdims=True) * w
        tp = t - (t * w).sum(axis=1, keepdims=True) * w
        e = hp + r - tp
        return -(e * e).sum(axis=1)

    if tag == "transd":
        rp = params.rel_proj[rels]
        s_h = (params.ent_proj[heads] * h).sum(axis=1, keepdims=True)
        s_t = (params.ent_proj[tails] * t).sum(axis=1, keepdims=True)
        d_r = params.dim_r
        u = s_h * rp + _ident_project(h, d_r) + r - s_t * rp - _ident_project(t, d_r)
        return -(u * u).sum(axis=1)

    if tag == "distmult":
        return (h * r * t).sum(axis=1)

    if tag == "complex":
        hi = params.ent_im[heads]
        ri = params.rel_im[rels]
        ti = params.ent_im[tails]
        return (h * r * t + hi * r * ti + h * ri * ti - hi * ri * t).sum(axis=1)

    if tag == "tucker":
        m = np.einsum("bi,ijk->bjk", h, params.core)
        v = np.einsum("bj,bjk->bk", r, m)
        return (v * t).sum(axis=1)

    raise UnknownModelError(tag)


def score(params: ModelParams, t: Triple, transe_p: int = 2) -> float:
    """Score one triple; higher is more plausible."""
    out = scores_for(
        params,
        np.array([t.head]),
        np.array([t.relation]),
        np.array([t.tail]),
        transe_p=transe_p,
    )
    return float(out[0])


def tail_scores(
    params: ModelParams, head: int, rel: int, transe_p: int = 2
) -> np.ndarray:
    """Scores of (head, rel, e) for every candidate entity e. Returns (|E|,)."""
    validate_params(params)
    tag = params.tag
    E = params.ent
    h = params.ent[head]
    r = params.rel[rel]

    if tag == "transe":
        u = (h + r)[None, :] - E
        if transe_p == 1:
            return -np.abs(u).sum(axis=1)
        return -np.sqrt((u * u).sum(axis=1))

    if tag == "transh":
        w = params.norm[rel]
        hp = h - (h @ w) * w
        cand = E - (E @ w)[:, None] * w[None, :]
        e = (hp + r)[None, :] - cand
        return -(e * e).sum(axis=1)

    if tag == "transd":
        rp = params.rel_proj[rel]
        s_h = params.ent_proj[head] @ h
        d_r = params.dim_r
        fixed = s_h * rp + _ident_project(h, d_r) + r
        s_e = (params.ent_proj * E).sum(axis=1)
        cand = s_e[:, None] * rp[None, :] + _ident_project(E, d_r)
        u = fixed[None, :] - cand
        return -(u * u).sum(axis=1)

    if tag == "distmult":
        return E @ (h * r)

    if tag == "complex":
        hi = params.ent_im[head]
        ri = params.rel_im[rel]
        re_coef = h * r - hi * ri
        im_coef = h * ri + hi * r
        return E @ re_coef + params.ent_im @ im_coef

    if tag == "tucker":
        vec = np.einsum("i,ijk,j->k", h, params.core, r)
        return E @ vec

    raise UnknownModelError(tag)


def head_scores(
    params: ModelParams, rel: int, tail: int, transe_p: int = 2
) -> np.ndarray:
    """Scores of (e, rel, tail) for every candidate entity e. Returns (|E|,)."""
    validate_params(params)
    tag = params.tag
    E = params.ent
    r = params.rel[rel]
    t = params.ent[tail]

    if tag == "transe":
        u = E + (r - t)[None, :]
        if transe_p == 1:
            return -np.abs(u).sum(axis=1)
        return -np.sqrt((u * u).sum(axis=1))

    if tag == "transh":
        w = params.norm[rel]
        tp = t - (t @ w) * w
        cand = E - (E @ w)[:, None] * w[None, :]
        e = cand + (r - tp)[None, :]
        return -(e * e).sum(axis=1)

    if tag == "transd":
        rp = params.rel_proj[rel]
        s_t = params.ent_proj[tail] @ t
        d_r = params.dim_r
        fixed = r - s_t * rp - _ident_project(t, d_r)
        s_e = (params.ent_proj * E).sum(axis=1)
        cand = s_e[:, None] * rp[None, :] + _ident_project(E, d_r)
        u = cand + fixed[None, :]
        return -(u * u).sum(axis=1)

    if tag == "distmult":
        return E @ (r * t)

    if tag == "complex":
        ri = params.rel_im[rel]
        ti = params.ent_im[tail]
        re_coef = r * t + ri * ti
        im_coef = r * ti - ri * t
        return E @ re_coef + params.ent_im @ im_coef

    if tag == "tucker":
        vec = np.einsum("ijk,j,k->i", params.core, r, t)
        return E @ vec

    raise UnknownModelError(tag)


def candidate_scores(
    params: ModelParams, side: str, t: Triple, transe_p: int = 2
) -> np.ndarray:
    """Scores of every entity substituted into ``side`` ("head" or "tail")."""
    if side == "tail":
        return tail_scores(params, t.head, t.relation, transe_p=transe_p)
    if side == "head":
        return head_scores(params, t.relation, t.tail, transe_p=transe_p)
    raise ValueError(f"side must be 'head' or 'tail', got {side!r}")


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


@dataclass
class SparseGrads:
    """Gradient slices per parameter tensor.

    ``slices`` maps tensor name to (row_ids, values) where values[i] is the
    gradient of the scalar objective w.r.t. the row ``row_ids[i]``. A dense
    tensor (the TuckER core) uses row_ids None with the full gradient array.
    """

    slices: dict[str, tuple[np.ndarray | None, np.ndarray]] = field(default_factory=dict)

    def row(self, name: str, row_id: int) -> np.ndarray | None:
        """Gradient for one row, or None if the row was not touched."""
        if name not in self.slices:
            return None
        rows, values = self.slices[name]
        if rows is None:
            return values
        hits = np.nonzero(rows == row_id)[0]
        if hits.size == 0:
            return None
        return values[hits[0]]

    def names(self) -> list[str]:
        return list(self.slices)


class GradAccumulator:
    """Collects sparse row contributions and reduces them via scatter-add."""

    def __init__(self):
        self._parts: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}
        self._dense: dict[str, np.ndarray] = {}

    def add(self, name: str, rows: np.ndarray, values: np.ndarray) -> None:
        self._parts.setdefault(name, []).append((np.asarray(rows), values))

    def add_dense(self, name: str, values: np.ndarray) -> None:
        if name in self._dense:
            self._dense[name] = self._dense[name] + values
        else:
            self._dense[name] = values

    def finalize(self) -> SparseGrads:
        out = SparseGrads()
        for name, parts in self._parts.items():
            rows = np.concatenate([p[0] for p in parts])
            values = np.concatenate([p[1] for p in parts], axis=0)
            uniq, inverse = np.unique(rows, return_inverse=True)
            acc = np.zeros((uniq.size,) + values.shape[1:], dtype=values.dtype)
            np.add.at(acc, inverse, values)
            out.slices[name] = (uniq, acc)
        for name, values in self._dense.items():
            out.slices[name] = (None, values)
        return out


def grads_for(
    params: ModelParams,
    heads: np.ndarray,
    rels: np.ndarray,
    tails: np.ndarray,
    weights: np.ndarray,
    transe_p: int = 2,
    acc: GradAccumulator | None = None,
) -> GradAccumulator:
    """Accumulate d(sum_b weights[b] * f(triple_b)) / d(params).

    Contributions are added to ``acc`` (a fresh one if omitted); call
    ``finalize`` on the result to obtain reduced :class:`SparseGrads`.
    """
    validate_params(params)
    tag = params.tag
    if acc is None:
        acc = GradAccumulator()
    w = np.asarray(weights, dtype=params.dtype)[:, None]
    h = params.ent[heads]
    r = params.rel[rels]
    t = params.ent[tails]

    if tag == "transe":
        u = h + r - t
        if transe_p == 1:
            gu = -np.sign(u)
        else:
            nrm = np.sqrt((u * u).sum(axis=1, keepdims=True))
            # Subgradient 0 at the nondifferentiable point u = 0.
            gu = np.divide(-u, nrm, out=np.zeros_like(u), where=nrm > 0)
        acc.add("ent", heads, w * gu)
        acc.add("rel", rels, w * gu)
        acc.add("ent", tails, -w * gu)
        return acc

    if tag == "transh":
        wv = params.norm[rels]
        s_h = (h * wv).sum(axis=1, keepdims=True)
        s_t = (t * wv).sum(axis=1, keepdims=True)
        e = (h + r - t) + (s_t - s_h) * wv
        ge = -2.0 * e
        ge_w = (ge * wv).sum(axis=1, keepdims=True)
        proj_ge = ge - ge_w * wv
        acc.add("ent", heads, w * proj_ge)
        acc.add("rel", rels, w * ge)
        acc.add("ent", tails, -w * proj_ge)
        acc.add("norm", rels, w * ((t - h) * ge_w + (s_t - s_h) * ge))
        return acc

    if tag == "transd":
        hp = params.ent_proj[heads]
        tp = params.ent_proj[tails]
        rp = params.rel_proj[rels]
        s_h = (hp * h).sum(axis=1, keepdims=True)
        s_t = (tp * t).sum(axis=1, keepdims=True)
        d_r, d_e = params.dim_r, params.dim_e
        u = s_h * rp + _ident_project(h, d_r) + r - s_t * rp - _ident_project(t, d_r)
        g = -2.0 * u
        g_rp = (g * rp).sum(axis=1, keepdims=True)
        g_back = _ident_project_t(g, d_e)
        acc.add("ent", heads, w * (hp * g_rp + g_back))
        acc.add("rel", rels, w * g)
        acc.add("ent", tails, -w * (tp * g_rp + g_back))
        acc.add("ent_proj", heads, w * (h * g_rp))
        acc.add("ent_proj", tails, -w * (t * g_rp))
        acc.add("rel_proj", rels, w * ((s_h - s_t) * g))
        return acc

    if tag == "distmult":
        acc.add("ent", heads, w * (r * t))
        acc.add("rel", rels, w * (h * t))
        acc.add("ent", tails, w * (h * r))
        return acc

    if tag == "complex":
        hi = params.ent_im[heads]
        ri = params.rel_im[rels]
        ti = params.ent_im[tails]
        acc.add("ent", heads, w * (r * t + ri * ti))
        acc.add("ent_im", heads, w * (r * ti - ri * t))
        acc.add("rel", rels, w * (h * t + hi * ti))
        acc.add("rel_im", rels, w * (h * ti - hi * t))
        acc.add("ent", tails, w * (h * r - hi * ri))
        acc.add("ent_im", tails, w * (h * ri + hi * r))
        return acc

    if tag == "tucker":
        W = params.core
        acc.add("ent", heads, w * np.einsum("ijk,bj,bk->bi", W, r, t))
        acc.add("rel", rels, w * np.einsum("ijk,bi,bk->bj", W, h, t))
        acc.add("ent", tails, w * np.einsum("ijk,bi,bj->bk", W, h, r))
        acc.add_dense("core", np.einsum("b,bi,bj,bk->ijk", w[:, 0], h, r, t))
        return acc

    raise UnknownModelError(tag)


def grad(params: ModelParams, t: Triple, transe_p: int = 2) -> SparseGrads:
    """Analytic gradient of ``score(params, t)`` w.r.t. the touched rows."""
    acc = grads_for(
        params,
        np.array([t.head]),
        np.array([t.relation]),
        np.array([t.tail]),
        np.ones(1, dtype=params.dtype),
        transe_p=transe_p,
    )
    return acc.finalize()


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


def project_constraints(
    params: ModelParams, touched: dict[str, np.ndarray] | None = None
) -> None:
    """Re-impose norm constraints in place on the touched rows.

    TransE/TransH/TransD entity rows are scaled back onto the unit ball when
    their L2 norm exceeds 1; TransH hyperplane normals are rescaled to exactly
    unit norm. No-op for DistMult, ComplEx, and TuckER. ``touched`` maps
    tensor name to row ids; None means all rows.
    """
    tag = params.tag
    if tag in NORM_CONSTRAINED:
        rows = None if touched is None else touched.get("ent")
        _project_ball(params.ent, rows)
    if tag == "transh":
        rows = None if touched is None else touched.get("norm")
        _project_sphere(params.norm, rows)


def _project_ball(arr: np.ndarray, rows: np.ndarray | None) -> None:
    block = arr if rows is None else arr[rows]
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    scale = np.maximum(norms, 1.0)
    if rows is None:
        arr /= scale
    else:
        arr[rows] = block / scale


def _project_sphere(arr: np.ndarray, rows: np.ndarray | None) -> None:
    block = arr if rows is None else arr[rows]
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    if rows is None:
        arr /= safe
    else:
        arr[rows] = block / safe


def touched_rows(grads: SparseGrads) -> dict[str, np.ndarray]:
    """Row ids per tensor touched by a gradient (dense tensors excluded)."""
    return {
        name: rows for name, (rows, _values) in grads.slices.items() if rows is not None
    }
