"""Bit-exact readers and writers for triple files, dictionaries, checkpoints,
and metric reports.

File formats
------------
triples
    UTF-8 TSV, one ``head<TAB>relation<TAB>tail`` per line, no quoting.
    Trailing newline tolerated; blank or short/long lines are rejected.
dictionaries
    UTF-8 TSV, ``label<TAB>id`` per line; ids must be dense in [0, n).
checkpoint (binary)
    ::

        magic   4 bytes  b"KGE1"
        u8               model tag length L
        L bytes          model tag (ascii, lowercase)
        u8               scalar width: 4 (float32) or 8 (float64)
        u64 LE           entity count
        u64 LE           relation count
        u64 LE           entity dim
        u64 LE           relation dim
        payload          tensors in the model's canonical order,
                         row-major (C order), little-endian scalars

    The payload length implied by the header must match the file length
    exactly. Readers reject rather than repair.
report
    JSON object with keys hits1/hits3/hits10 (plus hitsK for extra
    cutoffs), mr, mrr, protocol, sides, n_test. Floats are serialized via
    Python's shortest round-trip repr, which preserves full precision.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import Dataset, Vocabulary, VocabPolicy, encode_triples
from .errors import (
    BadMagicError,
    DuplicateLabelError,
    EmptyReportError,
    LengthMismatchError,
    MalformedLineError,
    NonFiniteValueError,
)
from .evaluation import EvalReport
from .models import ModelParams, tensor_shapes, validate_params

MAGIC = b"KGE1"

ENTITY_DICT = "entity2id.tsv"
RELATION_DICT = "relation2id.tsv"


def read_triples_tsv(path) -> list[tuple[str, str, str]]:
    """Read raw string triples, preserving line order.

    Raises :class:`MalformedLineError` (with the 1-based line number) for any
    line that does not contain exactly three tab-separated fields; blank
    lines are malformed too.
    """
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            parts = line.split("\t")
            if len(parts) != 3 or not line:
                raise MalformedLineError(
                    lineno, f"expected 3 tab-separated fields, got {len(parts) if line else 0}"
                )
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def write_triples_tsv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in rows:
            f.write(f"{h}\t{r}\t{t}\n")


def read_dictionary(path) -> list[str]:
    """Read a label->id dictionary; returns labels ordered by id.

    Ids must be dense in [0, n); a label occurring twice with different ids
    is a :class:`DuplicateLabelError`.
    """
    pairs: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            parts = line.split("\t")
            if len(parts) != 2 or not line:
                raise MalformedLineError(lineno, "expected label<TAB>id")
            label, raw_id = parts
            try:
                idx = int(raw_id)
            except ValueError:
                raise MalformedLineError(lineno, f"id is not an integer: {raw_id!r}") from None
            if label in pairs and pairs[label] != idx:
                raise DuplicateLabelError(
                    f"label {label!r} maps to both {pairs[label]} and {idx}"
                )
            pairs[label] = idx
    labels = [""] * len(pairs)
    seen = set()
    for label, idx in pairs.items():
        if idx < 0 or idx >= len(pairs) or idx in seen:
            raise DuplicateLabelError(f"ids are not dense in [0, {len(pairs)}): {idx}")
        seen.add(idx)
        labels[idx] = label
    return labels


def write_dictionary(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for idx, label in enumerate(labels):
            f.write(f"{label}\t{idx}\n")


def load_dataset(
    data_dir,
    train_file: str = "train.tsv",
    dev_file: str = "dev.tsv",
    test_file: str = "test.tsv",
) -> Dataset:
    """Load a dataset directory into encoded form.

    When ``entity2id.tsv`` / ``relation2id.tsv`` exist they freeze the
    vocabulary; otherwise ids are derived in first-appearance order over
    train, then dev, then test (in memory only -- loading never writes).
    Missing dev/test files are treated as empty splits.
    """
    data_dir = Path(data_dir)
    raw = {}
    for name, fname in (("train", train_file), ("dev", dev_file), ("test", test_file)):
        fpath = data_dir / fname
        raw[name] = read_triples_tsv(fpath) if fpath.exists() else []

    ent_dict = data_dir / ENTITY_DICT
    rel_dict = data_dir / RELATION_DICT
    if ent_dict.exists() and rel_dict.exists():
        vocab = Vocabulary(read_dictionary(ent_dict), read_dictionary(rel_dict))
    else:
        all_raw = raw["train"] + raw["dev"] + raw["test"]
        vocab, _ = encode_triples(all_raw, VocabPolicy.GROW)

    encoded = {}
    for name in ("train", "dev", "test"):
        if raw[name]:
            _, triples = encode_triples(raw[name], VocabPolicy.FROZEN, vocab)
        else:
            triples = []
        encoded[name] = triples
    return Dataset.build(vocab, encoded["train"], encoded["dev"], encoded["test"])


def save_dataset(dataset: Dataset, out_dir) -> None:
    """Write train/dev/test TSVs plus both dictionaries to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("train", "dev", "test"):
        split = getattr(dataset, name)
        write_triples_tsv(out_dir / f"{name}.tsv", (dataset.vocab.decode(t) for t in split))
    write_dictionary(out_dir / ENTITY_DICT, dataset.vocab.entity_labels)
    write_dictionary(out_dir / RELATION_DICT, dataset.vocab.relation_labels)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_HEADER_TAIL = struct.Struct("<B4Q")  # scalar width, n_ent, n_rel, dim_e, dim_r


def write_checkpoint(params: ModelParams, path) -> None:
    """Serialize model parameters; write->read is a bit-identical round trip.

    Raises :class:`NonFiniteValueError` if any tensor contains NaN or Inf.
    """
    validate_params(params)
    for name, arr in params.tensors():
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError(f"tensor {name!r} contains non-finite values")
    width = params.dtype.itemsize
    if width not in (4, 8):
        raise NonFiniteValueError(f"unsupported scalar width {width}")
    tag_bytes = params.tag.encode("ascii")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", len(tag_bytes)))
        f.write(tag_bytes)
        f.write(
            _HEADER_TAIL.pack(
                width,
                params.num_entities,
                params.num_relations,
                params.dim_e,
                params.dim_r,
            )
        )
        le = "<f4" if width == 4 else "<f8"
        for _name, arr in params.tensors():
            f.write(np.ascontiguousarray(arr, dtype=le).tobytes())


def read_checkpoint(path) -> ModelParams:
    """Read a checkpoint, validating the header before touching the payload."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {blob[:4]!r}")
    offset = 4
    if len(blob) < offset + 1:
        raise LengthMismatchError("truncated header")
    (tag_len,) = struct.unpack_from("<B", blob, offset)
    offset += 1
    tag = blob[offset : offset + tag_len].decode("ascii")
    offset += tag_len
    if len(blob) < offset + _HEADER_TAIL.size:
        raise LengthMismatchError("truncated header")
    width, n_ent, n_rel, dim_e, dim_r = _HEADER_TAIL.unpack_from(blob, offset)
    offset += _HEADER_TAIL.size
    if width not in (4, 8):
        raise LengthMismatchError(f"bad scalar width {width}")

    shapes = tensor_shapes(tag, n_ent, n_rel, dim_e, dim_r)
    expected = offset + sum(int(np.prod(s)) * width for _n, s in shapes)
    if len(blob) != expected:
        raise LengthMismatchError(
            f"file is {len(blob)} bytes, header declares {expected}"
        )

    le = np.dtype("<f4") if width == 4 else np.dtype("<f8")
    native = np.float32 if width == 4 else np.float64
    kwargs = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype=le, count=count, offset=offset)
        offset += count * width
        arr = arr.astype(native, copy=True).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError(f"tensor {name!r} contains non-finite values")
        kwargs[name] = arr
    params = ModelParams(tag=tag, **kwargs)
    validate_params(params)
    return params


# ---------------------------------------------------------------------------
# Reports and generic JSON
# ---------------------------------------------------------------------------


def write_report(report: EvalReport, path) -> None:
    """Emit the aggregated metrics as JSON (see module docstring for keys)."""
    if report.n_test <= 0 or not report.ranks:
        raise EmptyReportError("refusing to write a report over zero ranks")
    write_json(report.to_dict(), path)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)
