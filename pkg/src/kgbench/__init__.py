"""kgbench: knowledge-graph embedding toolkit and benchmark harness.

Pipeline: sample a benchmark from a full triple set (``sampling``), validate
it against an ontology schema (``ontology``), train one of six classical
embedding models (``models``, ``training``), and evaluate filtered/raw link
prediction (``evaluation``). File formats live in ``io``; the ``kgbench``
command wires everything together.
"""

from .core import (
    Dataset,
    EntityId,
    NodeKind,
    OntologySchema,
    RelationDecl,
    RelationId,
    RelationKind,
    Triple,
    VocabPolicy,
    Vocabulary,
    coverage_report,
    dataset_stats,
    encode_triples,
)
from .evaluation import EvalConfig, EvalReport, FilterIndex, Protocol, Sides, category_predict, evaluate, rank_one
from .models import MODEL_TAGS, ModelParams, grad, init_params, project_constraints, score
from .sampling import SamplerConfig, build_benchmark, relation_histogram, split_dataset
from .training import TrainConfig, OptimizerState, loss_and_grads, optimizer_step, preset, sample_negatives, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EntityId",
    "EvalConfig",
    "EvalReport",
    "FilterIndex",
    "MODEL_TAGS",
    "ModelParams",
    "NodeKind",
    "OntologySchema",
    "OptimizerState",
    "Protocol",
    "RelationDecl",
    "RelationId",
    "RelationKind",
    "SamplerConfig",
    "Sides",
    "TrainConfig",
    "Triple",
    "VocabPolicy",
    "Vocabulary",
    "build_benchmark",
    "category_predict",
    "coverage_report",
    "dataset_stats",
    "encode_triples",
    "evaluate",
    "grad",
    "init_params",
    "loss_and_grads",
    "optimizer_step",
    "preset",
    "project_constraints",
    "rank_one",
    "relation_histogram",
    "sample_negatives",
    "score",
    "split_dataset",
    "train",
]
