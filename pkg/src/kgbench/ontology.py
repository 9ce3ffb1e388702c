"""Ontology validation: taxonomy acyclicity, level statistics, domain/range
constraint checking, and equivalence-class closure.

Validation never mutates its inputs and reports violations as data, not
exceptions (except for contract errors such as an undeclared relation).
Level convention: roots sit at level 1 and a node's level is the longest
path to any root, so multi-parent nodes land at their deepest level. Nodes
inside a cycle, or downstream of one, receive no level.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (
    Dataset,
    EntityId,
    NodeKind,
    OntologySchema,
    RelationDecl,
    RelationKind,
    Triple,
    Vocabulary,
)
from .errors import UndeclaredRelationError, UnknownLabelError


@dataclass(frozen=True)
class Violation:
    """One broken rule: the rule id, a human-readable message, and the
    offending triple, node, or edge."""

    rule: str
    message: str
    triple: Triple | None = None
    node: EntityId | None = None

    def to_dict(self) -> dict:
        out = {"rule": self.rule, "message": self.message}
        if self.triple is not None:
            out["triple"] = list(self.triple)
        if self.node is not None:
            out["node"] = self.node
        return out


@dataclass
class ValidationReport:
    """Violations plus Table-style statistics.

    An empty violation list means the checked inputs conform to the schema.
    """

    violations: list[Violation] = field(default_factory=list)
    level_histogram: dict[int, int] = field(default_factory=dict)
    kind_counts: dict[RelationKind, int] = field(default_factory=dict)

    @property
    def conforms(self) -> bool:
        return not self.violations

    def merge(self, other: "ValidationReport") -> "ValidationReport":
        merged = ValidationReport(
            violations=self.violations + other.violations,
            level_histogram={**self.level_histogram, **other.level_histogram},
            kind_counts=dict(Counter(self.kind_counts) + Counter(other.kind_counts)),
        )
        return merged

    def to_dict(self) -> dict:
        return {
            "conforms": self.conforms,
            "violations": [v.to_dict() for v in self.violations],
            "level_histogram": {str(k): v for k, v in sorted(self.level_histogram.items())},
            "kind_counts": {k.value: v for k, v in self.kind_counts.items()},
        }


def _cycle_nodes(edges: Sequence[tuple[int, int]]) -> set[int]:
    """Nodes belonging to a directed cycle: members of any strongly connected
    component of size > 1, plus self-loop nodes. Iterative Tarjan."""
    out_edges: dict[int, list[int]] = defaultdict(list)
    nodes: set[int] = set()
    self_loops: set[int] = set()
    for a, b in edges:
        nodes.add(a)
        nodes.add(b)
        out_edges[a].append(b)
        if a == b:
            self_loops.add(a)

    index: dict[int, int] = {}
    lowlink: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    counter = 0
    cyclic = set(self_loops)

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(out_edges[root]))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = lowlink[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(out_edges[succ])))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                if len(component) > 1:
                    cyclic.update(component)
    return cyclic


def _levels(edges: Sequence[tuple[int, int]]) -> dict[int, int]:
    """Longest-path-to-root level per node; roots (no parent) are level 1.

    Only nodes incident to at least one edge participate. Nodes whose
    ancestry contains a cycle are omitted.
    """
    parents: dict[int, set[int]] = defaultdict(set)
    children: dict[int, set[int]] = defaultdict(set)
    nodes = set()
    for child, parent in edges:
        nodes.add(child)
        nodes.add(parent)
        parents[child].add(parent)
        children[parent].add(child)
    remaining = {n: len(parents[n]) for n in nodes}
    level = {n: 1 for n in nodes if remaining[n] == 0}
    queue = list(level)
    while queue:
        parent = queue.pop()
        for child in children[parent]:
            remaining[child] -= 1
            if remaining[child] == 0:
                level[child] = 1 + max(level[p] for p in parents[child])
                queue.append(child)
    return level


def check_taxonomy(schema: OntologySchema) -> ValidationReport:
    """Detect cycles in the subClassOf/broader edge union and histogram levels.

    Property-level edges (subPropertyOf / equivalentPropertyOf) are checked
    for acyclicity only; no levels and no inference over them.
    """
    report = ValidationReport()
    for node in sorted(_cycle_nodes(schema.taxonomy_edges)):
        report.violations.append(
            Violation("CycleDetected", f"node {node} lies on a taxonomy cycle", node=node)
        )
    for node in sorted(_cycle_nodes(schema.property_edges)):
        report.violations.append(
            Violation(
                "PropertyCycleDetected",
                f"relation {node} lies on a property-taxonomy cycle",
                node=node,
            )
        )
    report.level_histogram = dict(Counter(_levels(schema.taxonomy_edges).values()))
    return report


def check_domain_range(dataset: Dataset, schema: OntologySchema) -> ValidationReport:
    """Flag triples whose head/tail node kinds violate the relation's
    declared domain/range sets. Checks every split.

    Raises :class:`UndeclaredRelationError` if a dataset relation has no
    declaration; an entity without a declared node kind fails the membership
    test and is flagged.
    """
    report = ValidationReport()
    kind_counts: Counter = Counter()
    for triple in dataset.all_triples():
        decl = schema.relations.get(triple.relation)
        if decl is None:
            label = dataset.vocab.relation_labels[triple.relation]
            raise UndeclaredRelationError(
                f"relation {label!r} (id {triple.relation}) is not declared in the schema"
            )
        kind_counts[decl.kind] += 1
        head_kind = schema.node_kinds.get(triple.head)
        tail_kind = schema.node_kinds.get(triple.tail)
        if head_kind not in decl.domain:
            report.violations.append(
                Violation(
                    "DomainViolation",
                    f"head kind {head_kind.value if head_kind else 'undeclared'} "
                    f"not in domain {sorted(k.value for k in decl.domain)}",
                    triple=triple,
                )
            )
        if tail_kind not in decl.range:
            report.violations.append(
                Violation(
                    "RangeViolation",
                    f"tail kind {tail_kind.value if tail_kind else 'undeclared'} "
                    f"not in range {sorted(k.value for k in decl.range)}",
                    triple=triple,
                )
            )
    report.kind_counts = dict(kind_counts)
    return report


def equivalence_closure(
    pairs: Iterable[tuple[EntityId, EntityId]],
) -> list[set[EntityId]]:
    """Connected components under symmetric-transitive closure (union-find).

    Singleton components are omitted; the result is order-independent and
    sorted by smallest member for determinism.
    """
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for a, b in pairs:
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, set[int]] = defaultdict(set)
    for x in parent:
        groups[find(x)].add(x)
    components = [members for members in groups.values() if len(members) > 1]
    return sorted(components, key=min)


# ---------------------------------------------------------------------------
# Schema file format
# ---------------------------------------------------------------------------

_KIND_BY_NAME = {k.value: k for k in NodeKind}
_RELKIND_BY_NAME = {k.value: k for k in RelationKind}


def schema_from_dict(d: dict, vocab: Vocabulary) -> OntologySchema:
    """Build an :class:`OntologySchema` from its JSON form, resolving labels.

    Expected keys: ``node_kinds`` (label -> class/concept/instance/literal),
    ``relations`` (label -> {kind, domain, range}), ``taxonomy`` (list of
    [child, parent] labels), optional ``property_taxonomy`` (relation label
    pairs).
    """
    node_kinds = {}
    for label, kind_name in d.get("node_kinds", {}).items():
        if kind_name not in _KIND_BY_NAME:
            raise UnknownLabelError(f"unknown node kind {kind_name!r} for {label!r}")
        node_kinds[vocab.entity_id(label)] = _KIND_BY_NAME[kind_name]

    relations = {}
    for label, decl in d.get("relations", {}).items():
        kind_name = decl.get("kind", "object")
        if kind_name not in _RELKIND_BY_NAME:
            raise UnknownLabelError(f"unknown relation kind {kind_name!r} for {label!r}")
        kind = _RELKIND_BY_NAME[kind_name]
        OntologySchema.check_meta_label(label, kind)
        domain = frozenset(_KIND_BY_NAME[k] for k in decl.get("domain", []))
        range_ = frozenset(_KIND_BY_NAME[k] for k in decl.get("range", []))
        relations[vocab.relation_id(label)] = RelationDecl(kind, domain, range_)

    taxonomy = tuple(
        (vocab.entity_id(child), vocab.entity_id(parent))
        for child, parent in d.get("taxonomy", [])
    )
    property_taxonomy = tuple(
        (vocab.relation_id(child), vocab.relation_id(parent))
        for child, parent in d.get("property_taxonomy", [])
    )
    return OntologySchema(node_kinds, relations, taxonomy, property_taxonomy)


def taxonomy_edges_from(dataset: Dataset, schema: OntologySchema) -> list[tuple[int, int]]:
    """Extract (child, parent) pairs from dataset triples whose relation is a
    declared meta-property named subClassOf or broader."""
    wanted = set()
    for rid, decl in schema.relations.items():
        if decl.kind is RelationKind.META:
            label = dataset.vocab.relation_labels[rid]
            if label in ("subClassOf", "broader"):
                wanted.add(rid)
    return [(t.head, t.tail) for t in dataset.all_triples() if t.relation in wanted]
