"""Constraint-guided view template instantiation and query rewriting.

Eleven view templates are supported: four connector (path contraction)
kinds and seven sparsifier (filter/aggregate) kinds. Enumeration
instantiates templates against the mined constraints: connector hop
counts must both lie inside the query's feasible connector range and
correspond to at least one schema path between the endpoint types, so
infeasible candidates are never produced.

Rewriting is conservative: a plan is only produced when the rewritten
query provably returns the same rows over the view as the original does
over the raw graph. The checks cover hop-range coverage (every feasible
raw length must map onto whole view hops), positional label constraints,
and, for multi-hop view traversals, that every qualifying schema path
passes through the endpoint type at each contraction boundary. Instances
that fail these checks raise RewriteInfeasibleError and simply contribute
no plan; soundness is preferred over coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    NameEliminatedButReferencedError,
    RewriteInfeasibleError,
    ValidationError,
)
from .mining import ConnectorBounds, ConstraintSet, mine_constraints, query_hop_bounds
from .query import Aggregate, QueryGraph, VarLengthPath
from .store import GraphSchema, PropertyValue

VIEW_KINDS = (
    "KHopConnector",
    "SameVertexTypeConnector",
    "SameEdgeTypeConnector",
    "SourceToSinkConnector",
    "VertexRemoval",
    "EdgeRemoval",
    "VertexInclusion",
    "EdgeInclusion",
    "VertexAggregator",
    "EdgeAggregator",
    "SubgraphAggregator",
)

CONNECTOR_KINDS = VIEW_KINDS[:4]
SPARSIFIER_KINDS = VIEW_KINDS[4:]
AGGREGATOR_KINDS = VIEW_KINDS[8:]

DEFAULT_MAX_K = 10


@dataclass(frozen=True)
class Predicate:
    """Type/label membership test with an optional property comparison."""

    types: frozenset[str] | None = None
    prop: tuple[str, str, PropertyValue] | None = None  # (key, op, literal)

    def matches(self, type_or_label: str, props: dict) -> bool:
        if self.types is not None and type_or_label not in self.types:
            return False
        if self.prop is not None:
            key, op, literal = self.prop
            if key not in props:
                return False
            value = props[key]
            try:
                return _COMPARE[op](value, literal)
            except TypeError:
                return False
        return True


_COMPARE = {
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class ViewInstance:
    """One instantiated view template.

    Connector instances bind the query endpoint names (x, y), endpoint
    types, and a hop count ``k`` (KHopConnector) or range ``lo..hi``.
    Sparsifier instances bind a predicate, and aggregators a grouping key
    plus per-property aggregate functions. ``edge_aggregates`` asks
    connector materialization to carry (property, along-path reducer,
    across-paths reducer) values onto view edges; ``through_types``
    optionally restricts contraction to trails through the given types,
    which is how a sparsifier-then-spanner pipeline is expressed.

    ``defining_query`` is query text over the raw schema. For connectors
    it is the contraction source; for sparsifiers it is the scan skeleton
    the predicate filters.
    """

    kind: str
    x: str | None = None
    y: str | None = None
    x_type: str | None = None
    y_type: str | None = None
    k: int | None = None
    lo: int | None = None
    hi: int | None = None
    label: str | None = None
    predicate: Predicate | None = None
    group_key: str | None = None
    aggregations: tuple[tuple[str, str], ...] = ()
    edge_aggregates: tuple[tuple[str, str, str], ...] = ()
    through_types: frozenset[str] | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in VIEW_KINDS:
            raise ValidationError(f"unknown view kind {self.kind!r}")

    # -- identity -------------------------------------------------------

    @property
    def view_id(self) -> str:
        if self.kind == "KHopConnector":
            return f"khop:{self.x_type}:{self.y_type}:{self.k:02d}"
        if self.kind == "SameVertexTypeConnector":
            return f"svtc:{self.x_type}:{self.lo:02d}:{self.hi:02d}"
        if self.kind == "SameEdgeTypeConnector":
            return f"setc:{self.label}:{self.lo:02d}:{self.hi:02d}"
        if self.kind == "SourceToSinkConnector":
            return f"s2sc:{self.x_type}:{self.y_type}:{self.lo:02d}:{self.hi:02d}"
        parts = [self.kind[:4].lower()]
        if self.predicate and self.predicate.types is not None:
            parts.append("+".join(sorted(self.predicate.types)))
        if self.predicate and self.predicate.prop is not None:
            key, op, literal = self.predicate.prop
            parts.append(f"{key}{op}{literal}")
        if self.group_key:
            parts.append(f"by_{self.group_key}")
        return ":".join(parts)

    @property
    def view_label(self) -> str:
        """Edge label of materialized connector edges."""
        if self.kind == "KHopConnector":
            return f"{self.x_type.upper()}_TO_{self.y_type.upper()}_{self.k}HOP"
        if self.kind == "SameVertexTypeConnector":
            return f"{self.x_type.upper()}_TO_{self.x_type.upper()}_{self.lo}_{self.hi}HOP"
        if self.kind == "SameEdgeTypeConnector":
            return f"{self.label}_PATH_{self.lo}_{self.hi}"
        if self.kind == "SourceToSinkConnector":
            return (f"{self.x_type.upper()}_TO_{self.y_type.upper()}"
                    f"_SRC_SINK_{self.lo}_{self.hi}")
        raise ValidationError(f"{self.kind} has no view label")

    @property
    def lengths(self) -> list[int]:
        """Raw path lengths each view edge contracts."""
        if self.kind == "KHopConnector":
            return [self.k]
        return list(range(self.lo, self.hi + 1))

    @property
    def path_labels(self) -> tuple[str, ...] | None:
        return (self.label,) if self.kind == "SameEdgeTypeConnector" else None

    def view_schema(self, schema: GraphSchema) -> GraphSchema:
        if self.kind in CONNECTOR_KINDS:
            return GraphSchema.of(
                {self.x_type, self.y_type},
                [(self.x_type, self.y_type, self.view_label)],
            )
        if self.kind in ("VertexInclusion", "VertexRemoval"):
            kept = self._kept_types(schema)
            return GraphSchema.of(
                kept, [t for t in schema.edge_types if t[0] in kept and t[1] in kept])
        if self.kind in ("EdgeInclusion", "EdgeRemoval"):
            kept = self._kept_labels(schema)
            return GraphSchema.of(
                schema.vertex_types, [t for t in schema.edge_types if t[2] in kept])
        return schema

    def _kept_types(self, schema: GraphSchema) -> frozenset[str]:
        types = self.predicate.types if self.predicate else None
        if self.kind == "VertexInclusion":
            return types if types is not None else schema.vertex_types
        return schema.vertex_types - (types or frozenset())

    def _kept_labels(self, schema: GraphSchema) -> frozenset[str]:
        labels = self.predicate.types if self.predicate else None
        if self.kind == "EdgeInclusion":
            return labels if labels is not None else schema.labels()
        return schema.labels() - (labels or frozenset())

    @property
    def defining_query(self) -> str:
        if self.kind == "KHopConnector":
            return (f"MATCH (src:{self.x_type})-[p*{self.k}..{self.k}]->"
                    f"(dst:{self.y_type}) RETURN src, dst")
        if self.kind in CONNECTOR_KINDS:
            label = f":{self.label}" if self.label else ""
            return (f"MATCH (src:{self.x_type})-[p{label}*{self.lo}..{self.hi}]->"
                    f"(dst:{self.y_type}) RETURN src, dst")
        return "MATCH (keep_src)-[keep_edge]->(keep_dst) RETURN keep_src, keep_edge, keep_dst"

    def unification(self) -> str:
        """Instance bindings in unification notation for the CLI."""
        if self.kind == "KHopConnector":
            return (f"(X='{self.x}', Y='{self.y}', XTYPE='{self.x_type}', "
                    f"YTYPE='{self.y_type}', K={self.k})")
        if self.kind == "SameVertexTypeConnector":
            return (f"(X='{self.x}', Y='{self.y}', TYPE='{self.x_type}', "
                    f"LO={self.lo}, HI={self.hi})")
        if self.kind == "SameEdgeTypeConnector":
            return (f"(X='{self.x}', Y='{self.y}', LABEL='{self.label}', "
                    f"LO={self.lo}, HI={self.hi})")
        if self.kind == "SourceToSinkConnector":
            return (f"(X='{self.x}', Y='{self.y}', XTYPE='{self.x_type}', "
                    f"YTYPE='{self.y_type}', LO={self.lo}, HI={self.hi})")
        if self.predicate and self.predicate.types is not None:
            arg = "{" + ", ".join(f"'{t}'" for t in sorted(self.predicate.types)) + "}"
            key = "TYPES" if self.kind.startswith("Vertex") or self.kind.startswith("Sub") \
                else "LABELS"
            return f"({key}={arg})"
        return f"(ID='{self.view_id}')"


@dataclass(frozen=True)
class HopMapping:
    raw_lower: int
    raw_upper: int
    view_lower: int
    view_upper: int


@dataclass
class RewritePlan:
    """How one query runs over one view with identical results."""

    original: QueryGraph
    view: ViewInstance
    rewritten: QueryGraph
    hop_mapping: HopMapping | None


@dataclass
class EnumerationStats:
    """KHopConnector bindings examined, for pruning-effectiveness checks."""

    bindings_examined: int = 0


# --------------------------------------------------------------------------
# Enumeration
# --------------------------------------------------------------------------

def enumerate_views(q: QueryGraph, s: GraphSchema, c: ConstraintSet,
                    max_k: int = DEFAULT_MAX_K,
                    stats: EnumerationStats | None = None) -> list[ViewInstance]:
    """All template instances consistent with the query and schema
    constraints, deterministically ordered by kind then bindings."""
    if stats is None:
        stats = EnumerationStats()
    provenance = _provenance(q)
    instances: list[ViewInstance] = []
    projected = set()
    for item in q.projection:
        expr = item.expr.arg if isinstance(item.expr, Aggregate) else item.expr
        projected.add(expr.name)

    for b in c.hop_bounds:
        x_type = q.pattern_vertices.get(b.src)
        y_type = q.pattern_vertices.get(b.dst)
        if x_type is None or y_type is None:
            continue
        hi = min(b.k_max, max_k)
        if hi < 2:
            continue
        # distinct-type connectors only when both endpoints are projected
        if x_type != y_type and not (b.src in projected and b.dst in projected):
            continue
        # k-hop connectors: one per in-range hop count with a schema path
        for k in range(max(2, b.k_min), hi + 1):
            matching = c.paths_between(x_type, y_type, k)
            stats.bindings_examined += len(matching)
            if matching:
                instances.append(ViewInstance(
                    kind="KHopConnector", x=b.src, y=b.dst,
                    x_type=x_type, y_type=y_type, k=k,
                    provenance=provenance,
                ))
        lo = max(1, b.k_min)
        feasible = [k for k in range(lo, hi + 1) if c.has_path(x_type, y_type, k)]
        if not feasible:
            continue
        # range connectors contract every feasible length at once
        if x_type == y_type:
            instances.append(ViewInstance(
                kind="SameVertexTypeConnector", x=b.src, y=b.dst,
                x_type=x_type, y_type=y_type, lo=lo, hi=hi,
                provenance=provenance,
            ))
        uniform = _uniform_label(b)
        if uniform is not None:
            label_feasible = [
                k for k in feasible
                if any(set(p.labels()) == {uniform}
                       for p in c.paths_between(x_type, y_type, k))
            ]
            if label_feasible:
                instances.append(ViewInstance(
                    kind="SameEdgeTypeConnector", x=b.src, y=b.dst,
                    x_type=x_type, y_type=y_type, lo=lo, hi=hi,
                    label=uniform, provenance=provenance,
                ))
        if x_type in c.source_types and y_type in c.sink_types:
            instances.append(ViewInstance(
                kind="SourceToSinkConnector", x=b.src, y=b.dst,
                x_type=x_type, y_type=y_type, lo=lo, hi=hi,
                provenance=provenance,
            ))

    # inclusion sparsifiers from the types and labels the query touches
    referenced_types = frozenset(
        t for t in q.pattern_vertices.values() if t is not None)
    if referenced_types:
        instances.append(ViewInstance(
            kind="VertexInclusion",
            predicate=Predicate(types=referenced_types),
            provenance=provenance,
        ))
    labels = set()
    fully_labelled = bool(q.pattern_edges or q.var_length_paths)
    for e in q.pattern_edges:
        if e.label is None:
            fully_labelled = False
        else:
            labels.add(e.label)
    for p in q.var_length_paths:
        if p.labels is None:
            fully_labelled = False
        else:
            labels.update(p.labels)
    if fully_labelled and labels:
        instances.append(ViewInstance(
            kind="EdgeInclusion",
            predicate=Predicate(types=frozenset(labels)),
            provenance=provenance,
        ))

    instances.sort(key=lambda v: (VIEW_KINDS.index(v.kind), v.view_id))
    return instances


def _provenance(q: QueryGraph) -> str:
    from .query import render_query
    return render_query(q)


def _uniform_label(b: ConnectorBounds) -> str | None:
    """The single label every connector position requires, if any."""
    labels = set()
    if b.fixed_labels is not None:
        labels.update(b.fixed_labels)
    else:
        if b.middle_labels is None or len(b.middle_labels) != 1:
            return None
        labels.update(b.middle_labels)
        if b.first_label is not None:
            labels.add(b.first_label)
        if b.last_label is not None:
            labels.add(b.last_label)
    if len(labels) == 1:
        return labels.pop()
    return None


# --------------------------------------------------------------------------
# Rewriting
# --------------------------------------------------------------------------

def rewrite_with_view(q: QueryGraph, v: ViewInstance,
                      schema: GraphSchema) -> RewritePlan:
    """Rewrite ``q`` to run over ``v``'s materialization, or raise.

    Raises NameEliminatedButReferencedError when the contraction would
    eliminate a name the query references, and RewriteInfeasibleError
    when the view cannot reproduce the query's results exactly.
    """
    if v.kind in CONNECTOR_KINDS:
        return _rewrite_connector(q, v, schema)
    if v.kind in ("VertexInclusion", "VertexRemoval"):
        return _rewrite_vertex_filter(q, v, schema)
    if v.kind in ("EdgeInclusion", "EdgeRemoval"):
        return _rewrite_edge_filter(q, v, schema)
    raise RewriteInfeasibleError(
        f"{v.kind} views are standalone; no transparent rewrite exists")


def _rewrite_connector(q: QueryGraph, v: ViewInstance,
                       schema: GraphSchema) -> RewritePlan:
    c = mine_constraints(q, schema)
    bounds = [b for b in c.hop_bounds if (b.src, b.dst) == (v.x, v.y)]
    if not bounds:
        _diagnose_eliminated_reference(q, v)
        raise RewriteInfeasibleError(
            f"view endpoints ({v.x}, {v.y}) do not match any contraction "
            f"opportunity of the query")
    b = bounds[0]
    if q.pattern_vertices.get(v.x) != v.x_type or q.pattern_vertices.get(v.y) != v.y_type:
        raise RewriteInfeasibleError("view endpoint types do not match the query")
    overlap = set(b.eliminated) & q.referenced_names()
    if overlap:
        raise NameEliminatedButReferencedError(
            f"view contracts away referenced name(s) {sorted(overlap)}")

    lo, hi = b.k_min, b.k_max
    feasible = [l for l in range(lo, hi + 1) if c.has_path(v.x_type, v.y_type, l)]
    if not feasible:
        raise RewriteInfeasibleError(
            "no schema path matches the query's connector range")

    if v.kind == "KHopConnector":
        a = math.ceil(lo / v.k)
        z = hi // v.k
        if a > z:
            raise RewriteInfeasibleError(
                f"hop range ({lo}, {hi}) maps to an empty range over a "
                f"{v.k}-hop connector")
        if v.x_type == v.y_type:
            covered = {i * v.k for i in range(a, z + 1)}
        else:
            covered = {v.k} if a <= 1 <= z else set()
        if not set(feasible) <= covered:
            raise RewriteInfeasibleError(
                f"{v.k}-hop connector covers raw lengths {sorted(covered)} but "
                f"the query needs {feasible}")
        _check_label_soundness(c, v, b, view_hops=range(a, z + 1))
        _check_boundary_types(c, v, b, feasible)
        mapping = HopMapping(lo, hi, a, z)
    else:
        if [l for l in feasible if not (v.lo <= l <= v.hi)]:
            raise RewriteInfeasibleError(
                f"view contracts lengths {v.lo}..{v.hi} but the query needs "
                f"{feasible}")
        view_feasible = [l for l in v.lengths
                         if c.has_path(v.x_type, v.y_type, l)
                         and _labels_possible(c, v, l)]
        if sorted(view_feasible) != sorted(feasible):
            raise RewriteInfeasibleError(
                f"view contracts lengths {view_feasible} but the query needs "
                f"exactly {feasible}")
        a = 0 if lo == 0 else 1
        z = 1
        _check_label_soundness(c, v, b, view_hops=[1])
        mapping = HopMapping(lo, hi, a, z)

    rewritten = _build_rewritten(q, v, b, a, z)
    return RewritePlan(original=q, view=v, rewritten=rewritten, hop_mapping=mapping)


def _labels_possible(c: ConstraintSet, v: ViewInstance, length: int) -> bool:
    allowed = v.path_labels
    if allowed is None:
        return True
    return any(set(p.labels()) <= set(allowed)
               for p in c.paths_between(v.x_type, v.y_type, length))


def _diagnose_eliminated_reference(q: QueryGraph, v: ViewInstance):
    """If folding fails only because of query references, say which."""
    unconstrained = query_hop_bounds(_without_references(q))
    for b in unconstrained:
        if (b.src, b.dst) == (v.x, v.y):
            overlap = set(b.eliminated) & q.referenced_names()
            if overlap:
                raise NameEliminatedButReferencedError(
                    f"view contracts away referenced name(s) {sorted(overlap)}")


def _without_references(q: QueryGraph) -> QueryGraph:
    from .query import NameRef, ProjectionItem
    anchor = next(iter(q.pattern_vertices))
    return QueryGraph(
        pattern_vertices=dict(q.pattern_vertices),
        pattern_edges=q.pattern_edges,
        var_length_paths=q.var_length_paths,
        filters=None,
        projection=(ProjectionItem(Aggregate("count", NameRef(anchor)),
                                   "count"),),
    )


def _check_label_soundness(c: ConstraintSet, v: ViewInstance,
                           b: ConnectorBounds, view_hops) -> None:
    """Every trail the view can produce must satisfy the query's
    positional label constraints; otherwise the view would add rows."""
    for i in view_hops:
        for length in v.lengths:
            segs = [p for p in c.paths_between(v.x_type, v.y_type, length)
                    if v.path_labels is None
                    or set(p.labels()) <= set(v.path_labels)]
            raw_len = i * length
            for seg in segs:
                for slot in range(i):
                    offset = slot * length
                    for t, lab in enumerate(seg.labels()):
                        allowed = b.constraint_at(offset + t, raw_len)
                        if allowed is not None and lab not in allowed:
                            raise RewriteInfeasibleError(
                                f"view may contract a trail with label {lab!r} at "
                                f"position {offset + t}, which the query forbids")


def _check_boundary_types(c: ConstraintSet, v: ViewInstance,
                          b: ConnectorBounds, feasible: list[int]) -> None:
    """Raw trails must decompose into K-segments at endpoint-type
    boundaries for multi-hop view traversals to find them."""
    for length in feasible:
        hops = length // v.k
        if hops < 2:
            continue
        for p in c.paths_between(v.x_type, v.y_type, length):
            if not _satisfies_constraints(p, b, length):
                continue
            seq = p.type_sequence()
            for j in range(1, hops):
                if seq[j * v.k] != v.x_type:
                    raise RewriteInfeasibleError(
                        f"a {length}-hop trail may cross type {seq[j * v.k]!r} at a "
                        f"contraction boundary; the view cannot represent it")


def _satisfies_constraints(path, b: ConnectorBounds, length: int) -> bool:
    for t, lab in enumerate(path.labels()):
        allowed = b.constraint_at(t, length)
        if allowed is not None and lab not in allowed:
            return False
    return True


def _build_rewritten(q: QueryGraph, v: ViewInstance, b: ConnectorBounds,
                     a: int, z: int) -> QueryGraph:
    eliminated = set(b.eliminated)
    vertices = {name: vtype for name, vtype in q.pattern_vertices.items()
                if name not in eliminated}
    folded = set(id(e) for e in b.folded_edges)
    edges = tuple(e for e in q.pattern_edges if id(e) not in folded)
    paths = tuple(p for p in q.var_length_paths if p is not b.path)
    new_path = VarLengthPath(
        src=v.x, dst=v.y, lower=a, upper=z,
        labels=(v.view_label,),
        name=b.path.name if b.path is not None else None,
    )
    return QueryGraph(
        pattern_vertices=vertices,
        pattern_edges=edges,
        var_length_paths=paths + (new_path,),
        filters=q.filters,
        projection=q.projection,
        order_by=q.order_by,
        limit=q.limit,
    )


# -- sparsifier rewrites ------------------------------------------------

def _rewrite_vertex_filter(q: QueryGraph, v: ViewInstance,
                           schema: GraphSchema) -> RewritePlan:
    if v.predicate is None or v.predicate.types is None or v.predicate.prop is not None:
        raise RewriteInfeasibleError(
            "only pure type-predicate vertex filters support rewriting")
    kept = v._kept_types(schema)
    pattern_types = set(q.pattern_vertices.values())
    if None in pattern_types and kept != schema.vertex_types:
        raise RewriteInfeasibleError(
            "untyped pattern vertices may bind to filtered-out types")
    if not {t for t in pattern_types if t} <= kept:
        raise RewriteInfeasibleError("query references a filtered-out vertex type")
    c = mine_constraints(q, schema)
    for p in q.var_length_paths:
        src_t = q.pattern_vertices[p.src]
        dst_t = q.pattern_vertices[p.dst]
        if src_t is None or dst_t is None:
            continue  # identity filter; the untyped check above passed
        for length in range(max(1, p.lower), p.upper + 1):
            for sp in c.paths_between(src_t, dst_t, length):
                if p.labels is not None and not set(sp.labels()) <= set(p.labels):
                    continue
                if not set(sp.type_sequence()) <= kept:
                    raise RewriteInfeasibleError(
                        f"a {length}-hop path may route through filtered-out "
                        f"types {sorted(set(sp.type_sequence()) - kept)}")
    return RewritePlan(original=q, view=v, rewritten=q, hop_mapping=None)


def _rewrite_edge_filter(q: QueryGraph, v: ViewInstance,
                         schema: GraphSchema) -> RewritePlan:
    if v.predicate is None or v.predicate.types is None or v.predicate.prop is not None:
        raise RewriteInfeasibleError(
            "only pure label-predicate edge filters support rewriting")
    kept = v._kept_labels(schema)
    for e in q.pattern_edges:
        if e.label is None and kept != schema.labels():
            raise RewriteInfeasibleError("unlabelled edge may match filtered-out labels")
        if e.label is not None and e.label not in kept:
            raise RewriteInfeasibleError(f"query needs filtered-out label {e.label!r}")
    for p in q.var_length_paths:
        if p.labels is None and kept != schema.labels():
            raise RewriteInfeasibleError("unlabelled path may match filtered-out labels")
        if p.labels is not None and not set(p.labels) <= kept:
            raise RewriteInfeasibleError("query path needs filtered-out labels")
    return RewritePlan(original=q, view=v, rewritten=q, hop_mapping=None)
