"""In-memory directed typed property graph with schema validation.

Graphs are immutable after construction. Vertex and edge ids are
caller-supplied strings; internally they are mapped to dense integers so
traversal works on arrays. Multi-edges (same source, destination and
label) are permitted.

CSV formats:
    vertices: header ``id,type,props`` where props is a JSON object
        string or empty.
    edges: header ``id,src,dst,label,props``.
Schema JSON:
    ``{"vertex_types": [...], "edge_types": [{"src":..,"dst":..,"label":..}]}``
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import (
    DanglingEdgeEndpointError,
    DomainError,
    DuplicateIdError,
    MalformedRowError,
    UnknownEdgeTripleError,
    UnknownVertexError,
    UnknownVertexTypeError,
    ValidationError,
)

PropertyValue = int | float | str | bool
PropertyMap = dict[str, PropertyValue]

PERCENTILE_ALPHAS = (50, 90, 95, 100)


def _check_props(props: Mapping[str, object], context: str) -> PropertyMap:
    out: PropertyMap = {}
    for key, value in props.items():
        if not isinstance(key, str) or not key:
            raise MalformedRowError(f"{context}: property keys must be non-empty strings")
        if isinstance(value, bool) or isinstance(value, (int, str)):
            out[key] = value
        elif isinstance(value, float):
            if not math.isfinite(value):
                raise MalformedRowError(f"{context}: non-finite float property {key!r}")
            out[key] = value
        else:
            raise MalformedRowError(
                f"{context}: property {key!r} must be int, float, string or bool"
            )
    return out


@dataclass(frozen=True)
class GraphSchema:
    """Allowed vertex types and (src type, dst type, label) edge triples."""

    vertex_types: frozenset[str]
    edge_types: frozenset[tuple[str, str, str]]

    def __post_init__(self):
        for name in self.vertex_types:
            if not name:
                raise ValidationError("vertex type names must be non-empty")
        for src, dst, label in self.edge_types:
            if not label:
                raise ValidationError("edge labels must be non-empty")
            if src not in self.vertex_types or dst not in self.vertex_types:
                raise ValidationError(
                    f"edge triple ({src}, {dst}, {label}) references undeclared vertex type"
                )

    @classmethod
    def of(cls, vertex_types: Iterable[str],
           edge_types: Iterable[tuple[str, str, str]]) -> "GraphSchema":
        return cls(frozenset(vertex_types), frozenset(tuple(t) for t in edge_types))

    def has_triple(self, src_type: str, dst_type: str, label: str) -> bool:
        return (src_type, dst_type, label) in self.edge_types

    def labels(self) -> frozenset[str]:
        return frozenset(label for _, _, label in self.edge_types)

    def triples_from(self, src_type: str) -> list[tuple[str, str, str]]:
        return sorted(t for t in self.edge_types if t[0] == src_type)

    def edge_source_types(self) -> frozenset[str]:
        """Types that are the source of at least one edge triple."""
        return frozenset(src for src, _, _ in self.edge_types)

    def edge_target_types(self) -> frozenset[str]:
        """Types that are the destination of at least one edge triple."""
        return frozenset(dst for _, dst, _ in self.edge_types)

    def root_types(self) -> frozenset[str]:
        """Types with no incoming edge triple (sources in the schema graph)."""
        return self.vertex_types - self.edge_target_types()

    def leaf_types(self) -> frozenset[str]:
        """Types with no outgoing edge triple (sinks in the schema graph)."""
        return self.vertex_types - self.edge_source_types()

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertex_types": sorted(self.vertex_types),
                "edge_types": [
                    {"src": s, "dst": d, "label": l}
                    for s, d, l in sorted(self.edge_types)
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "GraphSchema":
        try:
            raw = json.loads(text)
            vertex_types = raw["vertex_types"]
            edge_types = [(e["src"], e["dst"], e["label"]) for e in raw["edge_types"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"malformed schema JSON: {exc}") from exc
        return cls.of(vertex_types, edge_types)

    @classmethod
    def load(cls, path: str | Path) -> "GraphSchema":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


class PropertyGraph:
    """Directed typed property graph, schema-valid by construction.

    Build instances through :meth:`build` (programmatic) or
    :func:`load_graph` (CSV). Out-adjacency is exposed in ascending
    external edge id order, which makes every traversal deterministic.
    """

    def __init__(self, schema: GraphSchema):
        self.schema = schema
        self._vids: list[str] = []            # internal index -> external id
        self._vindex: dict[str, int] = {}     # external id -> internal index
        self._vtypes: list[str] = []
        self._vprops: list[PropertyMap] = []
        self._eids: list[str] = []
        self._eindex: dict[str, int] = {}
        self._esrc: list[int] = []
        self._edst: list[int] = []
        self._elabel: list[str] = []
        self._eprops: list[PropertyMap] = []
        self._out: list[list[int]] = []       # vertex -> edge internal indexes
        self._in: list[list[int]] = []
        self._type_counts: dict[str, int] = {}
        self._sealed = False

    # -- construction -------------------------------------------------

    def _add_vertex(self, vid: str, vtype: str, props: Mapping[str, object]):
        if not vid:
            raise MalformedRowError("vertex id must be non-empty")
        if vid in self._vindex:
            raise DuplicateIdError(f"duplicate vertex id {vid!r}")
        if vtype not in self.schema.vertex_types:
            raise UnknownVertexTypeError(f"vertex {vid!r} has undeclared type {vtype!r}")
        self._vindex[vid] = len(self._vids)
        self._vids.append(vid)
        self._vtypes.append(vtype)
        self._vprops.append(_check_props(props, f"vertex {vid!r}"))
        self._out.append([])
        self._in.append([])
        self._type_counts[vtype] = self._type_counts.get(vtype, 0) + 1

    def _add_edge(self, eid: str, src: str, dst: str, label: str,
                  props: Mapping[str, object]):
        if not eid:
            raise MalformedRowError("edge id must be non-empty")
        if eid in self._eindex:
            raise DuplicateIdError(f"duplicate edge id {eid!r}")
        if src not in self._vindex:
            raise DanglingEdgeEndpointError(f"edge {eid!r}: unknown source vertex {src!r}")
        if dst not in self._vindex:
            raise DanglingEdgeEndpointError(f"edge {eid!r}: unknown destination vertex {dst!r}")
        si, di = self._vindex[src], self._vindex[dst]
        triple = (self._vtypes[si], self._vtypes[di], label)
        if not self.schema.has_triple(*triple):
            raise UnknownEdgeTripleError(
                f"edge {eid!r}: triple ({triple[0]}, {triple[1]}, {label}) not in schema"
            )
        self._eindex[eid] = len(self._eids)
        self._eids.append(eid)
        self._esrc.append(si)
        self._edst.append(di)
        self._elabel.append(label)
        self._eprops.append(_check_props(props, f"edge {eid!r}"))
        self._out[si].append(len(self._eids) - 1)
        self._in[di].append(len(self._eids) - 1)

    def _seal(self):
        for adj in self._out:
            adj.sort(key=lambda i: self._eids[i])
        for adj in self._in:
            adj.sort(key=lambda i: self._eids[i])
        self._sealed = True

    @classmethod
    def build(cls, schema: GraphSchema,
              vertices: Iterable[tuple[str, str, Mapping[str, object]]],
              edges: Iterable[tuple[str, str, str, str, Mapping[str, object]]],
              ) -> "PropertyGraph":
        """Build and validate a graph from (id, type, props) vertices and
        (id, src, dst, label, props) edges. Raises on the first violation."""
        g = cls(schema)
        for vid, vtype, props in vertices:
            g._add_vertex(vid, vtype, props)
        for eid, src, dst, label, props in edges:
            g._add_edge(eid, src, dst, label, props)
        g._seal()
        return g

    # -- inspection ---------------------------------------------------

    @property
    def n(self) -> int:
        return len(self._vids)

    @property
    def m(self) -> int:
        return len(self._eids)

    def vertex_ids(self) -> list[str]:
        return list(self._vids)

    def edge_ids(self) -> list[str]:
        return list(self._eids)

    def has_vertex(self, vid: str) -> bool:
        return vid in self._vindex

    def vertex_type(self, vid: str) -> str:
        return self._vtypes[self._require(vid)]

    def vertex_props(self, vid: str) -> PropertyMap:
        return self._vprops[self._require(vid)]

    def vertices_of_type(self, vtype: str) -> list[str]:
        return [vid for vid, t in zip(self._vids, self._vtypes) if t == vtype]

    def type_counts(self) -> dict[str, int]:
        counts = {t: 0 for t in self.schema.vertex_types}
        counts.update(self._type_counts)
        return counts

    def has_edge(self, eid: str) -> bool:
        return eid in self._eindex

    def edge(self, eid: str) -> tuple[str, str, str, PropertyMap]:
        """Return (src id, dst id, label, props) for an edge."""
        if eid not in self._eindex:
            raise UnknownVertexError(f"unknown edge id {eid!r}")
        i = self._eindex[eid]
        return (self._vids[self._esrc[i]], self._vids[self._edst[i]],
                self._elabel[i], self._eprops[i])

    def edge_props(self, eid: str) -> PropertyMap:
        return self._eprops[self._eindex[eid]]

    def _require(self, vid: str) -> int:
        if vid not in self._vindex:
            raise UnknownVertexError(f"unknown vertex id {vid!r}")
        return self._vindex[vid]

    def out_edges(self, vid: str, label: str | None = None
                  ) -> list[tuple[str, str, str, PropertyMap]]:
        """Outgoing (edge id, dst id, label, props), ascending edge id."""
        vi = self._require(vid)
        out = []
        for ei in self._out[vi]:
            if label is not None and self._elabel[ei] != label:
                continue
            out.append((self._eids[ei], self._vids[self._edst[ei]],
                        self._elabel[ei], self._eprops[ei]))
        return out

    def in_edges(self, vid: str, label: str | None = None
                 ) -> list[tuple[str, str, str, PropertyMap]]:
        """Incoming (edge id, src id, label, props), ascending edge id."""
        vi = self._require(vid)
        out = []
        for ei in self._in[vi]:
            if label is not None and self._elabel[ei] != label:
                continue
            out.append((self._eids[ei], self._vids[self._esrc[ei]],
                        self._elabel[ei], self._eprops[ei]))
        return out

    def out_degree(self, vid: str) -> int:
        return len(self._out[self._require(vid)])

    def edges(self) -> Iterator[tuple[str, str, str, str, PropertyMap]]:
        """Iterate (edge id, src id, dst id, label, props) in load order."""
        for i, eid in enumerate(self._eids):
            yield (eid, self._vids[self._esrc[i]], self._vids[self._edst[i]],
                   self._elabel[i], self._eprops[i])

    def vertices(self) -> Iterator[tuple[str, str, PropertyMap]]:
        for i, vid in enumerate(self._vids):
            yield vid, self._vtypes[i], self._vprops[i]

    # -- persistence ---------------------------------------------------

    def export_csv(self, vertex_file: str | Path, edge_file: str | Path):
        """Write the graph back out in the load CSV formats, id-sorted."""
        with open(vertex_file, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "type", "props"])
            for vid in sorted(self._vids):
                i = self._vindex[vid]
                props = self._vprops[i]
                writer.writerow([vid, self._vtypes[i],
                                 json.dumps(props, sort_keys=True) if props else ""])
        with open(edge_file, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "src", "dst", "label", "props"])
            for eid in sorted(self._eids):
                i = self._eindex[eid]
                props = self._eprops[i]
                writer.writerow([eid, self._vids[self._esrc[i]],
                                 self._vids[self._edst[i]], self._elabel[i],
                                 json.dumps(props, sort_keys=True) if props else ""])


def out_neighbors(g: PropertyGraph, vid: str, label: str | None = None
                  ) -> list[tuple[str, str]]:
    """All outgoing (edge id, dst vertex id) of ``vid``, optionally filtered
    by edge label, in ascending edge id order."""
    return [(eid, dst) for eid, dst, _, _ in g.out_edges(vid, label)]


def _parse_props_cell(cell: str, line: int) -> PropertyMap:
    if not cell.strip():
        return {}
    try:
        raw = json.loads(cell)
    except json.JSONDecodeError as exc:
        raise MalformedRowError(f"bad props JSON: {exc}", line=line) from exc
    if not isinstance(raw, dict):
        raise MalformedRowError("props must be a JSON object", line=line)
    return raw


def load_graph(vertex_file: str | Path, edge_file: str | Path,
               schema: GraphSchema) -> PropertyGraph:
    """Load a graph from the CSV formats above, rejecting the whole load on
    the first violation with its 1-based file line number."""
    g = PropertyGraph(schema)
    with open(vertex_file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "type", "props"]:
            raise MalformedRowError(f"bad vertex header {header!r}", line=1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRowError(f"expected 3 columns, got {len(row)}", line=line)
            vid, vtype, props_cell = row
            try:
                g._add_vertex(vid, vtype, _parse_props_cell(props_cell, line))
            except ValidationError as exc:
                exc.line = line
                raise
    with open(edge_file, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "src", "dst", "label", "props"]:
            raise MalformedRowError(f"bad edge header {header!r}", line=1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedRowError(f"expected 5 columns, got {len(row)}", line=line)
            eid, src, dst, label, props_cell = row
            try:
                g._add_edge(eid, src, dst, label, _parse_props_cell(props_cell, line))
            except ValidationError as exc:
                exc.line = line
                raise
    g._seal()
    return g


@dataclass(frozen=True)
class TypeDegrees:
    """Vertex count and nearest-rank out-degree percentiles for one type."""

    vertex_count: int
    percentiles: dict[int, int] = field(default_factory=dict)

    def deg(self, alpha: int) -> int:
        if alpha not in self.percentiles:
            raise DomainError(f"percentile {alpha} not maintained")
        return self.percentiles[alpha]


@dataclass(frozen=True)
class DegreeSummary:
    """Per-type out-degree distribution summary of one graph.

    Percentiles use the nearest-rank method over the sorted out-degree
    multiset of all vertices of the type, zero-out-degree vertices
    included. ``edge_source_types`` are the types that appear as the
    source of at least one schema edge triple (the estimator's type
    universe).
    """

    per_type: dict[str, TypeDegrees]
    edge_source_types: frozenset[str]
    total_vertices: int
    total_edges: int

    def types(self) -> list[str]:
        return sorted(self.per_type)

    def n_of(self, vtype: str) -> int:
        td = self.per_type.get(vtype)
        return td.vertex_count if td else 0

    def deg(self, vtype: str, alpha: int) -> int:
        td = self.per_type.get(vtype)
        return td.deg(alpha) if td else 0


def nearest_rank(sorted_values: list[int], alpha: int) -> int:
    """alpha-th percentile by nearest rank; 0 for an empty population."""
    if not sorted_values:
        return 0
    if not 0 < alpha <= 100:
        raise DomainError(f"alpha must be in (0, 100], got {alpha}")
    rank = math.ceil(alpha / 100 * len(sorted_values))
    return sorted_values[rank - 1]


def degree_summary(g: PropertyGraph) -> DegreeSummary:
    """Compute the per-type out-degree summary of ``g``. Deterministic."""
    degs_by_type: dict[str, list[int]] = {t: [] for t in g.schema.vertex_types}
    for vid in g.vertex_ids():
        degs_by_type[g.vertex_type(vid)].append(g.out_degree(vid))
    per_type = {}
    for vtype, degs in degs_by_type.items():
        degs.sort()
        per_type[vtype] = TypeDegrees(
            vertex_count=len(degs),
            percentiles={a: nearest_rank(degs, a) for a in PERCENTILE_ALPHAS},
        )
    return DegreeSummary(
        per_type=per_type,
        edge_source_types=g.schema.edge_source_types(),
        total_vertices=g.n,
        total_edges=g.m,
    )
