"""View selection, materialization, and the persistent view catalog.

Selection is exact 0-1 knapsack over integerized weights: dynamic
programming when the capacity table is small enough, branch and bound
with a fractional bound otherwise. Ties break deterministically by
higher value, then lower total weight, then lexicographically smallest
view-id tuple (realised by include-first reconstruction over id-sorted
items).

Connector materialization contracts edge-distinct trails. Traversal is
pruned by the vertex types that schema paths allow at each depth, which
is also how a sparsifier-then-spanner pipeline composes: an explicit
``through_types`` binding intersects the allowed sets. The output is one
edge per connected (src, dst) pair carrying ``path_count`` (number of
distinct contracted trails) plus any requested per-property trail
aggregates; raw vertex ids and properties are preserved. Views always
materialize from the raw graph, never from other views.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .costing import SizeEstimate
from .enumeration import (
    CONNECTOR_KINDS,
    Predicate,
    RewritePlan,
    ViewInstance,
)
from .errors import (
    BudgetExceededError,
    CorruptCatalogError,
    MixedTypeAggregationError,
    PropertyTypeMismatchError,
    ValidationError,
)
from .mining import schema_k_hop_paths
from .store import (
    DegreeSummary,
    GraphSchema,
    PERCENTILE_ALPHAS,
    PropertyGraph,
    TypeDegrees,
)


# --------------------------------------------------------------------------
# Knapsack selection
# --------------------------------------------------------------------------

@dataclass
class Candidate:
    """One view candidate for selection: weight is its estimated edge
    count, value the summed per-query improvement over creation cost."""

    view: ViewInstance
    weight: float
    value: float
    per_query_plans: dict[str, RewritePlan] = field(default_factory=dict)
    size_estimate: SizeEstimate | None = None

    def __post_init__(self):
        if self.weight <= 0:
            raise ValidationError("candidate weight must be positive")
        if self.value < 0:
            raise ValidationError("candidate value must be non-negative")


_DP_CELL_LIMIT = 2_000_000


def select_views(candidates: list[Candidate], budget: float) -> list[Candidate]:
    """Value-maximal subset with total weight <= budget, solved exactly."""
    if budget < 0:
        raise ValidationError("budget must be non-negative")
    items = sorted(candidates, key=lambda c: c.view.view_id)
    ids = [c.view.view_id for c in items]
    if len(set(ids)) != len(ids):
        raise ValidationError("candidate view ids must be unique")
    weights = [math.ceil(c.weight) for c in items]
    values = [c.value for c in items]
    capacity = math.floor(budget)
    usable = [i for i in range(len(items)) if weights[i] <= capacity]
    if not usable:
        return []
    if sum(weights[i] for i in usable) <= capacity:
        # everything fits; zero-value items lose the lower-weight tie-break
        return [items[i] for i in usable if values[i] > 0]
    if (len(usable) + 1) * (capacity + 1) <= _DP_CELL_LIMIT:
        take = _knapsack_dp(usable, weights, values, capacity)
    else:
        take = _knapsack_branch_bound(usable, weights, values, capacity)
    return [items[i] for i in take]


def _knapsack_dp(usable, weights, values, capacity) -> list[int]:
    # suffix DP over id-sorted items; [value, -weight] maximised
    n = len(usable)
    skip_row = [(0.0, 0) for _ in range(capacity + 1)]
    table = [skip_row]
    for pos in range(n - 1, -1, -1):
        i = usable[pos]
        w, v = weights[i], values[i]
        prev = table[0]
        row = []
        for c in range(capacity + 1):
            best = prev[c]
            if w <= c:
                tv, tw = prev[c - w]
                cand = (tv + v, tw - w)
                if cand[0] > best[0] or (cand[0] == best[0] and cand[1] > best[1]):
                    best = cand
            row.append(best)
        table.insert(0, row)
    # include-first reconstruction: lexicographically smallest id tuple
    take = []
    c = capacity
    for pos in range(n):
        i = usable[pos]
        w, v = weights[i], values[i]
        if w <= c:
            tv, tw = table[pos + 1][c - w]
            if (tv + v, tw - w) == table[pos][c]:
                take.append(i)
                c -= w
    return take


def _knapsack_branch_bound(usable, weights, values, capacity) -> list[int]:
    # order by value density for tight fractional bounds
    dense = sorted(usable, key=lambda i: (-(values[i] / weights[i]), i))

    def bound(pos: int, cap: int) -> float:
        total = 0.0
        for i in dense[pos:]:
            if weights[i] <= cap:
                cap -= weights[i]
                total += values[i]
            else:
                total += values[i] * cap / weights[i]
                break
        return total

    best = [0.0, 0, frozenset()]  # value, -weight, chosen set

    def search(pos: int, cap: int, value: float, weight: int, chosen: tuple):
        if pos == len(dense):
            key = (value, -weight)
            if key > (best[0], best[1]):
                best[0], best[1], best[2] = value, -weight, frozenset(chosen)
            return
        if value + bound(pos, cap) < best[0]:
            return
        i = dense[pos]
        if weights[i] <= cap:
            search(pos + 1, cap - weights[i], value + values[i],
                   weight + weights[i], chosen + (i,))
        search(pos + 1, cap, value, weight, chosen)

    search(0, capacity, 0.0, 0, ())
    target_value, target_weight = best[0], -best[1]
    # lexicographic reconstruction: include-first over id-sorted items
    take: list[int] = []

    def achievable(pos: int, cap: int, value: float, weight: int) -> bool:
        if value > target_value or weight > target_weight:
            return False
        if pos == len(usable):
            return value == target_value and weight == target_weight
        if value + bound_by_id(pos, cap) < target_value:
            return False
        i = usable[pos]
        if weights[i] <= cap and achievable(pos + 1, cap - weights[i],
                                            value + values[i], weight + weights[i]):
            take.append(i)
            return True
        return achievable(pos + 1, cap, value, weight)

    def bound_by_id(pos: int, cap: int) -> float:
        total = 0.0
        for i in sorted(usable[pos:], key=lambda i: -(values[i] / weights[i])):
            if weights[i] <= cap:
                cap -= weights[i]
                total += values[i]
            else:
                total += values[i] * cap / weights[i]
                break
        return total

    achievable(0, capacity, 0.0, 0)
    return sorted(take)


# --------------------------------------------------------------------------
# Spanner materialization
# --------------------------------------------------------------------------

@dataclass
class _PairData:
    count: int = 0
    aggs: dict = field(default_factory=dict)


def _allowed_types_by_depth(schema: GraphSchema, v: ViewInstance) -> list[set[str]]:
    """Types a trail may visit at each depth if it can still reach the
    endpoint type at one of the contracted lengths."""
    lengths = v.lengths
    labels = set(v.path_labels) if v.path_labels else None
    allowed: list[set[str]] = [set() for _ in range(max(lengths) + 1)]
    for length in lengths:
        for p in schema_k_hop_paths(schema, length):
            if p.src_type != v.x_type or p.dst_type != v.y_type:
                continue
            if labels is not None and not set(p.labels()) <= labels:
                continue
            for depth, vtype in enumerate(p.type_sequence()):
                allowed[depth].add(vtype)
    if v.through_types is not None:
        allowed = [a & v.through_types for a in allowed]
    return allowed


def materialize_spanner(g: PropertyGraph, v: ViewInstance,
                        max_edges: int | None = None,
                        threads: int = 1) -> PropertyGraph:
    """Materialize a connector view over ``g``. One edge per ordered
    (src, dst) pair connected by at least one qualifying trail, carrying
    path_count and any requested trail aggregates."""
    if v.kind not in CONNECTOR_KINDS:
        raise ValidationError(f"{v.kind} is not a connector view")
    lengths = set(v.lengths)
    max_len = max(lengths)
    allowed = _allowed_types_by_depth(g.schema, v)
    label_filter = set(v.path_labels) if v.path_labels else None
    sources = [vid for vid in sorted(g.vertices_of_type(v.x_type))
               if g.vertex_type(vid) in allowed[0]] if allowed[0] else []

    def scan(chunk: list[str]) -> dict[tuple[str, str], _PairData]:
        pairs: dict[tuple[str, str], _PairData] = {}
        used: set[str] = set()
        trail: list[dict] = []

        def record(start: str, end: str):
            data = pairs.setdefault((start, end), _PairData())
            data.count += 1
            for prop, along, across in v.edge_aggregates:
                value = None
                for props in trail:
                    step = props.get(prop)
                    if isinstance(step, bool) or not isinstance(step, (int, float)):
                        raise PropertyTypeMismatchError(
                            f"edge property {prop!r} must be numeric on every "
                            f"contracted edge")
                    value = step if value is None else _REDUCE[along](value, step)
                if prop in data.aggs:
                    data.aggs[prop] = _REDUCE[across](data.aggs[prop], value)
                else:
                    data.aggs[prop] = value

        def walk(start: str, vid: str, depth: int):
            if depth in lengths and depth > 0 and g.vertex_type(vid) == v.y_type:
                record(start, vid)
            if depth == max_len:
                return
            for eid, dst, label, props in g.out_edges(vid):
                if eid in used:
                    continue
                if label_filter is not None and label not in label_filter:
                    continue
                if g.vertex_type(dst) not in allowed[depth + 1]:
                    continue
                used.add(eid)
                trail.append(props)
                walk(start, dst, depth + 1)
                trail.pop()
                used.discard(eid)

        for src in chunk:
            walk(src, src, 0)
        return pairs

    if threads <= 1 or len(sources) < 2:
        merged = scan(sources)
    else:
        chunks = [sources[i::threads] for i in range(threads)]
        merged = {}
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for partial in pool.map(scan, chunks):
                for pair, data in partial.items():
                    into = merged.setdefault(pair, _PairData())
                    into.count += data.count
                    for prop, _, across in v.edge_aggregates:
                        if prop in into.aggs:
                            into.aggs[prop] = _REDUCE[across](into.aggs[prop],
                                                              data.aggs[prop])
                        else:
                            into.aggs[prop] = data.aggs[prop]

    if max_edges is not None and len(merged) > max_edges:
        raise BudgetExceededError(
            f"spanner would materialize {len(merged)} edges, cap is {max_edges}")

    view_schema = v.view_schema(g.schema)
    endpoints = sorted({u for u, _ in merged} | {w for _, w in merged})
    vertices = [(vid, g.vertex_type(vid), g.vertex_props(vid)) for vid in endpoints]
    edges = []
    for i, (u, w) in enumerate(sorted(merged)):
        data = merged[(u, w)]
        props = {"path_count": data.count}
        props.update(data.aggs)
        edges.append((f"ve{i:06d}", u, w, v.view_label, props))
    return PropertyGraph.build(view_schema, vertices, edges)


_REDUCE = {
    "max": max,
    "min": min,
    "sum": lambda a, b: a + b,
}


# --------------------------------------------------------------------------
# Sparsifier materialization
# --------------------------------------------------------------------------

def materialize_sparsifier(g: PropertyGraph, v: ViewInstance) -> PropertyGraph:
    """Materialize a filter or aggregator view over ``g``."""
    if v.kind == "VertexInclusion":
        return _filter_vertices(g, v, keep_matching=True)
    if v.kind == "VertexRemoval":
        return _filter_vertices(g, v, keep_matching=False)
    if v.kind == "EdgeInclusion":
        return _filter_edges(g, v, keep_matching=True)
    if v.kind == "EdgeRemoval":
        return _filter_edges(g, v, keep_matching=False)
    if v.kind == "VertexAggregator":
        return _aggregate_vertices(g, v)
    if v.kind == "EdgeAggregator":
        return _aggregate_edges(g, v)
    if v.kind == "SubgraphAggregator":
        return _aggregate_subgraphs(g, v)
    raise ValidationError(f"{v.kind} is not a sparsifier view")


def _require_predicate(v: ViewInstance) -> Predicate:
    if v.predicate is None:
        raise ValidationError(f"{v.kind} needs a predicate")
    return v.predicate


def _filter_vertices(g, v, keep_matching: bool) -> PropertyGraph:
    pred = _require_predicate(v)
    kept = []
    for vid, vtype, props in g.vertices():
        if pred.matches(vtype, props) == keep_matching:
            kept.append((vid, vtype, props))
    kept_ids = {vid for vid, _, _ in kept}
    edges = [(eid, src, dst, label, props)
             for eid, src, dst, label, props in g.edges()
             if src in kept_ids and dst in kept_ids]
    return PropertyGraph.build(v.view_schema(g.schema), kept, edges)


def _filter_edges(g, v, keep_matching: bool) -> PropertyGraph:
    pred = _require_predicate(v)
    edges = [(eid, src, dst, label, props)
             for eid, src, dst, label, props in g.edges()
             if pred.matches(label, props) == keep_matching]
    vertices = list(g.vertices())
    return PropertyGraph.build(v.view_schema(g.schema), vertices, edges)


def _aggregate(values: list, func: str):
    if func == "count":
        return len(values)
    numeric = []
    for value in values:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PropertyTypeMismatchError(
                f"cannot {func} non-numeric value {value!r}")
        numeric.append(value)
    if not numeric:
        return None
    if func == "sum":
        return sum(numeric)
    if func == "avg":
        return sum(numeric) / len(numeric)
    if func == "max":
        return max(numeric)
    if func == "min":
        return min(numeric)
    raise ValidationError(f"unknown aggregate function {func!r}")


def _member_type(g, members) -> str:
    types = {g.vertex_type(m) for m in members}
    if len(types) > 1:
        raise MixedTypeAggregationError(
            f"cannot aggregate vertices of different types {sorted(types)}")
    return types.pop()


def _aggregate_vertices(g, v: ViewInstance) -> PropertyGraph:
    pred = _require_predicate(v)
    if not v.group_key:
        raise ValidationError("VertexAggregator needs a group_key")
    matching = [vid for vid, vtype, props in g.vertices()
                if pred.matches(vtype, props)]
    if matching:
        _member_type(g, matching)
    groups: dict[object, list[str]] = {}
    for vid in matching:
        props = g.vertex_props(vid)
        if v.group_key in props:
            groups.setdefault(props[v.group_key], []).append(vid)
    remap: dict[str, str] = {}
    vertices = []
    for value in sorted(groups, key=repr):
        members = groups[value]
        vtype = g.vertex_type(members[0])
        super_id = f"agg:{vtype}:{value}"
        props = {v.group_key: value}
        for prop, func in v.aggregations:
            member_values = [g.vertex_props(m)[prop] for m in members
                             if prop in g.vertex_props(m)]
            result = _aggregate(member_values, func)
            if result is not None:
                props[prop] = result
        vertices.append((super_id, vtype, props))
        for m in members:
            remap[m] = super_id
    for vid, vtype, props in g.vertices():
        if vid not in remap:
            vertices.append((vid, vtype, props))
    edges = []
    for eid, src, dst, label, props in g.edges():
        new_src = remap.get(src, src)
        new_dst = remap.get(dst, dst)
        if new_src == new_dst and (src in remap or dst in remap):
            continue  # absorbed into one supervertex
        edges.append((eid, new_src, new_dst, label, props))
    return PropertyGraph.build(g.schema, vertices, edges)


def _aggregate_edges(g, v: ViewInstance) -> PropertyGraph:
    pred = _require_predicate(v)
    groups: dict[tuple[str, str, str], list[tuple[str, dict]]] = {}
    edges = []
    for eid, src, dst, label, props in g.edges():
        if pred.matches(label, props):
            groups.setdefault((src, dst, label), []).append((eid, props))
        else:
            edges.append((eid, src, dst, label, props))
    for i, key in enumerate(sorted(groups)):
        src, dst, label = key
        members = groups[key]
        props = {"member_count": len(members)}
        for prop, func in v.aggregations:
            values = [p[prop] for _, p in members if prop in p]
            result = _aggregate(values, func)
            if result is not None:
                props[prop] = result
        edges.append((f"eagg{i:06d}", src, dst, label, props))
    vertices = list(g.vertices())
    return PropertyGraph.build(g.schema, vertices, edges)


def _aggregate_subgraphs(g, v: ViewInstance) -> PropertyGraph:
    pred = _require_predicate(v)
    members = [vid for vid, vtype, props in g.vertices()
               if pred.matches(vtype, props)]
    member_set = set(members)
    if members:
        _member_type(g, members)
    parent = {m: m for m in members}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for _, src, dst, _, _ in g.edges():
        if src in member_set and dst in member_set:
            parent[find(src)] = find(dst)
    components: dict[str, list[str]] = {}
    for m in members:
        components.setdefault(find(m), []).append(m)
    remap: dict[str, str] = {}
    vertices = []
    for root in sorted(components, key=lambda r: min(components[r])):
        group = sorted(components[root])
        vtype = g.vertex_type(group[0])
        super_id = f"agg:{vtype}:{group[0]}"
        props = {"member_count": len(group)}
        for prop, func in v.aggregations:
            values = [g.vertex_props(m)[prop] for m in group
                      if prop in g.vertex_props(m)]
            result = _aggregate(values, func)
            if result is not None:
                props[prop] = result
        vertices.append((super_id, vtype, props))
        for m in group:
            remap[m] = super_id
    for vid, vtype, props in g.vertices():
        if vid not in remap:
            vertices.append((vid, vtype, props))
    edges = []
    for eid, src, dst, label, props in g.edges():
        new_src = remap.get(src, src)
        new_dst = remap.get(dst, dst)
        if new_src == new_dst and (src in remap or dst in remap):
            continue
        edges.append((eid, new_src, new_dst, label, props))
    return PropertyGraph.build(g.schema, vertices, edges)


def materialize(g: PropertyGraph, v: ViewInstance,
                max_edges: int | None = None, threads: int = 1) -> PropertyGraph:
    if v.kind in CONNECTOR_KINDS:
        return materialize_spanner(g, v, max_edges=max_edges, threads=threads)
    return materialize_sparsifier(g, v)


# --------------------------------------------------------------------------
# Synthetic summaries for rewritten-query costing
# --------------------------------------------------------------------------

def view_degree_summary(v: ViewInstance, raw: DegreeSummary,
                        estimated_edges: float) -> DegreeSummary:
    """Degree summary a connector view is expected to have, before it is
    materialized; used to cost rewritten queries."""
    n_src = max(raw.n_of(v.x_type), 1)
    deg = math.ceil(estimated_edges / n_src)
    per_type = {
        v.x_type: TypeDegrees(raw.n_of(v.x_type),
                              {a: deg for a in PERCENTILE_ALPHAS}),
    }
    if v.y_type != v.x_type:
        per_type[v.y_type] = TypeDegrees(raw.n_of(v.y_type),
                                         {a: 0 for a in PERCENTILE_ALPHAS})
    total = sum(td.vertex_count for td in per_type.values())
    return DegreeSummary(
        per_type=per_type,
        edge_source_types=frozenset({v.x_type}),
        total_vertices=total,
        total_edges=int(estimated_edges),
    )


def sparsifier_degree_summary(v: ViewInstance, raw: DegreeSummary,
                              schema: GraphSchema) -> DegreeSummary:
    """Summary proxy for a type/label filter view: kept types retain their
    raw distributions, filtered-out types disappear."""
    view_schema = v.view_schema(schema)
    per_type = {t: td for t, td in raw.per_type.items()
                if t in view_schema.vertex_types}
    return DegreeSummary(
        per_type=per_type,
        edge_source_types=view_schema.edge_source_types(),
        total_vertices=sum(td.vertex_count for td in per_type.values()),
        total_edges=raw.total_edges,
    )


# --------------------------------------------------------------------------
# Catalog
# --------------------------------------------------------------------------

@dataclass
class CatalogEntry:
    view: ViewInstance
    graph: PropertyGraph
    actual_edges: int
    created_at: str


@dataclass
class ViewCatalog:
    entries: dict[str, CatalogEntry] = field(default_factory=dict)

    def add(self, view: ViewInstance, graph: PropertyGraph) -> CatalogEntry:
        entry = CatalogEntry(
            view=view, graph=graph, actual_edges=graph.m,
            created_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
        )
        self.entries[view.view_id] = entry
        return entry

    def get(self, view_id: str) -> CatalogEntry:
        if view_id not in self.entries:
            raise ValidationError(f"view {view_id!r} is not in the catalog")
        return self.entries[view_id]


def _instance_to_dict(v: ViewInstance) -> dict:
    out = {
        "kind": v.kind, "x": v.x, "y": v.y, "x_type": v.x_type,
        "y_type": v.y_type, "k": v.k, "lo": v.lo, "hi": v.hi,
        "label": v.label, "group_key": v.group_key,
        "aggregations": [list(a) for a in v.aggregations],
        "edge_aggregates": [list(a) for a in v.edge_aggregates],
        "through_types": sorted(v.through_types) if v.through_types is not None else None,
        "provenance": v.provenance,
        "predicate": None,
    }
    if v.predicate is not None:
        out["predicate"] = {
            "types": sorted(v.predicate.types) if v.predicate.types is not None else None,
            "prop": list(v.predicate.prop) if v.predicate.prop is not None else None,
        }
    return out


def _instance_from_dict(raw: dict) -> ViewInstance:
    predicate = None
    if raw.get("predicate") is not None:
        p = raw["predicate"]
        predicate = Predicate(
            types=frozenset(p["types"]) if p.get("types") is not None else None,
            prop=tuple(p["prop"]) if p.get("prop") is not None else None,
        )
    return ViewInstance(
        kind=raw["kind"], x=raw.get("x"), y=raw.get("y"),
        x_type=raw.get("x_type"), y_type=raw.get("y_type"),
        k=raw.get("k"), lo=raw.get("lo"), hi=raw.get("hi"),
        label=raw.get("label"), predicate=predicate,
        group_key=raw.get("group_key"),
        aggregations=tuple(tuple(a) for a in raw.get("aggregations", [])),
        edge_aggregates=tuple(tuple(a) for a in raw.get("edge_aggregates", [])),
        through_types=frozenset(raw["through_types"])
        if raw.get("through_types") is not None else None,
        provenance=raw.get("provenance", ""),
    )


def catalog_save(catalog: ViewCatalog, path: str | Path) -> None:
    """Write the catalog as a manifest plus per-view CSV/schema files."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"views": []}
    for i, view_id in enumerate(sorted(catalog.entries)):
        entry = catalog.entries[view_id]
        stem = f"view{i:03d}"
        entry.graph.export_csv(root / f"{stem}_vertices.csv",
                               root / f"{stem}_edges.csv")
        (root / f"{stem}_schema.json").write_text(
            entry.graph.schema.to_json(), encoding="utf-8")
        manifest["views"].append({
            "id": view_id,
            "instance": _instance_to_dict(entry.view),
            "vertices": f"{stem}_vertices.csv",
            "edges": f"{stem}_edges.csv",
            "schema": f"{stem}_schema.json",
            "actual_edges": entry.actual_edges,
            "created_at": entry.created_at,
        })
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def catalog_load(path: str | Path) -> ViewCatalog:
    """Load and validate a catalog directory."""
    from .store import load_graph

    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorruptCatalogError(f"missing manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        views = manifest["views"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptCatalogError(f"malformed manifest: {exc}") from exc
    catalog = ViewCatalog()
    for raw in views:
        try:
            schema = GraphSchema.load(root / raw["schema"])
            graph = load_graph(root / raw["vertices"], root / raw["edges"], schema)
            view = _instance_from_dict(raw["instance"])
            entry = CatalogEntry(
                view=view, graph=graph,
                actual_edges=raw["actual_edges"],
                created_at=raw["created_at"],
            )
        except FileNotFoundError as exc:
            raise CorruptCatalogError(f"catalog file missing: {exc}") from exc
        except (KeyError, TypeError, ValidationError) as exc:
            raise CorruptCatalogError(f"catalog entry invalid: {exc}") from exc
        if entry.actual_edges != graph.m:
            raise CorruptCatalogError(
                f"view {raw['id']!r}: manifest says {entry.actual_edges} edges, "
                f"files contain {graph.m}")
        catalog.entries[raw["id"]] = entry
    return catalog
