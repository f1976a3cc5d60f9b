"""View size estimators, exact path counting, and the query cost proxy.

Three estimators for the number of k-length paths (equivalently, the
edge count of a k-hop connector view):

* Erdos-Renyi:      C(n, k+1) * (m / C(n, 2)) ** k
* homogeneous:      n * deg_alpha ** k            (single vertex type)
* heterogeneous:    sum over edge-source types t of n_t * deg_alpha(t) ** k

``exact_path_count`` counts directed k-edge paths with pairwise-distinct
vertices (multi-edges count individually); it is the estimators' oracle.
Note the deliberate asymmetry with the executor: traversal matches
edge-distinct trails, while these counts are vertex-distinct simple
paths.

``eval_cost`` is a documented stand-in for an engine cost model. For each
connected pattern component it charges the anchor scan plus a geometric
expansion series:

    cost = anchor + anchor * sum(b**i for i = 1..S)

where ``anchor`` is the candidate count of the most selective typed
pattern vertex (total vertex count if none is typed), ``b`` is the
largest alpha-percentile out-degree over edge-source types, and ``S`` is
the number of fixed edges plus the sum of variable-length upper bounds in
the component. It only promises correct ordering: deterministic, and
monotone in hop bounds and in every degree percentile.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

from .errors import BudgetExceededError, DomainError, HeterogeneousInputError
from .query import QueryGraph
from .store import DegreeSummary, PropertyGraph

DEFAULT_ALPHA = 95
DEFAULT_STEP_BUDGET = 10 ** 8


@dataclass(frozen=True)
class SizeEstimate:
    """Estimated edge count of a view, tagged with its estimator."""

    estimated_edges: float
    estimator: str  # ErdosRenyi | HomogeneousPercentile | HeterogeneousPercentile | Exact
    k: int
    alpha: int | None = None

    def __post_init__(self):
        if self.estimated_edges < 0:
            raise DomainError("estimated edge count must be non-negative")
        if self.estimator == "Exact" and self.estimated_edges != int(self.estimated_edges):
            raise DomainError("exact estimates must be integers")


def estimate_er(n: int, m: int, k: int) -> SizeEstimate:
    """Expected k-length simple paths in a uniform random graph."""
    if k < 0:
        raise DomainError("k must be non-negative")
    if n < k + 1:
        raise DomainError(f"need n >= k+1, got n={n}, k={k}")
    if m > comb(n, 2):
        raise DomainError(f"need m <= n(n-1)/2, got m={m}, n={n}")
    if k == 0:
        return SizeEstimate(float(n), "ErdosRenyi", 0)
    value = comb(n, k + 1) * (m / comb(n, 2)) ** k
    return SizeEstimate(value, "ErdosRenyi", k)


def estimate_homogeneous(d: DegreeSummary, k: int, alpha: int) -> SizeEstimate:
    """n * deg_alpha ** k over a single-type summary."""
    if k < 0:
        raise DomainError("k must be non-negative")
    if len(d.per_type) != 1:
        raise HeterogeneousInputError(
            f"homogeneous estimator needs a single-type summary, "
            f"got {sorted(d.per_type)}")
    (vtype,) = d.per_type
    value = d.n_of(vtype) * float(d.deg(vtype, alpha)) ** k
    return SizeEstimate(value, "HomogeneousPercentile", k, alpha)


def estimate_heterogeneous(d: DegreeSummary, k: int, alpha: int) -> SizeEstimate:
    """Per-type sum of n_t * deg_alpha(t) ** k over edge-source types."""
    if k < 0:
        raise DomainError("k must be non-negative")
    value = 0.0
    for vtype in sorted(d.edge_source_types):
        value += d.n_of(vtype) * float(d.deg(vtype, alpha)) ** k
    return SizeEstimate(value, "HeterogeneousPercentile", k, alpha)


def exact_estimate(count: int, k: int) -> SizeEstimate:
    return SizeEstimate(float(count), "Exact", k)


# --------------------------------------------------------------------------
# Exact counting oracle
# --------------------------------------------------------------------------

def exact_path_count(g: PropertyGraph, k: int,
                     src_type: str | None = None,
                     dst_type: str | None = None,
                     step_budget: int = DEFAULT_STEP_BUDGET) -> int:
    """Exact number of directed k-edge paths with pairwise-distinct
    vertices, optionally filtered by endpoint types. Closed forms cover k
    in {0, 1, 2}; k >= 3 walks the graph with a step budget."""
    if k < 0:
        raise DomainError("k must be non-negative")
    if k == 0:
        count = 0
        for vid, vtype, _ in g.vertices():
            if src_type is not None and vtype != src_type:
                continue
            if dst_type is not None and vtype != dst_type:
                continue
            count += 1
        return count
    if k == 1:
        count = 0
        for _, src, dst, _, _ in g.edges():
            if src == dst:
                continue
            if src_type is not None and g.vertex_type(src) != src_type:
                continue
            if dst_type is not None and g.vertex_type(dst) != dst_type:
                continue
            count += 1
        return count
    if k == 2:
        return _two_path_count(g, src_type, dst_type)
    return _dfs_path_count(g, k, src_type, dst_type, step_budget)


def _two_path_count(g: PropertyGraph, src_type, dst_type) -> int:
    # sum over midpoints of in*out, minus combinations that revisit the
    # start (u == w); self-loop edges never participate
    pair_counts: dict[tuple[str, str], int] = {}
    in_cnt: dict[str, int] = {}
    out_cnt: dict[str, int] = {}
    for _, src, dst, _, _ in g.edges():
        if src == dst:
            continue
        pair_counts[(src, dst)] = pair_counts.get((src, dst), 0) + 1
        if src_type is None or g.vertex_type(src) == src_type:
            in_cnt[dst] = in_cnt.get(dst, 0) + 1
        if dst_type is None or g.vertex_type(dst) == dst_type:
            out_cnt[src] = out_cnt.get(src, 0) + 1
    total = 0
    for mid in g.vertex_ids():
        total += in_cnt.get(mid, 0) * out_cnt.get(mid, 0)
    for (u, v), cnt in pair_counts.items():
        if src_type is not None and g.vertex_type(u) != src_type:
            continue
        if dst_type is not None and g.vertex_type(u) != dst_type:
            continue
        back = pair_counts.get((v, u), 0)
        total -= cnt * back
    return total


def _dfs_path_count(g: PropertyGraph, k: int, src_type, dst_type,
                    step_budget: int) -> int:
    total = 0
    steps = 0

    def walk(v: str, depth: int, visited: set[str]):
        nonlocal total, steps
        if depth == k:
            if dst_type is None or g.vertex_type(v) == dst_type:
                total += 1
            return
        for _, dst, _, _ in g.out_edges(v):
            steps += 1
            if steps > step_budget:
                raise BudgetExceededError(
                    f"path counting exceeded {step_budget} steps")
            if dst in visited:
                continue
            visited.add(dst)
            walk(dst, depth + 1, visited)
            visited.discard(dst)

    for vid in g.vertex_ids():
        if src_type is not None and g.vertex_type(vid) != src_type:
            continue
        walk(vid, 0, {vid})
    return total


# --------------------------------------------------------------------------
# Query evaluation cost proxy
# --------------------------------------------------------------------------

def _components(q: QueryGraph) -> list[set[str]]:
    parent: dict[str, str] = {name: name for name in q.pattern_vertices}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str):
        parent[find(a)] = find(b)

    for e in q.pattern_edges:
        union(e.src, e.dst)
    for p in q.var_length_paths:
        union(p.src, p.dst)
    groups: dict[str, set[str]] = {}
    for name in q.pattern_vertices:
        groups.setdefault(find(name), set()).add(name)
    return [groups[root] for root in sorted(groups)]


def eval_cost(q: QueryGraph, d: DegreeSummary, alpha: int = DEFAULT_ALPHA) -> float:
    """Proxy evaluation cost of ``q`` over a graph summarised by ``d``.
    See the module docstring for the formula and its guarantees."""
    branch = max((d.deg(t, alpha) for t in d.edge_source_types), default=0)
    total = 0.0
    for component in _components(q):
        typed = [d.n_of(q.pattern_vertices[v]) for v in component
                 if q.pattern_vertices[v] is not None]
        anchor = min(typed) if typed else d.total_vertices
        steps = sum(1 for e in q.pattern_edges
                    if e.src in component or e.dst in component)
        steps += sum(p.upper for p in q.var_length_paths
                     if p.src in component or p.dst in component)
        expansion = sum(float(branch) ** i for i in range(1, steps + 1))
        total += anchor + anchor * expansion
    return total


@dataclass(frozen=True)
class CostReport:
    """Creation cost and evaluation improvement of one view for one query."""

    creation_cost: float
    eval_cost_raw: float
    eval_cost_rewritten: float

    @property
    def improvement(self) -> float:
        return self.eval_cost_raw / max(self.eval_cost_rewritten, 1e-9)

    @property
    def value(self) -> float:
        return self.improvement / max(self.creation_cost, 1e-9)
