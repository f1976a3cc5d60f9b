import random

import pytest

from graphviews.enumeration import Predicate, ViewInstance
from graphviews.errors import (
    BudgetExceededError,
    CorruptCatalogError,
    MixedTypeAggregationError,
    ValidationError,
)
from graphviews.store import GraphSchema, PropertyGraph
from graphviews.views import (
    Candidate,
    ViewCatalog,
    catalog_load,
    catalog_save,
    materialize_sparsifier,
    materialize_spanner,
    select_views,
)

from conftest import LINEAGE_SCHEMA, PROVENANCE_SCHEMA, random_lineage_dag
from oracles import enumerate_trails, knapsack_best_subset, knapsack_best_value


def view(view_id_weight_value):
    """Candidate with a synthetic distinct view id."""
    vid, weight, value = view_id_weight_value
    # use SameVertexTypeConnector ids as carriers: x_type drives the id
    return Candidate(
        view=ViewInstance(kind="SameVertexTypeConnector", x="a", y="b",
                          x_type=vid, y_type=vid, lo=1, hi=1),
        weight=weight, value=value,
    )


KHOP2 = ViewInstance(kind="KHopConnector", x="q_j1", y="q_j2",
                     x_type="Job", y_type="Job", k=2)


class TestSelectViews:
    def test_documented_example_is_exhaustively_optimal(self):
        # weights/values {(6,30),(3,14),(4,16),(2,9)} at budget 10: the
        # optimum is {w6,w4} with value 46 (verified exhaustively)
        items = [("a", 6, 30.0), ("b", 3, 14.0), ("c", 4, 16.0), ("d", 2, 9.0)]
        assert knapsack_best_value([6, 3, 4, 2], [30, 14, 16, 9], 10) == 46
        chosen = select_views([view(i) for i in items], 10)
        assert sum(c.value for c in chosen) == 46
        assert {c.view.x_type for c in chosen} == {"a", "c"}

    def test_budget_zero(self):
        items = [("a", 1, 5.0)]
        assert select_views([view(i) for i in items], 0) == []

    def test_single_candidate_over_budget(self):
        assert select_views([view(("a", 11, 99.0))], 10) == []

    def test_matches_exhaustive_on_random_lists(self):
        rng = random.Random(1)
        for _ in range(120):
            n = rng.randint(1, 12)
            items = [(f"i{j:02d}", rng.randint(1, 15), float(rng.randint(0, 40)))
                     for j in range(n)]
            budget = rng.randint(0, 40)
            chosen = select_views([view(i) for i in items], budget)
            got = (tuple(sorted(c.view.x_type for c in chosen)),
                   sum(c.value for c in chosen),
                   sum(c.weight for c in chosen))
            want = knapsack_best_subset(items, budget)
            assert got[1] == pytest.approx(want[1]), (items, budget)
            assert got[0] == want[0], (items, budget)

    def test_branch_and_bound_path_matches_dp(self):
        # capacities beyond the DP table limit route through branch&bound
        rng = random.Random(7)
        items = [(f"i{j:02d}", rng.randint(10 ** 5, 10 ** 6),
                  float(rng.randint(1, 50))) for j in range(14)]
        budget = 3 * 10 ** 6
        chosen = select_views([view(i) for i in items], budget)
        scaled = [(vid, w // 10 ** 5 + (1 if w % 10 ** 5 else 0), val)
                  for vid, w, val in items]
        assert sum(c.value for c in chosen) == pytest.approx(
            knapsack_best_value([w for _, w, _ in items],
                                [v for _, _, v in items], budget))

    def test_deterministic_tie_break(self):
        # two identical-value identical-weight options: lexicographically
        # smaller view id wins
        items = [("b", 5, 10.0), ("a", 5, 10.0)]
        chosen = select_views([view(i) for i in items], 5)
        assert [c.view.x_type for c in chosen] == ["a"]

    def test_weight_must_be_positive(self):
        with pytest.raises(ValidationError):
            Candidate(view=KHOP2, weight=0, value=1.0)


class TestMaterializeSpanner:
    def test_toy_lineage_single_edge(self, toy_lineage):
        g = materialize_spanner(toy_lineage, KHOP2)
        assert set(g.vertex_ids()) == {"j1", "j2"}
        edges = list(g.edges())
        assert len(edges) == 1
        _, src, dst, label, props = edges[0]
        assert (src, dst) == ("j1", "j2")
        assert label == "JOB_TO_JOB_2HOP"
        assert props["path_count"] == 1

    def test_vertex_properties_preserved(self, toy_lineage):
        g = materialize_spanner(toy_lineage, KHOP2)
        assert g.vertex_props("j2") == {"cpu_hours": 10}

    def test_no_k_hop_pairs_empty_view(self):
        g = PropertyGraph.build(LINEAGE_SCHEMA, [("j1", "Job", {})], [])
        view_g = materialize_spanner(g, KHOP2)
        assert (view_g.n, view_g.m) == (0, 0)

    def test_hand_encoded_two_type_views(self):
        # data lineage example: two jobs write files read by two other
        # jobs; both same-type 2-hop views computed by hand
        g = PropertyGraph.build(
            LINEAGE_SCHEMA,
            vertices=[("j1", "Job", {}), ("j2", "Job", {}), ("j3", "Job", {}),
                      ("f1", "File", {}), ("f2", "File", {}), ("f3", "File", {})],
            edges=[
                ("e1", "j1", "f1", "WRITES_TO", {}),
                ("e2", "f1", "j2", "IS_READ_BY", {}),
                ("e3", "f1", "j3", "IS_READ_BY", {}),
                ("e4", "j2", "f2", "WRITES_TO", {}),
                ("e5", "j3", "f3", "WRITES_TO", {}),
                ("e6", "f2", "j3", "IS_READ_BY", {}),
            ],
        )
        job_view = materialize_spanner(g, KHOP2)
        job_pairs = {(s, d): p["path_count"] for _, s, d, _, p in job_view.edges()}
        assert job_pairs == {("j1", "j2"): 1, ("j1", "j3"): 1, ("j2", "j3"): 1}
        file_view = materialize_spanner(
            g, ViewInstance(kind="KHopConnector", x="a", y="b",
                            x_type="File", y_type="File", k=2))
        file_pairs = {(s, d): p["path_count"] for _, s, d, _, p in file_view.edges()}
        assert file_pairs == {("f1", "f2"): 1, ("f1", "f3"): 1, ("f2", "f3"): 1}

    def test_path_count_counts_parallel_trails(self):
        g = PropertyGraph.build(
            LINEAGE_SCHEMA,
            vertices=[("j1", "Job", {}), ("j2", "Job", {}),
                      ("f1", "File", {}), ("f2", "File", {})],
            edges=[
                ("e1", "j1", "f1", "WRITES_TO", {}),
                ("e2", "f1", "j2", "IS_READ_BY", {}),
                ("e3", "j1", "f2", "WRITES_TO", {}),
                ("e4", "f2", "j2", "IS_READ_BY", {}),
                ("e5", "f2", "j2", "IS_READ_BY", {}),  # repeated read
            ],
        )
        view_g = materialize_spanner(g, KHOP2)
        (edge,) = list(view_g.edges())
        assert edge[4]["path_count"] == 3

    def test_brute_force_trail_equivalence(self):
        for seed in range(30):
            g = random_lineage_dag(seed, jobs=12, files=18)
            view_g = materialize_spanner(g, KHOP2)
            got = {(s, d): p["path_count"] for _, s, d, _, p in view_g.edges()}
            want = enumerate_trails(g, "Job", "Job", [2])
            assert got == want, seed

    def test_range_connector_contracts_all_lengths(self):
        g = random_lineage_dag(3, jobs=10, files=14)
        v = ViewInstance(kind="SameVertexTypeConnector", x="a", y="b",
                         x_type="Job", y_type="Job", lo=2, hi=4)
        view_g = materialize_spanner(g, v)
        got = {(s, d): p["path_count"] for _, s, d, _, p in view_g.edges()}
        want = enumerate_trails(g, "Job", "Job", [2, 4])  # odd lengths infeasible
        assert got == want

    def test_edge_aggregates_carried(self):
        g = PropertyGraph.build(
            LINEAGE_SCHEMA,
            vertices=[("j1", "Job", {}), ("j2", "Job", {}),
                      ("f1", "File", {}), ("f2", "File", {})],
            edges=[
                ("e1", "j1", "f1", "WRITES_TO", {"ts": 1}),
                ("e2", "f1", "j2", "IS_READ_BY", {"ts": 9}),
                ("e3", "j1", "f2", "WRITES_TO", {"ts": 4}),
                ("e4", "f2", "j2", "IS_READ_BY", {"ts": 5}),
            ],
        )
        v = ViewInstance(kind="KHopConnector", x="a", y="b",
                         x_type="Job", y_type="Job", k=2,
                         edge_aggregates=(("ts", "max", "min"),))
        view_g = materialize_spanner(g, v)
        (edge,) = list(view_g.edges())
        # trails: max(1,9)=9 and max(4,5)=5; min across trails = 5
        assert edge[4] == {"path_count": 2, "ts": 5}

    def test_through_types_composition(self):
        # spanner over the {Job, File} sparsifier: trails must not route
        # through tasks (none can on this schema; the restriction is a
        # no-op but must not change results)
        g = random_lineage_dag(5, schema=PROVENANCE_SCHEMA)
        plain = materialize_spanner(g, KHOP2)
        composed = materialize_spanner(
            g, ViewInstance(kind="KHopConnector", x="a", y="b",
                            x_type="Job", y_type="Job", k=2,
                            through_types=frozenset({"Job", "File"})))
        assert sorted(plain.edges()) == sorted(composed.edges())

    def test_edge_cap(self):
        g = random_lineage_dag(2)
        with pytest.raises(BudgetExceededError):
            materialize_spanner(g, KHOP2, max_edges=1)

    def test_threads_do_not_change_output(self):
        g = random_lineage_dag(8, jobs=20, files=30)
        single_run = materialize_spanner(g, KHOP2, threads=1)
        multi = materialize_spanner(g, KHOP2, threads=8)
        assert sorted(single_run.edges()) == sorted(multi.edges())
        assert sorted(single_run.vertices()) == sorted(multi.vertices())


@pytest.fixture
def provenance_toy():
    return PropertyGraph.build(
        PROVENANCE_SCHEMA,
        vertices=[
            ("j1", "Job", {}), ("j2", "Job", {}),
            ("f1", "File", {"dir": "/a", "bytes": 10}),
            ("f2", "File", {"dir": "/a", "bytes": 30}),
            ("f3", "File", {"dir": "/b", "bytes": 5}),
            ("t1", "Task", {}), ("m1", "Machine", {}),
        ],
        edges=[
            ("e1", "j1", "f1", "WRITES_TO", {}),
            ("e2", "f1", "j2", "IS_READ_BY", {}),
            ("e3", "j1", "t1", "SPAWNS", {}),
            ("e4", "t1", "m1", "RUNS_ON", {}),
            ("e5", "j2", "f2", "WRITES_TO", {}),
        ],
    )


class TestMaterializeSparsifier:
    def test_vertex_inclusion_jobs_and_files(self, provenance_toy):
        v = ViewInstance(kind="VertexInclusion",
                         predicate=Predicate(types=frozenset({"Job", "File"})))
        g = materialize_sparsifier(provenance_toy, v)
        assert set(g.vertex_ids()) == {"j1", "j2", "f1", "f2", "f3"}
        assert {eid for eid, *_ in g.edges()} == {"e1", "e2", "e5"}
        assert g.schema.vertex_types == {"Job", "File"}

    def test_edge_removal_always_false_predicate_is_identity(self, provenance_toy):
        v = ViewInstance(kind="EdgeRemoval",
                         predicate=Predicate(types=frozenset()))
        g = materialize_sparsifier(provenance_toy, v)
        assert g.m == provenance_toy.m
        assert g.n == provenance_toy.n

    def test_vertex_removal_drops_incident_edges(self, provenance_toy):
        v = ViewInstance(kind="VertexRemoval",
                         predicate=Predicate(types=frozenset({"Task"})))
        g = materialize_sparsifier(provenance_toy, v)
        assert "t1" not in g.vertex_ids()
        assert {eid for eid, *_ in g.edges()} == {"e1", "e2", "e5"}

    def test_edge_inclusion(self, provenance_toy):
        v = ViewInstance(kind="EdgeInclusion",
                         predicate=Predicate(types=frozenset({"WRITES_TO"})))
        g = materialize_sparsifier(provenance_toy, v)
        assert {eid for eid, *_ in g.edges()} == {"e1", "e5"}
        assert g.n == provenance_toy.n

    def test_vertex_aggregator_group_by_dir(self, provenance_toy):
        v = ViewInstance(kind="VertexAggregator",
                         predicate=Predicate(types=frozenset({"File"})),
                         group_key="dir", aggregations=(("bytes", "sum"),))
        g = materialize_sparsifier(provenance_toy, v)
        assert g.vertex_props("agg:File:/a") == {"dir": "/a", "bytes": 40}
        assert g.vertex_props("agg:File:/b") == {"dir": "/b", "bytes": 5}
        # independent group-by recomputation
        groups = {}
        for vid, vtype, props in provenance_toy.vertices():
            if vtype == "File":
                groups.setdefault(props["dir"], []).append(props["bytes"])
        assert {d: sum(vs) for d, vs in groups.items()} == {"/a": 40, "/b": 5}
        # edges rewired to supervertices
        assert any(dst == "agg:File:/a" for _, _, dst, _, _ in g.edges())

    def test_mixed_type_aggregation_rejected(self, provenance_toy):
        v = ViewInstance(kind="VertexAggregator",
                         predicate=Predicate(types=frozenset({"Job", "File"})),
                         group_key="dir")
        with pytest.raises(MixedTypeAggregationError):
            materialize_sparsifier(provenance_toy, v)

    def test_edge_aggregator_collapses_parallel_edges(self):
        g = PropertyGraph.build(
            LINEAGE_SCHEMA,
            vertices=[("j1", "Job", {}), ("f1", "File", {})],
            edges=[
                ("e1", "j1", "f1", "WRITES_TO", {"bytes": 5}),
                ("e2", "j1", "f1", "WRITES_TO", {"bytes": 7}),
            ],
        )
        v = ViewInstance(kind="EdgeAggregator",
                         predicate=Predicate(types=frozenset({"WRITES_TO"})),
                         aggregations=(("bytes", "sum"),))
        out = materialize_sparsifier(g, v)
        (edge,) = list(out.edges())
        assert edge[4] == {"member_count": 2, "bytes": 12}

    def test_subgraph_aggregator(self):
        single = GraphSchema.of(["N"], [("N", "N", "L")])
        g = PropertyGraph.build(
            single,
            [(f"v{i}", "N", {"w": i}) for i in range(5)],
            [("e0", "v0", "v1", "L", {}), ("e1", "v1", "v2", "L", {}),
             ("e2", "v3", "v4", "L", {})],
        )
        v = ViewInstance(kind="SubgraphAggregator",
                         predicate=Predicate(types=frozenset({"N"})),
                         aggregations=(("w", "sum"),))
        out = materialize_sparsifier(g, v)
        assert {vid: p for vid, _, p in out.vertices()} == {
            "agg:N:v0": {"member_count": 3, "w": 3},
            "agg:N:v3": {"member_count": 2, "w": 7},
        }
        assert out.m == 0

    def test_size_law(self, provenance_toy):
        cases = [
            ViewInstance(kind="VertexInclusion",
                         predicate=Predicate(types=frozenset({"Job", "File"}))),
            ViewInstance(kind="EdgeRemoval",
                         predicate=Predicate(types=frozenset({"SPAWNS"}))),
            ViewInstance(kind="VertexAggregator",
                         predicate=Predicate(types=frozenset({"File"})),
                         group_key="dir"),
        ]
        for v in cases:
            out = materialize_sparsifier(provenance_toy, v)
            assert out.n <= provenance_toy.n
            assert out.m <= provenance_toy.m
            assert out.n < provenance_toy.n or out.m < provenance_toy.m


class TestCatalog:
    def test_round_trip(self, tmp_path, toy_lineage):
        catalog = ViewCatalog()
        catalog.add(KHOP2, materialize_spanner(toy_lineage, KHOP2))
        v2 = ViewInstance(kind="VertexInclusion",
                          predicate=Predicate(types=frozenset({"Job"})))
        catalog.add(v2, materialize_sparsifier(toy_lineage, v2))
        catalog_save(catalog, tmp_path / "cat")
        loaded = catalog_load(tmp_path / "cat")
        assert set(loaded.entries) == set(catalog.entries)
        for vid, entry in catalog.entries.items():
            other = loaded.entries[vid]
            assert other.view == entry.view
            assert sorted(other.graph.edges()) == sorted(entry.graph.edges())
            assert sorted(other.graph.vertices()) == sorted(entry.graph.vertices())
            assert other.actual_edges == entry.actual_edges

    def test_empty_catalog_round_trip(self, tmp_path):
        catalog_save(ViewCatalog(), tmp_path / "cat")
        assert catalog_load(tmp_path / "cat").entries == {}

    def test_missing_file_corrupt(self, tmp_path, toy_lineage):
        catalog = ViewCatalog()
        catalog.add(KHOP2, materialize_spanner(toy_lineage, KHOP2))
        catalog_save(catalog, tmp_path / "cat")
        (tmp_path / "cat" / "view000_edges.csv").unlink()
        with pytest.raises(CorruptCatalogError):
            catalog_load(tmp_path / "cat")

    def test_bad_manifest_corrupt(self, tmp_path):
        (tmp_path / "cat").mkdir()
        (tmp_path / "cat" / "manifest.json").write_text("{broken", encoding="utf-8")
        with pytest.raises(CorruptCatalogError):
            catalog_load(tmp_path / "cat")
