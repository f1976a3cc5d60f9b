import pytest

from graphviews.errors import (
    DanglingEdgeEndpointError,
    DuplicateIdError,
    MalformedRowError,
    UnknownEdgeTripleError,
    UnknownVertexError,
    UnknownVertexTypeError,
    ValidationError,
)
from graphviews.store import (
    GraphSchema,
    PropertyGraph,
    degree_summary,
    load_graph,
    nearest_rank,
    out_neighbors,
)

from conftest import LINEAGE_SCHEMA, random_lineage_dag


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


VERTS = "id,type,props\nj1,Job,\nj2,Job,\"{\"\"cpu_hours\"\": 10}\"\nf1,File,\n"


class TestLoad:
    def test_minimal_valid_instance(self, tmp_path):
        vf = write(tmp_path / "v.csv", VERTS)
        ef = write(tmp_path / "e.csv",
                   "id,src,dst,label,props\n"
                   "e1,j1,f1,WRITES_TO,\n"
                   "e2,f1,j2,IS_READ_BY,\n")
        g = load_graph(vf, ef, LINEAGE_SCHEMA)
        assert g.n == 3
        assert g.m == 2
        assert g.vertex_type("f1") == "File"
        assert g.vertex_props("j2") == {"cpu_hours": 10}

    def test_files_never_write(self, tmp_path):
        vf = write(tmp_path / "v.csv", VERTS)
        ef = write(tmp_path / "e.csv",
                   "id,src,dst,label,props\ne1,f1,j1,WRITES_TO,\n")
        with pytest.raises(UnknownEdgeTripleError) as exc:
            load_graph(vf, ef, LINEAGE_SCHEMA)
        assert exc.value.line == 2

    def test_empty_edge_file(self, tmp_path):
        vf = write(tmp_path / "v.csv", "id,type,props\nj1,Job,\n")
        ef = write(tmp_path / "e.csv", "id,src,dst,label,props\n")
        g = load_graph(vf, ef, LINEAGE_SCHEMA)
        assert (g.n, g.m) == (1, 0)

    def test_unknown_vertex_type(self, tmp_path):
        vf = write(tmp_path / "v.csv", "id,type,props\nx,Ghost,\n")
        ef = write(tmp_path / "e.csv", "id,src,dst,label,props\n")
        with pytest.raises(UnknownVertexTypeError) as exc:
            load_graph(vf, ef, LINEAGE_SCHEMA)
        assert exc.value.line == 2

    def test_dangling_endpoint(self, tmp_path):
        vf = write(tmp_path / "v.csv", "id,type,props\nj1,Job,\n")
        ef = write(tmp_path / "e.csv",
                   "id,src,dst,label,props\ne1,j1,nope,WRITES_TO,\n")
        with pytest.raises(DanglingEdgeEndpointError):
            load_graph(vf, ef, LINEAGE_SCHEMA)

    def test_duplicate_vertex_id(self, tmp_path):
        vf = write(tmp_path / "v.csv", "id,type,props\nj1,Job,\nj1,Job,\n")
        ef = write(tmp_path / "e.csv", "id,src,dst,label,props\n")
        with pytest.raises(DuplicateIdError) as exc:
            load_graph(vf, ef, LINEAGE_SCHEMA)
        assert exc.value.line == 3

    def test_malformed_row(self, tmp_path):
        vf = write(tmp_path / "v.csv", "id,type,props\nj1,Job\n")
        ef = write(tmp_path / "e.csv", "id,src,dst,label,props\n")
        with pytest.raises(MalformedRowError):
            load_graph(vf, ef, LINEAGE_SCHEMA)

    def test_bad_props_json(self, tmp_path):
        vf = write(tmp_path / "v.csv", "id,type,props\nj1,Job,{broken\n")
        ef = write(tmp_path / "e.csv", "id,src,dst,label,props\n")
        with pytest.raises(MalformedRowError) as exc:
            load_graph(vf, ef, LINEAGE_SCHEMA)
        assert exc.value.line == 2

    def test_multi_edges_permitted(self, tmp_path):
        vf = write(tmp_path / "v.csv", VERTS)
        ef = write(tmp_path / "e.csv",
                   "id,src,dst,label,props\n"
                   "e1,j1,f1,WRITES_TO,\ne2,j1,f1,WRITES_TO,\n")
        g = load_graph(vf, ef, LINEAGE_SCHEMA)
        assert g.m == 2


class TestSchema:
    def test_triple_must_reference_declared_types(self):
        with pytest.raises(ValidationError):
            GraphSchema.of(["A"], [("A", "B", "L")])

    def test_json_round_trip(self):
        s = GraphSchema.from_json(LINEAGE_SCHEMA.to_json())
        assert s == LINEAGE_SCHEMA

    def test_role_types(self, provenance_schema):
        assert provenance_schema.root_types() == frozenset()
        assert provenance_schema.leaf_types() == {"Machine"}
        assert provenance_schema.edge_source_types() == {"Job", "File", "Task"}


class TestDegreeSummary:
    def test_star_graph(self):
        schema = GraphSchema.of(["N"], [("N", "N", "L")])
        g = PropertyGraph.build(
            schema,
            [(f"v{i}", "N", {}) for i in range(5)],
            [(f"e{i}", "v0", f"v{i}", "L", {}) for i in range(1, 5)],
        )
        d = degree_summary(g)
        assert d.n_of("N") == 5
        assert d.deg("N", 100) == 4
        assert d.deg("N", 50) == 0

    def test_constant_out_degree(self):
        schema = GraphSchema.of(["N"], [("N", "N", "L")])
        g = PropertyGraph.build(
            schema,
            [(f"v{i}", "N", {}) for i in range(4)],
            [(f"e{i}", f"v{i}", f"v{(i + 1) % 4}", "L", {}) for i in range(4)],
        )
        d = degree_summary(g)
        for alpha in (50, 90, 95, 100):
            assert d.deg("N", alpha) == 1

    def test_toy_lineage(self, toy_lineage):
        d = degree_summary(toy_lineage)
        assert d.n_of("Job") == 2
        assert d.deg("Job", 100) == 1
        assert d.n_of("File") == 1
        assert d.deg("File", 100) == 1

    def test_counts_sum_to_n(self):
        g = random_lineage_dag(7)
        d = degree_summary(g)
        assert sum(td.vertex_count for td in d.per_type.values()) == g.n

    def test_percentiles_monotone_and_max_exact(self):
        for seed in range(10):
            g = random_lineage_dag(seed)
            d = degree_summary(g)
            for vtype, td in d.per_type.items():
                degs = sorted(g.out_degree(v) for v in g.vertices_of_type(vtype))
                assert td.deg(50) <= td.deg(90) <= td.deg(95) <= td.deg(100)
                assert td.deg(100) == (degs[-1] if degs else 0)
                assert td.vertex_count == len(degs)

    def test_empty_type(self):
        g = PropertyGraph.build(LINEAGE_SCHEMA, [("j1", "Job", {})], [])
        d = degree_summary(g)
        assert d.n_of("File") == 0
        assert d.deg("File", 100) == 0

    def test_nearest_rank(self):
        assert nearest_rank([0, 0, 0, 0, 4], 50) == 0
        assert nearest_rank([0, 0, 0, 0, 4], 100) == 4
        assert nearest_rank([1, 2, 3, 4], 50) == 2
        assert nearest_rank([], 95) == 0


class TestOutNeighbors:
    def test_star_hub_and_leaf(self):
        schema = GraphSchema.of(["N"], [("N", "N", "L")])
        g = PropertyGraph.build(
            schema,
            [(f"v{i}", "N", {}) for i in range(5)],
            [(f"e{i}", "v0", f"v{i}", "L", {}) for i in range(1, 5)],
        )
        assert len(out_neighbors(g, "v0")) == 4
        assert out_neighbors(g, "v1") == []

    def test_label_filter(self, toy_lineage):
        assert out_neighbors(toy_lineage, "j1", "WRITES_TO") == [("e1", "f1")]
        assert out_neighbors(toy_lineage, "j1", "IS_READ_BY") == []

    def test_unknown_vertex(self, toy_lineage):
        with pytest.raises(UnknownVertexError):
            out_neighbors(toy_lineage, "ghost")

    def test_order_is_ascending_edge_id(self):
        schema = GraphSchema.of(["N"], [("N", "N", "L")])
        g = PropertyGraph.build(
            schema,
            [("a", "N", {}), ("b", "N", {}), ("c", "N", {})],
            [("e9", "a", "b", "L", {}), ("e1", "a", "c", "L", {})],
        )
        assert out_neighbors(g, "a") == [("e1", "c"), ("e9", "b")]


class TestInvariants:
    def test_schema_closure_full_scan(self):
        g = random_lineage_dag(3)
        for _, src, dst, label, _ in g.edges():
            triple = (g.vertex_type(src), g.vertex_type(dst), label)
            assert g.schema.has_triple(*triple)

    def test_reload_idempotence(self, tmp_path):
        g = random_lineage_dag(11)
        vf, ef = tmp_path / "v.csv", tmp_path / "e.csv"
        g.export_csv(vf, ef)
        g2 = load_graph(vf, ef, g.schema)
        assert dict((v, (t, p)) for v, t, p in g.vertices()) == \
            dict((v, (t, p)) for v, t, p in g2.vertices())
        assert sorted(g.edges()) == sorted(g2.edges())

    def test_degree_summary_recount(self):
        g = random_lineage_dag(5)
        d = degree_summary(g)
        for vtype in g.schema.vertex_types:
            vs = g.vertices_of_type(vtype)
            assert d.n_of(vtype) == len(vs)
            assert d.deg(vtype, 100) == max((g.out_degree(v) for v in vs), default=0)
