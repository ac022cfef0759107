import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from crosslake.artifacts import run_full_pipeline
from crosslake.cli import main as cli_main
from crosslake.config import EngineConfig
from crosslake.errors import IndexMissing, UnknownDE
from crosslake.evalkit import SyntheticLakeSpec, generate_synthetic_lake
from crosslake.queryservice import DRS, load_engine, make_drs
from crosslake.service import create_app


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("qs")
    spec = SyntheticLakeSpec(
        seed=21, n_base_tables=8, rows_per_table=60, n_docs=40,
        n_fk_tables=3, unionable_families=2,
    )
    lake = generate_synthetic_lake(spec, tmp / "lake")
    # blank one document's metadata so ad-hoc text queries are byte-equivalent
    manifest_path = tmp / "lake" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["docs/doc_0000.txt"] = {"title": "", "source": ""}
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1))

    cfg = EngineConfig(seed=6, sample_fraction=0.5, batch_fraction=0.3, max_epochs=60)
    wd = run_full_pipeline(tmp / "lake", tmp / "work", cfg)
    engine = load_engine(wd.root)
    return tmp, lake, cfg, wd, engine


class TestContentSearch:
    def test_seeded_keyword_hits_docs(self, built):
        tmp, lake, cfg, wd, engine = built
        text = (tmp / "lake" / "docs" / "doc_0001.txt").read_text()
        word = text.split()[0].strip(".").lower()
        drs = engine.content_search(word, mode="Text", k=10)
        assert drs.items
        for de, score in drs.items:
            assert engine.describe(de)["kind"] == "document"

    def test_absent_term_empty(self, built):
        *_, engine = built
        assert engine.content_search("zzzunseenzz", mode="Text", k=5).items == []

    def test_both_merges_separate_queries(self, built):
        tmp, lake, cfg, wd, engine = built
        text = (tmp / "lake" / "docs" / "doc_0002.txt").read_text()
        word = text.split()[1].strip(".").lower()
        k = 12
        docs = engine.content_search(word, "Text", k)
        cols = engine.content_search(word, "Tabular", k)
        both = engine.content_search(word, "Both", k)
        merged = {de: s for de, s in docs.items}
        for de, s in cols.items:
            merged[de] = max(merged.get(de, 0.0), s)
        expected = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        assert both.items == [(de, pytest.approx(s)) for de, s in expected]
        assert len({de for de, _ in both.items}) == len(both.items)

    def test_mode_scoping(self, built):
        tmp, lake, cfg, wd, engine = built
        text = (tmp / "lake" / "docs" / "doc_0003.txt").read_text()
        word = text.split()[0].strip(".").lower()
        cols = engine.content_search(word, "Tabular", 10)
        for de, _ in cols.items:
            assert engine.describe(de)["kind"] == "column"


class TestCatalogSearch:
    def test_table_name_matches_columns(self, built):
        tmp, lake, cfg, wd, engine = built
        topic = sorted(n for n in lake.table_ids if n.endswith("_catalog"))[0].split("_")[0]
        drs = engine.catalog_search(topic, k=10)
        assert drs.items
        kinds = {engine.describe(de)["kind"] for de, _ in drs.items}
        assert "column" in kinds

    def test_doc_title_match(self, built):
        tmp, lake, cfg, wd, engine = built
        drs = engine.catalog_search("notes", k=30)
        kinds = {engine.describe(de)["kind"] for de, _ in drs.items}
        assert "document" in kinds


class TestCrossModal:
    def test_planted_doc_first(self, built):
        tmp, lake, cfg, wd, engine = built
        hits = 0
        doc_items = sorted(lake.doc_ids.items())[:15]
        for stem_name, doc_id in doc_items:
            drs = engine.crossModal_search(doc_id, 3)
            truth = lake.truths["DocToTable"].entries[doc_id]
            hits += drs.items and drs.items[0][0] in truth
        assert hits / len(doc_items) >= 0.8

    def test_raw_text_equals_stored_doc(self, built):
        tmp, lake, cfg, wd, engine = built
        doc_id = lake.doc_ids["doc_0000"]
        text = (tmp / "lake" / "docs" / "doc_0000.txt").read_text()
        by_id = engine.crossModal_search(doc_id, 5)
        by_text = engine.crossModal_search(text, 5)
        assert by_id.items == by_text.items

    def test_topn_respected(self, built):
        tmp, lake, cfg, wd, engine = built
        doc_id = sorted(lake.doc_ids.values())[0]
        assert len(engine.crossModal_search(doc_id, 3).items) <= 3

    def test_unknown_doc_id(self, built):
        *_, engine = built
        with pytest.raises(UnknownDE):
            engine.crossModal_search("0123456789abcdef0123456789abcdef", 3)


class TestPkfkAndUnionable:
    def test_fact_table_finds_dimension(self, built):
        tmp, lake, cfg, wd, engine = built
        events = sorted(n for n in lake.table_ids if n.endswith("_events"))
        for name in events:
            topic = name.split("_")[0]
            drs = engine.pkfk(lake.table_ids[name], 3)
            assert lake.table_ids[f"{topic}_catalog"] in drs.ids()

    def test_isolated_table_empty(self, built):
        tmp, lake, cfg, wd, engine = built
        # a base catalog with no fk tables and no projections
        bases = sorted(n for n in lake.table_ids if n.endswith("_catalog"))
        linked = {n.split("_")[0] for n in lake.table_ids if not n.endswith("_catalog")}
        isolated = [n for n in bases if n.split("_")[0] not in linked]
        assert isolated
        drs = engine.pkfk(lake.table_ids[isolated[0]], 3)
        assert drs.items == []

    def test_unionable_materialized_vs_recomputed(self, built):
        tmp, lake, cfg, wd, engine = built
        proj = sorted(n for n in lake.table_ids if "_proj" in n)[0]
        topic = proj.split("_")[0]
        base_id = lake.table_ids[f"{topic}_catalog"]
        materialized = engine.unionable(base_id, 3)
        from crosslake.ekg import unionable_tables
        recomputed = unionable_tables(base_id, 3, engine.scorer, engine.store, cfg)
        rec_ids = [e.dst for e in recomputed if e.weight >= cfg.edge_epsilon]
        assert materialized.ids() == rec_ids[:3]

    def test_unknown_table(self, built):
        *_, engine = built
        with pytest.raises(UnknownDE):
            engine.unionable("0123456789abcdef0123456789abcdef", 3)


class TestNeighbors:
    def test_relation_filter_and_k(self, built):
        tmp, lake, cfg, wd, engine = built
        pkfk_edges = [e for e in engine.graph.edges if e.relation == "PkFk"]
        assert pkfk_edges
        src = pkfk_edges[0].src
        all_rel = engine.neighbors(src, None, 10)
        only_pkfk = engine.neighbors(src, ["PkFk"], 10)
        assert set(only_pkfk.ids()) <= set(all_rel.ids()) or only_pkfk.items
        top1 = engine.neighbors(src, None, 1)
        assert len(top1.items) == 1
        assert top1.items[0] == all_rel.items[0]


class TestDrsCombine:
    def test_idempotent_on_ids(self, built):
        *_, engine = built
        a = make_drs([("x", 2.0), ("y", 1.0)], "content_search", {"value": "q"})
        out = engine.drs_combine(a, a, "Intersect")
        assert out.ids() == ["x", "y"]

    def test_disjoint_intersection_empty(self, built):
        *_, engine = built
        a = make_drs([("x", 1.0)], "content_search", {"value": "a"})
        b = make_drs([("y", 1.0)], "content_search", {"value": "b"})
        assert engine.drs_combine(a, b, "Intersect").items == []

    def test_hand_normalization(self, built):
        *_, engine = built
        a = make_drs([("x", 2.0)], "content_search", {"value": "a"})
        b = make_drs([("x", 0.5)], "content_search", {"value": "b"})
        out = engine.drs_combine(a, b, "Union")
        assert out.items == [("x", 2.0)]   # both normalize to 1.0, summed

    def test_provenance_records_both_parents(self, built):
        *_, engine = built
        a = make_drs([("x", 1.0)], "content_search", {"value": "a"})
        b = make_drs([("y", 1.0)], "content_search", {"value": "b"})
        out = engine.drs_combine(a, b, "Union")
        rec = out.provenance[-1]
        assert set(rec["parents"]) == {a.drs_id, b.drs_id}


class TestProvenanceReplay:
    def test_simple_chain(self, built):
        tmp, lake, cfg, wd, engine = built
        drs = engine.content_search("notes", "Text", 5)
        replayed = engine.replay(drs.provenance)
        assert replayed.items == drs.items

    def test_combined_chain(self, built):
        tmp, lake, cfg, wd, engine = built
        a = engine.content_search("notes", "Text", 5)
        doc_id = sorted(lake.doc_ids.values())[0]
        b = engine.crossModal_search(doc_id, 5)
        combined = engine.drs_combine(a, b, "Union")
        replayed = engine.replay(combined.provenance)
        assert replayed.items == combined.items


@pytest.fixture(scope="module")
def client(built):
    *_, wd, engine = built[:5][3], built[4]
    app = create_app(engine=built[4])
    return TestClient(app)


class TestService:
    def test_health(self, built, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert "config_fingerprint" in body

    def test_lake_summary(self, built, client):
        resp = client.get("/lake/summary")
        assert resp.status_code == 200
        body = resp.json()
        assert body["tables"] > 0 and body["documents"] > 0

    def test_query_roundtrips_cli(self, built, client, capsys):
        tmp, lake, cfg, wd, engine = built
        params = {"value": "notes", "mode": "Text", "k": 5}
        resp = client.post("/query/content_search", json=params)
        assert resp.status_code == 200
        http_payload = resp.json()

        rc = cli_main([
            "query", "--workdir", str(wd.root),
            "--op", "content_search", "--params", json.dumps(params),
        ])
        assert rc == 0
        cli_payload = json.loads(capsys.readouterr().out)
        assert cli_payload == http_payload

    def test_unknown_op_400_with_catalog(self, client):
        resp = client.post("/query/not_an_op", json={})
        assert resp.status_code == 400
        assert "ops" in resp.json()["error"]

    def test_unknown_de_404(self, built, client):
        resp = client.post("/query/pkfk",
                           json={"value": "0123456789abcdef0123456789abcdef"})
        assert resp.status_code == 404

    def test_malformed_request_400(self, client):
        resp = client.post(
            "/query/content_search",
            content=b"not json",
            headers={"content-type": "application/json"},
        )
        assert resp.status_code == 400

    def test_de_detail(self, built, client):
        tmp, lake, cfg, wd, engine = built
        table_id = sorted(lake.table_ids.values())[0]
        resp = client.get(f"/de/{table_id}")
        assert resp.status_code == 200
        body = resp.json()
        assert body["kind"] == "table" and body["schema"]
        col_id = body["schema"][0]["id"]
        col = client.get(f"/de/{col_id}").json()
        assert col["kind"] == "column" and "sample_values" in col
        assert client.get("/de/none_such").status_code == 404

    def test_neighborhood(self, built, client):
        tmp, lake, cfg, wd, engine = built
        pkfk_edges = [e for e in engine.graph.edges if e.relation == "PkFk"]
        src = pkfk_edges[0].src
        resp = client.get("/graph/neighborhood", params={"id": src, "depth": 1})
        assert resp.status_code == 200
        body = resp.json()
        assert body["center"] == src
        assert any(e["relation"] == "PkFk" for e in body["edges"])
        # depth 0 -> single node
        solo = client.get("/graph/neighborhood", params={"id": src, "depth": 0}).json()
        assert len(solo["nodes"]) == 1 and solo["edges"] == []

    def test_replay_endpoint(self, built, client):
        tmp, lake, cfg, wd, engine = built
        drs = engine.content_search("notes", "Text", 5)
        resp = client.post("/replay", json={"provenance": drs.provenance})
        assert resp.status_code == 200
        items = [(i["id"], i["score"]) for i in resp.json()["items"]]
        assert items == drs.items

    def test_503_when_artifacts_missing(self, tmp_path):
        app = create_app(workdir=tmp_path / "empty")
        with TestClient(app) as c:
            assert c.get("/health").status_code == 503
            assert c.post("/query/content_search", json={"value": "x"}).status_code == 503


class TestReadOnly:
    def test_queries_do_not_mutate_artifacts(self, built):
        import hashlib

        tmp, lake, cfg, wd, engine = built

        def digest():
            h = hashlib.sha256()
            for p in sorted(wd.root.rglob("*")):
                if p.is_file():
                    h.update(p.read_bytes())
            return h.hexdigest()

        before = digest()
        engine.content_search("notes", "Text", 3)
        doc_id = sorted(lake.doc_ids.values())[0]
        engine.crossModal_search(doc_id, 3)
        table_id = sorted(lake.table_ids.values())[0]
        engine.unionable(table_id, 3)
        assert digest() == before


class TestBreakdowns:
    def test_pkfk_items_carry_edge_breakdowns(self, built, client):
        tmp, lake, cfg, wd, engine = built
        events = sorted(n for n in lake.table_ids if n.endswith("_events"))[0]
        resp = client.post("/query/pkfk", json={"value": lake.table_ids[events], "topn": 3})
        items = resp.json()["items"]
        assert items
        bd = items[0]["breakdown"]
        assert set(bd) >= {"containment", "pk_uniqueness", "name"}
        assert items[0]["score"] == pytest.approx(
            bd["containment"] * bd["pk_uniqueness"] * bd["name"]
        )

    def test_content_items_carry_signal(self, built, client):
        resp = client.post("/query/content_search",
                           json={"value": "notes", "mode": "Text", "k": 3})
        for item in resp.json()["items"]:
            assert item["breakdown"] == {"BM25Content": item["score"]}
