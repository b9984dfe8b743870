"""HTTP API: query/ask/plan/rerun/tables endpoints and error mapping."""

import pytest
from fastapi.testclient import TestClient

from flock.service import PlanStore, create_app


@pytest.fixture()
def client(make_session):
    session = make_session(load_fixtures=("bank_reviews",))
    session.execute_sql("CREATE MODEL('m', 'mock-chat', 'mock');")
    session.execute_sql("CREATE PROMPT('sentiment', 'is this review positive?');")
    return TestClient(create_app(session))


def post_query(client, sql, **extra):
    return client.post("/api/query", json={"sql": sql, **extra})


def test_query_returns_rows_and_plan_id(client):
    r = post_query(client, "SELECT id, bank FROM bank_reviews ORDER BY id LIMIT 3;")
    assert r.status_code == 200
    body = r.json()
    assert body["row_count"] == 3
    assert [c["name"] for c in body["columns"]] == ["id", "bank"]
    assert body["plan_id"].startswith("plan-")
    assert body["wall_time"] >= 0


def test_ddl_statement_has_no_plan(client):
    r = post_query(client, "CREATE PROMPT('p2', 'text');")
    assert r.status_code == 200
    assert r.json()["plan_id"] is None
    assert "p2" in r.json()["message"]


def test_broken_sql_maps_to_400_with_position(client):
    r = post_query(client, "SELECT * FROM bank_reviews WHERE (")
    assert r.status_code == 400
    err = r.json()["error"]
    assert err["code"] == "syntax_error"
    assert err["line"] == 1 and err["column"] > 0


def test_unknown_resource_maps_to_404(client):
    r = post_query(
        client,
        "SELECT llm_complete({'model_name': 'ghost'}, {'prompt': 'x'},"
        " {'text': review}) FROM bank_reviews;",
    )
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "unknown_resource"


def test_empty_sql_rejected(client):
    assert post_query(client, "   ").status_code == 400


def test_plan_export_includes_llm_details(client):
    sql = (
        "SELECT id FROM bank_reviews WHERE llm_filter({'model_name': 'm'},"
        " {'prompt_name': 'sentiment'}, {'text': review});"
    )
    plan_id = post_query(client, sql).json()["plan_id"]
    r = client.get(f"/api/plan/{plan_id}")
    assert r.status_code == 200
    export = r.json()

    def find_llm(node):
        if "llm_details" in node:
            return node
        for child in node.get("children", []):
            got = find_llm(child)
            if got:
                return got

    llm_node = find_llm(export["nodes"])
    assert llm_node["kind"] == "LlmScalar"
    details = llm_node["llm_details"]
    assert details["serialization_format"] == "XML"
    assert details["batch_mode"] == "Auto"
    assert "<tuple" in details["meta_prompt_full"]
    assert details["provider_calls"] >= 1
    assert export["query_wall_time"] >= 0


def test_plan_404(client):
    assert client.get("/api/plan/plan-999").status_code == 404


def test_manual_batch_override_changes_batches(client):
    sql = (
        "SELECT llm_complete({'model_name': 'm'}, {'prompt_name': 'sentiment'},"
        " {'text': review}) FROM bank_reviews;"
    )
    r = post_query(client, sql, overrides={"batch_mode": "Manual(3)"})
    plan = client.get(f"/api/plan/{r.json()['plan_id']}").json()

    def find_llm(node):
        if "llm_details" in node:
            return node
        for child in node.get("children", []):
            got = find_llm(child)
            if got:
                return got

    details = find_llm(plan["nodes"])["llm_details"]
    assert details["batch_mode"] == "Manual(3)"
    assert details["effective_batch_sizes"] == [3, 3, 3, 1]


def test_serialization_override(client):
    sql = (
        "SELECT llm_complete({'model_name': 'm'}, {'prompt_name': 'sentiment'},"
        " {'text': review}) FROM bank_reviews LIMIT 1;"
    )
    r = post_query(client, sql, overrides={"serialization_format": "json"})
    plan = client.get(f"/api/plan/{r.json()['plan_id']}").json()

    def find_llm(node):
        if "llm_details" in node:
            return node
        for child in node.get("children", []):
            got = find_llm(child)
            if got:
                return got

    assert find_llm(plan["nodes"])["llm_details"]["serialization_format"] == "JSON"


def test_bad_override_template_rejected(client):
    r = post_query(
        client, "SELECT id FROM bank_reviews;",
        overrides={"prompt_template": "no placeholders here"},
    )
    assert r.status_code == 400


def test_rerun_reports_latency_comparison(client):
    sql = (
        "SELECT id FROM bank_reviews WHERE llm_filter({'model_name': 'm'},"
        " {'prompt_name': 'sentiment'}, {'text': review});"
    )
    first = post_query(client, sql).json()
    r = client.post(f"/api/plan/{first['plan_id']}/rerun", json={})
    assert r.status_code == 200
    body = r.json()
    cmp_ = body["latency_comparison"]
    assert cmp_["before"]["provider_calls"] >= 1
    assert cmp_["after"]["provider_calls"] == 0  # cached rerun
    assert body["rows"] == first["rows"]
    assert body["plan_id"] != first["plan_id"]


def test_rerun_missing_plan_404(client):
    assert client.post("/api/plan/plan-42/rerun", json={}).status_code == 404


def test_ask_endpoint_returns_generated_sql(client):
    r = client.post("/api/ask", json={"question": "what's in bank_reviews?"})
    assert r.status_code == 200
    body = r.json()
    assert body["generated_sql"].startswith("SELECT")
    assert body["row_count"] >= 1
    assert body["plan_id"].startswith("plan-")


def test_ask_empty_question_400(client):
    assert client.post("/api/ask", json={"question": "  "}).status_code == 400


def test_ask_generation_failure_422(make_session):
    session = make_session(load_fixtures=("bank_reviews",))
    session.mock.scripted = ["garbage", "more garbage"]
    client = TestClient(create_app(session))
    r = client.post("/api/ask", json={"question": "anything"})
    assert r.status_code == 422


def test_tables_and_preview(client):
    r = client.get("/api/tables")
    tables = {t["name"]: t for t in r.json()["tables"]}
    assert tables["bank_reviews"]["row_count"] == 10
    r = client.get("/api/tables/bank_reviews/preview", params={"limit": 2})
    assert len(r.json()["rows"]) == 2
    assert r.json()["row_count"] == 10
    assert client.get("/api/tables/nope/preview").status_code == 404


def test_plan_store_lru_cap():
    store = PlanStore(cap=3)
    ids = [store.put({"n": i}) for i in range(5)]
    assert store.get(ids[0]) is None
    assert store.get(ids[1]) is None
    assert store.get(ids[4]) == {"n": 4}
    assert store.get(ids[2]) == {"n": 2}
