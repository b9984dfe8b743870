"""Versioned MODEL/PROMPT resource store: creation, updates, scoping,
shadowing, and persistence."""

import json
import threading

import pytest

from flock.catalog import (
    CatalogStore, ModelResource, PromptResource, ResourceKind, Scope,
    default_global_path,
)
from flock.errors import (
    DuplicateResource, InvalidDefinition, NotFound, VersionNotFound,
)

MODEL_DEF = {
    "name": "m",
    "model_id": "gpt-4o-mini",
    "provider_id": "openai",
    "context_window_tokens": 128000,
    "max_output_tokens": 16384,
}


def test_create_starts_at_version_one(catalog):
    record = catalog.create_resource(ResourceKind.MODEL, Scope.LOCAL, MODEL_DEF)
    assert record.version == 1
    assert record.scope == Scope.LOCAL
    assert isinstance(record, ModelResource)


def test_duplicate_create_rejected(catalog):
    catalog.create_resource(ResourceKind.MODEL, Scope.LOCAL, MODEL_DEF)
    with pytest.raises(DuplicateResource):
        catalog.create_resource(ResourceKind.MODEL, Scope.LOCAL, MODEL_DEF)


def test_same_name_allowed_across_kinds_and_scopes(catalog):
    catalog.create_resource(ResourceKind.MODEL, Scope.LOCAL, MODEL_DEF)
    catalog.create_resource(ResourceKind.MODEL, Scope.GLOBAL, MODEL_DEF)
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "m", "text": "t"})


def test_update_appends_new_version(catalog):
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "p", "text": "v1 text"})
    updated = catalog.update_resource(ResourceKind.PROMPT, "p", {"name": "p", "text": "v2 text"})
    assert updated.version == 2
    latest = catalog.resolve_resource(ResourceKind.PROMPT, "p")
    assert latest.version == 2 and latest.text == "v2 text"
    original = catalog.resolve_resource(ResourceKind.PROMPT, "p", version=1)
    assert original.text == "v1 text"


def test_version_sequence_gap_free_after_five_updates(catalog):
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "p", "text": "t0"})
    for i in range(5):
        catalog.update_resource(ResourceKind.PROMPT, "p", {"name": "p", "text": f"t{i + 1}"})
    versions = sorted(
        r.version for r in catalog.list_resources(ResourceKind.PROMPT) if r.name == "p"
    )
    assert versions == [1, 2, 3, 4, 5, 6]


def test_update_missing_raises(catalog):
    with pytest.raises(NotFound):
        catalog.update_resource(ResourceKind.PROMPT, "ghost", {"name": "ghost", "text": ""})


def test_resolve_missing_version_raises(catalog):
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "p", "text": "t"})
    with pytest.raises(VersionNotFound):
        catalog.resolve_resource(ResourceKind.PROMPT, "p", version=7)
    with pytest.raises(NotFound):
        catalog.resolve_resource(ResourceKind.PROMPT, "ghost")


def test_local_shadows_global(catalog):
    catalog.create_resource(ResourceKind.PROMPT, Scope.GLOBAL, {"name": "p", "text": "global"})
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "p", "text": "local"})
    assert catalog.resolve_resource(ResourceKind.PROMPT, "p").text == "local"
    assert catalog.resolve_resource(ResourceKind.PROMPT, "p", scope=Scope.GLOBAL).text == "global"


def test_delete_removes_all_versions(catalog):
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "p", "text": "a"})
    catalog.update_resource(ResourceKind.PROMPT, "p", {"name": "p", "text": "b"})
    assert catalog.delete_resource(ResourceKind.PROMPT, "p", Scope.LOCAL) == 2
    with pytest.raises(NotFound):
        catalog.resolve_resource(ResourceKind.PROMPT, "p")
    assert catalog.delete_resource(ResourceKind.PROMPT, "p", Scope.LOCAL) == 0


def test_persistence_across_store_instances(tmp_path):
    local, glob = tmp_path / "local.json", tmp_path / "global.json"
    store = CatalogStore(local, global_path=glob)
    store.create_resource(ResourceKind.MODEL, Scope.LOCAL, MODEL_DEF)
    store.create_resource(ResourceKind.PROMPT, Scope.GLOBAL, {"name": "p", "text": "t"})

    reopened = CatalogStore(local, global_path=glob)
    assert reopened.resolve_resource(ResourceKind.MODEL, "m").model_id == "gpt-4o-mini"
    assert reopened.resolve_resource(ResourceKind.PROMPT, "p").scope == Scope.GLOBAL
    # files are plain JSON arrays
    assert isinstance(json.loads(local.read_text()), list)


def test_invalid_definitions_rejected(catalog):
    with pytest.raises(InvalidDefinition):
        catalog.create_resource(ResourceKind.MODEL, Scope.LOCAL, {**MODEL_DEF, "name": ""})
    with pytest.raises(InvalidDefinition):
        catalog.create_resource(
            ResourceKind.MODEL, Scope.LOCAL, {**MODEL_DEF, "provider_id": "nonsense"}
        )
    with pytest.raises(InvalidDefinition):
        catalog.create_resource(
            ResourceKind.MODEL, Scope.LOCAL,
            {**MODEL_DEF, "context_window_tokens": 10, "max_output_tokens": 20},
        )


def test_global_path_env_override(monkeypatch, tmp_path):
    monkeypatch.setenv("FLOCK_GLOBAL_CATALOG", str(tmp_path / "custom.json"))
    assert default_global_path() == tmp_path / "custom.json"


def test_concurrent_updates_produce_distinct_versions(catalog):
    catalog.create_resource(ResourceKind.PROMPT, Scope.LOCAL, {"name": "p", "text": "t"})
    errors = []

    def bump(i):
        try:
            catalog.update_resource(ResourceKind.PROMPT, "p", {"name": "p", "text": f"t{i}"})
        except Exception as e:  # pragma: no cover - failure diagnostics
            errors.append(e)

    threads = [threading.Thread(target=bump, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    versions = sorted(
        r.version for r in catalog.list_resources(ResourceKind.PROMPT) if r.name == "p"
    )
    assert versions == list(range(1, 10))
