"""Versioned MODEL and PROMPT resources with GLOBAL/LOCAL scope.

Resources live in two JSON stores: a per-workspace local file
(``.flock/catalog.json``) and a machine-wide global file (overridable via
``FLOCK_GLOBAL_CATALOG``). Every modification appends a new version; old
versions stay resolvable. LOCAL shadows GLOBAL on name collision.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .errors import DuplicateResource, InvalidDefinition, NotFound, VersionNotFound

DEFAULT_KNOWN_PROVIDERS = frozenset({"openai", "azure", "ollama", "mock"})


class ResourceKind(str, Enum):
    MODEL = "MODEL"
    PROMPT = "PROMPT"


class Scope(str, Enum):
    GLOBAL = "GLOBAL"
    LOCAL = "LOCAL"  # default when unspecified


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class ModelResource:
    name: str
    provider_id: str
    model_id: str
    context_window_tokens: int
    max_output_tokens: int
    params: dict = field(default_factory=dict)
    version: int = 1
    scope: Scope = Scope.LOCAL
    created_at: str = field(default_factory=_utcnow)

    def validate(self) -> None:
        if self.version < 1:
            raise InvalidDefinition("version must be >= 1")
        if not (self.context_window_tokens > self.max_output_tokens > 0):
            raise InvalidDefinition(
                "context_window_tokens must exceed max_output_tokens, both positive"
            )


@dataclass(frozen=True)
class PromptResource:
    name: str
    text: str
    version: int = 1
    scope: Scope = Scope.LOCAL
    created_at: str = field(default_factory=_utcnow)

    def validate(self) -> None:
        if self.version < 1:
            raise InvalidDefinition("version must be >= 1")
        if not self.text:
            raise InvalidDefinition("prompt text must be non-empty")


ResourceRecord = Union[ModelResource, PromptResource]


def _kind_of(record: ResourceRecord) -> ResourceKind:
    return ResourceKind.MODEL if isinstance(record, ModelResource) else ResourceKind.PROMPT


def _record_to_dict(record: ResourceRecord) -> dict:
    d = asdict(record)
    d["kind"] = _kind_of(record).value
    d["scope"] = record.scope.value
    return d


def _record_from_dict(d: dict) -> ResourceRecord:
    d = dict(d)
    kind = d.pop("kind")
    d["scope"] = Scope(d["scope"])
    if kind == ResourceKind.MODEL.value:
        return ModelResource(**d)
    return PromptResource(**d)


def default_global_path() -> Path:
    env = os.environ.get("FLOCK_GLOBAL_CATALOG")
    if env:
        return Path(env)
    base = os.environ.get("XDG_DATA_HOME") or os.path.join(Path.home(), ".local", "share")
    return Path(base) / "flock" / "catalog.json"


class CatalogStore:
    """Two-file resource store with a single writer lock.

    Records handed out are frozen dataclasses, safe to share across threads.
    """

    def __init__(
        self,
        local_path: Union[str, Path],
        global_path: Optional[Union[str, Path]] = None,
        known_providers: frozenset = DEFAULT_KNOWN_PROVIDERS,
    ):
        self.local_path = Path(local_path)
        self.global_path = Path(global_path) if global_path else default_global_path()
        self.known_providers = known_providers
        self._lock = threading.Lock()
        self._records: dict[Scope, list[ResourceRecord]] = {
            Scope.LOCAL: self._load(self.local_path),
            Scope.GLOBAL: self._load(self.global_path),
        }

    @staticmethod
    def _load(path: Path) -> list[ResourceRecord]:
        if not path.exists():
            return []
        with open(path, "r", encoding="utf-8") as f:
            return [_record_from_dict(d) for d in json.load(f)]

    def _persist(self, scope: Scope) -> None:
        path = self.local_path if scope == Scope.LOCAL else self.global_path
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump([_record_to_dict(r) for r in self._records[scope]], f, indent=2)

    def _live(self, kind: ResourceKind, name: str, scope: Scope) -> list[ResourceRecord]:
        return [
            r
            for r in self._records[scope]
            if _kind_of(r) == kind and r.name == name
        ]

    # -- operations ----------------------------------------------------

    def create_resource(
        self, kind: ResourceKind, scope: Scope, definition: dict
    ) -> ResourceRecord:
        with self._lock:
            name = definition.get("name", "")
            if not name or not isinstance(name, str):
                raise InvalidDefinition("resource name must be a non-empty identifier")
            if self._live(kind, name, scope):
                raise DuplicateResource(
                    f"{kind.value} '{name}' already exists in scope {scope.value}"
                )
            record = self._build(kind, scope, name, definition, version=1)
            self._records[scope].append(record)
            self._persist(scope)
            return record

    def update_resource(
        self, kind: ResourceKind, name: str, new_definition: dict
    ) -> ResourceRecord:
        with self._lock:
            for scope in (Scope.LOCAL, Scope.GLOBAL):
                existing = self._live(kind, name, scope)
                if existing:
                    next_version = max(r.version for r in existing) + 1
                    record = self._build(
                        kind, scope, name, new_definition, version=next_version
                    )
                    self._records[scope].append(record)
                    self._persist(scope)
                    return record
            raise NotFound(f"{kind.value} '{name}' does not exist")

    def resolve_resource(
        self,
        kind: ResourceKind,
        name: str,
        version: Optional[int] = None,
        scope: Optional[Scope] = None,
    ) -> ResourceRecord:
        scopes = [scope] if scope else [Scope.LOCAL, Scope.GLOBAL]
        for s in scopes:
            records = self._live(kind, name, s)
            if not records:
                continue
            if version is None:
                return max(records, key=lambda r: r.version)
            for r in records:
                if r.version == version:
                    return r
            raise VersionNotFound(
                f"{kind.value} '{name}' has no version {version} in scope {s.value}"
            )
        raise NotFound(f"{kind.value} '{name}' does not exist")

    def delete_resource(self, kind: ResourceKind, name: str, scope: Scope) -> int:
        with self._lock:
            before = self._records[scope]
            keep = [r for r in before if not (_kind_of(r) == kind and r.name == name)]
            removed = len(before) - len(keep)
            if removed:
                self._records[scope] = keep
                self._persist(scope)
            return removed

    def list_resources(self, kind: ResourceKind) -> list[ResourceRecord]:
        out = []
        for scope in (Scope.LOCAL, Scope.GLOBAL):
            out.extend(r for r in self._records[scope] if _kind_of(r) == kind)
        return out

    # -- construction ----------------------------------------------------

    def _build(
        self, kind: ResourceKind, scope: Scope, name: str, definition: dict, version: int
    ) -> ResourceRecord:
        if kind == ResourceKind.MODEL:
            provider_id = definition.get("provider_id", "")
            if provider_id not in self.known_providers:
                raise InvalidDefinition(f"unknown provider '{provider_id}'")
            record: ResourceRecord = ModelResource(
                name=name,
                provider_id=provider_id,
                model_id=definition["model_id"],
                context_window_tokens=int(definition["context_window_tokens"]),
                max_output_tokens=int(definition["max_output_tokens"]),
                params=dict(definition.get("params") or {}),
                version=version,
                scope=scope,
            )
        else:
            record = PromptResource(
                name=name,
                text=definition.get("text", ""),
                version=version,
                scope=scope,
            )
        record.validate()
        return record
