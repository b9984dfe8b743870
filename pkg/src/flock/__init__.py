"""Semantic SQL engine: LLM-backed scalar and aggregate functions inside
a small analytical SQL dialect, with versioned model/prompt resources,
batched and cached inference, hybrid retrieval scoring, and an HTTP
inspection API."""

from .session import EngineSession, ExecutionResult

__all__ = ["EngineSession", "ExecutionResult"]
__version__ = "0.1.0"
