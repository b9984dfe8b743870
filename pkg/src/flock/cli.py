"""Command line entry points: interactive REPL, script runner, HTTP
server, and cache maintenance."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import FlockError, ProviderError
from .session import EngineSession, ExecutionResult


def _print_result(execution: ExecutionResult) -> None:
    if execution.generated_sql:
        click.echo(f"-- generated SQL:\n{execution.generated_sql}")
    if not execution.is_query:
        click.echo(execution.message)
        return
    result = execution.result
    names = [n for n, _ in result.columns]
    click.echo("\t".join(names))
    for row in result.rows:
        click.echo("\t".join("NULL" if v is None else str(v) for v in row))
    click.echo(f"({len(result.rows)} rows, {execution.wall_time:.3f}s)")


def _split_statements(text: str) -> list[str]:
    """Split on semicolons outside single-quoted strings and comments."""
    parts: list[str] = []
    buf: list[str] = []
    in_string = False
    in_comment = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_comment:
            buf.append(ch)
            if ch == "\n":
                in_comment = False
        elif in_string:
            buf.append(ch)
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    buf.append("'")
                    i += 1
                else:
                    in_string = False
        elif ch == "'":
            in_string = True
            buf.append(ch)
        elif ch == "-" and text[i : i + 2] == "--":
            in_comment = True
            buf.append(ch)
        elif ch == ";":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    parts.append("".join(buf))
    return [p.strip() for p in parts if p.strip()]


def _make_session(workspace: str, provider: str, data: tuple[str, ...]) -> EngineSession:
    session = EngineSession(workspace=workspace, provider=provider)
    for entry in data:
        path = Path(entry)
        files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
        for f in files:
            table = session.load_table(f)
            click.echo(f"loaded table '{table.name}' ({table.row_count} rows)")
    return session


@click.group()
def main() -> None:
    """Semantic SQL engine with LLM-backed functions."""


_workspace_option = click.option(
    "--workspace", default=".", show_default=True,
    help="Directory holding .flock state (catalog, cache).",
)
_provider_option = click.option(
    "--provider", default="mock", show_default=True,
    help="Provider routing: a provider id to force, or 'live' to use each "
         "model's configured provider.",
)
_data_option = click.option(
    "--data", multiple=True,
    help="CSV file or directory of CSVs to load as tables (repeatable).",
)


@main.command()
@_workspace_option
@_provider_option
@_data_option
def repl(workspace: str, provider: str, data: tuple[str, ...]) -> None:
    """Interactive SQL prompt. Statements end with ';'."""
    session = _make_session(workspace, provider, data)
    click.echo("flock repl. End statements with ';', exit with \\q.")
    buf: list[str] = []
    while True:
        prompt = "flock> " if not buf else "  ...> "
        try:
            line = input(prompt)
        except EOFError:
            break
        if line.strip() in ("\\q", "exit", "quit") and not buf:
            break
        buf.append(line)
        text = "\n".join(buf)
        if not text.rstrip().endswith(";"):
            continue
        buf = []
        for sql in _split_statements(text):
            try:
                _print_result(session.execute_sql(sql))
            except (FlockError, ProviderError) as e:
                click.echo(f"error: {e}", err=True)


@main.command()
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@_workspace_option
@_provider_option
@_data_option
def run(script: str, workspace: str, provider: str, data: tuple[str, ...]) -> None:
    """Execute every statement in a .sql file."""
    session = _make_session(workspace, provider, data)
    text = Path(script).read_text(encoding="utf-8")
    for sql in _split_statements(text):
        try:
            _print_result(session.execute_sql(sql))
        except (FlockError, ProviderError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@_workspace_option
@_provider_option
@_data_option
@click.option("--static", default=None, help="Directory of built UI assets.")
def serve(
    port: int, host: str, workspace: str, provider: str,
    data: tuple[str, ...], static: str,
) -> None:
    """Start the HTTP API (and UI, when assets are available)."""
    import uvicorn

    from .service import create_app

    session = _make_session(workspace, provider, data)
    app = create_app(session, static_dir=static)
    uvicorn.run(app, host=host, port=port)


@main.group()
def cache() -> None:
    """Prediction cache maintenance."""


@cache.command("clear")
@_workspace_option
def cache_clear(workspace: str) -> None:
    """Delete all cached predictions for the workspace."""
    from .runtime import PredictionCache

    store = PredictionCache(Path(workspace) / ".flock" / "cache")
    removed = store.clear()
    click.echo(f"cleared {removed} cached entries")


if __name__ == "__main__":
    main()
