"""Command-line entry points: ingest, search, grammar tools, serve, replay."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, load_server_config
from .embedding import HashedNgramEmbedder, HttpEmbeddingProvider
from .grammar import (
    GrammarError,
    grammar_from_tokens,
    matches,
    parse_gbnf,
    print_gbnf,
)
from .ingest import corpus_stats, ingest_corpus
from .pipeline import replay_transcript
from .transcripts import read_transcript
from .vindex import CorpusIndex, RetrievalConfig


@click.group()
@click.version_option(__version__)
def main():
    """Ocean exhibit service tools."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--dim", default=384, show_default=True, help="Embedding dimension.")
@click.option("--provider", default="mock", type=click.Choice(["mock", "http"]), show_default=True)
@click.option("--base-url", default=None, help="Embeddings endpoint base URL (http provider).")
@click.option("--seed", default=0, show_default=True, help="Seed for the mock provider.")
def ingest(corpus, out, dim, provider, base_url, seed):
    """Chunk, embed, and index a corpus directory of text files."""
    if provider == "mock":
        embedder = HashedNgramEmbedder(dimension=dim, seed=seed)
        embedder_config = {"provider": "mock", "dimension": dim, "seed": seed, "ngram": 3}
    else:
        if not base_url:
            raise click.UsageError("--base-url is required with --provider http")
        embedder = HttpEmbeddingProvider(base_url, dimension=dim)
        embedder_config = {"provider": "http", "dimension": dim, "base_url": base_url}
    index = ingest_corpus(corpus, embedder, embedder_config=embedder_config)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    index.save(out)
    click.echo(json.dumps({"out": str(out), **corpus_stats(index)}))


@main.command()
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True)
@click.option("--k", default=2, show_default=True)
@click.option("--exact", is_flag=True, help="Use exact search instead of the ANN graph.")
def search(index_path, query, k, exact):
    """Retrieve the k nearest distinct paragraphs for a query."""
    index = CorpusIndex.load(index_path)
    settings = index.embedder_config
    if settings.get("provider") == "http":
        provider = HttpEmbeddingProvider(settings["base_url"], dimension=index.dimension)
    else:
        provider = HashedNgramEmbedder(
            dimension=index.dimension,
            seed=settings.get("seed", 0),
            ngram=settings.get("ngram", 3),
        )
    config = RetrievalConfig(k=k, ann_enabled=not exact, dimension=index.dimension)
    for hit in index.retrieve(query, provider, config):
        click.echo(json.dumps(hit.to_dict(), ensure_ascii=False))


@main.group()
def grammar():
    """Inspect and build token grammars."""


@grammar.command()
@click.argument("grammar_file", type=click.Path(exists=True, dir_okay=False))
def check(grammar_file):
    """Parse a grammar file; exit 0 when valid."""
    try:
        parsed = parse_gbnf(Path(grammar_file).read_text(encoding="utf-8"))
    except GrammarError as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(f"ok: {len(parsed.rules)} rule(s), root {parsed.root!r}")


@grammar.command()
@click.argument("grammar_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("candidate")
def match(grammar_file, candidate):
    """Exit 0 when CANDIDATE is in the grammar's language, 1 otherwise."""
    try:
        parsed = parse_gbnf(Path(grammar_file).read_text(encoding="utf-8"))
    except GrammarError as exc:
        click.echo(f"invalid grammar: {exc}", err=True)
        sys.exit(2)
    if matches(parsed, candidate):
        click.echo("match")
    else:
        click.echo("no match")
        sys.exit(1)


@grammar.command("from-tokens")
@click.argument("tokens", nargs=-1, required=True)
def from_tokens(tokens):
    """Print a grammar accepting exactly the given tokens."""
    try:
        click.echo(print_gbnf(grammar_from_tokens(list(tokens))), nl=False)
    except ValueError as exc:
        raise click.UsageError(str(exc))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def serve(config_path):
    """Run the gateway until interrupted."""
    import uvicorn

    from .server import build_service, create_app

    try:
        config = load_server_config(config_path)
        service = build_service(config)
    except ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    app = create_app(service, config=config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


@main.command()
@click.option("--transcript", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def replay(transcript, config_path):
    """Re-run a recorded transcript against mock backends and diff the results."""
    from .server import build_service

    try:
        config = load_server_config(config_path)
        service = build_service(config)
    except ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    records = read_transcript(transcript)
    failures = 0
    for i, (record, _, differences) in enumerate(replay_transcript(service, records)):
        if differences:
            failures += 1
            click.echo(f"record {i} ({record['query']!r}): DIFF")
            for line in differences:
                click.echo(f"  {line}")
        else:
            click.echo(f"record {i} ({record['query']!r}): ok")
    click.echo(f"{len(records) - failures}/{len(records)} records identical")
    if failures:
        sys.exit(1)
