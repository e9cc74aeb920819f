"""Command-line interface.

Subcommands: `index build`, `index inspect`, `generate`, `query`, `eval`,
`serve`. Result output goes to stdout and is deterministic for identical
inputs; progress and timing chatter goes to stderr. Failures exit nonzero
with one machine-parsable line: "error<TAB>CODE<TAB>message".
"""

from __future__ import annotations

import functools
import time
from pathlib import Path

import click

from .backends import embed, parse_backend_spec
from .config import AppConfig, default_config, load_config
from .errors import AttriqError, ConfigError, InvalidRequest
from .evaluation import DEFAULT_PRECISION_KS, GroundTruth, score_index_grid
from .generation import MockProvider
from .imaging import load_image
from .indexing import build_index, load_index, load_manifest, save_index
from .pipeline import DEFAULT_PREAMBLE
from .prompts import GenerationSettings, build_prompt
from .reporting import ReportFormat, emit_report
from .similarity import AggregationMode, DissimilarityMeasure, rank
from .vocab import load_queries, load_vocabulary


def engine_errors(fn):
    """Convert engine failures into the CLI's one-line error contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except AttriqError as exc:
            click.echo(f"error\t{exc.code}\t{exc}", err=True)
            raise SystemExit(2)

    return wrapper


def _config_from_ctx(ctx: click.Context) -> AppConfig:
    return ctx.obj if isinstance(ctx.obj, AppConfig) else default_config()


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="YAML config file supplying defaults for the subcommands.",
)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None):
    """Attribute-conditioned document image retrieval."""
    if config_path is not None:
        try:
            ctx.obj = load_config(config_path)
        except ConfigError as exc:
            click.echo(f"error\t{exc.code}\t{exc}", err=True)
            raise SystemExit(2)
    else:
        ctx.obj = default_config()


@cli.group()
def index():
    """Build and inspect feature indexes."""


@index.command("build")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", default=None, help="Backend id or descriptor path.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--workers", default=1, show_default=True, type=int)
@click.pass_context
@engine_errors
def index_build(ctx, corpus_path: str, backend_spec: str | None, out_path: str, workers: int):
    """Embed every corpus document and write the index file."""
    config = _config_from_ctx(ctx)
    backend = parse_backend_spec(backend_spec or config.backend)
    corpus = load_manifest(corpus_path)
    started = time.perf_counter()
    result = build_index(corpus, backend, workers=workers)
    elapsed = time.perf_counter() - started
    save_index(result.index, out_path)
    for failure in result.failures:
        click.echo(f"failed\t{failure.doc_id}\t{failure.error}", err=True)
    click.echo(f"built index in {elapsed:.2f}s", err=True)
    click.echo(
        "indexed\t{}\t{}\t{}\t{}".format(
            len(result.index),
            backend.descriptor.backend_id,
            backend.descriptor.embedding_dim,
            out_path,
        )
    )


@index.command("inspect")
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False))
@engine_errors
def index_inspect(index_path: str):
    """Print index metadata as stable tab-separated key/value lines."""
    idx = load_index(index_path)
    rows = [
        ("documents", str(len(idx))),
        ("backend", idx.descriptor.backend_id),
        ("architecture", idx.descriptor.architecture_name),
        ("dim", str(idx.descriptor.embedding_dim)),
        ("weights", idx.descriptor.weights_fingerprint),
        ("corpus_fingerprint", idx.corpus_fingerprint),
        ("built", idx.build_timestamp),
    ]
    for key, value in rows:
        click.echo(f"{key}\t{value}")


@cli.command()
@click.option("--query-file", "query_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--provider", "provider_kind", default="mock", show_default=True, type=click.Choice(["mock"]))
@click.option("--n", "num_images", default=1, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--preamble", default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
@engine_errors
def generate(ctx, query_file, vocab_path, provider_kind, num_images, seed, preamble, out_dir):
    """Render candidate query images for each attribute query in a file."""
    config = _config_from_ctx(ctx)
    vocab_path = vocab_path or config.vocabulary_path
    if not vocab_path:
        raise InvalidRequest("a vocabulary is required: pass --vocab or set it in the config")
    vocabulary = load_vocabulary(vocab_path)
    queries = load_queries(query_file)
    effective_seed = seed if seed is not None else config.seed
    settings = GenerationSettings(num_images=num_images, seed=effective_seed)
    provider = MockProvider()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    for query in queries:
        spec = build_prompt(query, vocabulary, preamble or config.preamble, settings)
        for image in provider.generate(spec):
            path = out / f"{query.query_id}_{image.seed}.png"
            path.write_bytes(image.image_bytes)
            written.append(str(path))
    for path in written:
        click.echo(path)


def _format_result_line(position: int, doc_id: str, dissimilarity: float) -> str:
    # repr() keeps the full float; parsing it back round-trips exactly
    return f"{position}\t{doc_id}\t{dissimilarity!r}"


@cli.command()
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", default=None)
@click.option("--measure", default="l2", show_default=True)
@click.option("--k", default=10, show_default=True, type=int)
@click.pass_context
@engine_errors
def query(ctx, index_path, image_path, backend_spec, measure, k):
    """Rank the index against a query image; one tab-separated line per hit."""
    config = _config_from_ctx(ctx)
    idx = load_index(index_path)
    backend = parse_backend_spec(backend_spec or config.backend)
    parsed_measure = DissimilarityMeasure.parse(measure)

    started = time.perf_counter()
    vector = embed(load_image(image_path), backend)
    ranked = rank(vector, idx, parsed_measure, k=k)
    elapsed = time.perf_counter() - started

    for position, entry in enumerate(ranked.entries, start=1):
        click.echo(_format_result_line(position, entry.doc_id, entry.dissimilarity))
    click.echo(f"scanned {len(idx)} documents in {elapsed * 1000.0:.1f}ms", err=True)


def _report_format(path: str) -> ReportFormat:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return ReportFormat.CSV
    if suffix == ".json":
        return ReportFormat.JSON
    return ReportFormat.MARKDOWN_TABLE


@cli.command("eval")
@click.option("--index-dir", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--vocab", "vocab_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--measures", default="l1,l2,cosine", show_default=True)
@click.option("--ks", default=None, help="Comma-separated precision cutoffs.")
@click.option("--n", "num_images", default=1, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--aggregation", default="mean", show_default=True, type=click.Choice(["mean", "min"]))
@click.option("--preamble", default=None)
@click.pass_context
@engine_errors
def eval_cmd(ctx, index_dir, queries_path, truth_path, report_path, vocab_path,
             measures, ks, num_images, seed, aggregation, preamble):
    """Score every index in a directory against a query set and write the
    precision report."""
    config = _config_from_ctx(ctx)
    vocab_path = vocab_path or config.vocabulary_path
    if not vocab_path:
        raise InvalidRequest("a vocabulary is required: pass --vocab or set it in the config")
    vocabulary = load_vocabulary(vocab_path)
    queries = load_queries(queries_path)
    truth = GroundTruth.from_corpus(load_manifest(truth_path))

    index_paths = sorted(Path(index_dir).glob("*.idx"))
    if not index_paths:
        raise InvalidRequest(f"no *.idx files in {index_dir}")
    indexes = {}
    backends = {}
    for path in index_paths:
        idx = load_index(path)
        backend_id = idx.descriptor.backend_id
        indexes[backend_id] = idx
        backends[backend_id] = parse_backend_spec(backend_id)

    parsed_measures = [DissimilarityMeasure.parse(m) for m in measures.split(",") if m]
    parsed_ks = (
        tuple(int(k) for k in ks.split(",") if k) if ks else DEFAULT_PRECISION_KS
    )
    effective_seed = seed if seed is not None else config.seed
    settings = GenerationSettings(num_images=num_images, seed=effective_seed)
    provider = MockProvider()

    query_images = {}
    for q in queries:
        spec = build_prompt(q, vocabulary, preamble or config.preamble, settings)
        query_images[q.query_id] = provider.generate(spec)

    query_embeddings = {
        backend_id: {
            q.query_id: [
                embed(image.image_bytes, backends[backend_id])
                for image in query_images[q.query_id]
            ]
            for q in queries
        }
        for backend_id in indexes
    }

    mode = AggregationMode.MEAN if aggregation == "mean" else AggregationMode.MIN
    report = score_index_grid(
        indexes, query_embeddings, truth, queries, parsed_measures, parsed_ks, mode
    )
    fmt = _report_format(report_path)
    Path(report_path).write_bytes(emit_report(report, fmt))
    for cell in report.failed_cells:
        click.echo(f"cell-failed\t{cell.backend_id}\t{cell.measure.value}\t{cell.error}", err=True)
    click.echo(
        "evaluated\t{}\t{}\t{}\t{}".format(
            len(indexes), len(parsed_measures), len(queries), report_path
        )
    )


@cli.command()
@click.option("--port", default=None, type=int, help="Override the configured port.")
@click.pass_context
@engine_errors
def serve(ctx, port: int | None):
    """Start the HTTP service for the configured index."""
    from dataclasses import replace

    from .service import run_server

    config = _config_from_ctx(ctx)
    if port is not None:
        config = replace(config, server=replace(config.server, port=port))
    run_server(config)


def main() -> None:
    cli(prog_name="attriq")


if __name__ == "__main__":
    main()
