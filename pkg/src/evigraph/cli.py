"""Operator front door: build, query, eval and serve.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.  Secrets
come from the environment only; endpoint URLs and model names come from a
JSON config file.  Every command echoes the seed it ran with so outputs are
reproducible.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .backends.http import HttpChatBackend, HttpEmbeddingBackend, LlmJudge
from .backends.mock import MockChatBackend, MockEmbedder, MockJudge, load_lexicon
from .baseline import index_corpus, query_topk
from .errors import ConfigError, EmptyResult, EvigraphError
from .evaluation import (
    accuracy_and_f1,
    compare_retrievers,
    evaluate_keypoints,
    load_dataset,
)
from .graph import Hypergraph
from .ingest import IngestionConfig, build_graph, load_corpus, load_normalization_table
from .retrieval import (
    EntityIndex,
    RetrievalConfig,
    load_profile,
    result_context_text,
    retrieve,
)

logger = logging.getLogger(__name__)

EVAL_MODES = ("keypoint", "compare", "accuracy", "f1")


def _backends(config_path: str | None, mock: bool, lexicon_path: str | None, seed: int):
    """(chat, embedder, judge) from --mock or a config file."""
    if mock:
        lexicon = load_lexicon(lexicon_path) if lexicon_path else {}
        return MockChatBackend(lexicon=lexicon, seed=seed), MockEmbedder(seed=seed), MockJudge()
    if not config_path:
        raise click.UsageError("either --mock or --config with endpoint settings is required")
    try:
        config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {config_path}: {exc}")
    try:
        chat = HttpChatBackend(
            url=config["chat_url"],
            model=config["chat_model"],
            api_key_env=config.get("api_key_env", "EVIGRAPH_API_KEY"),
        )
        embedder = HttpEmbeddingBackend(
            url=config["embed_url"],
            model=config["embed_model"],
            api_key_env=config.get("api_key_env", "EVIGRAPH_API_KEY"),
        )
    except KeyError as exc:
        raise click.UsageError(f"config is missing {exc}")
    return chat, embedder, LlmJudge(chat)


def _load_graph(path: str) -> Hypergraph:
    if not Path(path).is_file():
        raise click.UsageError(f"graph file not found: {path}")
    try:
        return Hypergraph.load(path)
    except EvigraphError as exc:
        raise click.ClickException(f"failed to load graph: {exc}")


@click.group()
@click.option("--log-level", default="WARNING", show_default=True)
def main(log_level: str) -> None:
    logging.basicConfig(level=getattr(logging, log_level.upper(), logging.WARNING))


@main.command()
@click.option("--corpus", required=True, help="Directory of *.json documents.")
@click.option("--out", required=True, help="Graph file to write.")
@click.option("--mock", is_flag=True, help="Use the offline fixture-driven backends.")
@click.option("--lexicon", default=None, help="TSV term->type lexicon for --mock.")
@click.option("--normalization", default=None, help="TSV raw->normalized term table.")
@click.option("--config", "config_path", default=None, help="JSON backend config.")
@click.option("--window", default=1024, show_default=True)
@click.option("--overlap", default=200, show_default=True)
@click.option("--tokenizer", default="whitespace", show_default=True)
@click.option("--batch-size", default=10, show_default=True)
@click.option("--max-in-flight", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
def build(
    corpus, out, mock, lexicon, normalization, config_path,
    window, overlap, tokenizer, batch_size, max_in_flight, seed,
):
    """Construct the hypergraph from a corpus and write it to OUT."""
    corpus_dir = Path(corpus)
    if not corpus_dir.is_dir():
        raise click.UsageError(f"corpus directory not found: {corpus}")
    try:
        cfg = IngestionConfig(
            window=window,
            overlap=overlap,
            tokenizer=tokenizer,
            batch_size=batch_size,
            max_in_flight=max_in_flight,
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    chat, _, _ = _backends(config_path, mock, lexicon, seed)
    table = load_normalization_table(normalization) if normalization else None
    try:
        docs = load_corpus(corpus_dir)
        graph, report = build_graph(docs, cfg, chat, normalization=table)
        graph.save(out)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    except EvigraphError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"seed: {seed}")
    for key, value in report.counts.items():
        click.echo(f"{key}: {value}")
    click.echo(
        "tokens: prompt={prompt_tokens} completion={completion_tokens} calls={calls}".format(
            **report.usage
        )
    )
    if report.documents_skipped:
        click.echo(f"skipped: {len(report.documents_skipped)}")
        for doc_id, reason in report.documents_skipped:
            click.echo(f"  {doc_id}: {reason}")
    click.echo(f"graph written to {out}")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--json", "as_json", is_flag=True, help="Emit the summary as JSON.")
def inspect(graph_path, as_json):
    """Load a graph file, print its counts, and audit it."""
    graph = _load_graph(graph_path)
    violations = graph.audit()
    if as_json:
        click.echo(json.dumps({
            "counts": graph.counts(),
            "labels": list(graph.labels),
            "entity_types": list(graph.entity_types),
            "violations": [str(v) for v in violations],
        }, ensure_ascii=False, indent=2))
    else:
        for key, value in graph.counts().items():
            click.echo(f"{key}: {value}")
        click.echo(f"labels: {', '.join(graph.labels)}")
        if violations:
            click.echo(f"audit: {len(violations)} violation(s)")
            for violation in violations:
                click.echo(f"  {violation}")
        else:
            click.echo("audit: clean")
    if violations:
        raise click.exceptions.Exit(1)


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--profile", default="default", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Emit the full trace as JSON.")
@click.option("--seed", default=0, show_default=True)
@click.option("--top-k", default=20, show_default=True)
@click.option("--mock", is_flag=True)
@click.option("--lexicon", default=None)
@click.option("--config", "config_path", default=None)
@click.argument("query_text")
def query(graph_path, profile, as_json, seed, top_k, mock, lexicon, config_path, query_text):
    """Answer QUERY_TEXT with ranked evidence from the graph."""
    graph = _load_graph(graph_path)
    chat, embedder, _ = _backends(config_path, mock, lexicon, seed)
    try:
        cfg = RetrievalConfig(top_k=top_k)
        condition = load_profile(profile)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    try:
        result = retrieve(query_text, graph, cfg, condition, chat, embedder, seed=seed)
    except EmptyResult as exc:
        if as_json:
            click.echo(json.dumps({"query": query_text, "seed": seed, "evidence": [],
                                   "empty_reason": exc.reason}, ensure_ascii=False))
        else:
            click.echo(f"seed: {seed}")
            click.echo(f"no results: {exc.reason}")
        return
    except EvigraphError as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(result.to_json())
        return
    click.echo(f"seed: {seed}")
    click.echo(f"profile: {result.profile}")
    click.echo(f"terms: {', '.join(result.terms)}")
    for rank, item in enumerate(result.evidence, start=1):
        click.echo(
            f"{rank:2d}. [{item.score:.3f}] ({item.label}) {item.description}"
            f"  <{item.doc_id}#{item.chunk_index}>"
        )


@main.command(name="eval")
@click.option("--graph", "graph_path", required=True)
@click.option("--dataset", required=True)
@click.option("--mode", required=True, type=click.Choice(EVAL_MODES))
@click.option("--baseline", default="vector", show_default=True,
              type=click.Choice(["vector"]))
@click.option("--corpus", default=None, help="Corpus directory (compare mode).")
@click.option("--out", "out_path", default=None, help="Write the JSON report here.")
@click.option("--profile", default="default", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--top-k", default=20, show_default=True)
@click.option("--window", default=1024, show_default=True)
@click.option("--overlap", default=200, show_default=True)
@click.option("--mock", is_flag=True)
@click.option("--lexicon", default=None)
@click.option("--config", "config_path", default=None)
def eval_cmd(graph_path, dataset, mode, baseline, corpus, out_path, profile, seed,
             top_k, window, overlap, mock, lexicon, config_path):
    """Score retrieval quality on a JSONL dataset."""
    if not Path(dataset).is_file():
        raise click.UsageError(f"dataset file not found: {dataset}")
    try:
        rows = load_dataset(dataset)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    graph = _load_graph(graph_path)
    chat, embedder, judge = _backends(config_path, mock, lexicon, seed)
    try:
        cfg = RetrievalConfig(top_k=top_k)
        condition = load_profile(profile)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    index = EntityIndex(graph, embedder)
    view = graph.bipartite_view()
    config_echo = {"profile": profile, "top_k": top_k, "seed": seed,
                   "dataset": dataset, "graph": graph_path}

    def graph_retriever(question: str) -> str:
        try:
            result = retrieve(question, graph, cfg, condition, chat, embedder,
                              seed=seed, entity_index=index, view=view)
            return result_context_text(result)
        except EmptyResult:
            return ""

    report: dict
    if mode == "keypoint":
        kp_report = evaluate_keypoints(rows, lambda row: graph_retriever(str(row["question"])), judge)
        click.echo(f"seed: {seed}")
        click.echo(f"keypoint score: {kp_report.score:.4f}")
        report = {"mode": mode, "config": config_echo, **kp_report.to_dict()}
    elif mode == "compare":
        if not corpus:
            raise click.UsageError("--corpus is required for compare mode")
        if not Path(corpus).is_dir():
            raise click.UsageError(f"corpus directory not found: {corpus}")
        try:
            ingest_cfg = IngestionConfig(window=window, overlap=overlap)
            chunk_index = index_corpus(load_corpus(corpus), ingest_cfg, embedder)
        except ConfigError as exc:
            raise click.UsageError(str(exc))

        def vector_retriever(question: str) -> str:
            hits = query_topk(question, chunk_index, embedder, k=top_k)
            return "\n".join(f"- {record.text}" for record, _ in hits)

        tally, cmp_report = compare_retrievers(rows, graph_retriever, vector_retriever,
                                               judge, seed=seed)
        click.echo(f"seed: {seed}")
        click.echo(
            "recall W/T/L: {recall_win}/{recall_tie}/{recall_loss}  "
            "precision W/T/L: {precision_win}/{precision_tie}/{precision_loss}".format(
                **tally.__dict__
            )
        )
        if "advantage" in cmp_report:
            click.echo(f"advantage: {cmp_report['advantage']['a_x100']:.1f}")
        report = {"mode": mode, "config": config_echo, **cmp_report}
    else:  # accuracy | f1
        try:
            predictions = [str(row["prediction"]) for row in rows]
            gold = [str(row["gold_answer"]) for row in rows]
        except KeyError as exc:
            raise click.UsageError(f"dataset rows need {exc} for mode {mode}")
        metrics = accuracy_and_f1(predictions, gold)
        value = metrics["accuracy"] if mode == "accuracy" else metrics["f1"]
        click.echo(f"seed: {seed}")
        click.echo(f"{mode}: {value:.4f}")
        report = {"mode": mode, "config": config_echo, **metrics}

    if out_path:
        Path(out_path).write_text(
            json.dumps(report, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        click.echo(f"report written to {out_path}")


@main.command()
@click.option("--graph", "graph_path", required=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--profile", default="default", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mock", is_flag=True)
@click.option("--lexicon", default=None)
@click.option("--config", "config_path", default=None)
def serve(graph_path, port, host, profile, seed, mock, lexicon, config_path):
    """Serve a read-only /query endpoint over the graph."""
    import uvicorn

    from .server import ServerState, create_app

    graph = _load_graph(graph_path)
    chat, embedder, _ = _backends(config_path, mock, lexicon, seed)
    try:
        condition = load_profile(profile)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    state = ServerState()
    state.load(graph, chat, embedder, condition=condition, seed=seed)
    click.echo(f"seed: {seed}")
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
