"""Command-line front door chaining ingest, training, scoring, explanation
and the review service over one working directory."""

from __future__ import annotations

import dataclasses
import json
import os
import socket
import sys

import click

from . import anomaly
from .config import RunConfig, load_config_file, merge_config
from .errors import ConfigError, CryptoTriageError
from .graph import TransactionGraph, ingest
from .service import TriageRuntime, create_app, explain_for_node
from .workflow import BiasAuditConfig, CaseStore

EXIT_VALIDATION = 2
EXIT_PORT_IN_USE = 3


def _fail(message: str, code: int = EXIT_VALIDATION):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _effective_config(ctx: click.Context, overrides: dict | None = None) -> RunConfig:
    base = ctx.obj
    merged_overrides: dict = {}
    if base.get("workdir"):
        merged_overrides.setdefault("paths", {})["workdir"] = base["workdir"]
    if base.get("seed") is not None:
        merged_overrides.setdefault("anomaly", {})["rng_seed"] = base["seed"]
    for section, values in (overrides or {}).items():
        merged_overrides.setdefault(section, {}).update(
            {k: v for k, v in values.items() if v is not None}
        )

    file_doc = None
    config_path = base.get("config_path")
    if config_path:
        file_doc = load_config_file(config_path)
    else:
        workdir = merged_overrides.get("paths", {}).get("workdir") or RunConfig().paths.workdir
        default_path = os.path.join(workdir, "config.json")
        if os.path.exists(default_path):
            file_doc = load_config_file(default_path)
    return merge_config(file_doc, merged_overrides)


def _graph_dir(config: RunConfig) -> str:
    return os.path.join(config.paths.workdir, "graph")


def _checkpoint_dir(config: RunConfig) -> str:
    return os.path.join(config.paths.workdir, "checkpoint")


def _load_graph(config: RunConfig) -> TransactionGraph:
    try:
        return TransactionGraph.load(_graph_dir(config))
    except CryptoTriageError:
        _fail(f"no ingested graph in {config.paths.workdir}; run `cryptotriage ingest` first")


def _build_runtime(config: RunConfig) -> TriageRuntime:
    graph = _load_graph(config)
    scores_path = os.path.join(config.paths.workdir, "scores.csv")
    if not os.path.exists(scores_path):
        _fail(f"no scores at {scores_path}; run `cryptotriage score` first")
    results = anomaly.load_scores_csv(scores_path)
    store = CaseStore(config.paths.workdir)
    return TriageRuntime(graph=graph, results=results, store=store, config=config)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Config file (JSON).")
@click.option("--workdir", default=None, help="Working directory for all artifacts.")
@click.option("--seed", type=int, default=None, help="Override the training RNG seed.")
@click.pass_context
def main(ctx, config_path, workdir, seed):
    """Explainable crypto anomaly triage pipeline."""
    ctx.obj = {"config_path": config_path, "workdir": workdir, "seed": seed}


@main.command(name="ingest")
@click.option("--nodes", "nodes_csv", type=click.Path(), default=None, help="Node CSV path.")
@click.option("--edges", "edges_csv", type=click.Path(), default=None, help="Edge CSV path.")
@click.option("--schema-map", "schema_map_path", type=click.Path(), default=None, help="JSON header mapping.")
@click.pass_context
def cmd_ingest(ctx, nodes_csv, edges_csv, schema_map_path):
    """Load node/edge CSVs into the working directory's graph."""
    try:
        config = _effective_config(
            ctx, {"paths": {"nodes_csv": nodes_csv, "edges_csv": edges_csv}}
        )
        nodes_path = config.paths.nodes_csv
        edges_path = config.paths.edges_csv
        if not nodes_path or not edges_path:
            _fail("both --nodes and --edges are required (or set paths in the config)")
        schema_map = config.schema_map
        if schema_map_path:
            with open(schema_map_path, encoding="utf-8") as fh:
                schema_map = json.load(fh)
        graph, report = ingest(nodes_path, edges_path, schema_map=schema_map)
        os.makedirs(config.paths.workdir, exist_ok=True)
        digest = graph.save(_graph_dir(config))
    except (CryptoTriageError, ConfigError, OSError) as exc:
        _fail(str(exc))
    click.echo(report.summary())
    click.echo(f"graph_hash={digest}")


@main.command(name="train")
@click.option("--epochs", type=int, default=None)
@click.option("--h1", type=int, default=None)
@click.option("--h2", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--lambda-s", "lambda_s", type=float, default=None)
@click.pass_context
def cmd_train(ctx, epochs, h1, h2, learning_rate, alpha, lambda_s):
    """Train the graph autoencoder and write a checkpoint."""
    try:
        config = _effective_config(
            ctx,
            {
                "anomaly": {
                    "epochs": epochs,
                    "h1": h1,
                    "h2": h2,
                    "learning_rate": learning_rate,
                    "alpha": alpha,
                    "lambda_s": lambda_s,
                }
            },
        )
        graph = _load_graph(config)
        model = anomaly.train(graph, config.anomaly)
        digest = anomaly.save_checkpoint(model, _checkpoint_dir(config))
    except (CryptoTriageError, ConfigError) as exc:
        _fail(str(exc))
    final = model.loss_trace[-1] if model.loss_trace else float("nan")
    click.echo(f"epochs={config.anomaly.epochs} final_loss={final:.6f}")
    click.echo(f"checkpoint_hash={digest}")


@main.command(name="score")
@click.option("--q", "flag_quantile", type=float, default=None, help="Flag quantile.")
@click.option("--alpha", type=float, default=None)
@click.pass_context
def cmd_score(ctx, flag_quantile, alpha):
    """Score every wallet, open cases for flags, run the bias audit."""
    try:
        config = _effective_config(
            ctx, {"anomaly": {"flag_quantile": flag_quantile, "alpha": alpha}}
        )
        graph = _load_graph(config)
        model = anomaly.load_checkpoint(_checkpoint_dir(config), graph)
        updates = {}
        if flag_quantile is not None:
            updates["flag_quantile"] = flag_quantile
        if alpha is not None:
            updates["alpha"] = alpha
        if updates:
            model.hyperparams = dataclasses.replace(model.hyperparams, **updates)
        results = anomaly.score_all(model, graph)
        scores_path = os.path.join(config.paths.workdir, "scores.csv")
        anomaly.write_scores_csv(results, scores_path)
        run_id = anomaly.results_run_id(results, graph.schema_hash())

        store = CaseStore(config.paths.workdir)
        created = store.open_cases_from_scores(results, run_id, graph)
        bias_config = BiasAuditConfig(
            feature=config.bias.feature,
            n_buckets=config.bias.n_buckets,
            max_ratio=config.bias.max_ratio,
        )
        stats = store.run_bias_audit(results, graph, run_id, bias_config)
        store.close()
    except FileNotFoundError as exc:
        _fail(str(exc))
    except (CryptoTriageError, ConfigError) as exc:
        _fail(str(exc))
    flagged = sum(1 for r in results if r.flagged)
    click.echo(
        f"scored={len(results)} flagged={flagged} new_cases={len(created)} run_id={run_id}"
    )
    click.echo(
        f"bias_audit feature={stats['feature']} ratio={stats['max_disparity_ratio']:.3f} "
        f"passed={str(stats['passed']).lower()}"
    )


@main.command(name="explain")
@click.option("--node", "node_id", default=None, help="Explain one wallet address.")
@click.option("--all-flagged", is_flag=True, default=False, help="Explain every flagged wallet.")
@click.option("--backend", type=click.Choice(["stub", "llm"]), default=None)
@click.option("--model", default=None, help="Chat model name.")
@click.option("--base-url", default=None, help="Chat endpoint base URL.")
@click.pass_context
def cmd_explain(ctx, node_id, all_flagged, backend, model, base_url):
    """Produce explanation weights and an analyst narrative per wallet."""
    if bool(node_id) == all_flagged:
        _fail("pass exactly one of --node or --all-flagged")
    try:
        config = _effective_config(
            ctx, {"narrator": {"backend": backend, "model": model, "base_url": base_url}}
        )
        runtime = _build_runtime(config)
        if all_flagged:
            targets = [r.address for r in runtime.results if r.flagged]
        else:
            targets = [node_id]

        def run_one(address):
            _, weights_doc, explanation = explain_for_node(runtime, address)
            case = runtime.store.find_case_for_node(address)
            if case is not None and case["state"] == "BIAS_CHECKED":
                runtime.store.attach_explanation(
                    case["case_id"], weights_doc, explanation.to_dict()
                )

        # independent per-node work, bounded by the configured in-flight limit
        workers = max(1, min(config.narrator.concurrency, len(targets)))
        if workers == 1:
            for address in targets:
                run_one(address)
        else:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                for future in [pool.submit(run_one, a) for a in targets]:
                    future.result()
        count = len(targets)
        runtime.store.close()
    except (CryptoTriageError, ConfigError) as exc:
        _fail(str(exc))
    out_dir = os.path.join(config.paths.workdir, "explanations")
    click.echo(f"explained={count} out_dir={out_dir}")


@main.command(name="serve")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--static-dir", default=None, help="Directory of built dashboard assets.")
@click.pass_context
def cmd_serve(ctx, host, port, static_dir):
    """Serve the /api/v1 surface plus the dashboard's static assets."""
    try:
        if static_dir is None and os.path.isdir(os.path.join("frontend", "dist")):
            static_dir = os.path.join("frontend", "dist")
        config = _effective_config(
            ctx,
            {"service": {"host": host, "port": port, "static_dir": static_dir}},
        )
        runtime = _build_runtime(config)
    except (CryptoTriageError, ConfigError) as exc:
        _fail(str(exc))

    bind_host, bind_port = config.service.host, config.service.port
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((bind_host, bind_port))
    except OSError as exc:
        probe.close()
        _fail(f"cannot bind {bind_host}:{bind_port}: {exc}", EXIT_PORT_IN_USE)
    probe.close()

    app = create_app(runtime)
    click.echo(f"serving on http://{bind_host}:{bind_port}")
    import uvicorn

    uvicorn.run(app, host=bind_host, port=bind_port, log_level="warning")


@main.group(name="config")
def cmd_config():
    """Inspect the effective configuration."""


@cmd_config.command(name="show")
@click.pass_context
def cmd_config_show(ctx):
    """Print the merged configuration (defaults, file, flags)."""
    try:
        config = _effective_config(ctx)
    except ConfigError as exc:
        _fail(str(exc))
    click.echo(json.dumps(config.to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
