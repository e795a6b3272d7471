import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cryptotriage import anomaly
from cryptotriage.config import config_from_dict
from cryptotriage.graph import ingest
from cryptotriage.service import TriageRuntime
from cryptotriage.workflow import CaseStore

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

FIXTURE_NODES = os.path.join(DATA_DIR, "fixture_nodes.csv")
FIXTURE_EDGES = os.path.join(DATA_DIR, "fixture_edges.csv")
LISTING_ADDRESS = "1EQPoYt9DAnpTrAYjTBRCSD5bj5e1an4tF"


@pytest.fixture()
def fixture_graph():
    graph, _ = ingest(FIXTURE_NODES, FIXTURE_EDGES)
    return graph


@pytest.fixture()
def fixture_runtime(fixture_graph, tmp_path):
    """Fully scored fixture pipeline with cases opened and bias-checked."""
    hp = anomaly.Hyperparams(epochs=20, rng_seed=5, flag_quantile=0.8)
    model = anomaly.train(fixture_graph, hp)
    results = anomaly.score_all(model, fixture_graph)
    run_id = anomaly.results_run_id(results, fixture_graph.schema_hash())
    store = CaseStore()
    config = config_from_dict({"paths": {"workdir": str(tmp_path)}})
    runtime = TriageRuntime(
        graph=fixture_graph,
        results=results,
        store=store,
        config=config,
        run_id=run_id,
    )
    store.open_cases_from_scores(results, run_id, fixture_graph)
    store.run_bias_audit(results, fixture_graph, run_id, runtime.bias_config())
    return runtime
