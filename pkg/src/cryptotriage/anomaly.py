"""Unsupervised graph autoencoder producing per-node anomaly scores and flags.

Two graph-convolution layers encode each wallet, a linear decoder
reconstructs its features, and an inner-product decoder scores sampled
edges/non-edges. Training is full-batch gradient descent with hand-derived
gradients; everything is deterministic for a given seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SchemaMismatchError, TrainingDivergedError
from .graph import TransactionGraph

CHECKPOINT_VERSION = 1

SIGMOID_CLIP = 1e-7


@dataclass(frozen=True)
class Hyperparams:
    h1: int = 32
    h2: int = 16
    learning_rate: float = 0.01
    epochs: int = 200
    alpha: float = 0.5  # attribute/structure mix in the final score
    lambda_s: float = 1.0  # structure-loss weight during training
    negative_sample_ratio: float = 1.0
    flag_quantile: float = 0.95
    rng_seed: int = 0

    def validate(self) -> "Hyperparams":
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 < self.flag_quantile < 1.0:
            raise ValueError(f"flag_quantile must be in (0,1), got {self.flag_quantile}")
        if self.h1 < 1 or self.h2 < 1:
            raise ValueError("hidden sizes must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        return self


@dataclass
class AnomalyModel:
    W1: np.ndarray  # F_in x H1
    W2: np.ndarray  # H1 x H2
    W_dec: np.ndarray  # H2 x F_in
    hyperparams: Hyperparams
    schema_hash: str
    loss_trace: list[float] = field(default_factory=list)

    def weights(self):
        return (self.W1, self.W2, self.W_dec)

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights())


@dataclass(frozen=True)
class AnomalyResult:
    address: str
    attr_error: float
    struct_error: float
    score: float
    flagged: bool
    threshold: float


@dataclass(frozen=True)
class PairSample:
    """Fixed edge / non-edge index pairs used for the structure term."""

    edges: np.ndarray  # (m_e, 2) int
    nonedges: np.ndarray  # (m_n, 2) int


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_model(graph: TransactionGraph, hp: Hyperparams) -> AnomalyModel:
    hp.validate()
    rng = np.random.default_rng(hp.rng_seed)
    f_in = len(graph.feature_schema)
    return AnomalyModel(
        W1=_glorot(rng, f_in, hp.h1),
        W2=_glorot(rng, hp.h1, hp.h2),
        W_dec=_glorot(rng, hp.h2, f_in),
        hyperparams=hp,
        schema_hash=graph.schema_hash(),
    )


def sample_pairs(graph: TransactionGraph, ratio: float, rng: np.random.Generator) -> PairSample:
    """All undirected edges plus ratio*|E| uniformly sampled non-edges."""
    n = graph.n_nodes
    edge_set = set()
    for i in range(n):
        for j in graph.neighbors(i):
            j = int(j)
            if i < j:
                edge_set.add((i, j))
    edges = np.array(sorted(edge_set), dtype=np.int64).reshape(-1, 2)
    m = edges.shape[0]
    wanted = int(round(ratio * m))
    nonedges = []
    if wanted > 0 and n >= 2:
        attempts = 0
        seen = set()
        while len(nonedges) < wanted and attempts < 50 * wanted + 100:
            i, j = int(rng.integers(0, n)), int(rng.integers(0, n))
            attempts += 1
            if i == j:
                continue
            key = (min(i, j), max(i, j))
            if key in edge_set or key in seen:
                continue
            seen.add(key)
            nonedges.append(key)
    nonedges = np.array(sorted(nonedges), dtype=np.int64).reshape(-1, 2)
    return PairSample(edges=edges, nonedges=nonedges)


def forward(model: AnomalyModel, a_hat: sp.spmatrix, X: np.ndarray):
    """Return intermediate activations of the autoencoder.

    H1 = relu(Â X W1); Z = Â H1 W2; X̂ = Z W_dec.
    """
    P = a_hat @ X
    S1 = P @ model.W1
    H1 = np.maximum(S1, 0.0)
    Q = a_hat @ H1
    Z = Q @ model.W2
    X_hat = Z @ model.W_dec
    if not (np.isfinite(Z).all() and np.isfinite(X_hat).all()):
        raise TrainingDivergedError("forward pass produced non-finite values")
    return {"P": P, "S1": S1, "H1": H1, "Q": Q, "Z": Z, "X_hat": X_hat}


def _clipped_sigmoid(d: np.ndarray):
    u = 1.0 / (1.0 + np.exp(-np.clip(d, -60.0, 60.0)))
    uc = np.clip(u, SIGMOID_CLIP, 1.0 - SIGMOID_CLIP)
    return u, uc


def _structure_terms(Z: np.ndarray, pairs: np.ndarray, is_edge: bool):
    """Per-pair loss values and d(loss)/d(z_i.z_j) for the clipped sigmoid."""
    if pairs.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    d = np.sum(Z[pairs[:, 0]] * Z[pairs[:, 1]], axis=1)
    u, uc = _clipped_sigmoid(d)
    inside = (u > SIGMOID_CLIP) & (u < 1.0 - SIGMOID_CLIP)
    if is_edge:
        terms = -np.log(uc)
        grad = np.where(inside, -(u * (1.0 - u)) / uc, 0.0)
    else:
        terms = -np.log(1.0 - uc)
        grad = np.where(inside, (u * (1.0 - u)) / (1.0 - uc), 0.0)
    return terms, grad


def loss(model: AnomalyModel, a_hat, X: np.ndarray, sample: PairSample) -> float:
    """Mean squared reconstruction error plus weighted structure likelihood."""
    acts = forward(model, a_hat, X)
    return _loss_from_acts(model, X, acts, sample)


def _loss_from_acts(model, X, acts, sample) -> float:
    n = X.shape[0]
    attr = float(np.sum((X - acts["X_hat"]) ** 2)) / n
    struct = 0.0
    edge_terms, _ = _structure_terms(acts["Z"], sample.edges, is_edge=True)
    non_terms, _ = _structure_terms(acts["Z"], sample.nonedges, is_edge=False)
    if edge_terms.size:
        struct += float(edge_terms.mean())
    if non_terms.size:
        struct += float(non_terms.mean())
    return attr + model.hyperparams.lambda_s * struct


def gradients(model: AnomalyModel, a_hat, X: np.ndarray, sample: PairSample):
    """Analytic gradients of the loss w.r.t. (W1, W2, W_dec)."""
    acts = forward(model, a_hat, X)
    n = X.shape[0]
    lam = model.hyperparams.lambda_s

    G_xhat = (2.0 / n) * (acts["X_hat"] - X)
    g_dec = acts["Z"].T @ G_xhat

    G_z = G_xhat @ model.W_dec.T
    for pairs, is_edge in ((sample.edges, True), (sample.nonedges, False)):
        if pairs.shape[0] == 0:
            continue
        _, grad_d = _structure_terms(acts["Z"], pairs, is_edge)
        coef = lam * grad_d / pairs.shape[0]
        i, j = pairs[:, 0], pairs[:, 1]
        np.add.at(G_z, i, coef[:, None] * acts["Z"][j])
        np.add.at(G_z, j, coef[:, None] * acts["Z"][i])

    g_w2 = acts["Q"].T @ G_z
    G_q = G_z @ model.W2.T
    G_h1 = a_hat.T @ G_q
    G_s1 = G_h1 * (acts["S1"] > 0.0)
    g_w1 = acts["P"].T @ G_s1
    return {"W1": g_w1, "W2": g_w2, "W_dec": g_dec}, acts


def train(graph: TransactionGraph, hp: Hyperparams | None = None) -> AnomalyModel:
    """Full-batch gradient descent; deterministic for a given rng_seed."""
    hp = (hp or Hyperparams()).validate()
    model = init_model(graph, hp)
    a_hat = graph.normalized_adjacency()
    X = graph.standardize_features().X
    rng = np.random.default_rng(hp.rng_seed + 1)
    sample = sample_pairs(graph, hp.negative_sample_ratio, rng)

    last_good = None
    for epoch in range(hp.epochs):
        try:
            grads, acts = gradients(model, a_hat, X, sample)
            value = _loss_from_acts(model, X, acts, sample)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(
                f"training diverged at epoch {epoch}: {exc}",
                epoch=epoch,
                last_good=last_good,
            ) from exc
        if not math.isfinite(value):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}", epoch=epoch, last_good=last_good
            )
        model.loss_trace.append(value)
        last_good = (model.W1.copy(), model.W2.copy(), model.W_dec.copy())
        model.W1 = model.W1 - hp.learning_rate * grads["W1"]
        model.W2 = model.W2 - hp.learning_rate * grads["W2"]
        model.W_dec = model.W_dec - hp.learning_rate * grads["W_dec"]
        if not model.all_finite():
            raise TrainingDivergedError(
                f"non-finite weights after epoch {epoch}",
                epoch=epoch,
                last_good=last_good,
            )
    return model


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def flag_by_quantile(scores: np.ndarray, q: float):
    """Flag the top ceil((1-q)*n) scores; ties broken by ascending index.

    Returns (flags, threshold) where threshold is the smallest flagged score.
    """
    n = scores.shape[0]
    # guard float noise at integer boundaries, e.g. (1-0.95)*1000 = 50.0000...04
    budget = math.ceil((1.0 - q) * n - 1e-9)
    flags = np.zeros(n, dtype=bool)
    if budget <= 0:
        return flags, float("inf")
    # sort by (-score, index): stable tie handling
    order = np.lexsort((np.arange(n), -scores))
    chosen = order[:budget]
    flags[chosen] = True
    threshold = float(scores[chosen].min())
    return flags, threshold


def score_all(model: AnomalyModel, graph: TransactionGraph) -> list[AnomalyResult]:
    """Per-node anomaly scores: convex mix of min-max-normalized errors."""
    if model.schema_hash != graph.schema_hash():
        raise SchemaMismatchError("model was trained on a different feature schema")
    hp = model.hyperparams
    a_hat = graph.normalized_adjacency()
    X = graph.standardize_features().X
    acts = forward(model, a_hat, X)
    n = graph.n_nodes

    attr_error = np.sum((X - acts["X_hat"]) ** 2, axis=1)

    rng = np.random.default_rng(hp.rng_seed + 1)
    sample = sample_pairs(graph, hp.negative_sample_ratio, rng)
    term_sum = np.zeros(n)
    term_cnt = np.zeros(n)
    for pairs, is_edge in ((sample.edges, True), (sample.nonedges, False)):
        terms, _ = _structure_terms(acts["Z"], pairs, is_edge)
        for (i, j), t in zip(pairs, terms):
            term_sum[i] += t
            term_sum[j] += t
            term_cnt[i] += 1
            term_cnt[j] += 1
    struct_error = np.divide(term_sum, term_cnt, out=np.zeros(n), where=term_cnt > 0)

    scores = hp.alpha * _minmax(attr_error) + (1.0 - hp.alpha) * _minmax(struct_error)
    flags, threshold = flag_by_quantile(scores, hp.flag_quantile)
    return [
        AnomalyResult(
            address=graph.address_of(i),
            attr_error=float(attr_error[i]),
            struct_error=float(struct_error[i]),
            score=float(scores[i]),
            flagged=bool(flags[i]),
            threshold=threshold,
        )
        for i in range(n)
    ]


def results_run_id(results: list[AnomalyResult], schema_hash: str) -> str:
    """Deterministic id for one scoring run, used to key case creation."""
    h = hashlib.sha256()
    h.update(schema_hash.encode())
    for r in results:
        h.update(f"{r.address}:{r.score:.12e}:{int(r.flagged)}".encode())
    return h.hexdigest()[:16]


def write_scores_csv(results: list[AnomalyResult], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("address,attr_error,struct_error,score,flagged\n")
        for r in results:
            fh.write(
                f"{r.address},{r.attr_error:.12e},{r.struct_error:.12e},"
                f"{r.score:.12e},{str(r.flagged).lower()}\n"
            )


def load_scores_csv(path: str) -> list[AnomalyResult]:
    results = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("address,"):
            raise ValueError(f"not a scores CSV: {path}")
        for line in fh:
            addr, attr, struct, score, flagged = line.rstrip("\n").split(",")
            results.append(
                AnomalyResult(
                    address=addr,
                    attr_error=float(attr),
                    struct_error=float(struct),
                    score=float(score),
                    flagged=flagged == "true",
                    threshold=float("nan"),
                )
            )
    return results


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(model: AnomalyModel, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    meta = {
        "version": CHECKPOINT_VERSION,
        "schema_hash": model.schema_hash,
        "hyperparams": vars(model.hyperparams),
        "loss_trace": model.loss_trace,
    }
    with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, separators=(",", ":"))
    for name, w in zip(("W1", "W2", "W_dec"), model.weights()):
        np.save(os.path.join(directory, f"{name}.npy"), w)
    h = hashlib.sha256()
    for name in ("model.json", "W1.npy", "W2.npy", "W_dec.npy"):
        with open(os.path.join(directory, name), "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def load_checkpoint(directory: str, graph: TransactionGraph) -> AnomalyModel:
    meta_path = os.path.join(directory, "model.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"no model checkpoint at {directory}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise SchemaMismatchError(
            f"unsupported checkpoint version: {meta.get('version')}"
        )
    if meta["schema_hash"] != graph.schema_hash():
        raise SchemaMismatchError(
            "checkpoint feature schema does not match the graph"
        )
    return AnomalyModel(
        W1=np.load(os.path.join(directory, "W1.npy")),
        W2=np.load(os.path.join(directory, "W2.npy")),
        W_dec=np.load(os.path.join(directory, "W_dec.npy")),
        hyperparams=Hyperparams(**meta["hyperparams"]),
        schema_hash=meta["schema_hash"],
        loss_trace=list(meta.get("loss_trace", [])),
    )
