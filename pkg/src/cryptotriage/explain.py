"""Per-feature importance weights for a flagged wallet via HSIC Lasso.

Each feature of the node's ego network gets a centered, Frobenius-normalized
RBF Gram matrix; the anomaly scores get one too. Non-negative coordinate
descent then regresses the score kernel on the feature kernels, and the
resulting coefficients are the explanation weights.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientNeighborhoodError
from .graph import EgoNetwork, TransactionGraph

MIN_NEIGHBORHOOD = 5
DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class ExplainerConfig:
    k: int = 1
    k_max: int = 3
    min_neighborhood: int = MIN_NEIGHBORHOOD
    rho: float | None = None  # absolute override
    rho_rel: float = 0.1  # fraction of max_k <K_k, L> when rho is None
    tol: float = 1e-6
    max_iter: int = 10_000


@dataclass(frozen=True)
class KernelStack:
    """Centered per-feature Gram matrices plus the output-score Gram."""

    feature_names: tuple[str, ...]
    kernels: np.ndarray  # (F, n, n); zero matrix for degenerate features
    L: np.ndarray  # (n, n)
    bandwidths: np.ndarray  # (F,)
    sigma_out: float
    active: np.ndarray  # (F,) bool; False marks constant/degenerate features

    @property
    def n(self) -> int:
        return self.L.shape[0]


@dataclass(frozen=True)
class LassoSolution:
    beta: np.ndarray
    converged: bool
    n_sweeps: int
    objective_trace: tuple[float, ...]


@dataclass(frozen=True)
class ExplanationWeights:
    node_id: str
    weights: dict[str, float]
    k_used: int
    n_neighbors: int
    rho: float
    converged: bool
    reason: str | None = None

    def top(self, m: int) -> list[tuple[str, float]]:
        """Top-m (name, weight) by descending weight; insertion order on ties."""
        items = list(self.weights.items())
        items.sort(key=lambda kv: -kv[1])
        return items[:m]

    def normalized(self) -> dict[str, float]:
        """Max-normalized display view; raw weights stay authoritative."""
        top = max(self.weights.values(), default=0.0)
        if top <= 0:
            return {k: 0.0 for k in self.weights}
        return {k: v / top for k, v in self.weights.items()}


def format_weight(value: float) -> str:
    """Scientific notation with 3 fractional digits, e.g. 9.941e-01."""
    return f"{value:.3e}"


def _median_bandwidth(values: np.ndarray) -> float:
    diffs = np.abs(values[:, None] - values[None, :])
    iu = np.triu_indices(values.shape[0], k=1)
    med = float(np.median(diffs[iu]))
    return med if med > 0 else 1.0


def _centered_rbf(values: np.ndarray, sigma: float) -> np.ndarray:
    diffs = values[:, None] - values[None, :]
    K = np.exp(-(diffs**2) / (2.0 * sigma**2))
    n = K.shape[0]
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    return H @ K @ H


def build_kernels(
    X: np.ndarray, scores: np.ndarray, feature_names
) -> KernelStack:
    """Gram matrices over one ego network's rows (nodes) per feature column."""
    X = np.asarray(X, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n, n_feat = X.shape
    if n < MIN_NEIGHBORHOOD:
        raise InsufficientNeighborhoodError(n, MIN_NEIGHBORHOOD)
    if scores.shape != (n,):
        raise ValueError(f"scores shape {scores.shape} does not match {n} rows")

    kernels = np.zeros((n_feat, n, n))
    bandwidths = np.zeros(n_feat)
    active = np.zeros(n_feat, dtype=bool)
    for k in range(n_feat):
        sigma = _median_bandwidth(X[:, k])
        bandwidths[k] = sigma
        Kc = _centered_rbf(X[:, k], sigma)
        norm = float(np.linalg.norm(Kc))
        if norm > DEGENERATE_NORM:
            kernels[k] = Kc / norm
            active[k] = True
        # degenerate (constant) features keep the exact zero matrix

    sigma_out = _median_bandwidth(scores)
    L = _centered_rbf(scores, sigma_out)
    l_norm = float(np.linalg.norm(L))
    if l_norm > DEGENERATE_NORM:
        L = L / l_norm
    else:
        L = np.zeros((n, n))
    return KernelStack(
        feature_names=tuple(feature_names),
        kernels=kernels,
        L=L,
        bandwidths=bandwidths,
        sigma_out=sigma_out,
        active=active,
    )


def stack_inner_products(stack: KernelStack):
    """c_k = <K_k, L> and G_kj = <K_k, K_j> as flat Frobenius inner products."""
    flat = stack.kernels.reshape(stack.kernels.shape[0], -1)
    c = flat @ stack.L.ravel()
    G = flat @ flat.T
    return c, G


def hsic_lasso(
    stack: KernelStack,
    rho: float,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> LassoSolution:
    """Non-negative lasso by cyclic coordinate descent over the kernel stack.

    Minimizes 0.5*||vec(L) - sum_k beta_k vec(K_k)||^2 + rho*sum_k beta_k
    subject to beta >= 0. Degenerate features are pinned at zero.
    """
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    c, G = stack_inner_products(stack)
    n_feat = c.shape[0]
    ll = float(np.sum(stack.L * stack.L))
    beta = np.zeros(n_feat)

    def objective(b):
        return float(0.5 * ll - b @ c + 0.5 * b @ G @ b + rho * b.sum())

    trace = [objective(beta)]
    active = np.flatnonzero(stack.active)
    converged = False
    sweeps = 0
    best = beta.copy()
    best_obj = trace[0]
    for sweeps in range(1, max_iter + 1):
        delta = 0.0
        for k in active:
            residual = c[k] - rho - (G[k] @ beta - G[k, k] * beta[k])
            new = max(0.0, residual / G[k, k])
            delta = max(delta, abs(new - beta[k]))
            beta[k] = new
        obj = objective(beta)
        trace.append(obj)
        if obj < best_obj:
            best_obj = obj
            best = beta.copy()
        if delta < tol:
            converged = True
            break
    return LassoSolution(
        beta=best if not converged else beta,
        converged=converged,
        n_sweeps=sweeps,
        objective_trace=tuple(trace),
    )


def default_rho(stack: KernelStack, rho_rel: float) -> float:
    """Relative regularization: a fraction of the strongest kernel alignment."""
    c, _ = stack_inner_products(stack)
    c_max = float(c[stack.active].max()) if stack.active.any() else 0.0
    if c_max > 0:
        return rho_rel * c_max
    return 1.0  # any positive value: all coordinates shrink to zero anyway


def _degenerate(node_id, names, k_used, n_neighbors, reason) -> ExplanationWeights:
    return ExplanationWeights(
        node_id=node_id,
        weights={name: 0.0 for name in names},
        k_used=k_used,
        n_neighbors=n_neighbors,
        rho=0.0,
        converged=False,
        reason=reason,
    )


def explain_node(
    graph: TransactionGraph,
    scores: np.ndarray,
    node_id: str,
    config: ExplainerConfig | None = None,
) -> ExplanationWeights:
    """HSIC-Lasso weights for one node, widening k until the ego is usable.

    ``scores`` is the full-graph anomaly score vector indexed like the graph.
    """
    config = config or ExplainerConfig()
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (graph.n_nodes,):
        raise ValueError("scores must cover every node of the graph")
    graph.index_of(node_id)  # raises UnknownNodeError early

    ego: EgoNetwork | None = None
    k_used = config.k
    for k in range(config.k, config.k_max + 1):
        k_used = k
        ego = graph.ego_network(node_id, k)
        if ego.size >= config.min_neighborhood:
            break
    assert ego is not None
    if ego.size < config.min_neighborhood:
        return _degenerate(
            node_id,
            graph.feature_schema,
            k_used,
            ego.size,
            f"insufficient neighborhood: {ego.size} nodes at k={config.k_max}",
        )

    idx = ego.member_indices
    stack = build_kernels(graph.X_raw[idx], scores[idx], graph.feature_schema)
    rho = config.rho if config.rho is not None else default_rho(stack, config.rho_rel)
    solution = hsic_lasso(stack, rho, tol=config.tol, max_iter=config.max_iter)
    weights = {
        name: float(solution.beta[i]) for i, name in enumerate(stack.feature_names)
    }
    return ExplanationWeights(
        node_id=node_id,
        weights=weights,
        k_used=k_used,
        n_neighbors=ego.size,
        rho=rho,
        converged=solution.converged,
        reason=None if solution.converged else "coordinate descent did not converge",
    )


# -- persistence --------------------------------------------------------------


def weights_to_json(expl: ExplanationWeights) -> str:
    doc = {
        "node_id": expl.node_id,
        "k_used": expl.k_used,
        "n_neighbors": expl.n_neighbors,
        "rho": expl.rho,
        "converged": expl.converged,
        "weights": {name: format_weight(v) for name, v in expl.weights.items()},
    }
    if expl.reason:
        doc["reason"] = expl.reason
    return json.dumps(doc, indent=2, sort_keys=True)


def weights_from_json(text: str) -> ExplanationWeights:
    doc = json.loads(text)
    return ExplanationWeights(
        node_id=doc["node_id"],
        weights={name: float(v) for name, v in doc["weights"].items()},
        k_used=doc["k_used"],
        n_neighbors=doc["n_neighbors"],
        rho=doc["rho"],
        converged=doc["converged"],
        reason=doc.get("reason"),
    )


def save_weights(expl: ExplanationWeights, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{expl.node_id}.weights.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(weights_to_json(expl))
    return path
