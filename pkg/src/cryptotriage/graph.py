"""Immutable wallet/transaction graph loaded from Elliptic++-style CSVs.

The graph keeps two views of connectivity: the directed transaction edges as
ingested (used for display and prompt statistics) and a deduplicated
undirected adjacency (used for convolution, ego extraction and BFS).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import IngestError, UnknownNodeError

# Canonical per-wallet feature names, in schema order.
CANONICAL_FEATURES = (
    "total_txs",
    "btc_received_total",
    "btc_sent_total",
    "num_txs_as_sender",
    "num_txs_as_receiver",
    "btc_transacted_total",
    "fees_total",
    "degree",
    "btc_received_median",
    "transacted_w_address_mean",
    "lifetime_blocks",
)

CLASS_LABELS = ("licit", "illicit", "unknown")

# Elliptic++ releases encode wallet classes numerically.
_CLASS_ALIASES = {
    "1": "illicit",
    "2": "licit",
    "3": "unknown",
    "illicit": "illicit",
    "licit": "licit",
    "unknown": "unknown",
}

_NODE_SPECIAL_COLUMNS = ("address", "class_label", "time_step")
_EDGE_COLUMNS = ("src", "dst", "btc_mean", "btc_median", "btc_max")

GRAPH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class WalletNode:
    """One wallet with its named feature vector."""

    address: str
    features: dict[str, float]
    class_label: str | None = None
    time_step: int | None = None

    @property
    def lifetime_blocks(self) -> float:
        return self.features.get("lifetime_blocks", 0.0)


@dataclass(frozen=True)
class TxEdge:
    """A directed transaction-statistics edge between two wallets."""

    src: str
    dst: str
    btc_mean: float = 0.0
    btc_median: float = 0.0
    btc_max: float = 0.0


@dataclass(frozen=True)
class EgoNetwork:
    """Closed k-hop neighborhood of a center node under undirected adjacency."""

    center: str
    k: int
    member_nodes: frozenset[str]
    induced_edges: tuple[TxEdge, ...]
    member_indices: np.ndarray  # sorted node indices, parallel numeric view

    def __post_init__(self):
        self.member_indices.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.member_nodes)


@dataclass
class IngestReport:
    """Counts accumulated while loading the node and edge CSVs."""

    node_rows: int = 0
    nodes_loaded: int = 0
    duplicates_rejected: int = 0
    edge_rows: int = 0
    edges_loaded: int = 0
    edges_dropped: int = 0
    imputed_cells: dict[str, int] = field(default_factory=dict)
    warnings: dict[str, int] = field(default_factory=dict)

    @property
    def imputed_total(self) -> int:
        return sum(self.imputed_cells.values())

    def warn(self, kind: str, count: int = 1) -> None:
        self.warnings[kind] = self.warnings.get(kind, 0) + count

    def summary(self) -> str:
        parts = [
            f"nodes={self.nodes_loaded}",
            f"edges={self.edges_loaded}",
            f"dropped={self.edges_dropped}",
            f"imputed={self.imputed_total}",
        ]
        if self.duplicates_rejected:
            parts.append(f"duplicates={self.duplicates_rejected}")
        for kind in sorted(self.warnings):
            parts.append(f"warn[{kind}]={self.warnings[kind]}")
        return " ".join(parts)


@dataclass(frozen=True)
class StandardizedFeatures:
    """Column z-scored feature matrix with the scaling retained for display."""

    X: np.ndarray
    mean: np.ndarray
    std: np.ndarray  # 0.0 marks a constant column

    def __post_init__(self):
        for arr in (self.X, self.mean, self.std):
            arr.setflags(write=False)

    def destandardize(self, values: np.ndarray) -> np.ndarray:
        """Map standardized rows back to raw feature units."""
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


class TransactionGraph:
    """Immutable wallet-node / transaction-edge graph with named features.

    Build one with :func:`ingest` or :meth:`TransactionGraph.build`; instances
    are safe to share across threads once constructed.
    """

    def __init__(self, feature_schema, addresses, X, class_labels, time_steps, edges):
        self.feature_schema: tuple[str, ...] = tuple(feature_schema)
        self._addresses: tuple[str, ...] = tuple(addresses)
        self._index: dict[str, int] = {a: i for i, a in enumerate(self._addresses)}
        if len(self._index) != len(self._addresses):
            raise IngestError("node index is not bijective: duplicate addresses")
        self.X_raw = np.ascontiguousarray(X, dtype=np.float64)
        if self.X_raw.shape != (len(self._addresses), len(self.feature_schema)):
            raise IngestError(
                f"feature matrix shape {self.X_raw.shape} does not match "
                f"{len(self._addresses)} nodes x {len(self.feature_schema)} features"
            )
        self.X_raw.setflags(write=False)
        self._class_labels: tuple[str | None, ...] = tuple(class_labels)
        self._time_steps: tuple[int | None, ...] = tuple(time_steps)
        self.edges: tuple[TxEdge, ...] = tuple(edges)
        self._neighbors = self._build_undirected(self.edges)

    # -- construction -----------------------------------------------------

    @classmethod
    def build(cls, nodes, edges, feature_schema):
        """Construct directly from WalletNode / TxEdge sequences (test helper)."""
        schema = tuple(feature_schema)
        addresses = [n.address for n in nodes]
        X = np.zeros((len(nodes), len(schema)))
        for i, node in enumerate(nodes):
            for j, name in enumerate(schema):
                X[i, j] = node.features.get(name, 0.0)
        return cls(
            schema,
            addresses,
            X,
            [n.class_label for n in nodes],
            [n.time_step for n in nodes],
            edges,
        )

    def _build_undirected(self, edges):
        n = self.n_nodes
        pairs = set()
        for e in edges:
            i, j = self._index[e.src], self._index[e.dst]
            if i == j:
                continue  # self-edges carry stats but no adjacency
            pairs.add((min(i, j), max(i, j)))
        adj: list[list[int]] = [[] for _ in range(n)]
        for i, j in pairs:
            adj[i].append(j)
            adj[j].append(i)
        out = []
        for nbrs in adj:
            arr = np.array(sorted(nbrs), dtype=np.int64)
            arr.setflags(write=False)
            out.append(arr)
        return out

    # -- basic queries -----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self._addresses)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def addresses(self) -> tuple[str, ...]:
        return self._addresses

    def index_of(self, address: str) -> int:
        try:
            return self._index[address]
        except KeyError:
            raise UnknownNodeError(f"unknown wallet address: {address}") from None

    def address_of(self, index: int) -> str:
        return self._addresses[index]

    def has_node(self, address: str) -> bool:
        return address in self._index

    def neighbors(self, index: int) -> np.ndarray:
        return self._neighbors[index]

    def degree_of(self, index: int) -> int:
        return int(self._neighbors[index].size)

    def node(self, address: str) -> WalletNode:
        i = self.index_of(address)
        features = {
            name: float(self.X_raw[i, j]) for j, name in enumerate(self.feature_schema)
        }
        return WalletNode(
            address=address,
            features=features,
            class_label=self._class_labels[i],
            time_step=self._time_steps[i],
        )

    def class_label_of(self, index: int) -> str | None:
        return self._class_labels[index]

    def time_step_of(self, index: int) -> int | None:
        return self._time_steps[index]

    # -- structural operations ----------------------------------------------

    def ego_network(self, center: str, k: int) -> EgoNetwork:
        """Exact k-hop closed neighborhood under undirected adjacency."""
        if k < 1:
            raise ValueError(f"hop radius must be >= 1, got {k}")
        c = self.index_of(center)
        seen = {c}
        frontier = [c]
        for _ in range(k):
            nxt = []
            for u in frontier:
                for v in self._neighbors[u]:
                    v = int(v)
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            if not nxt:
                break
            frontier = nxt
        members = frozenset(self._addresses[i] for i in seen)
        induced = tuple(
            e for e in self.edges if e.src in members and e.dst in members
        )
        return EgoNetwork(
            center=center,
            k=k,
            member_nodes=members,
            induced_edges=induced,
            member_indices=np.array(sorted(seen), dtype=np.int64),
        )

    def normalized_adjacency(self) -> sp.csr_matrix:
        """Symmetrically normalized adjacency with self-loops over the undirected view."""
        if self.n_nodes == 0:
            raise IngestError("graph is empty")
        n = self.n_nodes
        rows, cols = [], []
        for i, nbrs in enumerate(self._neighbors):
            rows.extend([i] * (len(nbrs) + 1))
            cols.extend(int(v) for v in nbrs)
            cols.append(i)
        a_hat = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
        )
        deg = np.asarray(a_hat.sum(axis=1)).ravel()
        d_inv_sqrt = 1.0 / np.sqrt(deg)
        d = sp.diags(d_inv_sqrt)
        return (d @ a_hat @ d).tocsr()

    def standardize_features(self) -> StandardizedFeatures:
        """Z-score each feature column; constant columns map to all zeros."""
        if self.n_nodes == 0:
            raise IngestError("graph is empty")
        mean = self.X_raw.mean(axis=0)
        std = self.X_raw.std(axis=0)
        safe = np.where(std > 0, std, 1.0)
        X = (self.X_raw - mean) / safe
        X[:, std == 0] = 0.0
        return StandardizedFeatures(X=X, mean=mean.copy(), std=np.where(std > 0, std, 0.0))

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str) -> str:
        """Write the graph to a directory; returns a content digest."""
        os.makedirs(directory, exist_ok=True)
        meta = {
            "version": GRAPH_FORMAT_VERSION,
            "feature_schema": list(self.feature_schema),
            "addresses": list(self._addresses),
            "class_labels": list(self._class_labels),
            "time_steps": list(self._time_steps),
            "edges": [
                [e.src, e.dst, e.btc_mean, e.btc_median, e.btc_max]
                for e in self.edges
            ],
        }
        with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, separators=(",", ":"))
        np.save(os.path.join(directory, "features.npy"), self.X_raw)
        return self.digest(directory)

    @staticmethod
    def digest(directory: str) -> str:
        h = hashlib.sha256()
        for name in ("meta.json", "features.npy"):
            with open(os.path.join(directory, name), "rb") as fh:
                h.update(fh.read())
        return h.hexdigest()

    @classmethod
    def load(cls, directory: str) -> "TransactionGraph":
        meta_path = os.path.join(directory, "meta.json")
        if not os.path.exists(meta_path):
            raise IngestError(f"no persisted graph at {directory}")
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("version") != GRAPH_FORMAT_VERSION:
            raise IngestError(f"unsupported graph format version: {meta.get('version')}")
        X = np.load(os.path.join(directory, "features.npy"))
        edges = [TxEdge(s, d, m, md, mx) for s, d, m, md, mx in meta["edges"]]
        return cls(
            meta["feature_schema"],
            meta["addresses"],
            X,
            meta["class_labels"],
            [None if t is None else int(t) for t in meta["time_steps"]],
            edges,
        )

    def schema_hash(self) -> str:
        payload = json.dumps(list(self.feature_schema)).encode()
        return hashlib.sha256(payload).hexdigest()


def default_node_schema_map(header: list[str]) -> dict[str, str]:
    """Identity mapping for recognized node columns; everything else ignored."""
    known = set(_NODE_SPECIAL_COLUMNS) | set(CANONICAL_FEATURES)
    return {h: h for h in header if h in known}


def default_edge_schema_map(header: list[str]) -> dict[str, str]:
    return {h: h for h in header if h in _EDGE_COLUMNS}


def _parse_cell(raw: str) -> float | None:
    raw = raw.strip()
    if not raw or raw.upper() in ("NA", "N/A", "NAN", "NULL", "NONE"):
        return None
    try:
        value = float(raw)
    except ValueError:
        return None
    if not np.isfinite(value):
        return None
    return value


def _read_rows(path: str, what: str):
    if not os.path.exists(path):
        raise IngestError(f"{what} file not found: {path}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return [], []
            return list(reader.fieldnames), list(reader)
    except OSError as exc:
        raise IngestError(f"cannot read {what} file {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise IngestError(f"{what} file {path} is not valid UTF-8 CSV: {exc}") from exc


def ingest(
    nodes_path: str,
    edges_path: str,
    schema_map: dict | None = None,
    on_duplicate: str = "error",
) -> tuple[TransactionGraph, IngestReport]:
    """Load node/edge CSVs into an immutable TransactionGraph.

    ``schema_map`` is ``{"nodes": {header: canonical}, "edges": {header: canonical}}``;
    unmapped columns are ignored. Missing feature cells are imputed to the
    column mean (so they standardize to zero) and counted per column.
    ``on_duplicate`` is ``"error"`` (default) or ``"skip"`` which drops
    repeated addresses and counts them in the report.
    """
    if on_duplicate not in ("error", "skip"):
        raise ValueError(f"on_duplicate must be 'error' or 'skip', got {on_duplicate!r}")
    report = IngestReport()

    node_header, node_rows = _read_rows(nodes_path, "nodes")
    edge_header, edge_rows = _read_rows(edges_path, "edges")

    node_map = dict((schema_map or {}).get("nodes") or default_node_schema_map(node_header))
    edge_map = dict((schema_map or {}).get("edges") or default_edge_schema_map(edge_header))

    if "address" not in node_map.values():
        raise IngestError("node schema map must cover the 'address' column")
    if edge_rows and not {"src", "dst"} <= set(edge_map.values()):
        raise IngestError("edge schema map must cover 'src' and 'dst' columns")

    addr_col = next(h for h, c in node_map.items() if c == "address")
    class_col = next((h for h, c in node_map.items() if c == "class_label"), None)
    time_col = next((h for h, c in node_map.items() if c == "time_step"), None)
    feature_cols = {
        c: h
        for h, c in node_map.items()
        if c not in _NODE_SPECIAL_COLUMNS
    }
    schema = [f for f in CANONICAL_FEATURES if f in feature_cols]
    schema += [f for f in feature_cols if f not in schema]

    report.node_rows = len(node_rows)
    addresses: list[str] = []
    class_labels: list[str | None] = []
    time_steps: list[int | None] = []
    cells: list[list[float | None]] = []
    seen = set()
    for row in node_rows:
        address = (row.get(addr_col) or "").strip()
        if not address:
            report.warn("blank_address")
            continue
        if address in seen:
            if on_duplicate == "error":
                raise IngestError(f"duplicate wallet address: {address}")
            report.duplicates_rejected += 1
            continue
        seen.add(address)
        addresses.append(address)

        label = None
        if class_col is not None:
            raw = (row.get(class_col) or "").strip().lower()
            if raw:
                label = _CLASS_ALIASES.get(raw)
                if label is None:
                    report.warn("unknown_class_label")
        class_labels.append(label)

        step = None
        if time_col is not None:
            parsed = _parse_cell(row.get(time_col) or "")
            if parsed is not None:
                step = int(parsed)
        time_steps.append(step)

        cells.append([_parse_cell(row.get(feature_cols[f]) or "") for f in schema])

    if not addresses:
        raise IngestError(f"no nodes loaded from {nodes_path}")
    report.nodes_loaded = len(addresses)

    X = np.zeros((len(addresses), len(schema)))
    for j, name in enumerate(schema):
        col = [row[j] for row in cells]
        present = [v for v in col if v is not None]
        fill = float(np.mean(present)) if present else 0.0
        missing = 0
        for i, v in enumerate(col):
            if v is None:
                X[i, j] = fill
                missing += 1
            else:
                X[i, j] = v
        if missing:
            report.imputed_cells[name] = missing

    if all(f in schema for f in ("total_txs", "num_txs_as_sender", "num_txs_as_receiver")):
        t = X[:, schema.index("total_txs")]
        s = X[:, schema.index("num_txs_as_sender")]
        r = X[:, schema.index("num_txs_as_receiver")]
        bad = int(np.sum(np.abs(t - (s + r)) > 1e-9))
        if bad:
            report.warn("total_txs_mismatch", bad)
    if "degree" in schema:
        d = X[:, schema.index("degree")]
        bad = int(np.sum((d < 0) | (np.abs(d - np.round(d)) > 1e-9)))
        if bad:
            report.warn("degree_not_count", bad)

    report.edge_rows = len(edge_rows)
    src_col = next((h for h, c in edge_map.items() if c == "src"), None)
    dst_col = next((h for h, c in edge_map.items() if c == "dst"), None)
    stat_cols = {c: h for h, c in edge_map.items() if c in ("btc_mean", "btc_median", "btc_max")}
    known = set(addresses)
    edges: list[TxEdge] = []
    for row in edge_rows:
        src = (row.get(src_col) or "").strip() if src_col else ""
        dst = (row.get(dst_col) or "").strip() if dst_col else ""
        if src not in known or dst not in known:
            report.edges_dropped += 1
            continue
        stats = {}
        for name in ("btc_mean", "btc_median", "btc_max"):
            col = stat_cols.get(name)
            value = _parse_cell(row.get(col) or "") if col else None
            stats[name] = 0.0 if value is None else value
        if any(stats[k] < 0 for k in stats):
            report.warn("negative_edge_stat")
        if stats["btc_median"] > stats["btc_max"] or stats["btc_mean"] > stats["btc_max"]:
            report.warn("edge_stat_order")
        edges.append(TxEdge(src=src, dst=dst, **stats))
    report.edges_loaded = len(edges)

    graph = TransactionGraph(schema, addresses, X, class_labels, time_steps, edges)
    return graph, report
