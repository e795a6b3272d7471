"""Analyst-narrative generation: prompt assembly, chat backend, 3-part parser.

The rendered prompt is the stored scaffold with four slots filled. Responses
come either from a configurable chat-completion endpoint or from a
deterministic offline stub, and are cached by (node, weights, template
version) so reruns never touch the network.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass

from .errors import NarrationError
from .explain import ExplanationWeights, format_weight
from .graph import WalletNode
from .template import PLACEHOLDERS, PROMPT_TEMPLATE, TEMPLATE_VERSION

# Raw statistics rendered into the prompt's data block, in display order.
PRIMARY_STATS = (
    "total_txs",
    "btc_received_total",
    "btc_sent_total",
    "num_txs_as_sender",
    "num_txs_as_receiver",
    "btc_transacted_total",
    "fees_total",
    "degree",
)

DEGENERATE_NOTICE = "note: degenerate explanation, no feature carried weight"


@dataclass(frozen=True)
class FraudType:
    name: str
    definition: str


@dataclass(frozen=True)
class FraudTypeCatalog:
    types: tuple[FraudType, ...]

    def __post_init__(self):
        if not self.types:
            raise ValueError("fraud-type catalog must not be empty")
        names = [t.name for t in self.types]
        if len(set(names)) != len(names):
            raise ValueError("fraud-type names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.types)


# Reconstructed working set; override via config when a jurisdiction needs more.
DEFAULT_CATALOG = FraudTypeCatalog(
    (
        FraudType("Ponzi scheme", "returns to early investors paid from new deposits rather than profits"),
        FraudType("rug pull", "developers drain pooled funds and abandon the project"),
        FraudType("money laundering", "layering/structuring funds through wallets to obscure their origin"),
        FraudType("wire fraud", "misrepresentation of an offering to obtain funds electronically"),
    )
)


@dataclass(frozen=True)
class PromptBundle:
    node_id: str
    formatted_weights: tuple[str, ...]
    formatted_data: tuple[str, ...]
    fraud_types: tuple[str, ...]
    rendered_prompt: str
    weights_hash: str


@dataclass(frozen=True)
class Explanation:
    node_id: str
    behavior_analysis: str
    fraud_classification: str
    fairness_judgment: str
    raw_response: str
    model_name: str
    created_at: str
    source: str  # "llm" | "offline_stub"
    parse_failed: bool = False

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "behavior_analysis": self.behavior_analysis,
            "fraud_classification": self.fraud_classification,
            "fairness_judgment": self.fairness_judgment,
            "raw_response": self.raw_response,
            "model_name": self.model_name,
            "created_at": self.created_at,
            "source": self.source,
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Explanation":
        return cls(**doc)


@dataclass(frozen=True)
class NarratorConfig:
    backend: str = "stub"  # "stub" | "llm"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    api_key_env: str = "OPENAI_API_KEY"
    concurrency: int = 4
    top_features: int = 3

    def validate(self) -> "NarratorConfig":
        if self.backend not in ("stub", "llm"):
            raise ValueError(f"narrator backend must be 'stub' or 'llm', got {self.backend!r}")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        return self


def _format_value(name: str, value: float) -> str:
    if name == "degree" and abs(value - round(value)) < 1e-9:
        return str(int(round(value)))
    return repr(float(value))


def weights_digest(weights: ExplanationWeights) -> str:
    payload = json.dumps(
        {name: format_weight(v) for name, v in weights.weights.items()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def build_prompt(
    node: WalletNode,
    weights: ExplanationWeights,
    catalog: FraudTypeCatalog = DEFAULT_CATALOG,
    m: int = 3,
) -> PromptBundle:
    """Fill the prompt scaffold for one flagged wallet; fully deterministic."""
    top = weights.top(m)
    weight_lines = [f"{name}: {format_weight(v)}" for name, v in top]
    if all(v == 0.0 for v in weights.weights.values()):
        weight_lines.append(DEGENERATE_NOTICE)

    label = node.class_label
    data_lines = [
        f"Type: {label if label else 'N/A'}",
        f"Class Label: {label if label in ('licit', 'illicit') else 'N/A'}",
        f"Time Step: {node.time_step if node.time_step is not None else 'N/A'}",
        f"Lifetime (blocks): {repr(float(node.lifetime_blocks))}",
    ]
    for name in PRIMARY_STATS:
        if name in node.features:
            data_lines.append(f"{name}: {_format_value(name, node.features[name])}")

    rendered = PROMPT_TEMPLATE
    rendered = rendered.replace("{node_id}", node.address)
    rendered = rendered.replace(
        "{formatted_weights}", "\n".join(f"- {line}" for line in weight_lines)
    )
    prompt_data = data_lines[:4] + [f"- {line}" for line in data_lines[4:]]
    rendered = rendered.replace("{formatted_data}", "\n".join(prompt_data))
    rendered = rendered.replace("{fraud_types}", ", ".join(catalog.names))
    for placeholder in PLACEHOLDERS:
        if placeholder in rendered:
            raise AssertionError(f"unfilled placeholder {placeholder} in prompt")
    return PromptBundle(
        node_id=node.address,
        formatted_weights=tuple(weight_lines),
        formatted_data=tuple(data_lines),
        fraud_types=catalog.names,
        rendered_prompt=rendered,
        weights_hash=weights_digest(weights),
    )


# -- response parsing -----------------------------------------------------------

_SECTION_RE = re.compile(r"(?m)^\s*([123])[.)]\s*")


def parse_narrative(text: str):
    """Split a response into the three numbered sections, or None."""
    markers = {}
    for match in _SECTION_RE.finditer(text):
        num = int(match.group(1))
        expected = len(markers) + 1
        if num == expected and num not in markers:
            markers[num] = (match.start(), match.end())
        if len(markers) == 3:
            break
    if len(markers) != 3:
        return None
    parts = []
    bounds = [markers[1], markers[2], markers[3]]
    for i, (_, body_start) in enumerate(bounds):
        end = bounds[i + 1][0] if i + 1 < len(bounds) else len(text)
        parts.append(text[body_start:end].strip())
    if not all(parts):
        return None
    return tuple(parts)


# -- backends ------------------------------------------------------------------


def stub_response(bundle: PromptBundle) -> str:
    """Deterministic three-part narrative assembled from the bundle itself."""
    top_line = bundle.formatted_weights[0] if bundle.formatted_weights else "none: 0.000e+00"
    top_feature = top_line.split(":")[0]
    stats = {
        line.split(":")[0]: line.split(":", 1)[1].strip()
        for line in bundle.formatted_data
    }
    sent = float(stats.get("btc_sent_total", "0") or 0)
    received = float(stats.get("btc_received_total", "0") or 0)
    if top_feature == DEGENERATE_NOTICE.split(":")[0]:
        behavior = (
            "The explanation stage produced no informative feature weights for "
            f"wallet {bundle.node_id}, so the flag rests on the anomaly score alone."
        )
        classification = (
            "No fraud type can be assigned from the available evidence; "
            "the behavior appears normal pending better attribution."
        )
    else:
        behavior = (
            f"The anomaly model weighted `{top_feature}` most heavily for wallet "
            f"{bundle.node_id}. The wallet reports btc_sent_total={sent} and "
            f"btc_received_total={received}, and the weighted features diverge "
            "from the neighborhood's typical profile."
        )
        if sent == 0.0 and received > 0.0:
            classification = (
                "The inflow-only pattern is most consistent with hoarding, as seen "
                "in a Ponzi scheme accumulation phase."
            )
        else:
            classification = (
                "The turnover pattern is most consistent with structuring or "
                "layering in a money laundering pattern."
            )
    fairness = (
        "The flag follows from the cited features rather than protected or "
        "irrelevant attributes; the designation warrants further investigation "
        "by a human reviewer."
    )
    return f"1. {behavior}\n2. {classification}\n3. {fairness}"


def _post_chat(url, payload, headers, timeout):
    import requests

    return requests.post(url, json=payload, headers=headers, timeout=timeout)


def llm_response(
    prompt: str,
    config: NarratorConfig,
    transport=None,
    sleep=time.sleep,
) -> str:
    """One chat-completion round trip with bounded retries on transient failures."""
    import requests

    transport = transport or _post_chat
    url = config.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_error = None
    for attempt in range(config.max_retries + 1):
        try:
            response = transport(url, payload, headers, config.timeout_s)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = f"transport failure: {exc}"
            if attempt < config.max_retries:
                sleep(config.backoff_s * (2**attempt))
            continue
        status = response.status_code
        if status in (401, 403):
            raise NarrationError(f"authentication failed (HTTP {status})")
        if status == 429 or status >= 500:
            last_error = f"HTTP {status}"
            if attempt < config.max_retries:
                sleep(config.backoff_s * (2**attempt))
            continue
        if status != 200:
            raise NarrationError(f"chat endpoint rejected the request (HTTP {status})")
        try:
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise NarrationError(f"malformed chat response: {exc}") from exc
    raise NarrationError(
        f"chat endpoint unavailable after {config.max_retries + 1} attempts ({last_error})"
    )


# -- cache ------------------------------------------------------------------------


class ResponseCache:
    """Thread-safe narrative cache, optionally persisted one JSON file per key."""

    def __init__(self, directory: str | None = None):
        self.directory = directory
        if directory:
            os.makedirs(directory, exist_ok=True)
        self._memory: dict[str, dict] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(node_id: str, weights_hash: str, template_version: str) -> str:
        raw = f"{node_id}|{weights_hash}|{template_version}"
        return hashlib.sha256(raw.encode()).hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, f"{key}.json")

    def get(self, key: str) -> dict | None:
        with self._lock:
            if key in self._memory:
                return dict(self._memory[key])
            if self.directory:
                path = self._path(key)
                if os.path.exists(path):
                    with open(path, encoding="utf-8") as fh:
                        doc = json.load(fh)
                    self._memory[key] = doc
                    return dict(doc)
        return None

    def put(self, key: str, doc: dict) -> None:
        with self._lock:
            self._memory[key] = dict(doc)
            if self.directory:
                with open(self._path(key), "w", encoding="utf-8") as fh:
                    json.dump(doc, fh, indent=2, sort_keys=True)


# -- top-level narrate ----------------------------------------------------------------


def narrate(
    bundle: PromptBundle,
    config: NarratorConfig | None = None,
    cache: ResponseCache | None = None,
    transport=None,
    sleep=time.sleep,
    clock=None,
) -> Explanation:
    """Produce the three-part narrative for one prompt bundle.

    Cache hits return the stored record without any backend call. Parse
    failures are recorded, never raised; transport failures raise
    NarrationError after retries.
    """
    config = (config or NarratorConfig()).validate()
    cache_key = ResponseCache.key(bundle.node_id, bundle.weights_hash, TEMPLATE_VERSION)
    if cache is not None:
        stored = cache.get(cache_key)
        if stored is not None:
            return Explanation.from_dict(stored)

    if config.backend == "stub":
        raw = stub_response(bundle)
        source = "offline_stub"
        model_name = "offline-stub"
    else:
        raw = llm_response(bundle.rendered_prompt, config, transport=transport, sleep=sleep)
        source = "llm"
        model_name = config.model

    created_at = (clock() if clock else time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    parsed = parse_narrative(raw)
    if parsed is None:
        explanation = Explanation(
            node_id=bundle.node_id,
            behavior_analysis="",
            fraud_classification="",
            fairness_judgment="",
            raw_response=raw,
            model_name=model_name,
            created_at=created_at,
            source=source,
            parse_failed=True,
        )
    else:
        explanation = Explanation(
            node_id=bundle.node_id,
            behavior_analysis=parsed[0],
            fraud_classification=parsed[1],
            fairness_judgment=parsed[2],
            raw_response=raw,
            model_name=model_name,
            created_at=created_at,
            source=source,
        )
    if cache is not None:
        cache.put(cache_key, explanation.to_dict())
    return explanation


def save_explanation(explanation: Explanation, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{explanation.node_id}.narrative.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(explanation.to_dict(), fh, indent=2, sort_keys=True)
    return path


def load_explanation(path: str) -> Explanation:
    with open(path, encoding="utf-8") as fh:
        return Explanation.from_dict(json.load(fh))
