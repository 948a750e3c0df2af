"""Answer sources behind one interface: chat endpoints, logprob scorers, and a mock oracle.

The HTTP kinds speak the OpenAI-compatible chat-completions protocol, which
covers every hosted model this pipeline targets. The mock oracle makes the
whole pipeline testable offline: it answers in the prompt's own schema, either
always correctly, correctly with probability p, or from a fixed script.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .lexicon import stable_hash
from .promptkit import (
    SCHEMA_DEF_OPTION,
    SCHEMA_DEFINITION,
    SCHEMA_FRAME_NAME,
    SCHEMA_FRAME_OPTION,
    SCHEMA_LETTER,
    SCHEMA_ORDINAL,
    RenderedPrompt,
)

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("chat_http", "logprob_http", "mock_oracle")
ORACLE_MODES = ("always_gold", "accuracy_p", "scripted")

# Labels absent from the endpoint's top-k report get this floor logprob.
LOGPROB_FLOOR = -1e9

_BACKOFF_BASE = 0.5


class BackendError(Exception):
    """A request that could not produce a response (after retries)."""


class BackendConfigError(BackendError):
    pass


@dataclass(frozen=True)
class OraclePolicy:
    mode: str = "always_gold"
    p: float | None = None
    seed: int = 0
    script: dict[str, str] | None = None
    # Optional script of label->logprob maps for score_restricted.
    logprob_script: dict[str, dict[str, float]] | None = None

    def __post_init__(self):
        if self.mode not in ORACLE_MODES:
            raise BackendConfigError(f"unknown oracle mode {self.mode!r}")
        if self.mode == "accuracy_p":
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise BackendConfigError("accuracy_p oracle requires p in [0, 1]")
        if self.mode == "scripted" and self.script is None and self.logprob_script is None:
            raise BackendConfigError("scripted oracle requires a script")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock_oracle"
    endpoint_url: str = ""
    model_name: str = "mock"
    temperature: float = 0.0
    max_output_tokens: int = 64
    request_timeout: float = 30.0
    max_retries: int = 3
    parallelism: int = 1
    # Name of the environment variable holding the API key; never the key itself.
    api_key_env: str = ""
    oracle: OraclePolicy | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise BackendConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind in ("chat_http", "logprob_http") and not self.endpoint_url:
            raise BackendConfigError(f"backend kind {self.kind!r} requires endpoint_url")
        if self.kind == "mock_oracle" and self.oracle is None:
            raise BackendConfigError("mock_oracle backend requires an oracle policy")
        if self.temperature < 0:
            raise BackendConfigError("temperature must be >= 0")
        if self.parallelism < 1:
            raise BackendConfigError("parallelism must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        oracle = data.get("oracle")
        if oracle is not None and not isinstance(oracle, OraclePolicy):
            oracle = OraclePolicy(
                mode=oracle.get("mode", "always_gold"),
                p=oracle.get("p"),
                seed=int(oracle.get("seed", 0)),
                script=oracle.get("script"),
                logprob_script=oracle.get("logprob_script"),
            )
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__ and k != "oracle"}
        return cls(oracle=oracle, **known)


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str = ""
    label_logprobs: dict[str, float] | None = None
    usage: dict = field(default_factory=dict)
    latency: float = 0.0


def cache_key(prompt_text: str, model: str, temperature: float) -> str:
    material = f"{model}\x00{temperature!r}\x00{prompt_text}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL cache, content-addressed on (prompt text, model, temperature)."""

    def __init__(self, cache_dir: Path):
        self.path = Path(cache_dir) / "responses.jsonl"
        self._lock = threading.Lock()
        self._entries: dict[str, ModelResponse] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[rec["key"]] = ModelResponse(
                        raw_text=rec.get("raw_text", ""),
                        label_logprobs=rec.get("label_logprobs"),
                        usage=rec.get("usage", {}),
                        latency=rec.get("latency", 0.0),
                    )

    def get(self, key: str) -> ModelResponse | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, response: ModelResponse) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "key": key,
                            "raw_text": response.raw_text,
                            "label_logprobs": response.label_logprobs,
                            "usage": response.usage,
                            "latency": response.latency,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    def __len__(self) -> int:
        return len(self._entries)


def complete(prompt: RenderedPrompt, config: BackendConfig, cache: ResponseCache | None = None) -> ModelResponse:
    """One response per prompt: from cache, the mock oracle, or the endpoint (with retries)."""
    key = cache_key(prompt.text, config.model_name, config.temperature)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    if config.kind == "mock_oracle":
        response = _mock_complete(prompt, config.oracle)
    elif config.kind == "chat_http":
        response = _http_chat(prompt.text, config)
    else:
        raise BackendConfigError(f"complete() is not supported for kind {config.kind!r}")
    if cache is not None:
        cache.put(key, response)
    return response


def score_restricted(
    prompt: RenderedPrompt,
    labels: list[str],
    config: BackendConfig,
    cache: ResponseCache | None = None,
) -> dict[str, float]:
    """Next-token logprobs over exactly the requested labels.

    Labels must be single tokens under the endpoint's tokenization; only short
    all-letter/digit labels are accepted, which every standard tokenizer keeps
    whole. Labels the endpoint omits from its top-k report get a floor value.
    """
    for label in labels:
        if not (0 < len(label) <= 2 and label.isalnum()):
            raise BackendError(f"label {label!r} is not a safe single-token label")
    key = cache_key(f"logprobs\x00{','.join(labels)}\x00{prompt.text}", config.model_name, config.temperature)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None and hit.label_logprobs is not None:
            return dict(hit.label_logprobs)

    if config.kind == "mock_oracle":
        scores = _mock_logprobs(prompt, labels, config.oracle)
    elif config.kind == "logprob_http":
        scores = _http_logprobs(prompt.text, labels, config)
    else:
        raise BackendConfigError(f"score_restricted() is not supported for kind {config.kind!r}")

    if cache is not None:
        cache.put(key, ModelResponse(label_logprobs=scores))
    return scores


def renormalize(label_logprobs: dict[str, float]) -> dict[str, float]:
    """Softmax over the restricted label set; probabilities sum to 1."""
    if not label_logprobs:
        return {}
    peak = max(label_logprobs.values())
    exp = {label: math.exp(v - peak) for label, v in label_logprobs.items()}
    total = sum(exp.values())
    return {label: v / total for label, v in exp.items()}


# ---------------------------------------------------------------------------
# Mock oracle


def _instance_rng(policy: OraclePolicy, instance_id: str) -> random.Random:
    # Keyed per instance so results do not depend on completion order.
    return random.Random(stable_hash(f"oracle\x00{policy.seed}\x00{instance_id}"))


def _pick_answer(prompt: RenderedPrompt, policy: OraclePolicy) -> tuple[str | None, str | None]:
    """Return (label, frame) the oracle will answer with."""
    instance_id = prompt.meta.get("instance_id", "")
    gold_label = prompt.meta.get("gold_label")
    gold_frame = prompt.meta.get("gold_frame")
    rng = _instance_rng(policy, instance_id)
    correct = policy.mode == "always_gold" or (
        policy.mode == "accuracy_p" and rng.random() < policy.p
    )
    if correct:
        return gold_label, gold_frame
    if prompt.label_map:
        wrong_labels = [label for label in prompt.label_map if label != gold_label]
        if not wrong_labels:
            return gold_label, gold_frame
        label = rng.choice(wrong_labels)
        return label, prompt.label_map[label]
    candidates = [f for f in prompt.meta.get("candidate_frames", ()) if f != gold_frame]
    if not candidates:
        return gold_label, gold_frame
    return None, rng.choice(candidates)


def _mock_complete(prompt: RenderedPrompt, policy: OraclePolicy) -> ModelResponse:
    instance_id = prompt.meta.get("instance_id", "")
    if policy.mode == "scripted":
        if not policy.script or instance_id not in policy.script:
            raise BackendError(f"scripted oracle has no entry for instance {instance_id!r}")
        return ModelResponse(raw_text=policy.script[instance_id])

    label, frame = _pick_answer(prompt, policy)
    schema = prompt.expected_answer_schema
    if schema == SCHEMA_FRAME_NAME:
        text = json.dumps({"frame_Name": frame})
    elif schema == SCHEMA_FRAME_OPTION:
        text = json.dumps({"frame_Option": label, "frame_Name": frame})
    elif schema == SCHEMA_DEF_OPTION:
        text = json.dumps({"frame_definition_Option": label})
    elif schema == SCHEMA_ORDINAL:
        text = f"Answer: {label}"
    elif schema == SCHEMA_LETTER:
        text = str(label)
    elif schema == SCHEMA_DEFINITION:
        text = json.dumps({"frame": frame, "definition": f"A schematic situation evoked by {frame}."})
    else:
        raise BackendError(f"mock oracle cannot answer schema {schema!r}")
    return ModelResponse(raw_text=text, usage={"mock": True})


def _mock_logprobs(prompt: RenderedPrompt, labels: list[str], policy: OraclePolicy) -> dict[str, float]:
    instance_id = prompt.meta.get("instance_id", "")
    if policy.mode == "scripted" and policy.logprob_script is not None:
        if instance_id not in policy.logprob_script:
            raise BackendError(f"scripted oracle has no logprobs for instance {instance_id!r}")
        scripted = policy.logprob_script[instance_id]
        missing = [label for label in labels if label not in scripted]
        if missing:
            raise BackendError(f"scripted logprobs missing labels {missing}")
        return {label: scripted[label] for label in labels}
    label, _ = _pick_answer(prompt, policy)
    return {lab: (-0.05 if lab == label else -4.0) for lab in labels}


# ---------------------------------------------------------------------------
# OpenAI-compatible HTTP


def _headers(config: BackendConfig) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def _post_with_retries(body: dict, config: BackendConfig) -> dict:
    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            delay = _BACKOFF_BASE * (2 ** (attempt - 1))
            logger.warning("retrying %s in %.1fs (attempt %d)", config.endpoint_url, delay, attempt + 1)
            time.sleep(delay)
        try:
            resp = requests.post(
                config.endpoint_url,
                json=body,
                headers=_headers(config),
                timeout=config.request_timeout,
            )
        except requests.RequestException as exc:
            last_error = BackendError(f"request failed: {exc}")
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = BackendError(f"HTTP {resp.status_code} from {config.endpoint_url}")
            continue
        if resp.status_code != 200:
            raise BackendError(f"HTTP {resp.status_code} from {config.endpoint_url}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"malformed JSON reply: {exc}") from exc
    raise last_error if last_error else BackendError("request failed")


def _chat_body(prompt_text: str, config: BackendConfig) -> dict:
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    }


def _http_chat(prompt_text: str, config: BackendConfig) -> ModelResponse:
    started = time.monotonic()
    data = _post_with_retries(_chat_body(prompt_text, config), config)
    try:
        text = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed endpoint reply: missing choices[0].message.content ({exc})") from exc
    return ModelResponse(
        raw_text=text or "",
        usage=data.get("usage", {}),
        latency=time.monotonic() - started,
    )


def _http_logprobs(prompt_text: str, labels: list[str], config: BackendConfig) -> dict[str, float]:
    body = _chat_body(prompt_text, config)
    body["max_tokens"] = 1
    body["logprobs"] = True
    body["top_logprobs"] = 20
    data = _post_with_retries(body, config)
    try:
        top = data["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"endpoint lacks next-token logprob support: {exc}") from exc
    scores = {label: LOGPROB_FLOOR for label in labels}
    for item in top:
        token = str(item.get("token", "")).strip()
        if token in scores and scores[token] == LOGPROB_FLOOR:
            scores[token] = float(item["logprob"])
    return scores
