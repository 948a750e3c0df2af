"""Decode model output into frame predictions, strictest path first.

Every response yields exactly one Prediction; failures are encoded in
decode_path, never raised. The decode_path field records which repair step was
needed, so reports can show how much accuracy depends on repair.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .promptkit import (
    SCHEMA_DEF_OPTION,
    SCHEMA_FRAME_NAME,
    SCHEMA_FRAME_OPTION,
    SCHEMA_LETTER,
    SCHEMA_ORDINAL,
    RenderedPrompt,
)

DECODE_PATHS = ("clean_json", "repaired_json", "fuzzy_name", "ordinal", "logprob_argmax", "failed")

# Accepted JSON keys per schema, most specific first. Key matching is
# case-insensitive: the prompt tables use frame_Name/frame_Option while the
# running text shows the lowercase forms, and models produce both.
_SCHEMA_KEYS = {
    SCHEMA_FRAME_NAME: ("frame_name",),
    SCHEMA_FRAME_OPTION: ("frame_option", "frame_name"),
    SCHEMA_LETTER: ("frame_option", "frame_name"),
    SCHEMA_DEF_OPTION: ("frame_definition_option", "frame_option"),
}

_FENCE_RE = re.compile(r"```[a-zA-Z]*\n?|```")


class ParseContractError(Exception):
    """Violation of the decoding contract (not a model-output failure)."""


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    predicted_frame: str | None
    decode_path: str
    raw_text: str

    @property
    def failed(self) -> bool:
        return self.decode_path == "failed"


def _normalize_name(name: str) -> str:
    return re.sub(r"[_\s]+", " ", name).strip().casefold()


def _json_candidates(text: str):
    """Yield (obj, clean) for parseable JSON objects: whole text first, then embedded."""
    stripped = text.strip()
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict):
            yield obj, True
    except json.JSONDecodeError:
        pass
    defenced = _FENCE_RE.sub("", text)
    for source in (defenced, text):
        block = _first_json_object(source)
        if block is None:
            continue
        try:
            obj = json.loads(block)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield obj, False
            return


def _first_json_object(text: str) -> str | None:
    start = text.find("{")
    if start == -1:
        return None
    depth = 0
    in_str = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _get_key(obj: dict, wanted: str):
    for key, value in obj.items():
        if isinstance(key, str) and key.casefold() == wanted:
            return value
    return None


def _match_frame(value: str, frames: list[str]) -> tuple[str | None, bool]:
    """Match a frame name against the allowed list: exact, then normalized."""
    if value in frames:
        return value, True
    norm = _normalize_name(value)
    for frame in frames:
        if _normalize_name(frame) == norm:
            return frame, False
    return None, False


def _decode_json(obj: dict, prompt: RenderedPrompt) -> tuple[str | None, bool]:
    """Return (frame, exact) decoded from a JSON object, or (None, _)."""
    schema = prompt.expected_answer_schema
    frames = list(prompt.label_map.values()) or list(prompt.meta.get("candidate_frames", ()))
    for key in _SCHEMA_KEYS.get(schema, ()):
        value = _get_key(obj, key)
        if not isinstance(value, str) or not value.strip():
            continue
        value = value.strip()
        if key.endswith("option"):
            label = value.upper()
            if label in prompt.label_map:
                return prompt.label_map[label], True
            continue
        frame, exact = _match_frame(value, frames)
        if frame is not None:
            return frame, exact
    return None, False


def _scan_frame_name(text: str, frames: list[str]) -> str | None:
    """Whole-token scan for a candidate frame name in free text; earliest match wins."""
    best: tuple[int, str] | None = None
    for frame in frames:
        token_pattern = re.escape(frame).replace("_", r"[_\s]+")
        m = re.search(rf"(?<![A-Za-z0-9_]){token_pattern}(?![A-Za-z0-9_])", text, re.IGNORECASE)
        if m and (best is None or m.start() < best[0]):
            best = (m.start(), frame)
    return best[1] if best else None


def _scan_after_cue(text: str, pattern: str) -> str | None:
    """First regex match after the last 'Answer' cue, else first match anywhere."""
    cue = None
    for m in re.finditer(r"answer", text, re.IGNORECASE):
        cue = m.end()
    region = text[cue:] if cue is not None else text
    m = re.search(pattern, region)
    return m.group(1) if m else None


def parse_response(response, prompt: RenderedPrompt) -> Prediction:
    """Decode one model response; total and deterministic.

    Pipeline: strict whole-text JSON, then JSON embedded anywhere (code fences
    stripped), then schema-specific text scans (candidate frame names for the
    frame-name schema; the integer or letter after the answer cue for ordinal
    and letter schemas). Anything else is a failure.
    """
    if getattr(response, "label_logprobs", None):
        return decode_logprobs(
            response.label_logprobs, prompt.label_map, prompt.meta.get("instance_id", ""),
            raw_text=getattr(response, "raw_text", "") or "",
        )
    raw = getattr(response, "raw_text", None)
    if raw is None:
        raw = str(response)
    instance_id = prompt.meta.get("instance_id", "")
    schema = prompt.expected_answer_schema

    if schema == SCHEMA_ORDINAL:
        value = _scan_after_cue(raw, r"(?<!\d)(\d{1,2})(?!\d)")
        if value is not None and value in prompt.label_map:
            return Prediction(instance_id, prompt.label_map[value], "ordinal", raw)
        return Prediction(instance_id, None, "failed", raw)

    for obj, clean in _json_candidates(raw):
        frame, exact = _decode_json(obj, prompt)
        if frame is not None:
            if not exact:
                return Prediction(instance_id, frame, "fuzzy_name", raw)
            return Prediction(instance_id, frame, "clean_json" if clean else "repaired_json", raw)

    if schema == SCHEMA_FRAME_NAME:
        frames = list(prompt.meta.get("candidate_frames", ()))
        frame = _scan_frame_name(raw, frames)
        if frame is not None:
            return Prediction(instance_id, frame, "fuzzy_name", raw)
    elif schema == SCHEMA_LETTER:
        labels = sorted(prompt.label_map, key=len, reverse=True)
        alternatives = "|".join(re.escape(label) for label in labels)
        value = _scan_after_cue(raw, rf"\b({alternatives})\b")
        if value is not None:
            return Prediction(instance_id, prompt.label_map[value], "ordinal", raw)

    return Prediction(instance_id, None, "failed", raw)


def decode_logprobs(
    label_logprobs: dict[str, float],
    label_map: dict[str, str],
    instance_id: str = "",
    raw_text: str = "",
) -> Prediction:
    """Argmax over restricted label logprobs; ties break in label order (A before B)."""
    if not label_map:
        raise ParseContractError("decode_logprobs requires a non-empty label map")
    missing = [label for label in label_map if label not in label_logprobs]
    if missing:
        raise ParseContractError(f"logprobs missing labels: {missing}")
    best_label = None
    best_value = None
    for label in label_map:
        value = label_logprobs[label]
        if best_value is None or value > best_value:
            best_label, best_value = label, value
    return Prediction(instance_id, label_map[best_label], "logprob_argmax", raw_text)
