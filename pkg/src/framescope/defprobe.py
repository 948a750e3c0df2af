"""Definition probing: generate frame definitions from names alone, then measure
their extrinsic utility by substituting them, name-free, into identification prompts.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from . import backends as backends_mod
from .backends import BackendConfig, BackendError, ResponseCache
from .corpus import FrameRecord
from .evalkit import EvalReport, RunResources, RunSpec, run_eval
from .parse import _json_candidates  # shared JSON repair machinery
from .promptkit import render_def_gen

logger = logging.getLogger(__name__)

GENERATION_RETRIES = 3
# The run fails outright if more than this fraction of frames end up missing.
MAX_MISSING_FRACTION = 0.05

DEFINITION_SOURCES = ("gold", "generated")


class DefprobeError(Exception):
    pass


@dataclass(frozen=True)
class GeneratedDefinition:
    frame_name: str
    definition: str
    generator_model: str
    prompt_fingerprint: str


def _decode_definition(raw_text: str, frame_name: str) -> str | None:
    """Pull the definition out of a {"frame", "definition"} reply, repair included."""
    for obj, _ in _json_candidates(raw_text):
        for key, value in obj.items():
            if isinstance(key, str) and key.casefold() == "definition" and isinstance(value, str):
                if value.strip():
                    return value.strip()
    return None


def generate_definitions(
    frames: list[FrameRecord],
    backend_config: BackendConfig,
    cache: ResponseCache | None = None,
    retries: int = GENERATION_RETRIES,
) -> tuple[list[GeneratedDefinition], list[str]]:
    """One generated definition per frame; frames that never parse are reported missing.

    Raises when more than MAX_MISSING_FRACTION of frames are missing.
    """
    results: list[GeneratedDefinition] = []
    missing: list[str] = []
    for frame in frames:
        prompt = render_def_gen(frame.name)
        fingerprint = hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()[:16]
        definition = None
        for attempt in range(retries):
            try:
                response = backends_mod.complete(prompt, backend_config, cache=cache if attempt == 0 else None)
            except BackendError as exc:
                logger.warning("definition generation failed for %s: %s", frame.name, exc)
                continue
            definition = _decode_definition(response.raw_text, frame.name)
            if definition is not None:
                break
        if definition is None:
            missing.append(frame.name)
            continue
        results.append(
            GeneratedDefinition(
                frame_name=frame.name,
                definition=definition,
                generator_model=backend_config.model_name,
                prompt_fingerprint=fingerprint,
            )
        )
    if frames and len(missing) > MAX_MISSING_FRACTION * len(frames):
        raise DefprobeError(
            f"definition generation missing {len(missing)}/{len(frames)} frames: {missing[:10]}"
        )
    if missing:
        logger.warning("definitions missing for %d frames: %s", len(missing), missing)
    return results, missing


def write_definitions(definitions: list[GeneratedDefinition], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for d in definitions:
            fh.write(
                json.dumps(
                    {
                        "frame_name": d.frame_name,
                        "definition": d.definition,
                        "generator_model": d.generator_model,
                        "prompt_fingerprint": d.prompt_fingerprint,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_definitions(path: Path) -> list[GeneratedDefinition]:
    out: list[GeneratedDefinition] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                GeneratedDefinition(
                    frame_name=rec["frame_name"],
                    definition=rec["definition"],
                    generator_model=rec.get("generator_model", ""),
                    prompt_fingerprint=rec.get("prompt_fingerprint", ""),
                )
            )
    return out


def eval_with_definitions(
    source: str,
    spec: RunSpec,
    resources: RunResources,
    generated: dict[str, str] | None = None,
    cache: ResponseCache | None = None,
    out_dir: Path | None = None,
) -> EvalReport:
    """Run identification with definition-only options from the chosen source.

    ``source`` is "gold" or "generated"; generated definitions come from the
    supplied mapping (or resources.definitions). Every candidate frame in the
    split must have a definition, checked before anything is queried.
    """
    if source not in DEFINITION_SOURCES:
        raise DefprobeError(f"unknown definitions source {source!r}; have {DEFINITION_SOURCES}")
    if source == "gold":
        definitions = {name: fr.definition for name, fr in resources.index.lexicon.frames.items()}
    else:
        definitions = generated if generated is not None else resources.definitions
        if definitions is None:
            raise DefprobeError("generated-definitions source requires a definitions mapping")

    needed: set[str] = set()
    for inst in resources.instances:
        cs = resources.index.candidate_set(
            inst.target_lemma, inst.target_pos, mode=spec.candidate_mode, gold_frame=inst.gold_frame
        )
        needed.update(cs.frame_names())
    uncovered = sorted(name for name in needed if not definitions.get(name, "").strip())
    if uncovered:
        raise DefprobeError(f"frames lacking a definition from source {source!r}: {uncovered}")

    def_eval_spec = replace(spec, prompt=replace(spec.prompt, format="def_eval"))
    def_resources = RunResources(
        index=resources.index,
        instances=resources.instances,
        train=resources.train,
        artifact_entries=resources.artifact_entries,
        definitions=definitions,
    )
    return run_eval(def_eval_spec, resources=def_resources, cache=cache, out_dir=out_dir)
