"""Deterministic prompt rendering for every supported prompt format.

Formats: simple, direct_qa, artifacts, qa_finetune, def_gen, def_eval.
Templates live under templates/ with ``{{slot}}`` placeholders and are filled
byte-for-byte; the same files double as the documentation of each format.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

from .corpus import AnnotatedInstance, ArtifactEntry
from .lexicon import CandidateSet, LexiconIndex, stable_hash

PROMPT_FORMATS = ("simple", "direct_qa", "artifacts", "qa_finetune", "def_gen", "def_eval")
GRANULARITIES = ("names", "names_defs", "names_lu_defs", "names_defs_lu_defs")

# Answer schemas, by what the decoder must look for.
SCHEMA_FRAME_NAME = "frame_name_json"
SCHEMA_FRAME_OPTION = "frame_option_json"
SCHEMA_DEF_OPTION = "def_option_json"
SCHEMA_ORDINAL = "ordinal_answer"
# Extensions beyond the identification schemas: qa_finetune answers with a bare
# option letter after the cue; def_gen answers with a {"frame", "definition"} object.
SCHEMA_LETTER = "letter_answer"
SCHEMA_DEFINITION = "definition_json"

_FORMAT_SCHEMAS = {
    "simple": SCHEMA_FRAME_NAME,
    "direct_qa": SCHEMA_FRAME_OPTION,
    "artifacts": SCHEMA_ORDINAL,
    "qa_finetune": SCHEMA_LETTER,
    "def_gen": SCHEMA_DEFINITION,
    "def_eval": SCHEMA_DEF_OPTION,
}

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


class PromptError(Exception):
    pass


class EmptyCandidatesError(PromptError):
    pass


@dataclass(frozen=True)
class PromptConfig:
    format: str = "direct_qa"
    granularity: str = "names_lu_defs"
    shots: int = 0
    seed: int = 0
    # None = include definitions whole; otherwise truncate at this many chars
    # and append the ellipsis marker.
    definition_char_budget: int | None = None

    def __post_init__(self):
        if self.format not in PROMPT_FORMATS:
            raise PromptError(f"unknown prompt format {self.format!r}")
        if self.granularity not in GRANULARITIES:
            raise PromptError(f"unknown granularity {self.granularity!r}")
        if self.shots < 0:
            raise PromptError("shots must be >= 0")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    label_map: dict[str, str]
    expected_answer_schema: str
    # Decode/oracle plumbing, not part of the prompt text.
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExemplarBlock:
    """Demonstration examples for few-shot prompts, selected once per run."""

    exemplars: tuple[tuple[AnnotatedInstance, str | None], ...]
    seed: int

    def instances(self) -> tuple[AnnotatedInstance, ...]:
        return tuple(inst for inst, _ in self.exemplars)

    def rendered(self) -> bool:
        return all(text is not None for _, text in self.exemplars)


def option_label(i: int) -> str:
    """A, B, ..., Z, AA, AB, ... for candidate lists past 26 entries."""
    if i < 26:
        return _LETTERS[i]
    return _LETTERS[i // 26 - 1] + _LETTERS[i % 26]


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = Path(__file__).parent / "templates" / f"{name}.txt"
    if not path.exists():
        raise PromptError(f"no template for format {name!r}")
    return path.read_bytes().decode("utf-8")


def _fill(template: str, slots: dict[str, str]) -> str:
    out = template
    for key, value in slots.items():
        out = out.replace("{{" + key + "}}", value)
    if "{{" in out:
        start = out.index("{{")
        raise PromptError(f"unfilled template slot near {out[start:start + 30]!r}")
    return out


def _display_def(text: str, config: PromptConfig) -> str:
    budget = config.definition_char_budget
    if budget is not None and len(text) > budget:
        return text[:budget].rstrip() + " ...."
    return text


def _lu_display(candidate, fallback_lemma: str, fallback_pos: str) -> str:
    lemma = candidate.lemma or fallback_lemma
    pos = candidate.pos or fallback_pos
    return f"{lemma}.{pos}"


def _frame_line(candidate, instance: AnnotatedInstance, config: PromptConfig) -> str:
    """One entry of the Simple prompt's Frames: block, per granularity."""
    parts = [candidate.frame_name]
    if config.granularity in ("names_defs", "names_defs_lu_defs"):
        parts.append(f"Frame Definition : {_display_def(candidate.frame_definition, config)}")
    if config.granularity in ("names_lu_defs", "names_defs_lu_defs"):
        lu = _lu_display(candidate, instance.target_lemma, instance.target_pos)
        parts.append(
            f"Lexical Unit Definition : {lu}: {_display_def(candidate.lu_sense_definition, config)}"
        )
    return " ; ".join(parts)


def _senses_block(candidates: CandidateSet, instance: AnnotatedInstance, config: PromptConfig) -> str:
    if config.granularity not in ("names_lu_defs", "names_defs_lu_defs"):
        return ""
    lines = ["The different senses of this word are"]
    for i, cand in enumerate(candidates.candidates, start=1):
        lu = _lu_display(cand, instance.target_lemma, instance.target_pos)
        lines.append(f"{i}. {lu}: {_display_def(cand.lu_sense_definition, config)}")
    frames = ", ".join(f"'{c.frame_name}'" for c in candidates.candidates)
    lines.append(f"These senses can be related to the frames: {frames} respectively")
    return "\n".join(lines) + "\n"


def _option_lines(candidates: CandidateSet, config: PromptConfig) -> tuple[list[str], dict[str, str]]:
    lines: list[str] = []
    label_map: dict[str, str] = {}
    for i, cand in enumerate(candidates.candidates):
        label = option_label(i)
        label_map[label] = cand.frame_name
        if config.granularity in ("names_defs", "names_defs_lu_defs"):
            lines.append(
                f"{label}. Frame: {cand.frame_name} - {_display_def(cand.frame_definition, config)}"
            )
        else:
            lines.append(f"{label}. Frame: {cand.frame_name}")
    return lines, label_map


def _exemplars_text(exemplars: ExemplarBlock | None, query: AnnotatedInstance | None) -> str:
    if exemplars is None or not exemplars.exemplars:
        return ""
    if not exemplars.rendered():
        raise PromptError("exemplar block was not rendered; call bind_exemplars first")
    if query is not None:
        for inst, _ in exemplars.exemplars:
            if inst.instance_id == query.instance_id:
                raise PromptError(
                    f"exemplar {inst.instance_id!r} is also the query instance"
                )
    return "\n" + "\n\n".join(text for _, text in exemplars.exemplars) + "\n"


def _gold_label(label_map: dict[str, str], gold_frame: str) -> str | None:
    for label, frame in label_map.items():
        if frame == gold_frame:
            return label
    return None


def render(
    instance: AnnotatedInstance,
    candidates: CandidateSet,
    config: PromptConfig,
    definitions: dict[str, str] | None = None,
    exemplars: ExemplarBlock | None = None,
) -> RenderedPrompt:
    """Render the prompt for one instance; pure given its arguments.

    ``definitions`` overrides the displayed frame definitions (def_eval source
    swapping); it must cover every candidate frame for def_eval prompts.
    """
    if config.format == "artifacts":
        raise PromptError("artifact prompts are rendered from ArtifactEntry via render_artifacts")
    if config.format == "def_gen":
        raise PromptError("definition-generation prompts are rendered via render_def_gen")
    if not candidates.candidates:
        raise EmptyCandidatesError(
            f"instance {instance.instance_id!r}: empty candidate set for format {config.format!r}"
        )

    body, label_map = _render_body(instance, candidates, config, definitions)
    text = _assemble(config, body, _exemplars_text(exemplars, instance))
    meta = {
        "instance_id": instance.instance_id,
        "gold_frame": instance.gold_frame,
        "gold_label": _gold_label(label_map, instance.gold_frame),
        "candidate_frames": list(candidates.frame_names()),
        "ordering_seed": candidates.ordering_seed,
    }
    return RenderedPrompt(
        text=text,
        label_map=label_map,
        expected_answer_schema=_FORMAT_SCHEMAS[config.format],
        meta=meta,
    )


def _render_body(
    instance: AnnotatedInstance,
    candidates: CandidateSet,
    config: PromptConfig,
    definitions: dict[str, str] | None,
) -> tuple[dict[str, str], dict[str, str]]:
    """Return (slot dict for the query body, label map)."""
    target = instance.target_lemma
    if config.format == "simple":
        lines = [_frame_line(c, instance, config) for c in candidates.candidates]
        return (
            {"sentence": instance.sentence, "target": target, "frame_lines": "\n".join(lines)},
            {},
        )
    if config.format == "direct_qa":
        option_lines, label_map = _option_lines(candidates, config)
        return (
            {
                "sentence": instance.sentence,
                "target": target,
                "senses_block": _senses_block(candidates, instance, config),
                "options_block": "\n".join(option_lines),
            },
            label_map,
        )
    if config.format == "qa_finetune":
        lines = []
        label_map = {}
        for i, cand in enumerate(candidates.candidates):
            label = option_label(i)
            label_map[label] = cand.frame_name
            lu = _lu_display(cand, instance.target_lemma, instance.target_pos)
            lines.append(
                f"{label}. Frame: {cand.frame_name} - "
                f"{_display_def(cand.frame_definition, config)} ; "
                f"Lexical Unit Definition : {lu} - "
                f"{_display_def(cand.lu_sense_definition, config)}"
            )
        return (
            {
                "sentence": instance.sentence,
                "target": target,
                "options_block": "\n".join(lines),
                "label_choices": "/".join(label_map),
            },
            label_map,
        )
    if config.format == "def_eval":
        lines = []
        label_map = {}
        for i, cand in enumerate(candidates.candidates):
            label = option_label(i)
            label_map[label] = cand.frame_name
            if definitions is not None:
                if cand.frame_name not in definitions:
                    raise PromptError(
                        f"no definition for frame {cand.frame_name!r} in the supplied source"
                    )
                definition = definitions[cand.frame_name]
            else:
                definition = cand.frame_definition
            lines.append(f"{label}. {_display_def(definition, config)}")
        return (
            {
                "sentence": instance.sentence,
                "target": target,
                "options_block": "\n".join(lines),
            },
            label_map,
        )
    raise PromptError(f"unsupported format {config.format!r}")


def _assemble(config: PromptConfig, slots: dict[str, str], exemplars_text: str) -> str:
    template = load_template(config.format)
    if config.format == "qa_finetune":
        # Training prompts carry no demonstration block.
        return _fill(template, slots)
    return _fill(template, {**slots, "exemplars": exemplars_text})


def render_artifacts(entry: ArtifactEntry) -> RenderedPrompt:
    """Render the fixed 43-option artifact prompt; schema is an ordinal answer."""
    lines = []
    label_map: dict[str, str] = {}
    for i, option in enumerate(entry.fixed_option_list, start=1):
        label_map[str(i)] = option
        lines.append(f"{i}. Frame: {option}")
    text = _fill(
        load_template("artifacts"),
        {"name": entry.name, "gloss": entry.gloss, "options_block": "\n".join(lines)},
    )
    return RenderedPrompt(
        text=text,
        label_map=label_map,
        expected_answer_schema=SCHEMA_ORDINAL,
        meta={
            "instance_id": f"artifact-{entry.name}",
            "gold_frame": entry.gold_frame,
            "gold_label": _gold_label(label_map, entry.gold_frame),
            "candidate_frames": list(entry.fixed_option_list),
            "ordering_seed": 0,
        },
    )


def render_def_gen(frame_name: str) -> RenderedPrompt:
    """Render the definition-generation prompt for a bare frame name."""
    text = _fill(load_template("def_gen"), {"frame_name": frame_name})
    return RenderedPrompt(
        text=text,
        label_map={},
        expected_answer_schema=SCHEMA_DEFINITION,
        meta={"instance_id": f"defgen-{frame_name}", "gold_frame": frame_name, "gold_label": None},
    )


# ---------------------------------------------------------------------------
# Few-shot exemplars


def select_exemplars(
    train: list[AnnotatedInstance],
    k: int,
    seed: int,
    diversity: bool = True,
) -> ExemplarBlock:
    """Pick k demonstration instances from the training pool, deterministically.

    With diversity on, no two exemplars share a gold frame as long as the pool
    has k distinct frames; otherwise the remainder is filled uniformly.
    """
    if k > len(train):
        raise PromptError(f"cannot select {k} exemplars from a pool of {len(train)}")
    rng = random.Random(stable_hash(f"exemplars\x00{seed}"))
    shuffled = list(train)
    rng.shuffle(shuffled)
    if not diversity:
        chosen = shuffled[:k]
    else:
        chosen = []
        seen_frames: set[str] = set()
        for inst in shuffled:
            if len(chosen) == k:
                break
            if inst.gold_frame not in seen_frames:
                chosen.append(inst)
                seen_frames.add(inst.gold_frame)
        if len(chosen) < k:
            chosen_ids = {inst.instance_id for inst in chosen}
            for inst in shuffled:
                if len(chosen) == k:
                    break
                if inst.instance_id not in chosen_ids:
                    chosen.append(inst)
                    chosen_ids.add(inst.instance_id)
    return ExemplarBlock(exemplars=tuple((inst, None) for inst in chosen), seed=seed)


def bind_exemplars(
    block: ExemplarBlock,
    index: LexiconIndex,
    config: PromptConfig,
    definitions: dict[str, str] | None = None,
    candidate_mode: str = "filtered",
) -> ExemplarBlock:
    """Render each exemplar's question/answer pair under the run's prompt config."""
    rendered: list[tuple[AnnotatedInstance, str]] = []
    for inst, _ in block.exemplars:
        cs = index.candidate_set(
            inst.target_lemma,
            inst.target_pos,
            mode=candidate_mode,
            gold_frame=inst.gold_frame,
            seed=config.seed,
            shuffle_key=inst.instance_id,
        )
        if not cs.candidates:
            raise EmptyCandidatesError(
                f"exemplar {inst.instance_id!r} has no candidates; pick another pool"
            )
        slots, label_map = _render_body(inst, cs, config, definitions)
        body = _body_only(config, slots)
        answer = _answer_line(config, label_map, inst.gold_frame)
        rendered.append((inst, body + "\n" + answer))
    return ExemplarBlock(exemplars=tuple(rendered), seed=block.seed)


def _body_only(config: PromptConfig, slots: dict[str, str]) -> str:
    """The per-instance part of a prompt (everything below the instruction header)."""
    if config.format == "simple":
        return (
            f"Sentence: {slots['sentence']}\n"
            f"Target Word: {slots['target']}\n\n"
            f"Frames:\n{slots['frame_lines']}\n\n"
            f"Which of the given frames best represents the meaning of the target word "
            f"{slots['target']} in the sentence above?"
        )
    if config.format == "direct_qa":
        return (
            f"Sentence: {slots['sentence']}\n"
            f"Target Word: {slots['target']}\n"
            f"{slots['senses_block']}"
            f"Which of the following frames best represents the meaning of the target word "
            f"{slots['target']} in the sentence above?\n"
            f"Options:\n{slots['options_block']}"
        )
    if config.format == "def_eval":
        return (
            f"Sentence: {slots['sentence']}\n\n"
            f"Target Word: {slots['target']}\n\n"
            f"Which of the following frame definitions best represents the meaning of the "
            f"target word {slots['target']} in the sentence above? \n"
            f"Frame Definitions :\n{slots['options_block']}"
        )
    raise PromptError(f"format {config.format!r} does not take few-shot exemplars")


def _answer_line(config: PromptConfig, label_map: dict[str, str], gold_frame: str) -> str:
    gold_label = _gold_label(label_map, gold_frame)
    if config.format == "simple":
        return json.dumps({"frame_Name": gold_frame})
    if gold_label is None:
        raise PromptError(f"gold frame {gold_frame!r} missing from exemplar options")
    if config.format == "direct_qa":
        return json.dumps({"frame_Option": gold_label, "frame_Name": gold_frame})
    if config.format == "def_eval":
        return json.dumps({"frame_definition_Option": gold_label})
    raise PromptError(f"format {config.format!r} does not take few-shot exemplars")
