"""Training-data export: interchange JSONL in, multiple-choice QA prompts out.

Reads the interchange files produced by the evaluation pipeline's `corpus
convert` (frames.jsonl / lexical_units.jsonl and <dataset>_<split>.jsonl; see
its docs/formats.md) and writes one QA example per instance. Candidates are
labeled alphabetically and the prompt ends with the literal answer cue, so the
loss can be computed at the single next-token position.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
# Letter labels must stay single tokens; candidate lists are cut to 26 entries.
MAX_OPTIONS = len(LETTERS)

PROMPT_HEADER = (
    "Select the most appropriate frame that matches the meaning of the target word "
    "in the sentence. (This is a frame semantic parsing task.)"
)


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class FinetuneExample:
    """One QA training example; the prompt ends with 'Answer:' and the gold label follows."""

    instance_id: str
    prompt_text: str
    gold_label: str
    label_set: tuple[str, ...]
    label_frames: dict[str, str]
    gold_frame: str

    def __post_init__(self):
        if self.gold_label not in self.label_set:
            raise ExportError(f"{self.instance_id}: gold label {self.gold_label!r} not in label set")
        if not self.prompt_text.endswith("Answer:"):
            raise ExportError(f"{self.instance_id}: prompt does not end with the answer cue")


@dataclass(frozen=True)
class LexiconEntry:
    frame: str
    frame_definition: str
    lemma: str
    pos: str
    sense_definition: str


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: {exc}") from exc
    return rows


def load_lexicon_index(lexicon_dir: Path) -> dict[tuple[str, str], list[LexiconEntry]]:
    """(lemma, pos) -> candidate entries, one per distinct frame, in file order."""
    lexicon_dir = Path(lexicon_dir)
    frames = {row["name"]: row.get("definition", "") for row in _read_jsonl(lexicon_dir / "frames.jsonl")}
    index: dict[tuple[str, str], list[LexiconEntry]] = {}
    for row in _read_jsonl(lexicon_dir / "lexical_units.jsonl"):
        frame = row["frame_name"]
        if frame not in frames:
            raise ExportError(f"lexical unit {row.get('id')!r} references unknown frame {frame!r}")
        key = (" ".join(row["lemma"].split()).lower(), row["pos"])
        entries = index.setdefault(key, [])
        if any(e.frame == frame for e in entries):
            continue
        entries.append(
            LexiconEntry(
                frame=frame,
                frame_definition=frames[frame],
                lemma=key[0],
                pos=row["pos"],
                sense_definition=row.get("sense_definition", ""),
            )
        )
    return index


def render_qa_prompt(sentence: str, target: str, candidates: list[LexiconEntry]) -> tuple[str, dict[str, str]]:
    """The multiple-choice QA prompt; label map gives label -> frame name."""
    lines = [
        PROMPT_HEADER,
        f'Target word: "{target}"',
        f"Sentence: {sentence}",
        "Options:",
    ]
    label_map: dict[str, str] = {}
    for i, entry in enumerate(candidates):
        label = LETTERS[i]
        label_map[label] = entry.frame
        lines.append(
            f"{label}. Frame: {entry.frame} - {entry.frame_definition} ; "
            f"Lexical Unit Definition : {entry.lemma}.{entry.pos} - {entry.sense_definition}"
        )
    lines.append(f"Pick the best option ({'/'.join(label_map)}).")
    lines.append("Answer:")
    return "\n".join(lines), label_map


def export_dataset(
    corpus_dir: Path,
    dataset: str,
    split: str,
    lexicon_dir: Path,
    out_path: Path | None = None,
) -> tuple[list[FinetuneExample], dict[str, int]]:
    """One example per instance of the split; instances without usable options are skipped.

    Returns the examples plus skip counters. Candidate lists longer than 26 are
    cut to the first 26 by lexicon order (keeping the gold frame; letter labels
    must stay single tokens).
    """
    instance_path = Path(corpus_dir) / f"{dataset}_{split}.jsonl"
    if not instance_path.exists():
        raise ExportError(f"no instance file {instance_path}")
    index = load_lexicon_index(lexicon_dir)

    examples: list[FinetuneExample] = []
    skipped = {"empty_candidates": 0, "gold_not_candidate": 0}
    for row in _read_jsonl(instance_path):
        lemma = " ".join(row["target_lemma"].split()).lower()
        candidates = list(index.get((lemma, row["target_pos"]), ()))
        if not candidates:
            skipped["empty_candidates"] += 1
            continue
        gold = row["gold_frame"]
        if len(candidates) > MAX_OPTIONS:
            kept = candidates[:MAX_OPTIONS]
            if gold not in [e.frame for e in kept]:
                gold_entry = next((e for e in candidates if e.frame == gold), None)
                if gold_entry is not None:
                    kept = kept[: MAX_OPTIONS - 1] + [gold_entry]
            candidates = kept
        if gold not in [e.frame for e in candidates]:
            skipped["gold_not_candidate"] += 1
            continue
        prompt, label_map = render_qa_prompt(row["sentence"], row["target_lemma"], candidates)
        gold_label = next(label for label, frame in label_map.items() if frame == gold)
        examples.append(
            FinetuneExample(
                instance_id=row["instance_id"],
                prompt_text=prompt,
                gold_label=gold_label,
                label_set=tuple(label_map),
                label_frames=label_map,
                gold_frame=gold,
            )
        )

    if not examples:
        logger.warning("%s/%s: no exportable examples (skips: %s)", dataset, split, skipped)
    if out_path is not None:
        write_examples(examples, out_path)
    logger.info("%s/%s: %d examples exported, skips: %s", dataset, split, len(examples), skipped)
    return examples, skipped


def write_examples(examples: list[FinetuneExample], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "instance_id": ex.instance_id,
                        "prompt_text": ex.prompt_text,
                        "gold_label": ex.gold_label,
                        "label_set": list(ex.label_set),
                        "label_frames": ex.label_frames,
                        "gold_frame": ex.gold_frame,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_examples(path: Path) -> list[FinetuneExample]:
    out = []
    for row in _read_jsonl(path):
        out.append(
            FinetuneExample(
                instance_id=row["instance_id"],
                prompt_text=row["prompt_text"],
                gold_label=row["gold_label"],
                label_set=tuple(row["label_set"]),
                label_frames=row["label_frames"],
                gold_frame=row["gold_frame"],
            )
        )
    return out
