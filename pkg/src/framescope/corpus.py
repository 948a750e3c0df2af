"""Normalized corpus model: frames, lexical units, annotated instances, and dataset ingestion.

Raw releases (FrameNet XML, YAGS, Artifacts) are converted into a JSONL
interchange format documented in docs/formats.md; everything downstream reads
only the interchange form.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

logger = logging.getLogger(__name__)

POS_TAGS = ("v", "n", "a", "adv", "prep", "other")
DATASETS = ("fn15", "fn17", "yags", "artifacts")
SPLITS = ("train", "dev", "test")

# Which splits exist per dataset: YAGS has no training data, Artifacts is
# evaluation-only.
DATASET_SPLITS = {
    "fn15": ("train", "dev", "test"),
    "fn17": ("train", "dev", "test"),
    "yags": ("dev", "test"),
    "artifacts": ("test",),
}

# Public YAGS distributions vary slightly; mismatches warn instead of failing.
EXPECTED_YAGS_SIZES = {"dev": 944, "test": 1971}

FLAG_UNKNOWN_TARGET = "unknown_target"
FLAG_UNLINKED_TARGET = "unlinked_target"

ARTIFACT_NONE_OPTION = "None of above"
ARTIFACT_OPTION_COUNT = 43


class CorpusError(Exception):
    """Base class for corpus construction and ingestion failures."""


class MissingFilesError(CorpusError):
    pass


class DanglingFrameError(CorpusError):
    pass


class DuplicateLexicalUnitError(CorpusError):
    pass


class MalformedRecordError(CorpusError):
    pass


class UnknownSplitError(CorpusError):
    pass


class OffsetError(CorpusError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    """A semantic frame with its definition and member lexical units."""

    name: str
    definition: str
    lexical_unit_ids: tuple[str, ...] = ()
    definition_missing: bool = False


@dataclass(frozen=True)
class LexicalUnit:
    """A lemma+POS pairing with one sense, evoking exactly one frame."""

    id: str
    lemma: str
    pos: str
    sense_definition: str
    frame_name: str


@dataclass(frozen=True)
class AnnotatedInstance:
    """One frame-identification example: a sentence, a target span, and a gold frame."""

    instance_id: str
    sentence: str
    target_surface: str
    target_start: int
    target_end: int
    target_lemma: str
    target_pos: str
    gold_frame: str
    dataset: str
    split: str
    flags: frozenset[str] = frozenset()

    @property
    def target_char_span(self) -> tuple[int, int]:
        return (self.target_start, self.target_end)


@dataclass(frozen=True)
class ArtifactEntry:
    """A physical-object entry: name, gloss, gold frame, and the fixed 43-option list."""

    name: str
    gloss: str
    gold_frame: str
    fixed_option_list: tuple[str, ...]

    def __post_init__(self):
        if len(self.fixed_option_list) != ARTIFACT_OPTION_COUNT:
            raise MalformedRecordError(
                f"artifact entry {self.name!r}: option list has "
                f"{len(self.fixed_option_list)} entries, expected {ARTIFACT_OPTION_COUNT}"
            )
        if self.fixed_option_list[-1] != ARTIFACT_NONE_OPTION:
            raise MalformedRecordError(
                f"artifact entry {self.name!r}: last option must be "
                f"{ARTIFACT_NONE_OPTION!r}, got {self.fixed_option_list[-1]!r}"
            )


def default_artifact_options() -> tuple[str, ...]:
    """The fixed 43-entry option list used for every artifact prompt."""
    path = Path(__file__).parent / "data" / "artifact_options.json"
    return tuple(json.loads(path.read_text(encoding="utf-8")))


@dataclass
class Lexicon:
    """Cross-linked frame and lexical-unit inventory, immutable after build."""

    version: str
    frames: dict[str, FrameRecord] = field(default_factory=dict)
    lexical_units: dict[str, LexicalUnit] = field(default_factory=dict)

    @classmethod
    def build(cls, version: str, frames: list[FrameRecord], lus: list[LexicalUnit]) -> "Lexicon":
        """Validate and cross-link a lexicon; raises on duplicates or dangling references."""
        frame_map: dict[str, FrameRecord] = {}
        for fr in frames:
            if not fr.name:
                raise MalformedRecordError("frame with empty name")
            if fr.name in frame_map:
                raise MalformedRecordError(f"duplicate frame name {fr.name!r}")
            frame_map[fr.name] = replace(fr, lexical_unit_ids=())

        lu_map: dict[str, LexicalUnit] = {}
        triples: set[tuple[str, str, str]] = set()
        members: dict[str, list[str]] = {name: [] for name in frame_map}
        for lu in lus:
            if lu.pos not in POS_TAGS:
                raise MalformedRecordError(f"LU {lu.id!r}: unknown POS tag {lu.pos!r}")
            if lu.id in lu_map:
                raise DuplicateLexicalUnitError(f"duplicate LU id {lu.id!r}")
            triple = (normalize_lemma(lu.lemma), lu.pos, lu.frame_name)
            if triple in triples:
                raise DuplicateLexicalUnitError(
                    f"duplicate lexical unit {lu.lemma!r}/{lu.pos} in frame {lu.frame_name!r}"
                )
            if lu.frame_name not in frame_map:
                raise DanglingFrameError(
                    f"LU {lu.id!r} references unknown frame {lu.frame_name!r}"
                )
            triples.add(triple)
            lu_map[lu.id] = lu
            members[lu.frame_name].append(lu.id)

        for name, ids in members.items():
            frame_map[name] = replace(frame_map[name], lexical_unit_ids=tuple(ids))

        lex = cls(version=version, frames=frame_map, lexical_units=lu_map)
        logger.info(
            "lexicon %s: %d frames, %d lexical units", version, lex.frame_count, lex.lu_count
        )
        return lex

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def lu_count(self) -> int:
        return len(self.lexical_units)

    def frames_for(self, lemma: str, pos: str) -> tuple[str, ...]:
        """Distinct frame names reachable from lemma+POS, in lexicon order."""
        key = normalize_lemma(lemma)
        seen: list[str] = []
        for lu in self.lexical_units.values():
            if lu.pos == pos and normalize_lemma(lu.lemma) == key:
                if lu.frame_name not in seen:
                    seen.append(lu.frame_name)
        return tuple(seen)


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def normalize_lemma(lemma: str) -> str:
    return normalize_whitespace(lemma).lower()


def _collapse_with_map(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace, returning the new text and a raw-index -> new-index map."""
    out: list[str] = []
    idx_map: list[int] = []
    for ch in text:
        if ch.isspace():
            if not out:
                idx_map.append(0)
            elif out[-1] == " ":
                idx_map.append(len(out) - 1)
            else:
                idx_map.append(len(out))
                out.append(" ")
        else:
            idx_map.append(len(out))
            out.append(ch)
    if out and out[-1] == " ":
        out.pop()
    return "".join(out), idx_map


def normalize(
    raw_record: dict,
    dataset: str,
    split: str,
    lexicon: Lexicon | None = None,
) -> AnnotatedInstance:
    """Turn a raw record into an AnnotatedInstance with validated offsets and computed flags.

    The raw record must carry sentence, target_start/target_end character
    offsets, target_lemma, target_pos, and gold_frame. Offsets refer to the
    raw sentence; they are re-mapped through whitespace normalization.
    """
    sentence = raw_record.get("sentence", "")
    if not sentence or not sentence.strip():
        raise MalformedRecordError("empty sentence")
    try:
        start = int(raw_record["target_start"])
        end = int(raw_record["target_end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(f"missing or non-integer target offsets: {exc}") from exc
    if not (0 <= start < end <= len(sentence)):
        raise OffsetError(
            f"target span ({start}, {end}) out of range for sentence of length {len(sentence)}"
        )

    surface_raw = sentence[start:end]
    norm_sentence, idx_map = _collapse_with_map(sentence)
    new_start = idx_map[start]
    new_end = idx_map[end - 1] + 1
    surface = normalize_whitespace(surface_raw)
    if norm_sentence[new_start:new_end] != surface:
        raise OffsetError(
            f"target span does not match surface after normalization: "
            f"{norm_sentence[new_start:new_end]!r} != {surface!r}"
        )

    lemma = normalize_lemma(raw_record.get("target_lemma") or surface)
    pos = raw_record.get("target_pos", "other")
    if pos not in POS_TAGS:
        raise MalformedRecordError(f"unknown POS tag {pos!r}")
    gold = raw_record.get("gold_frame", "")
    if not gold:
        raise MalformedRecordError("missing gold_frame")

    flags: set[str] = set(raw_record.get("flags", ()))
    if lexicon is not None:
        candidates = lexicon.frames_for(lemma, pos)
        flags.discard(FLAG_UNKNOWN_TARGET)
        flags.discard(FLAG_UNLINKED_TARGET)
        if not candidates:
            flags.add(FLAG_UNKNOWN_TARGET)
        elif gold not in candidates:
            flags.add(FLAG_UNLINKED_TARGET)

    return AnnotatedInstance(
        instance_id=str(raw_record.get("instance_id") or f"{dataset}-{split}-{start}-{end}"),
        sentence=norm_sentence,
        target_surface=surface,
        target_start=new_start,
        target_end=new_end,
        target_lemma=lemma,
        target_pos=pos,
        gold_frame=gold,
        dataset=dataset,
        split=split,
        flags=frozenset(flags),
    )


# ---------------------------------------------------------------------------
# Interchange JSONL


def instance_to_dict(inst: AnnotatedInstance) -> dict:
    return {
        "instance_id": inst.instance_id,
        "sentence": inst.sentence,
        "target_surface": inst.target_surface,
        "target_start": inst.target_start,
        "target_end": inst.target_end,
        "target_lemma": inst.target_lemma,
        "target_pos": inst.target_pos,
        "gold_frame": inst.gold_frame,
        "dataset": inst.dataset,
        "split": inst.split,
        "flags": sorted(inst.flags),
    }


def instance_from_dict(rec: dict) -> AnnotatedInstance:
    return AnnotatedInstance(
        instance_id=rec["instance_id"],
        sentence=rec["sentence"],
        target_surface=rec["target_surface"],
        target_start=int(rec["target_start"]),
        target_end=int(rec["target_end"]),
        target_lemma=rec["target_lemma"],
        target_pos=rec["target_pos"],
        gold_frame=rec["gold_frame"],
        dataset=rec["dataset"],
        split=rec["split"],
        flags=frozenset(rec.get("flags", ())),
    )


def write_instances(instances: list[AnnotatedInstance], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False) + "\n")


def read_instances(path: Path) -> list[AnnotatedInstance]:
    path = Path(path)
    if not path.exists():
        raise MissingFilesError(f"instance file not found: {path}")
    out: list[AnnotatedInstance] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(instance_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise MalformedRecordError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return out


def write_lexicon(lexicon: Lexicon, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "frames.jsonl").open("w", encoding="utf-8") as fh:
        for fr in lexicon.frames.values():
            fh.write(
                json.dumps(
                    {
                        "name": fr.name,
                        "definition": fr.definition,
                        "definition_missing": fr.definition_missing,
                        "lexical_unit_ids": list(fr.lexical_unit_ids),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    with (out_dir / "lexical_units.jsonl").open("w", encoding="utf-8") as fh:
        for lu in lexicon.lexical_units.values():
            fh.write(
                json.dumps(
                    {
                        "id": lu.id,
                        "lemma": lu.lemma,
                        "pos": lu.pos,
                        "sense_definition": lu.sense_definition,
                        "frame_name": lu.frame_name,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    (out_dir / "meta.json").write_text(
        json.dumps({"version": lexicon.version}, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def read_lexicon(src_dir: Path, version: str | None = None) -> Lexicon:
    src_dir = Path(src_dir)
    frames_path = src_dir / "frames.jsonl"
    lus_path = src_dir / "lexical_units.jsonl"
    if not frames_path.exists() or not lus_path.exists():
        raise MissingFilesError(f"no interchange lexicon (frames.jsonl/lexical_units.jsonl) in {src_dir}")
    if version is None:
        meta = src_dir / "meta.json"
        version = json.loads(meta.read_text(encoding="utf-8"))["version"] if meta.exists() else "unknown"

    frames: list[FrameRecord] = []
    with frames_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                frames.append(
                    FrameRecord(
                        name=rec["name"],
                        definition=rec.get("definition", ""),
                        definition_missing=bool(rec.get("definition_missing", False)),
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise MalformedRecordError(f"{frames_path}:{lineno}: {exc}") from exc

    lus: list[LexicalUnit] = []
    with lus_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                lus.append(
                    LexicalUnit(
                        id=rec["id"],
                        lemma=rec["lemma"],
                        pos=rec["pos"],
                        sense_definition=rec.get("sense_definition", ""),
                        frame_name=rec["frame_name"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise MalformedRecordError(f"{lus_path}:{lineno}: {exc}") from exc

    return Lexicon.build(version, frames, lus)


# ---------------------------------------------------------------------------
# Top-level loaders


def load_lexicon(source_path: Path, version: str) -> Lexicon:
    """Load a lexicon from a raw FrameNet XML release or interchange JSONL (auto-detected)."""
    source_path = Path(source_path)
    if not source_path.exists():
        raise MissingFilesError(f"lexicon path does not exist: {source_path}")
    if (source_path / "frames.jsonl").exists():
        return read_lexicon(source_path, version)
    if (source_path / "frame").is_dir():
        from . import framenet_xml

        return framenet_xml.load_lexicon_xml(source_path, version)
    raise MissingFilesError(
        f"{source_path} contains neither interchange files (frames.jsonl) nor a raw release (frame/ directory)"
    )


def interchange_instance_path(src_dir: Path, dataset: str, split: str) -> Path:
    return Path(src_dir) / f"{dataset}_{split}.jsonl"


def load_dataset(
    source_path: Path,
    dataset: str,
    split: str,
    lexicon: Lexicon | None = None,
) -> list[AnnotatedInstance]:
    """Load one dataset split, from interchange JSONL or a raw distribution.

    Instances come back in deterministic file order. When a lexicon is given,
    unknown/unlinked flags are recomputed against it.
    """
    if dataset not in DATASETS:
        raise MalformedRecordError(f"unknown dataset {dataset!r}")
    if split not in DATASET_SPLITS[dataset]:
        raise UnknownSplitError(f"dataset {dataset!r} has no {split!r} split")
    source_path = Path(source_path)

    interchange = interchange_instance_path(source_path, dataset, split)
    raw_tsv = source_path / f"{dataset}_{split}.tsv"
    if interchange.exists():
        instances = read_instances(interchange)
        if lexicon is not None:
            instances = [_recompute_flags(inst, lexicon) for inst in instances]
    elif dataset in ("fn15", "fn17") and (source_path / "fulltext").is_dir():
        from . import framenet_xml

        if lexicon is None:
            lexicon = load_lexicon(source_path, dataset)
        instances = framenet_xml.load_fulltext_instances(source_path, dataset, split, lexicon)
    elif dataset == "yags" and raw_tsv.exists():
        instances = _load_tsv_instances(raw_tsv, dataset, split, lexicon)
    elif dataset == "artifacts":
        entries = load_artifact_entries(source_path)
        instances = [artifact_instance(entry, i) for i, entry in enumerate(entries)]
    else:
        raise MissingFilesError(
            f"no data for {dataset}/{split} under {source_path} "
            f"(expected {interchange.name} or a raw distribution)"
        )

    if dataset == "yags" and split in EXPECTED_YAGS_SIZES:
        expected = EXPECTED_YAGS_SIZES[split]
        if len(instances) != expected:
            warnings.warn(
                f"YAGS {split} has {len(instances)} instances; public distributions "
                f"usually have {expected}",
                stacklevel=2,
            )
    logger.info("%s/%s: %d instances", dataset, split, len(instances))
    return instances


def _load_tsv_instances(
    path: Path, dataset: str, split: str, lexicon: Lexicon | None
) -> list[AnnotatedInstance]:
    """Raw TSV fallback: id, sentence, start, end, lemma, pos, gold_frame per line."""
    instances: list[AnnotatedInstance] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 7:
                raise MalformedRecordError(f"{path}:{lineno}: expected 7 tab-separated fields")
            raw = {
                "instance_id": parts[0],
                "sentence": parts[1],
                "target_start": parts[2],
                "target_end": parts[3],
                "target_lemma": parts[4],
                "target_pos": parts[5],
                "gold_frame": parts[6],
            }
            try:
                instances.append(normalize(raw, dataset, split, lexicon))
            except CorpusError as exc:
                raise MalformedRecordError(f"{path}:{lineno}: {exc}") from exc
    return instances


def _recompute_flags(inst: AnnotatedInstance, lexicon: Lexicon) -> AnnotatedInstance:
    candidates = lexicon.frames_for(inst.target_lemma, inst.target_pos)
    flags = set(inst.flags)
    flags.discard(FLAG_UNKNOWN_TARGET)
    flags.discard(FLAG_UNLINKED_TARGET)
    if not candidates:
        flags.add(FLAG_UNKNOWN_TARGET)
    elif inst.gold_frame not in candidates:
        flags.add(FLAG_UNLINKED_TARGET)
    return replace(inst, flags=frozenset(flags))


def validate_split_disjointness(instances: list[AnnotatedInstance]) -> None:
    """No instance_id may appear in more than one split of the same dataset."""
    seen: dict[tuple[str, str], str] = {}
    for inst in instances:
        key = (inst.dataset, inst.instance_id)
        if key in seen and seen[key] != inst.split:
            raise MalformedRecordError(
                f"instance {inst.instance_id!r} of {inst.dataset} appears in both "
                f"{seen[key]!r} and {inst.split!r}"
            )
        seen[key] = inst.split


# ---------------------------------------------------------------------------
# Artifacts


def load_artifact_entries(source_path: Path) -> list[ArtifactEntry]:
    """Load artifact entries from JSONL ({name, gloss, gold_frame}) or TSV (name\\tgloss\\tframe)."""
    source_path = Path(source_path)
    options = default_artifact_options()
    if source_path.is_dir():
        for candidate in ("artifacts_test.jsonl", "artifacts.jsonl", "artifacts.tsv"):
            if (source_path / candidate).exists():
                source_path = source_path / candidate
                break
        else:
            raise MissingFilesError(f"no artifacts file under {source_path}")
    if not source_path.exists():
        raise MissingFilesError(f"artifacts file not found: {source_path}")

    entries: list[ArtifactEntry] = []
    with source_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                if source_path.suffix == ".tsv":
                    name, gloss, frame = line.split("\t")[:3]
                    rec = {"name": name, "gloss": gloss, "gold_frame": frame}
                else:
                    rec = json.loads(line)
                entries.append(
                    ArtifactEntry(
                        name=rec["name"],
                        gloss=rec["gloss"],
                        gold_frame=rec["gold_frame"],
                        fixed_option_list=tuple(rec.get("options", options)),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise MalformedRecordError(f"{source_path}:{lineno}: {exc}") from exc
    return entries


def artifact_instance(entry: ArtifactEntry, index: int) -> AnnotatedInstance:
    """Represent an artifact entry as an instance for split accounting and scoring."""
    sentence = f"{entry.name} - {entry.gloss}" if entry.gloss else entry.name
    return AnnotatedInstance(
        instance_id=f"artifacts-test-{index:04d}-{entry.name}",
        sentence=normalize_whitespace(sentence),
        target_surface=normalize_whitespace(entry.name),
        target_start=0,
        target_end=len(normalize_whitespace(entry.name)),
        target_lemma=normalize_lemma(entry.name),
        target_pos="n",
        gold_frame=entry.gold_frame,
        dataset="artifacts",
        split="test",
    )
