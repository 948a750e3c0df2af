"""Raw FrameNet XML release ingestion (frame index + full-text annotations).

This is the only module that touches FrameNet XML; everything else consumes
the JSONL interchange form. Releases are license-gated, so tests exercise this
path through a small synthetic release fixture.
"""

from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from pathlib import Path

from .corpus import (
    AnnotatedInstance,
    CorpusError,
    FrameRecord,
    LexicalUnit,
    Lexicon,
    MissingFilesError,
    UnknownSplitError,
    normalize,
    normalize_whitespace,
)

logger = logging.getLogger(__name__)

FN_NS = "{http://framenet.icsi.berkeley.edu}"

# FrameNet sense definitions are prefixed with their dictionary source.
_DEF_SOURCE_PREFIXES = ("COD:", "FN:")

# Raw FrameNet POS attribute values -> internal tags.
_FN_POS = {
    "V": "v",
    "N": "n",
    "A": "a",
    "ADV": "adv",
    "PREP": "prep",
}


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _text_content(elem: ET.Element | None) -> str:
    if elem is None:
        return ""
    return normalize_whitespace("".join(elem.itertext()))


def _clean_sense_definition(text: str) -> str:
    text = normalize_whitespace(text)
    for prefix in _DEF_SOURCE_PREFIXES:
        if text.startswith(prefix):
            return text[len(prefix):].strip()
    return text


def _map_pos(raw: str) -> str:
    return _FN_POS.get(raw.upper(), "other")


def _split_lu_name(lu_name: str) -> tuple[str, str]:
    """Split 'serve.v' into (lemma, pos tag); POS falls back to 'other'."""
    if "." in lu_name:
        lemma, _, suffix = lu_name.rpartition(".")
        return lemma, suffix.lower() if suffix.lower() in ("v", "n", "a", "adv", "prep") else "other"
    return lu_name, "other"


def load_lexicon_xml(release_dir: Path, version: str) -> Lexicon:
    """Parse frame/*.xml of a FrameNet release into a cross-linked Lexicon."""
    release_dir = Path(release_dir)
    frame_dir = release_dir / "frame"
    files = sorted(frame_dir.glob("*.xml"))
    if not files:
        raise MissingFilesError(f"no frame XML files under {frame_dir}")

    frames: list[FrameRecord] = []
    lus: list[LexicalUnit] = []
    for path in files:
        try:
            root = ET.parse(path).getroot()
        except ET.ParseError as exc:
            raise CorpusError(f"{path}: invalid XML: {exc}") from exc
        name = root.attrib.get("name", path.stem)
        definition = ""
        for child in root:
            if _strip_ns(child.tag) == "definition":
                definition = _text_content(child)
                break
        # Frame definitions embed markup and example sentences; keep the prose only.
        definition = re.sub(r"<[^>]+>", "", definition)
        definition = normalize_whitespace(definition)
        frames.append(
            FrameRecord(name=name, definition=definition, definition_missing=not definition)
        )
        for child in root:
            if _strip_ns(child.tag) != "lexUnit":
                continue
            lu_name = child.attrib.get("name", "")
            lemma, pos_from_name = _split_lu_name(lu_name)
            pos = _map_pos(child.attrib.get("POS", "")) if child.attrib.get("POS") else pos_from_name
            sense = ""
            for sub in child:
                if _strip_ns(sub.tag) == "definition":
                    sense = _clean_sense_definition(_text_content(sub))
                    break
            lu_id = child.attrib.get("ID") or f"{name}:{lu_name}"
            lus.append(
                LexicalUnit(
                    id=str(lu_id),
                    lemma=lemma,
                    pos=pos,
                    sense_definition=sense,
                    frame_name=name,
                )
            )
    return Lexicon.build(version, frames, lus)


def load_split_manifest(version: str, manifest_path: Path | None = None) -> dict:
    """Document-level split manifest: {'dev': [...], 'test': [...]} of fulltext doc stems."""
    if manifest_path is None:
        manifest_path = Path(__file__).parent / "data" / "fn_splits.json"
    data = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    if version not in data:
        raise UnknownSplitError(f"no split manifest for {version!r} in {manifest_path}")
    return data[version]


def load_fulltext_instances(
    release_dir: Path,
    version: str,
    split: str,
    lexicon: Lexicon,
    manifest_path: Path | None = None,
) -> list[AnnotatedInstance]:
    """Parse fulltext/*.xml annotation sets for the documents of one split."""
    release_dir = Path(release_dir)
    fulltext_dir = release_dir / "fulltext"
    files = sorted(fulltext_dir.glob("*.xml"))
    if not files:
        raise MissingFilesError(f"no fulltext XML files under {fulltext_dir}")

    manifest = load_split_manifest(version, manifest_path)
    dev_docs = set(manifest.get("dev", ()))
    test_docs = set(manifest.get("test", ()))

    instances: list[AnnotatedInstance] = []
    for path in files:
        doc = path.stem
        if doc in test_docs:
            doc_split = "test"
        elif doc in dev_docs:
            doc_split = "dev"
        else:
            doc_split = "train"
        if doc_split != split:
            continue
        instances.extend(_parse_fulltext_doc(path, doc, version, split, lexicon))
    return instances


def _parse_fulltext_doc(
    path: Path, doc: str, version: str, split: str, lexicon: Lexicon
) -> list[AnnotatedInstance]:
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise CorpusError(f"{path}: invalid XML: {exc}") from exc

    out: list[AnnotatedInstance] = []
    for sent in root.iter(f"{FN_NS}sentence"):
        text_elem = sent.find(f"{FN_NS}text")
        text = text_elem.text if text_elem is not None and text_elem.text else ""
        if not text:
            continue
        sent_id = sent.attrib.get("ID", "0")
        for aset in sent.findall(f"{FN_NS}annotationSet"):
            frame_name = aset.attrib.get("frameName")
            lu_name = aset.attrib.get("luName")
            status = aset.attrib.get("status", "")
            if not frame_name or not lu_name or status == "UNANN":
                continue
            span = _target_span(aset)
            if span is None:
                logger.debug("%s: annotation set %s has no target span", path, aset.attrib.get("ID"))
                continue
            start, end = span
            lemma, pos = _split_lu_name(lu_name)
            raw = {
                "instance_id": f"{doc}#{sent_id}#{aset.attrib.get('ID', len(out))}",
                "sentence": text,
                "target_start": start,
                "target_end": end,
                "target_lemma": lemma,
                "target_pos": pos,
                "gold_frame": frame_name,
            }
            out.append(normalize(raw, version, split, lexicon))
    return out


def _target_span(aset: ET.Element) -> tuple[int, int] | None:
    starts: list[int] = []
    ends: list[int] = []
    for layer in aset.findall(f"{FN_NS}layer"):
        if layer.attrib.get("name") != "Target":
            continue
        for label in layer.findall(f"{FN_NS}label"):
            if "start" in label.attrib and "end" in label.attrib:
                starts.append(int(label.attrib["start"]))
                # FrameNet XML 'end' offsets are inclusive.
                ends.append(int(label.attrib["end"]) + 1)
    if not starts:
        return None
    return min(starts), max(ends)
