"""Lexical filtering: index lexical units by lemma+POS and build candidate frame sets."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import LexicalUnit, Lexicon, normalize_lemma

CANDIDATE_MODES = ("filtered", "filtered_plus_gold", "all_frames")


class LookupError_(Exception):
    pass


@dataclass(frozen=True)
class Candidate:
    """One candidate frame for a target, with display definitions."""

    frame_name: str
    frame_definition: str
    lu_sense_definition: str
    lu_id: str = ""
    lemma: str = ""
    pos: str = ""
    # Further LUs of the same lemma+POS mapping to the same frame.
    alternate_lu_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class CandidateSet:
    target_lemma: str
    target_pos: str
    candidates: tuple[Candidate, ...]
    ordering_seed: int = 0
    unknown: bool = False

    def frame_names(self) -> tuple[str, ...]:
        return tuple(c.frame_name for c in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


class LexiconIndex:
    """Immutable lemma+POS index over a lexicon, safe for concurrent lookup."""

    def __init__(self, lexicon: Lexicon):
        self.lexicon = lexicon
        self._by_key: dict[tuple[str, str], list[LexicalUnit]] = {}
        for lu in lexicon.lexical_units.values():
            self._by_key.setdefault((normalize_lemma(lu.lemma), lu.pos), []).append(lu)

    def lookup(self, lemma: str, pos: str, seed: int = 0) -> CandidateSet:
        return lookup_candidates(lemma, pos, self, seed=seed)

    def candidate_set(
        self,
        lemma: str,
        pos: str,
        mode: str = "filtered",
        gold_frame: str | None = None,
        seed: int = 0,
        shuffle_key: str = "",
    ) -> CandidateSet:
        """Candidate set under a candidate_mode, optionally order-shuffled per shuffle_key."""
        if mode not in CANDIDATE_MODES:
            raise LookupError_(f"unknown candidate mode {mode!r}")
        cs = lookup_candidates(lemma, pos, self, seed=0)
        if mode == "all_frames":
            cs = self._all_frames_set(lemma, pos, cs)
        elif mode == "filtered_plus_gold" and gold_frame:
            if gold_frame not in cs.frame_names():
                cs = replace(
                    cs,
                    candidates=cs.candidates + (self._frame_candidate(gold_frame, lemma, pos),),
                    unknown=False,
                )
        if seed:
            cs = shuffle_candidates(cs, seed, shuffle_key)
        return cs

    def _frame_candidate(self, frame_name: str, lemma: str, pos: str) -> Candidate:
        frame = self.lexicon.frames.get(frame_name)
        definition = frame.definition if frame else ""
        return Candidate(
            frame_name=frame_name,
            frame_definition=definition,
            lu_sense_definition="",
            lemma=normalize_lemma(lemma),
            pos=pos,
        )

    def _all_frames_set(self, lemma: str, pos: str, filtered: CandidateSet) -> CandidateSet:
        by_frame = {c.frame_name: c for c in filtered.candidates}
        candidates = [
            by_frame.get(name) or self._frame_candidate(name, lemma, pos)
            for name in self.lexicon.frames
        ]
        return CandidateSet(
            target_lemma=normalize_lemma(lemma),
            target_pos=pos,
            candidates=tuple(candidates),
            unknown=False,
        )


def lookup_candidates(lemma: str, pos: str, lexicon: Lexicon | LexiconIndex, seed: int = 0) -> CandidateSet:
    """One candidate per distinct frame among LUs matching lemma+POS (case-insensitive).

    Same-frame LUs are merged: the first sense definition is kept and the rest
    recorded as alternates. Order is lexicon order; a nonzero seed applies a
    deterministic shuffle keyed on (seed, lemma, pos).
    """
    index = lexicon if isinstance(lexicon, LexiconIndex) else LexiconIndex(lexicon)
    key = normalize_lemma(lemma)
    matches = index._by_key.get((key, pos), [])

    merged: dict[str, Candidate] = {}
    for lu in matches:
        if lu.frame_name in merged:
            prev = merged[lu.frame_name]
            merged[lu.frame_name] = replace(
                prev, alternate_lu_ids=prev.alternate_lu_ids + (lu.id,)
            )
            continue
        frame = index.lexicon.frames[lu.frame_name]
        merged[lu.frame_name] = Candidate(
            frame_name=lu.frame_name,
            frame_definition=frame.definition,
            lu_sense_definition=lu.sense_definition,
            lu_id=lu.id,
            lemma=key,
            pos=pos,
        )

    cs = CandidateSet(
        target_lemma=key,
        target_pos=pos,
        candidates=tuple(merged.values()),
        ordering_seed=0,
        unknown=not merged,
    )
    if seed:
        cs = shuffle_candidates(cs, seed, "")
    return cs


def shuffle_candidates(cs: CandidateSet, seed: int, shuffle_key: str = "") -> CandidateSet:
    """Deterministically reorder candidates; seed 0 is the identity order."""
    if not seed:
        return replace(cs, ordering_seed=0)
    material = f"{seed}\x00{shuffle_key}\x00{cs.target_lemma}\x00{cs.target_pos}"
    rng = random.Random(stable_hash(material))
    order = list(cs.candidates)
    rng.shuffle(order)
    return replace(cs, candidates=tuple(order), ordering_seed=seed)


def stable_hash(material: str) -> int:
    """Process-independent 64-bit hash (unlike builtin hash, which is salted)."""
    return int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest()[:8], "big")


def is_ambiguous(candidate_set: CandidateSet) -> bool:
    """True iff the target can evoke two or more frames."""
    return len(candidate_set.candidates) >= 2


def load_pos_map(scheme: str, path: Path | None = None) -> dict[str, str]:
    if path is None:
        path = Path(__file__).parent / "data" / "pos_map.json"
    table = json.loads(Path(path).read_text(encoding="utf-8"))
    if scheme not in table:
        raise LookupError_(f"unknown POS tag scheme {scheme!r}; have {sorted(table)}")
    return table[scheme]


def map_pos(tag: str, scheme: str = "internal", path: Path | None = None) -> str:
    """Map a dataset POS tag onto the internal tagset; unknown tags become 'other'."""
    table = load_pos_map(scheme, path)
    return table.get(tag, table.get(tag.upper(), table.get(tag.lower(), "other")))
