import json
from pathlib import Path

import pytest


def write_jsonl(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def build_smoke_corpus(root: Path, n_lemmas: int = 10, variants: int = 10):
    """Interchange corpus of lemma-consistent examples: each lemma pairs two
    frames and always evokes the same gold, like real frame-annotated data."""
    corpus = root / "corpus"
    lexicon = root / "lexicon"
    frames, lus, instances = [], [], []
    for j in range(n_lemmas):
        lemma = f"word{j:03d}"
        frame_x, frame_y = f"Frame_{j:03d}_x", f"Frame_{j:03d}_y"
        frames.append({"name": frame_x, "definition": f"definition x for {lemma}", "definition_missing": False, "lexical_unit_ids": [f"lu-{j}-x"]})
        frames.append({"name": frame_y, "definition": f"definition y for {lemma}", "definition_missing": False, "lexical_unit_ids": [f"lu-{j}-y"]})
        lus.append({"id": f"lu-{j}-x", "lemma": lemma, "pos": "n", "sense_definition": f"sense x of {lemma}", "frame_name": frame_x})
        lus.append({"id": f"lu-{j}-y", "lemma": lemma, "pos": "n", "sense_definition": f"sense y of {lemma}", "frame_name": frame_y})
        gold = frame_x if (j * 7919) % 2 == 0 else frame_y
        for v in range(variants):
            i = j * variants + v
            sentence = f"sample sentence variant {v} number {i} featuring {lemma} prominently."
            start = sentence.index(lemma)
            instances.append(
                {
                    "instance_id": f"smoke-{i:03d}",
                    "sentence": sentence,
                    "target_surface": lemma,
                    "target_start": start,
                    "target_end": start + len(lemma),
                    "target_lemma": lemma,
                    "target_pos": "n",
                    "gold_frame": gold,
                    "dataset": "fn17",
                    "split": "train",
                    "flags": [],
                }
            )
    write_jsonl(frames, lexicon / "frames.jsonl")
    write_jsonl(lus, lexicon / "lexical_units.jsonl")
    write_jsonl(instances, corpus / "fn17_train.jsonl")
    return corpus, lexicon


@pytest.fixture(scope="session")
def smoke_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke-corpus")
    return build_smoke_corpus(root)


@pytest.fixture(scope="session")
def smoke_examples(smoke_corpus):
    from ftkit.data import export_dataset

    corpus, lexicon = smoke_corpus
    examples, skipped = export_dataset(corpus, "fn17", "train", lexicon)
    assert skipped == {"empty_candidates": 0, "gold_not_candidate": 0}
    assert len(examples) == 100
    return examples
