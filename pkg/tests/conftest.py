import json
from pathlib import Path

import pytest

from framescope import corpus
from framescope.lexicon import LexiconIndex

FIXTURES = Path(__file__).parent / "fixtures"
GOLDENS = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def fixture_lexicon():
    return corpus.read_lexicon(FIXTURES / "lexicon")


@pytest.fixture(scope="session")
def fixture_index(fixture_lexicon):
    return LexiconIndex(fixture_lexicon)


@pytest.fixture(scope="session")
def test_instances():
    return corpus.read_instances(FIXTURES / "corpus" / "fn17_test.jsonl")


@pytest.fixture(scope="session")
def train_instances():
    return corpus.read_instances(FIXTURES / "corpus" / "fn17_train.jsonl")


@pytest.fixture(scope="session")
def instances_by_id(test_instances):
    return {inst.instance_id: inst for inst in test_instances}


@pytest.fixture(scope="session")
def artifact_entries():
    return corpus.load_artifact_entries(FIXTURES / "corpus")


@pytest.fixture(scope="session")
def generated_definitions():
    defs = {}
    with (FIXTURES / "corpus" / "generated_defs_llama.jsonl").open() as fh:
        for line in fh:
            rec = json.loads(line)
            defs[rec["frame_name"]] = rec["definition"]
    return defs


def golden(name: str) -> str:
    return (GOLDENS / f"{name}.txt").read_bytes().decode("utf-8")


def make_synthetic_resources(n_instances, n_frames=20, n_lemmas=50, seed=0, split="test"):
    """In-memory corpus of ambiguous targets for oracle and determinism tests."""
    import random

    from framescope.corpus import AnnotatedInstance, FrameRecord, LexicalUnit, Lexicon
    from framescope.evalkit import RunResources

    frames = [
        FrameRecord(f"Frame_{i:03d}", f"Synthetic frame definition number {i}.")
        for i in range(n_frames)
    ]
    rng = random.Random(seed)
    lus = []
    lemma_frames = {}
    for j in range(n_lemmas):
        lemma = f"lemma{j:03d}"
        k = 2 + (j % 3)
        members = [frames[(j * 3 + t) % n_frames].name for t in range(k)]
        lemma_frames[lemma] = members
        for m, frame in enumerate(members):
            lus.append(LexicalUnit(f"lu-{j}-{m}", lemma, "n", f"sense {j}-{m}", frame))
    lexicon = Lexicon.build("synthetic", frames, lus)

    instances = []
    for i in range(n_instances):
        lemma = f"lemma{i % n_lemmas:03d}"
        gold = rng.choice(lemma_frames[lemma])
        sentence = f"synthetic sentence {i:05d} mentioning {lemma} in context."
        start = sentence.index(lemma)
        instances.append(
            AnnotatedInstance(
                instance_id=f"syn-{split}-{i:05d}",
                sentence=sentence,
                target_surface=lemma,
                target_start=start,
                target_end=start + len(lemma),
                target_lemma=lemma,
                target_pos="n",
                gold_frame=gold,
                dataset="fn17",
                split=split,
            )
        )
    from framescope.lexicon import LexiconIndex

    return RunResources(index=LexiconIndex(lexicon), instances=instances)
