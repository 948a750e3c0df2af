"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

import json
import os
import random
import time

import pytest

from framescope import corpus
from framescope.backends import BackendConfig, OraclePolicy, ResponseCache
from framescope.evalkit import RunResources, RunSpec, compare_errors, load_predictions, run_eval
from framescope.parse import parse_response
from framescope.promptkit import PromptConfig, render, render_artifacts, render_def_gen

from conftest import FIXTURES, golden, make_synthetic_resources


def _announce(name, started, limit):
    elapsed = time.monotonic() - started
    assert elapsed < limit, f"{name} took {elapsed:.2f}s (limit {limit}s)"
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s)")


def test_golden_prompts(fixture_index, instances_by_id, artifact_entries, generated_definitions):
    started = time.monotonic()
    country = instances_by_id["fn17-test-0001"]
    complex_inst = instances_by_id["fn17-test-0002"]
    know = instances_by_id["fn17-test-0003"]

    def cs(inst):
        return fixture_index.candidate_set(inst.target_lemma, inst.target_pos)

    checks = {
        "simple_country": render(country, cs(country), PromptConfig(format="simple", granularity="names_lu_defs")).text,
        "direct_qa_country": render(country, cs(country), PromptConfig(format="direct_qa", granularity="names_lu_defs")).text,
        "artifacts_abacus": render_artifacts(artifact_entries[0]).text,
        "qa_finetune_complex": render(complex_inst, cs(complex_inst), PromptConfig(format="qa_finetune")).text,
        "def_gen_commerce_buy": render_def_gen("Commerce_buy").text,
        "def_eval_know": render(know, cs(know), PromptConfig(format="def_eval"), definitions=generated_definitions).text,
    }
    for name, rendered in checks.items():
        assert rendered == golden(name), f"golden mismatch: {name}"
    _announce("golden-prompts", started, 1.0)


def test_granularity_exclusivity():
    started = time.monotonic()
    from framescope.corpus import FrameRecord, LexicalUnit, Lexicon, normalize
    from framescope.lexicon import LexiconIndex

    frame_sentinel = "XXFRAMEDEFXX"
    lu_sentinel = "XXLUDEFXX"
    lex = Lexicon.build(
        "sentinel",
        [FrameRecord("Alpha_one", f"def {frame_sentinel} a"), FrameRecord("Beta_two", f"def {frame_sentinel} b")],
        [
            LexicalUnit("1", "blick", "v", f"sense {lu_sentinel} a", "Alpha_one"),
            LexicalUnit("2", "blick", "v", f"sense {lu_sentinel} b", "Beta_two"),
        ],
    )
    index = LexiconIndex(lex)
    inst = normalize(
        {"instance_id": "s1", "sentence": "they blick it.", "target_start": 5, "target_end": 10,
         "target_lemma": "blick", "target_pos": "v", "gold_frame": "Alpha_one"},
        "fn17", "test", lex,
    )
    expectations = {
        "names": (False, False),
        "names_defs": (True, False),
        "names_lu_defs": (False, True),
        "names_defs_lu_defs": (True, True),
    }
    cells = 0
    for fmt in ("simple", "direct_qa"):
        for granularity, (wants_frame, wants_lu) in expectations.items():
            text = render(inst, index.candidate_set("blick", "v"),
                          PromptConfig(format=fmt, granularity=granularity)).text
            assert (frame_sentinel in text) == wants_frame, (fmt, granularity)
            assert (lu_sentinel in text) == wants_lu, (fmt, granularity)
            cells += 1
    assert cells == 8
    _announce("granularity-exclusivity", started, 1.0)


def test_oracle_end_to_end():
    started = time.monotonic()
    resources = make_synthetic_resources(1000)
    gold_spec = RunSpec(
        dataset="fn17", split="test", prompt=PromptConfig(format="direct_qa"),
        backend=BackendConfig(kind="mock_oracle", model_name="mock",
                              oracle=OraclePolicy(mode="always_gold")),
        seeds=(1,),
    )
    report = run_eval(gold_spec, resources=resources)
    assert report.mean_accuracy == 1.0

    p_spec = RunSpec(
        dataset="fn17", split="test", prompt=PromptConfig(format="direct_qa"),
        backend=BackendConfig(kind="mock_oracle", model_name="mock",
                              oracle=OraclePolicy(mode="accuracy_p", p=0.8)),
        seeds=(1, 2, 3),
    )
    p_report = run_eval(p_spec, resources=resources)
    assert abs(p_report.mean_accuracy - 0.8) < 0.03
    _announce("oracle-end-to-end", started, 10.0)


def test_parser_suite():
    started = time.monotonic()
    from test_parse import RESPONSE_FIXTURES
    from framescope.backends import ModelResponse
    from framescope.evalkit import accuracy
    from framescope.parse import Prediction

    assert len(RESPONSE_FIXTURES) >= 12
    for name, raw, prompt, frame, path in RESPONSE_FIXTURES:
        pred = parse_response(ModelResponse(raw_text=raw), prompt)
        assert (pred.predicted_frame, pred.decode_path) == (frame, path), name

    # Failures are scored wrong under strict scoring.
    failed = Prediction("x", None, "failed", "")
    assert accuracy([failed], {"x": "Gold"}, strict=True) == 0.0
    _announce("parser-suite", started, 1.0)


def test_overlap_identities():
    started = time.monotonic()
    rng = random.Random(2024)
    frames = ["F0", "F1", "F2", None]

    def rows(golds, preds):
        return [
            {"instance_id": f"i{k}", "predicted_frame": p, "gold_frame": g,
             "decode_path": "clean_json", "run_id": "r"}
            for k, (g, p) in enumerate(zip(golds, preds))
        ]

    for _ in range(1000):
        n = rng.randint(1, 25)
        golds = [rng.choice(frames[:3]) for _ in range(n)]
        report = compare_errors(
            rows(golds, [rng.choice(frames) for _ in range(n)]),
            rows(golds, [rng.choice(frames) for _ in range(n)]),
        )
        assert report.common_wrong == report.agreeing_wrong + report.disagreeing_wrong
        assert report.common_wrong <= min(report.wrong_a, report.wrong_b)

    golds = ["g1", "g2", "g3", "g4", "g5"]
    hand = compare_errors(
        rows(golds, ["x", "x", "y", "g4", "g5"]),
        rows(golds, ["g1", "x", "z", "w", "g5"]),
    )
    assert (hand.wrong_a, hand.wrong_b, hand.common_wrong, hand.agreeing_wrong, hand.disagreeing_wrong) == (3, 3, 2, 1, 1)
    _announce("overlap-identities", started, 5.0)


def test_split_accounting():
    started = time.monotonic()
    real = {
        "fn15": (15017, 4463, 4457),
        "fn17": (19391, 2272, 6714),
    }
    checked_real = False
    for version, expected in real.items():
        root = os.environ.get(f"FRAMESCOPE_{version.upper()}_DIR")
        if not root:
            continue
        lex = corpus.load_lexicon(root, version)
        counts = tuple(
            len(corpus.load_dataset(root, version, split, lex)) for split in ("train", "dev", "test")
        )
        assert counts == expected, f"{version}: {counts} != {expected}"
        checked_real = True
    if not checked_real:
        lex = corpus.read_lexicon(FIXTURES / "lexicon")
        counts = tuple(
            len(corpus.load_dataset(FIXTURES / "corpus", "fn17", split, lex))
            for split in ("train", "dev", "test")
        )
        assert counts == (12, 3, 6), "bundled mini-corpus counts"
    label = "licensed data" if checked_real else "bundled mini-corpus"
    print(f"ACCEPTANCE split-accounting: PASS ({label})")
    assert time.monotonic() - started < 120


def test_determinism(tmp_path):
    started = time.monotonic()
    resources = make_synthetic_resources(200)

    def spec(parallelism):
        return RunSpec(
            dataset="fn17", split="test", prompt=PromptConfig(format="direct_qa"),
            backend=BackendConfig(kind="mock_oracle", model_name="mock", parallelism=parallelism,
                                  oracle=OraclePolicy(mode="accuracy_p", p=0.75, seed=3)),
            seeds=(1, 2),
        )

    cache = ResponseCache(tmp_path / "cache")
    first = run_eval(spec(1), resources=resources, cache=cache, out_dir=tmp_path / "a")
    second = run_eval(spec(1), resources=resources, cache=cache, out_dir=tmp_path / "b")
    assert first.to_json_bytes() == second.to_json_bytes()
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    par8 = run_eval(spec(8), resources=resources, out_dir=tmp_path / "c")
    assert par8.per_run_accuracy == first.per_run_accuracy
    assert par8.breakdowns == first.breakdowns
    rows1 = [{k: v for k, v in r.items() if k != "run_id"}
             for r in load_predictions(tmp_path / "a" / first.predictions_paths[0])]
    rows8 = [{k: v for k, v in r.items() if k != "run_id"}
             for r in load_predictions(tmp_path / "c" / par8.predictions_paths[0])]
    assert rows1 == rows8
    _announce("determinism", started, 30.0)


def test_live_endpoint_reproduction():
    """Table-level reproduction against a live model endpoint; not desk-scale.

    Enable by setting FRAMESCOPE_LIVE_ENDPOINT (an OpenAI-compatible chat URL),
    FRAMESCOPE_LIVE_MODEL (e.g. Llama-3.1-8B-Instruct), and FRAMESCOPE_FN17_DIR.
    Asserts: FN 1.7 Direct-QA few-shot (names & LU defs) accuracy within
    83.5 +/- 2.0, and def_eval with gold FN 1.7 definitions within 78.4 +/- 2.5
    zero-shot. The published fine-tuned (91.9) and out-of-domain (80.7 / 49.6)
    numbers require training runs and are documented as out of desk scale; the
    pipeline can execute them when resources exist.
    """
    endpoint = os.environ.get("FRAMESCOPE_LIVE_ENDPOINT")
    fn17 = os.environ.get("FRAMESCOPE_FN17_DIR")
    if not endpoint or not fn17:
        print("ACCEPTANCE live-endpoint: SKIPPED (no live endpoint configured; documented, not CI-gated)")
        pytest.skip("live endpoint reproduction requires FRAMESCOPE_LIVE_ENDPOINT and FRAMESCOPE_FN17_DIR")
    model = os.environ.get("FRAMESCOPE_LIVE_MODEL", "Llama-3.1-8B-Instruct")
    backend = BackendConfig(
        kind="chat_http", endpoint_url=endpoint, model_name=model,
        temperature=0.0, parallelism=8, api_key_env="FRAMESCOPE_API_KEY",
    )
    spec = RunSpec(
        dataset="fn17", split="test",
        prompt=PromptConfig(format="direct_qa", granularity="names_lu_defs", shots=5),
        backend=backend, seeds=(1, 2, 3),
        corpus_dir=fn17, lexicon_dir=fn17,
    )
    report = run_eval(spec)
    assert abs(report.mean_accuracy * 100 - 83.5) <= 2.0

    from framescope.defprobe import eval_with_definitions
    from framescope.evalkit import resolve_resources

    zero_spec = RunSpec(
        dataset="fn17", split="test",
        prompt=PromptConfig(format="direct_qa", shots=0),
        backend=backend, seeds=(1, 2, 3), corpus_dir=fn17, lexicon_dir=fn17,
    )
    def_report = eval_with_definitions("gold", zero_spec, resolve_resources(zero_spec))
    assert abs(def_report.mean_accuracy * 100 - 78.4) <= 2.5
    print("ACCEPTANCE live-endpoint: PASS")
