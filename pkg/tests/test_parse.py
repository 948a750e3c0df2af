import math

import pytest

from framescope.backends import ModelResponse
from framescope.parse import DECODE_PATHS, ParseContractError, decode_logprobs, parse_response
from framescope.promptkit import RenderedPrompt


def _prompt(schema, label_map=None, candidates=None, instance_id="i1"):
    return RenderedPrompt(
        text="<prompt>",
        label_map=label_map or {},
        expected_answer_schema=schema,
        meta={
            "instance_id": instance_id,
            "gold_frame": None,
            "gold_label": None,
            "candidate_frames": candidates or list((label_map or {}).values()),
        },
    )


NAME_PROMPT = _prompt("frame_name_json", candidates=["Intentionally_act", "Capacity"])
OPTION_PROMPT = _prompt("frame_option_json", {"A": "Locale_by_use", "B": "Political_locales"})
DEF_PROMPT = _prompt("def_option_json", {"A": "Familiarity", "B": "Certainty"})
ORDINAL_PROMPT = _prompt("ordinal_answer", {str(i): f"F{i}" for i in range(1, 44)})
LETTER_PROMPT = _prompt("letter_answer", {"A": "Locale_by_use", "B": "System"})

# (name, raw_text, prompt, expected_frame, expected_path)
RESPONSE_FIXTURES = [
    ("clean_exact_key", '{"frame_Name": "Intentionally_act"}', NAME_PROMPT, "Intentionally_act", "clean_json"),
    ("clean_lowercase_key", '{"frame_name": "Capacity"}', NAME_PROMPT, "Capacity", "clean_json"),
    ("fenced_option", '```json\n{"frame_Option": "B"}\n```', OPTION_PROMPT, "Political_locales", "repaired_json"),
    ("prefixed_prose", 'Sure! The answer is {"frame_Option": "A"}.', OPTION_PROMPT, "Locale_by_use", "repaired_json"),
    ("extra_keys", '{"reasoning": "both fit", "frame_Option": "B", "frame_Name": "Political_locales"}', OPTION_PROMPT, "Political_locales", "clean_json"),
    ("wrong_case_frame_name", '{"frame_Name": "intentionally_act"}', NAME_PROMPT, "Intentionally_act", "fuzzy_name"),
    ("name_in_prose", "I believe the frame is Intentionally act, clearly.", NAME_PROMPT, "Intentionally_act", "fuzzy_name"),
    ("option_fallback_to_name", '{"frame_Option": "Z", "frame_Name": "Political_locales"}', OPTION_PROMPT, "Political_locales", "clean_json"),
    ("lowercase_option_letter", '{"frame_option": "b"}', OPTION_PROMPT, "Political_locales", "clean_json"),
    ("def_option", '{"frame_definition_Option": "B"}', DEF_PROMPT, "Certainty", "clean_json"),
    ("ordinal_with_cue", "Answer: 17", ORDINAL_PROMPT, "F17", "ordinal"),
    ("ordinal_prose", "The best option is 43.", ORDINAL_PROMPT, "F43", "ordinal"),
    ("letter_bare", "B", LETTER_PROMPT, "System", "ordinal"),
    ("refusal", "I cannot determine the frame for this sentence.", OPTION_PROMPT, None, "failed"),
    ("empty", "", OPTION_PROMPT, None, "failed"),
    ("off_schema_number", "I think the answer is obviously 42.", OPTION_PROMPT, None, "failed"),
    ("ordinal_out_of_range", "Answer: 99", ORDINAL_PROMPT, None, "failed"),
    ("invalid_option_only", '{"frame_Option": "Q"}', OPTION_PROMPT, None, "failed"),
]


@pytest.mark.parametrize("name,raw,prompt,frame,path", RESPONSE_FIXTURES, ids=[f[0] for f in RESPONSE_FIXTURES])
def test_response_fixture(name, raw, prompt, frame, path):
    pred = parse_response(ModelResponse(raw_text=raw), prompt)
    assert pred.predicted_frame == frame
    assert pred.decode_path == path
    assert pred.raw_text == raw
    assert pred.instance_id == "i1"


def test_parsing_is_total_and_deterministic():
    junk = ["", "{", "”“", "null", "[1,2]", '{"frame_Option": []}', "\x00\x01", "answer answer answer"]
    for raw in junk:
        first = parse_response(ModelResponse(raw_text=raw), OPTION_PROMPT)
        second = parse_response(ModelResponse(raw_text=raw), OPTION_PROMPT)
        assert first == second
        assert first.decode_path in DECODE_PATHS


def test_repair_never_invents_a_frame():
    # Fabricated frame names must not decode, no matter how JSON-clean.
    pred = parse_response(ModelResponse(raw_text='{"frame_Name": "Totally_made_up"}'), NAME_PROMPT)
    assert pred.failed
    prose = parse_response(ModelResponse(raw_text="It evokes the Banana_peeling frame."), NAME_PROMPT)
    assert prose.failed


def test_no_edit_distance_matching():
    # One letter off is not a whole-token normalized match.
    pred = parse_response(ModelResponse(raw_text='{"frame_Name": "Capacty"}'), NAME_PROMPT)
    assert pred.failed


def test_label_decode_requires_membership():
    pred = parse_response(ModelResponse(raw_text='{"frame_definition_Option": "C"}'), DEF_PROMPT)
    assert pred.failed


def test_logprob_response_short_circuits_text():
    response = ModelResponse(raw_text="ignored", label_logprobs={"A": -0.1, "B": -2.3})
    pred = parse_response(response, OPTION_PROMPT)
    assert pred.predicted_frame == "Locale_by_use"
    assert pred.decode_path == "logprob_argmax"


def test_decode_logprobs_argmax():
    pred = decode_logprobs({"A": -0.1, "B": -2.3}, {"A": "Capacity", "B": "Assistance"})
    assert pred.predicted_frame == "Capacity"


def test_decode_logprobs_tie_breaks_by_label_order():
    pred = decode_logprobs({"A": -1.0, "B": -1.0}, {"A": "Capacity", "B": "Assistance"})
    assert pred.predicted_frame == "Capacity"


def test_decode_logprobs_shift_invariance():
    base = decode_logprobs({"A": -0.1, "B": -2.3}, {"A": "X", "B": "Y"})
    shifted = decode_logprobs({"A": -5.1, "B": -7.3}, {"A": "X", "B": "Y"})
    assert base.predicted_frame == shifted.predicted_frame


def test_decode_logprobs_missing_label():
    with pytest.raises(ParseContractError, match="missing"):
        decode_logprobs({"A": -0.1}, {"A": "X", "B": "Y"})
