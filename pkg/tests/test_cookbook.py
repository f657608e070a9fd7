import json
from pathlib import Path

import pytest

from mcp2osc.cookbook import (
    check_expectations,
    check_matcher,
    load_transcripts,
    main,
    replay_transcript,
    replay_transcripts,
    resolve,
    substitute,
)
from mcp2osc.errors import MatcherFailed
from test_server import TOOL_NAMES

TRANSCRIPTS = Path(__file__).resolve().parent.parent / "docs" / "transcripts"
PATHS = load_transcripts(TRANSCRIPTS)


def load(name):
    return json.loads((TRANSCRIPTS / name).read_text())


def test_corpus_covers_every_tool():
    called = {step["call"] for p in PATHS for step in json.loads(p.read_text())["steps"] if "call" in step}
    assert called == TOOL_NAMES
    assert len(PATHS) == 14


@pytest.mark.parametrize("path", PATHS, ids=[p.stem for p in PATHS])
def test_transcript_replays(path):
    doc = json.loads(path.read_text())
    assert doc["prompt"] and doc["template"]
    replay_transcript(path)


def write_variant(tmp_path, name, edit):
    doc = load(name)
    edit(doc)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_odd_channel_transcript_checks_one_datagram(tmp_path):
    def edit(doc):
        doc["steps"][-1]["expect"]["datagrams"] = {"count": 2}

    with pytest.raises(MatcherFailed, match="datagrams: count 1, expected 2"):
        replay_transcript(write_variant(tmp_path, "08-odd-channel-mute.json", edit))


def test_crescendo_transcript_checks_76_entries(tmp_path):
    def edit(doc):
        doc["steps"][1]["expect"]["entries"] = {"count": 75}
        doc["steps"][1]["timeout_s"] = 3.0

    with pytest.raises(MatcherFailed, match="entries: count 76, expected 75"):
        replay_transcript(write_variant(tmp_path, "05-crescendo-stream.json", edit))


def test_lifecycle_transcript_ends_empty():
    doc = load("14-pattern-lifecycle.json")
    assert doc["steps"][-1] == {"call": "list_patterns", "arguments": {}, "expect": {"count": {"exact": 0}}}
    assert [s["call"] for s in doc["steps"]][:3] == ["save_patterns", "list_patterns", "update_pattern"]


def test_failure_report_has_diff(tmp_path):
    def edit(doc):
        doc["steps"][1]["expect"]["sent"]["exact"]["args"][0]["value"] = "high"

    with pytest.raises(MatcherFailed) as info:
        replay_transcript(write_variant(tmp_path, "02-word-valued-volume.json", edit))
    text = str(info.value)
    assert "02-word-valued-volume.json step 1 (call send_message)" in text
    assert '-      "value": "high"' in text and '+      "value": "low"' in text


def test_unexpected_rpc_error_fails(tmp_path):
    def edit(doc):
        del doc["steps"][1]["arguments"]["address"]

    with pytest.raises(MatcherFailed, match="unexpected JSON-RPC error"):
        replay_transcript(write_variant(tmp_path, "02-word-valued-volume.json", edit))


def test_replay_directory_reports_each(tmp_path):
    (tmp_path / "ok.json").write_text(json.dumps({"name": "ok", "steps": [{"sleep_s": 0}]}))
    (tmp_path / "bad.json").write_text(json.dumps({"name": "bad", "steps": [
        {"call": "get_stats", "arguments": {"window_s": 5}, "expect": {"total": {"exact": 1}}}]}))
    results = {r.name: r for r in replay_transcripts(tmp_path)}
    assert results["ok"].passed and not results["bad"].passed
    assert "total" in results["bad"].detail


def test_cli_exit_codes(tmp_path, capsys):
    assert main([str(tmp_path)]) == 2
    (tmp_path / "ok.json").write_text(json.dumps({"name": "ok", "steps": [{"sleep_s": 0}]}))
    assert main([str(tmp_path)]) == 0
    assert "PASS ok" in capsys.readouterr().out
    (tmp_path / "bad.json").write_text(json.dumps({"name": "bad", "steps": [
        {"call": "list_patterns", "arguments": {}, "expect": {"count": {"exact": 3}}}]}))
    assert main([str(tmp_path)]) == 1
    assert "FAIL bad" in capsys.readouterr().out


DOC = {"a": [{"v": 1}, {"v": 2}, {"v": 3}], "s": "hello", "n": 0.5, "m": {"x": 1, "y": 1}}


@pytest.mark.parametrize(
    "path, matcher, ok",
    [
        ("s", {"exact": "hello"}, True),
        ("s", {"exact": "hullo"}, False),
        ("n", {"range": [0, 1]}, True),
        ("n", {"range": [0.6, 1]}, False),
        ("s", {"range": [0, 1]}, False),
        ("a", {"count": 3}, True),
        ("a", {"count": [4, 9]}, False),
        ("s", {"count": 5, "regex": "^h.l+o$"}, True),
        ("s", {"regex": "z"}, False),
        ("n", {"regex": "0"}, False),
        ("a.*.v", {"range": [1, 3]}, True),
        ("a.*.v", {"range": [2, 3]}, False),
        ("a.-1.v", {"exact": 3}, True),
        ("a.7.v", {"exact": 3}, False),
        ("m.*", {"exact": 1}, True),
        ("missing", {"exact": None}, False),
        ("", {"count": 4}, True),
    ],
)
def test_matchers(path, matcher, ok):
    assert (check_expectations(DOC, {path: matcher}) == []) is ok


def test_empty_fanout_fails():
    assert check_expectations({"a": []}, {"a.*": {"exact": 1}}) == ["a.*: no elements"]


def test_bool_is_not_a_number():
    assert check_matcher(True, {"range": [0, 1]}) != []


def test_bad_matcher_rejected():
    with pytest.raises(ValueError):
        check_matcher(1, {"approx": 1})
    with pytest.raises(ValueError):
        check_matcher(1, {})


def test_resolve_marks_missing():
    (value,) = resolve({"a": 1}, "a.b")
    assert check_matcher(value, {"exact": 1}) == ["missing"]


def test_substitute_keeps_types():
    variables = {"port": 9000, "host": "h"}
    assert substitute({"p": "${port}", "d": "${host}:${port}", "l": ["${port}", 2]}, variables) == {
        "p": 9000, "d": "h:9000", "l": [9000, 2],
    }
