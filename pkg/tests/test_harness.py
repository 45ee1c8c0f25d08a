import copy
import json

import pytest

from ibs import harness
from ibs.orchestrator import build_fixture_system


def _corpus_doc():
    return json.loads(harness.default_corpus_path().read_text())


def _write(tmp_path, doc):
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps(doc))
    return path


# -- corpus validation ----------------------------------------------------------


def test_load_default_corpus(corpus):
    assert len(corpus.sets) == 3
    assert all(len(s.intents) == 10 for s in corpus.sets)


def test_corpus_rejects_wrong_set_count(tmp_path):
    doc = _corpus_doc()
    doc["sets"] = doc["sets"][:2]
    with pytest.raises(harness.CorpusError, match="3 sets"):
        harness.load_corpus(_write(tmp_path, doc))


def test_corpus_rejects_wrong_intent_count(tmp_path):
    doc = _corpus_doc()
    doc["sets"][0]["intents"] = doc["sets"][0]["intents"][:9]
    with pytest.raises(harness.CorpusError, match="10 intents"):
        harness.load_corpus(_write(tmp_path, doc))


def test_corpus_requires_exactly_one_blocked(tmp_path):
    doc = _corpus_doc()
    doc["sets"][0]["intents"][0]["expected_outcome"] = "blocked"
    with pytest.raises(harness.CorpusError, match="blocked"):
        harness.load_corpus(_write(tmp_path, doc))


def test_corpus_rejects_wrong_schema_version(tmp_path):
    doc = _corpus_doc()
    doc["schema_version"] = "2"
    with pytest.raises(harness.CorpusError, match="schema_version"):
        harness.load_corpus(_write(tmp_path, doc))


# -- running ---------------------------------------------------------------------


def test_single_iteration_counts_sum_to_ten(corpus):
    system = build_fixture_system()
    report = harness.run(corpus, 1, system)
    for counts in report.per_set_counts.values():
        assert sum(counts.values()) == 10
    report.check_conservation()
    assert report.valid


def test_run_rejects_zero_iterations(corpus):
    with pytest.raises(harness.CorpusError):
        harness.run(corpus, 0, build_fixture_system())


def test_run_is_deterministic_across_fresh_systems(corpus):
    a = harness.run(corpus, 1, build_fixture_system())
    b = harness.run(corpus, 1, build_fixture_system())
    assert a.outcome_matrix == b.outcome_matrix
    assert a.per_set_counts == b.per_set_counts


def test_mis_domained_agent_counts_domain_fail(corpus):
    system = build_fixture_system(
        domain_overrides={"agent.transport.link-shield": "domain.core"})
    report = harness.run(corpus, 1, system)
    for name, counts in report.per_set_counts.items():
        assert counts["domain_fail"] == 2, name  # both user-plane intents per set


def test_history_records_one_per_intent_run(corpus):
    system = build_fixture_system()
    harness.run(corpus, 2, system)
    assert len(system.air.history()) == 60


# -- reporting ---------------------------------------------------------------------


def _fake_report():
    report = harness.RunReport(backend="deterministic", iterations=20)
    for name in ("set-1", "set-2", "set-3"):
        report.per_set_counts[name] = {"pass": 180, "domain_fail": 0, "blocked": 20}
        report.outcome_matrix[name] = {}
    return report


def test_emit_report_writes_json_and_plot_csv(tmp_path):
    out = harness.emit_report(_fake_report(), tmp_path / "report.json")
    doc = json.loads(out.read_text())
    assert doc["per_set_counts"]["set-1"]["pass"] == 180
    csv_lines = (tmp_path / "report.plot.csv").read_text().splitlines()
    assert len(csv_lines) == 4  # header + 3 sets
    assert all(line.endswith("0.9000") for line in csv_lines[1:])


def test_emit_report_rejects_empty(tmp_path):
    empty = harness.RunReport(backend="deterministic", iterations=0)
    with pytest.raises(harness.CorpusError):
        harness.emit_report(empty, tmp_path / "report.json")


def test_merge_two_backends_gives_six_rows():
    a = _fake_report()
    b = copy.deepcopy(a)
    b.backend = "remote-chat:stub"
    rows = harness.merge_reports([a, b])
    assert len(rows) == 6
    assert {r["backend"] for r in rows} == {"deterministic", "remote-chat:stub"}
    assert all(r["success_rate"] == pytest.approx(0.9) for r in rows)
