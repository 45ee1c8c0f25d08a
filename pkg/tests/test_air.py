import json
import random

import pytest

from ibs.air import (
    AgentDescriptor,
    AttackEntry,
    DecompositionRecord,
    MalformedDocumentError,
    MissingFileError,
    Repository,
    SchemaVersionError,
    ToolDescriptor,
    load_repository,
    save_repository,
    utc_now_iso,
)
from ibs.model import ModelError


def _agent(agent_id, caps, domain="domain.core", status="online"):
    return AgentDescriptor(
        agent_id=agent_id, domain=domain, display_name=agent_id,
        capabilities=frozenset(caps), endpoint="local", status=status,
    )


@pytest.fixture()
def air(fixtures_dir):
    return load_repository(fixtures_dir / "air")


# -- registration ----------------------------------------------------------


def test_register_fixture_agent_revision_one():
    repo = Repository()
    repo.register_agent(_agent("agent.core.amf-guard", {"core.signaling.protect"}))
    agent = repo.get_agent("agent.core.amf-guard")
    assert agent is not None and agent.revision == 1


def test_reregister_bumps_revision_single_record():
    repo = Repository()
    descriptor = _agent("agent.x", {"cap.a"})
    repo.register_agent(descriptor)
    repo.register_agent(descriptor)
    assert len(repo.list_agents()) == 1
    assert repo.get_agent("agent.x").revision == 2


def test_online_agent_requires_capabilities():
    with pytest.raises(ModelError, match="capabilities"):
        _agent("agent.x", set())


def test_offline_agent_may_have_no_capabilities():
    assert _agent("agent.x", set(), status="offline").status == "offline"


def test_remove_agent_drops_its_tools():
    repo = Repository()
    repo.register_agent(_agent("agent.x", {"cap.a"}))
    repo.register_tool(ToolDescriptor("tool.x.f", "agent.x", "start_f"))
    repo.remove_agent("agent.x")
    assert repo.get_agent("agent.x") is None
    assert repo.tools_of("agent.x") == []


# -- capability queries -------------------------------------------------------


def test_query_fixture_signaling_protect(air):
    result = air.query_capabilities({"core.signaling.protect"})
    assert [a.agent_id for a in result] == ["agent.core.amf-guard"]


def test_query_no_match(air):
    assert air.query_capabilities({"nonexistent.capability"}) == []


def test_query_empty_tags_rejected(air):
    with pytest.raises(ModelError, match="tags"):
        air.query_capabilities(set())


def test_query_ranks_by_overlap_then_id():
    repo = Repository()
    repo.register_agent(_agent("agent.b", {"cap.one"}))
    repo.register_agent(_agent("agent.c", {"cap.two"}))
    repo.register_agent(_agent("agent.a", {"cap.one", "cap.two"}))
    result = repo.query_capabilities({"cap.one", "cap.two"})
    assert [a.agent_id for a in result] == ["agent.a", "agent.b", "agent.c"]


def test_query_excludes_offline():
    repo = Repository()
    repo.register_agent(_agent("agent.a", {"cap.one"}))
    repo.set_agent_status("agent.a", "offline")
    assert repo.query_capabilities({"cap.one"}) == []


def test_query_matches_exhaustive_scan_oracle():
    rng = random.Random(7)
    pool = [f"cap.{c}" for c in "abcdefgh"]
    for _ in range(50):
        repo = Repository()
        agents = []
        for i in range(rng.randint(1, 20)):
            caps = frozenset(rng.sample(pool, rng.randint(1, 4)))
            status = rng.choice(["online", "online", "offline"])
            agent = _agent(f"agent.a{i:02d}", caps, status=status)
            repo.register_agent(agent)
            agents.append(agent)
        tags = set(rng.sample(pool, rng.randint(1, 3)))
        expected = sorted(
            (a for a in agents if a.status == "online" and a.capabilities & tags),
            key=lambda a: (-len(a.capabilities & tags), a.agent_id),
        )
        assert repo.query_capabilities(tags) == expected


# -- history -------------------------------------------------------------------


def _record(i):
    return DecompositionRecord(
        intent_id=f"intent.{i}", formalized={}, chosen_plan_id=None,
        outcome="pass", recorded_at=utc_now_iso(),
    )


def test_history_append_and_read():
    repo = Repository()
    for i in range(5):
        repo.record_decomposition(_record(i))
    history = repo.history()
    assert len(history) == 5
    assert history[-1].intent_id == "intent.4"


def test_history_snapshot_is_isolated():
    repo = Repository()
    repo.record_decomposition(_record(0))
    snapshot = repo.history()
    snapshot.append(_record(1))
    assert len(repo.history()) == 1


# -- attack dictionary ------------------------------------------------------------


def test_lookup_rogue_terms_hits_false_base_station(air, fixtures_dir):
    from ibs.knowledge import ingest_catalog

    ingest_catalog(fixtures_dir / "catalogs" / "mitre-fight.json", "mitre-fight", air)
    result = air.lookup_attack({"rogue", "base station"})
    assert result and "base station" in result[0].title.lower()


def test_lookup_empty_terms(air):
    assert air.lookup_attack(set()) == []


def test_lookup_equal_hits_ordered_by_external_id():
    repo = Repository()
    for ext in ("Z900", "A100"):
        repo.upsert_attack(AttackEntry(
            entry_id=f"attack.nist.{ext.lower()}", source="nist", external_id=ext,
            title=ext, keywords=frozenset({"phishing"}),
        ))
    result = repo.lookup_attack({"phishing"})
    assert [e.external_id for e in result] == ["A100", "Z900"]


def test_upsert_attack_is_idempotent():
    repo = Repository()
    entry = AttackEntry("attack.nist.x", "nist", "X1", "t", frozenset({"kw"}))
    repo.upsert_attack(entry)
    repo.upsert_attack(entry)
    assert len(repo.list_attacks()) == 1


# -- persistence ---------------------------------------------------------------


def test_save_load_round_trip(air, tmp_path):
    air.record_decomposition(_record(0))
    save_repository(air, tmp_path / "air")
    loaded = load_repository(tmp_path / "air")
    assert loaded.list_agents() == air.list_agents()
    assert loaded.list_tools() == air.list_tools()
    assert loaded.list_attacks() == air.list_attacks()
    assert loaded.history() == air.history()


def test_load_rejects_wrong_schema_version(air, tmp_path):
    save_repository(air, tmp_path / "air")
    target = tmp_path / "air" / "agents.json"
    doc = json.loads(target.read_text())
    doc["schema_version"] = "999"
    target.write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError):
        load_repository(tmp_path / "air")


def test_load_names_missing_section(air, tmp_path):
    save_repository(air, tmp_path / "air")
    target = tmp_path / "air" / "agents.json"
    target.write_text(json.dumps({"schema_version": "1"}))
    with pytest.raises(MalformedDocumentError, match="agents"):
        load_repository(tmp_path / "air")


def test_load_missing_directory():
    with pytest.raises(MissingFileError):
        load_repository("/nonexistent/air")


def test_load_missing_file(air, tmp_path):
    save_repository(air, tmp_path / "air")
    (tmp_path / "air" / "tools.json").unlink()
    with pytest.raises(MissingFileError, match="tools"):
        load_repository(tmp_path / "air")


# -- tools ------------------------------------------------------------------------


def test_fixture_tools_lookup(air):
    tool = air.find_tool("agent.core.amf-guard", "enable_rate_limiter")
    assert tool is not None and tool.inverse_function == "disable_rate_limiter"
    assert air.find_tool("agent.core.amf-guard", "no_such_function") is None


def test_tool_rejects_unknown_parameter_type():
    with pytest.raises(ModelError, match="parameter_schema"):
        ToolDescriptor("tool.x.f", "agent.x", "start_f",
                       parameter_schema=(("size", "float64"),))
