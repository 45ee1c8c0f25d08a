import json

import pytest

from ibs.air import Repository, load_repository
from ibs.knowledge import CatalogError, enrich, ingest_catalog
from ibs.model import FormalizedIntent, IntentClass


@pytest.fixture()
def air(fixtures_dir):
    return load_repository(fixtures_dir / "air")


def fi(intent_class=IntentClass.ROGUE_BASE_STATION_DEFENSE, missing=()):
    return FormalizedIntent(
        intent_id="intent.t1", intent_class=intent_class,
        structured_goal={"scope": "domain.ran", "target_function": "gnb-set"},
        missing_params=tuple(missing),
    )


# -- ingestion -------------------------------------------------------------------


def test_ingest_fight_catalog_counts_entries(air, fixtures_dir):
    count = ingest_catalog(fixtures_dir / "catalogs" / "mitre-fight.json",
                           "mitre-fight", air)
    assert count == 12
    assert len(air.list_attacks()) == 12


def test_reingest_is_idempotent(air, fixtures_dir):
    path = fixtures_dir / "catalogs" / "mitre-fight.json"
    ingest_catalog(path, "mitre-fight", air)
    before = air.list_attacks()
    assert ingest_catalog(path, "mitre-fight", air) == 12
    assert air.list_attacks() == before


def test_ingest_empty_file(air, tmp_path):
    path = tmp_path / "empty.json"
    path.write_text(json.dumps({"schema_version": "1", "entries": []}))
    assert ingest_catalog(path, "nist", air) == 0


def test_ingest_malformed_json_names_line(air, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"schema_version": "1",\n "entries": [}')
    with pytest.raises(CatalogError, match="line 2"):
        ingest_catalog(path, "nist", air)


def test_ingest_rejects_wrong_schema_version(air, tmp_path):
    path = tmp_path / "old.json"
    path.write_text(json.dumps({"schema_version": "0", "entries": []}))
    with pytest.raises(CatalogError, match="schema_version"):
        ingest_catalog(path, "nist", air)


def test_ingest_rejects_missing_entries_section(air, tmp_path):
    path = tmp_path / "nosection.json"
    path.write_text(json.dumps({"schema_version": "1"}))
    with pytest.raises(CatalogError, match="entries"):
        ingest_catalog(path, "nist", air)


def test_ingest_rejects_source_mismatch(air, fixtures_dir):
    with pytest.raises(CatalogError, match="source"):
        ingest_catalog(fixtures_dir / "catalogs" / "mitre-fight.json", "nist", air)


def test_ingest_names_bad_entry_index(air, tmp_path):
    path = tmp_path / "badentry.json"
    path.write_text(json.dumps({
        "schema_version": "1",
        "entries": [{"entry_id": "attack.nist.x", "source": "nist"}],
    }))
    with pytest.raises(CatalogError, match="entry 0"):
        ingest_catalog(path, "nist", air)


def test_ingest_duplicate_external_id_last_wins(air, tmp_path):
    def entry(title):
        return {"schema_version": "1", "entry_id": "attack.nist.d1",
                "source": "nist", "external_id": "D1", "title": title,
                "keywords": ["dup"]}

    path = tmp_path / "dups.json"
    path.write_text(json.dumps({"schema_version": "1",
                                "entries": [entry("first"), entry("second")]}))
    assert ingest_catalog(path, "nist", air) == 2
    stored = [e for e in air.list_attacks() if e.external_id == "D1"]
    assert len(stored) == 1 and stored[0].title == "second"


# -- enrichment -------------------------------------------------------------------


def test_enrich_attaches_false_base_station_entry(air, fixtures_dir):
    ingest_catalog(fixtures_dir / "catalogs" / "mitre-fight.json", "mitre-fight", air)
    enriched = enrich(fi(), air)
    refs = enriched.metadata["knowledge_refs"]
    assert refs and any("base station" in r["title"].lower() for r in refs)
    assert len(refs) <= 3
    # goal semantics untouched
    assert enriched.structured_goal == fi().structured_goal


def test_enrich_no_match_empty_refs(air):
    enriched = enrich(fi(IntentClass.OTHER), air)
    assert enriched.metadata["knowledge_refs"] == []


def test_enrich_is_idempotent(air, fixtures_dir):
    ingest_catalog(fixtures_dir / "catalogs" / "mitre-fight.json", "mitre-fight", air)
    once = enrich(fi(), air)
    twice = enrich(once, air)
    assert once.metadata == twice.metadata
    assert once.structured_goal == twice.structured_goal


def test_enrich_requires_alignment(air):
    with pytest.raises(ValueError):
        enrich(fi(missing=("scope",)), air)
