"""Offline ingestion of security knowledge catalogs into the AIR attack
dictionary, and read-only intent enrichment with matched entries."""

from __future__ import annotations

import json
import re
from dataclasses import replace
from pathlib import Path

from .air import AttackEntry, MalformedDocumentError, Repository
from .model import SCHEMA_VERSION, FormalizedIntent

ENRICH_TOP_N = 3


class CatalogError(MalformedDocumentError):
    pass


def ingest_catalog(path, source: str, air: Repository) -> int:
    """Upsert a catalog fixture file into the attack dictionary.

    Idempotent: entries are keyed by (source, external_id); a duplicate
    external_id within one file wins last.
    """
    fpath = Path(path)
    try:
        doc = json.loads(fpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{fpath.name} line {exc.lineno}: {exc.msg}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise CatalogError(f"{fpath.name}: schema_version")
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise CatalogError(f"{fpath.name}: missing section: entries")
    count = 0
    seen = set()
    for i, item in enumerate(entries):
        try:
            entry = AttackEntry.from_doc(item)
        except (KeyError, ValueError) as exc:
            raise CatalogError(f"{fpath.name} entry {i}: {exc}") from exc
        if entry.source != source:
            raise CatalogError(f"{fpath.name} entry {i}: source")
        seen.add(entry.external_id)
        air.upsert_attack(entry)
        count += 1
    return count


def _goal_terms(fi: FormalizedIntent) -> set:
    terms = set(re.split(r"[^a-z0-9]+", fi.intent_class.value.lower()))
    for value in fi.structured_goal.values():
        terms.update(re.split(r"[^a-z0-9]+", str(value).lower()))
    terms.discard("")
    return terms


def enrich(fi: FormalizedIntent, air: Repository) -> FormalizedIntent:
    """Attach the top matched attack entries as metadata.knowledge_refs.

    Read-only with respect to goal semantics: structured_goal is never
    altered, so deterministic pipeline output is unaffected.
    """
    if not fi.aligned:
        raise ValueError("intent not aligned")
    matches = air.lookup_attack(_goal_terms(fi))[:ENRICH_TOP_N]
    refs = [{"source": e.source, "external_id": e.external_id, "title": e.title}
            for e in matches]
    return replace(fi, metadata={**fi.metadata, "knowledge_refs": refs})
