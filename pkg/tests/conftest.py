import warnings

import pytest

warnings.filterwarnings("ignore", module="starlette.testclient")

from ibs.gateway import AuditLog, Principal, build_app
from ibs.harness import GatewayClient, default_corpus_path, load_corpus
from ibs.interpreter import Grammar
from ibs.orchestrator import build_fixture_system, default_fixture_dir


@pytest.fixture(scope="session")
def fixtures_dir():
    return default_fixture_dir()


@pytest.fixture(scope="session")
def grammar(fixtures_dir):
    return Grammar.load(fixtures_dir / "grammar" / "intent_rules.json")


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(default_corpus_path())


@pytest.fixture()
def system():
    return build_fixture_system()


def make_client(system, role="operator", audit=None):
    app = build_app(
        system.orchestrator,
        tokens={"test-token": Principal("tester", role)},
        audit=audit if audit is not None else AuditLog(),
    )
    return GatewayClient(app=app, token="test-token")
