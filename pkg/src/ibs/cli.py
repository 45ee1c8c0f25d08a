"""Command-line entry points: the orchestrator daemon (ibsd), the simulated
agent daemon (agentd), the operator control tool (ibsctl), and the benchmark
runner (ibs-bench)."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# -- ibsd -----------------------------------------------------------------


def ibsd_main(argv=None) -> int:
    """Run the northbound gateway plus orchestrator over the fixture system."""
    parser = argparse.ArgumentParser(prog="ibsd", description=ibsd_main.__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--fixtures", help="fixtures directory (default: bundled)")
    parser.add_argument("--tokens", help="token file (JSON)")
    parser.add_argument("--audit-log", help="audit log file path")
    parser.add_argument("--approval-mode", choices=["auto", "interactive"],
                        default="auto")
    parser.add_argument("--ui-dir", help="static console assets to serve at /ui")
    args = parser.parse_args(argv)

    config = _load_json(args.config) if args.config else {}
    host = config.get("host", args.host)
    port = int(config.get("port", args.port))
    fixtures = config.get("fixtures", args.fixtures)
    tokens_path = config.get("tokens", args.tokens)
    audit_path = config.get("audit_log", args.audit_log)
    approval_mode = config.get("approval_mode", args.approval_mode)
    ui_dir = config.get("ui_dir", args.ui_dir)

    from .gateway import AuditLog, Principal, build_app, load_tokens
    from .orchestrator import build_fixture_system

    system = build_fixture_system(fixtures_dir=fixtures, approval_mode=approval_mode)
    if tokens_path:
        tokens = load_tokens(tokens_path)
    else:
        tokens = {
            "dev-operator-token": Principal("dev-operator", "operator"),
            "dev-admin-token": Principal("dev-admin", "admin"),
        }
        print("ibsd: no token file given; using development tokens", file=sys.stderr)
    audit = AuditLog(Path(audit_path)) if audit_path else AuditLog()
    app = build_app(system.orchestrator, tokens=tokens, audit=audit, ui_dir=ui_dir)

    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


# -- agentd ---------------------------------------------------------------


def agentd_main(argv=None) -> int:
    """Run one simulated domain agent as an HTTP bus endpoint."""
    parser = argparse.ArgumentParser(prog="agentd", description=agentd_main.__doc__)
    parser.add_argument("--config", required=True, help="agent config JSON file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9001)
    args = parser.parse_args(argv)

    from .agent import SimulatedAgent, build_app, load_agent_config

    config = load_agent_config(args.config)
    agent = SimulatedAgent(config)
    app = build_app(agent)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- ibsctl ---------------------------------------------------------------


def _ctl_request(args, method: str, path: str, body=None):
    import httpx

    headers = {"authorization": f"Bearer {args.token}"}
    with httpx.Client(base_url=args.server, headers=headers, timeout=30.0) as client:
        resp = client.request(method, path, json=body)
    if resp.status_code >= 400:
        print(f"error {resp.status_code}: {resp.text}", file=sys.stderr)
        return None
    return resp.json()


def ibsctl_main(argv=None) -> int:
    """Operate a running gateway: submit intents, answer clarifications,
    decide approvals, inspect status/agents/audit, and ingest knowledge
    catalogs into a local registry directory."""
    parser = argparse.ArgumentParser(prog="ibsctl", description=ibsctl_main.__doc__)
    parser.add_argument("--server", default="http://127.0.0.1:8080")
    parser.add_argument("--token", default="dev-operator-token")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("submit", help="submit an intent")
    p.add_argument("text")
    p.add_argument("--intent-id")

    p = sub.add_parser("status", help="show an intent's status document")
    p.add_argument("intent_id")

    p = sub.add_parser("answer", help="answer a clarification question")
    p.add_argument("intent_id")
    p.add_argument("question_id")
    p.add_argument("value")

    p = sub.add_parser("approve", help="decide a pending approval")
    p.add_argument("intent_id")
    p.add_argument("node_id")
    p.add_argument("--deny", action="store_true")

    sub.add_parser("agents", help="list registered agents")
    sub.add_parser("audit", help="dump the audit log and verify its chain")

    p = sub.add_parser("knowledge", help="knowledge catalog operations")
    ksub = p.add_subparsers(dest="knowledge_command", required=True)
    ki = ksub.add_parser("ingest", help="ingest a catalog file into a registry dir")
    ki.add_argument("file")
    ki.add_argument("--source", required=True,
                    choices=["mitre-attack", "mitre-fight", "nist"])
    ki.add_argument("--registry", required=True, help="registry directory")

    args = parser.parse_args(argv)

    if args.command == "knowledge":
        from .air import load_repository, save_repository
        from .knowledge import ingest_catalog

        air = load_repository(Path(args.registry))
        count = ingest_catalog(args.file, args.source, air)
        save_repository(air, Path(args.registry))
        print(f"ingested {count} entries from {args.file}")
        return 0

    if args.command == "submit":
        body = {"text": args.text, "source": "console"}
        if args.intent_id:
            body["intent_id"] = args.intent_id
        result = _ctl_request(args, "POST", "/api/v1/intents", body)
    elif args.command == "status":
        result = _ctl_request(args, "GET", f"/api/v1/intents/{args.intent_id}")
    elif args.command == "answer":
        result = _ctl_request(args, "POST", f"/api/v1/intents/{args.intent_id}/answers",
                              {"answers": [{"question_id": args.question_id,
                                            "answer": args.value}]})
    elif args.command == "approve":
        result = _ctl_request(args, "POST",
                              f"/api/v1/intents/{args.intent_id}/approvals",
                              {"node_id": args.node_id, "approved": not args.deny})
    elif args.command == "agents":
        result = _ctl_request(args, "GET", "/api/v1/agents")
    elif args.command == "audit":
        result = _ctl_request(args, "GET", "/api/v1/audit")
    else:  # pragma: no cover - argparse enforces choices
        return 2

    if result is None:
        return 1
    print(json.dumps(result, indent=1, sort_keys=True))
    return 0


# -- ibs-bench ------------------------------------------------------------


def bench_main(argv=None) -> int:
    """Run the evaluation corpus against a freshly built fixture system."""
    parser = argparse.ArgumentParser(prog="ibs-bench", description=bench_main.__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the benchmark")
    p.add_argument("--corpus", help="corpus JSON file (default: bundled)")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--backend", default="deterministic",
                   choices=["deterministic", "remote-chat"])
    p.add_argument("--endpoint", help="chat endpoint (remote-chat backend)")
    p.add_argument("--model", default="default", help="model name (remote-chat)")
    p.add_argument("--fixtures", help="fixtures directory (default: bundled)")
    p.add_argument("--out", default="report.json", help="report output path")

    args = parser.parse_args(argv)

    from . import harness
    from .orchestrator import build_fixture_system

    corpus = harness.load_corpus(args.corpus or harness.default_corpus_path())
    backend = None
    if args.backend == "remote-chat":
        if not args.endpoint:
            parser.error("--endpoint is required with --backend remote-chat")
        from .interpreter import RemoteChatBackend

        backend = RemoteChatBackend(endpoint=args.endpoint, model=args.model)
    system = build_fixture_system(fixtures_dir=args.fixtures, backend=backend)
    report = harness.run(corpus, args.iterations, system)
    out = harness.emit_report(report, args.out)
    for name in sorted(report.per_set_counts):
        counts = report.per_set_counts[name]
        total = sum(counts.values())
        rate = counts["pass"] / total if total else 0.0
        print(f"{name}: pass={counts['pass']} domain_fail={counts['domain_fail']} "
              f"blocked={counts['blocked']} success_rate={rate:.3f}")
    print(f"report written to {out}")
    return 0
