#!/usr/bin/env node
/** Operator console entry point.
 *
 *   node dist/main.js submit "<intent text>"
 *   node dist/main.js status <intent-id>
 *   node dist/main.js answer <intent-id> <question-id> <value>
 *   node dist/main.js approve <intent-id> <node-id> [--deny]
 *   node dist/main.js watch <intent-id>
 *   node dist/main.js agents
 *
 * Server and credentials come from IBS_SERVER (default
 * http://127.0.0.1:8080) and IBS_TOKEN (default dev-operator-token).
 */
import { GatewayClient } from "./api.js";
import { renderApprovals, renderExecution, renderWorkbench } from "./render.js";
import { IntentStore } from "./store.js";

function out(lines: string[]): void {
  for (const line of lines) console.log(line);
}

async function main(argv: string[]): Promise<number> {
  const server = process.env.IBS_SERVER ?? "http://127.0.0.1:8080";
  const token = process.env.IBS_TOKEN ?? "dev-operator-token";
  const client = new GatewayClient(server, token);
  const [command, ...rest] = argv;

  switch (command) {
    case "submit": {
      const text = rest.join(" ").trim();
      if (!text) throw new Error("usage: submit <intent text>");
      const doc = await client.submit(text);
      out(renderWorkbench(doc));
      out(renderApprovals(doc));
      return 0;
    }
    case "status": {
      const doc = await client.status(required(rest[0], "intent-id"));
      out(renderWorkbench(doc));
      out(renderExecution(doc));
      return 0;
    }
    case "answer": {
      const doc = await client.answer(required(rest[0], "intent-id"), [
        {
          question_id: required(rest[1], "question-id"),
          answer: required(rest[2], "value"),
        },
      ]);
      out(renderWorkbench(doc));
      return 0;
    }
    case "approve": {
      const approved = !rest.includes("--deny");
      const result = await client.approve(
        required(rest[0], "intent-id"),
        required(rest[1], "node-id"),
        approved,
      );
      console.log(
        `${approved ? "approved" : "denied"}: accepted=${result.accepted} stale=${result.stale}`,
      );
      return 0;
    }
    case "watch": {
      const intentId = required(rest[0], "intent-id");
      const store = new IntentStore(intentId, (id) => client.status(id));
      for await (const event of client.events(intentId)) {
        if (await store.apply(event)) {
          console.log(`#${event.seq} ${event.stage}`);
        }
      }
      out(renderExecution(await store.sync()));
      return 0;
    }
    case "agents": {
      for (const agent of await client.agents()) {
        console.log(
          `${agent.agent_id} ${agent.domain} ${agent.online ? "online" : "offline"} ` +
            agent.capabilities.join(","),
        );
      }
      return 0;
    }
    default:
      console.error("unknown command; see header comment for usage");
      return 2;
  }
}

function required(value: string | undefined, name: string): string {
  if (!value) throw new Error(`missing argument: ${name}`);
  return value;
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  },
);
