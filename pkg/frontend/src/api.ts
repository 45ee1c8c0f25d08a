import { sseFrames } from "./sse.js";
import { AgentInfo, IntentEvent, StatusDoc } from "./types.js";

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly body: string,
  ) {
    super(`gateway returned ${status}: ${body}`);
  }
}

export interface Answer {
  question_id: string;
  answer: string;
}

/** Thin REST + SSE client for the northbound intent gateway. */
export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
  ) {}

  private headers(): Record<string, string> {
    return {
      authorization: `Bearer ${this.token}`,
      "content-type": "application/json",
    };
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) throw new GatewayError(resp.status, text);
    return JSON.parse(text);
  }

  /** Submit an intent; resolves when the pipeline settles or pauses for
   * clarification. With an interactive gateway this can stay in flight until
   * approvals are posted from elsewhere, so callers that expect approval
   * gates should not await it before acting. */
  async submit(text: string, intentId?: string): Promise<StatusDoc> {
    const body: Record<string, string> = { text, source: "console" };
    if (intentId) body.intent_id = intentId;
    return StatusDoc.parse(await this.request("POST", "/api/v1/intents", body));
  }

  async status(intentId: string): Promise<StatusDoc> {
    return StatusDoc.parse(
      await this.request("GET", `/api/v1/intents/${intentId}`),
    );
  }

  async answer(intentId: string, answers: Answer[]): Promise<StatusDoc> {
    return StatusDoc.parse(
      await this.request("POST", `/api/v1/intents/${intentId}/answers`, {
        answers,
      }),
    );
  }

  async approve(
    intentId: string,
    nodeId: string,
    approved: boolean,
  ): Promise<{ accepted: boolean; stale: boolean }> {
    const doc = (await this.request(
      "POST",
      `/api/v1/intents/${intentId}/approvals`,
      { node_id: nodeId, approved },
    )) as { accepted: boolean; stale: boolean };
    return doc;
  }

  async agents(): Promise<AgentInfo[]> {
    const doc = (await this.request("GET", "/api/v1/agents")) as {
      agents: unknown[];
    };
    return doc.agents.map((a) => AgentInfo.parse(a));
  }

  /** Stream lifecycle events for one intent. The gateway replays history
   * first, then follows live events until the intent is terminal. */
  async *events(intentId: string): AsyncGenerator<IntentEvent> {
    const resp = await fetch(
      `${this.baseUrl}/api/v1/intents/${intentId}/events`,
      { headers: this.headers() },
    );
    if (!resp.ok || resp.body === null) {
      throw new GatewayError(resp.status, await resp.text());
    }
    for await (const frame of sseFrames(resp.body)) {
      yield IntentEvent.parse(JSON.parse(frame.data));
    }
  }

  /** Poll until a status predicate holds; used for approval-gated intents
   * whose submit request is still in flight. */
  async waitFor(
    intentId: string,
    ready: (doc: StatusDoc) => boolean,
    timeoutMs = 15000,
    pollMs = 50,
  ): Promise<StatusDoc> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      try {
        const doc = await this.status(intentId);
        if (ready(doc)) return doc;
      } catch (err) {
        if (!(err instanceof GatewayError && err.status === 404)) throw err;
      }
      if (Date.now() > deadline) {
        throw new Error(`timed out waiting on ${intentId}`);
      }
      await new Promise((r) => setTimeout(r, pollMs));
    }
  }
}
