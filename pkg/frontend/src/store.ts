import { IntentEvent, StatusDoc } from "./types.js";

/** Client-side view state for one intent.
 *
 * Events carry strictly increasing per-intent sequence numbers. If the
 * console ever observes a gap (missed frame, reconnect), the store falls
 * back to re-fetching the authoritative status document instead of trusting
 * its incremental view.
 */
export class IntentStore {
  readonly events: IntentEvent[] = [];
  lastSeq = 0;
  gaps = 0;
  doc: StatusDoc | null = null;

  constructor(
    readonly intentId: string,
    private readonly refetch: (intentId: string) => Promise<StatusDoc>,
  ) {}

  /** Apply one event. Returns true when the event advanced the view,
   * false when it was a stale duplicate. Gaps trigger a status refetch. */
  async apply(event: IntentEvent): Promise<boolean> {
    if (event.seq <= this.lastSeq) return false;
    if (event.seq !== this.lastSeq + 1) {
      this.gaps += 1;
      this.doc = await this.refetch(this.intentId);
    }
    this.lastSeq = event.seq;
    this.events.push(event);
    return true;
  }

  /** Pipeline stages seen so far, in arrival order. */
  stages(): string[] {
    return this.events.map((e) => e.stage);
  }

  terminal(): boolean {
    return this.events.some((e) => e.stage === "outcome");
  }

  async sync(): Promise<StatusDoc> {
    this.doc = await this.refetch(this.intentId);
    return this.doc;
  }
}
