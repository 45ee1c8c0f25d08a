/** Minimal server-sent-events parser over a web ReadableStream of bytes.
 *
 * The gateway emits frames as `id:`/`data:` lines separated by blank lines;
 * this parser tolerates CRLF, multi-line data fields, and comment lines.
 */

export interface SseFrame {
  id: string | null;
  data: string;
}

/** Parse one complete frame from accumulated field lines. */
function buildFrame(lines: string[]): SseFrame | null {
  let id: string | null = null;
  const data: string[] = [];
  for (const line of lines) {
    if (line.startsWith(":")) continue; // comment / keep-alive
    const sep = line.indexOf(":");
    const field = sep === -1 ? line : line.slice(0, sep);
    let value = sep === -1 ? "" : line.slice(sep + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "id") id = value;
    else if (field === "data") data.push(value);
  }
  if (data.length === 0) return null;
  return { id, data: data.join("\n") };
}

/** Incremental parser: feed chunks of text, collect completed frames. */
export class SseParser {
  private buffer = "";
  private pending: string[] = [];

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let nl: number;
    while ((nl = this.buffer.indexOf("\n")) !== -1) {
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      if (line === "") {
        const frame = buildFrame(this.pending);
        this.pending = [];
        if (frame) frames.push(frame);
      } else {
        this.pending.push(line);
      }
    }
    return frames;
  }

  /** Flush a trailing frame not terminated by a blank line. */
  end(): SseFrame[] {
    if (this.buffer !== "") {
      this.pending.push(this.buffer.replace(/\r$/, ""));
      this.buffer = "";
    }
    const frame = buildFrame(this.pending);
    this.pending = [];
    return frame ? [frame] : [];
  }
}

/** Async iterator over SSE frames of a fetch response body. */
export async function* sseFrames(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<SseFrame> {
  const parser = new SseParser();
  const decoder = new TextDecoder();
  const reader = body.getReader();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
        yield frame;
      }
    }
    for (const frame of parser.end()) yield frame;
  } finally {
    reader.releaseLock();
  }
}
