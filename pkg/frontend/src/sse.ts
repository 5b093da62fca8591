/** Incremental parser for text/event-stream bodies.
 *
 * The gateway streams one JSON document per event plus comment lines as
 * keepalives.  The decoder accepts arbitrary chunk boundaries: bytes are
 * buffered until a blank line completes a message.
 */

export interface SseMessage {
  id: number | null;
  event: string;
  data: string;
}

const DEFAULT_EVENT = "message";

export class SseDecoder {
  private buffer = "";
  private id: number | null = null;
  private event = DEFAULT_EVENT;
  private dataLines: string[] = [];

  /** Feed one chunk of text and collect any messages it completes. */
  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const messages: SseMessage[] = [];
    let index: number;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      let line = this.buffer.slice(0, index);
      this.buffer = this.buffer.slice(index + 1);
      if (line.endsWith("\r")) {
        line = line.slice(0, -1);
      }
      const message = this.consumeLine(line);
      if (message !== null) {
        messages.push(message);
      }
    }
    return messages;
  }

  /** Flush any message left unterminated when the stream ends. */
  end(): SseMessage[] {
    const messages = this.push("\n");
    this.buffer = "";
    return messages;
  }

  private consumeLine(line: string): SseMessage | null {
    if (line === "") {
      return this.dispatch();
    }
    if (line.startsWith(":")) {
      return null;
    }
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) {
      value = value.slice(1);
    }
    switch (field) {
      case "id": {
        const parsed = Number.parseInt(value, 10);
        this.id = Number.isNaN(parsed) ? null : parsed;
        break;
      }
      case "event":
        this.event = value;
        break;
      case "data":
        this.dataLines.push(value);
        break;
      default:
        break;
    }
    return null;
  }

  private dispatch(): SseMessage | null {
    if (this.dataLines.length === 0 && this.event === DEFAULT_EVENT) {
      return null;
    }
    const message: SseMessage = {
      id: this.id,
      event: this.event,
      data: this.dataLines.join("\n"),
    };
    this.event = DEFAULT_EVENT;
    this.dataLines = [];
    return message;
  }
}

/** Decode a streaming response body into parsed messages. */
export async function* readSseStream(
  body: ReadableStream<Uint8Array>,
  signal?: AbortSignal,
): AsyncGenerator<SseMessage, void, undefined> {
  const reader = body.getReader();
  const textDecoder = new TextDecoder();
  const decoder = new SseDecoder();
  try {
    for (;;) {
      if (signal?.aborted) {
        return;
      }
      const { value, done } = await reader.read();
      if (done) {
        yield* decoder.end();
        return;
      }
      yield* decoder.push(textDecoder.decode(value, { stream: true }));
    }
  } finally {
    reader.releaseLock();
  }
}
