/** Thin HTTP client for the three gateway endpoints. */

import { readSseStream } from "./sse.js";
import type {
  ActionOutcome,
  GatewayEvent,
  OperatorAction,
  SessionSnapshot,
} from "./types.js";

export class GatewayError extends Error {
  constructor(
    message: string,
    readonly status?: number,
  ) {
    super(message);
    this.name = "GatewayError";
  }
}

export interface EventStreamOptions {
  after?: number;
  replayOnly?: boolean;
  signal?: AbortSignal;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Statuses whose body is a meaningful action outcome, not a failure. */
const OUTCOME_STATUSES = new Set([200, 400, 409, 504]);

export class GatewayClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  async getSession(): Promise<SessionSnapshot> {
    const response = await this.fetchImpl(`${this.baseUrl}/session`, {
      headers: { accept: "application/json" },
    });
    if (!response.ok) {
      throw new GatewayError(
        `snapshot request failed: ${response.status}`,
        response.status,
      );
    }
    return (await response.json()) as SessionSnapshot;
  }

  async postAction(action: OperatorAction): Promise<ActionOutcome> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/session/operator-action`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(action),
      },
    );
    if (!OUTCOME_STATUSES.has(response.status)) {
      throw new GatewayError(
        `operator action failed: ${response.status}`,
        response.status,
      );
    }
    return (await response.json()) as ActionOutcome;
  }

  /** Subscribe to the event stream, yielding typed events as they land. */
  async *events(
    options: EventStreamOptions = {},
  ): AsyncGenerator<GatewayEvent, void, undefined> {
    const params = new URLSearchParams();
    if (options.after !== undefined) {
      params.set("after", String(options.after));
    }
    if (options.replayOnly) {
      params.set("replay_only", "true");
    }
    const query = params.size > 0 ? `?${params.toString()}` : "";
    const response = await this.fetchImpl(
      `${this.baseUrl}/session/events${query}`,
      {
        headers: { accept: "text/event-stream" },
        signal: options.signal,
      },
    );
    if (!response.ok || response.body === null) {
      throw new GatewayError(
        `event stream refused: ${response.status}`,
        response.status,
      );
    }
    for await (const message of readSseStream(response.body, options.signal)) {
      const event = decodeEvent(message.id, message.event, message.data);
      if (event !== null) {
        yield event;
      }
    }
  }
}

const EVENT_TYPES = new Set(["session", "step", "operator", "finished", "error"]);

function decodeEvent(
  id: number | null,
  type: string,
  data: string,
): GatewayEvent | null {
  if (id === null || !EVENT_TYPES.has(type)) {
    return null;
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(data);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null) {
    return null;
  }
  return { id, type, data: parsed } as GatewayEvent;
}
