/** GatewayClient against a live gateway: actions, snapshots, and the
 * replay side of the event stream, which ends on its own once history
 * is drained and so stays deterministic.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { connect } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/client.js";
import type { GatewayEvent } from "../src/types.js";

const PORT = 9400 + (process.pid % 300);
const BASE = `http://127.0.0.1:${PORT}`;

let child: ChildProcess;
let childLog = "";

function portOpen(): Promise<boolean> {
  return new Promise((resolve) => {
    const socket = connect({ host: "127.0.0.1", port: PORT }, () => {
      socket.end();
      resolve(true);
    });
    socket.on("error", () => resolve(false));
    socket.setTimeout(500, () => {
      socket.destroy();
      resolve(false);
    });
  });
}

beforeAll(async () => {
  child = spawn(
    "coassembly",
    ["console", "--host", "127.0.0.1", "--port", String(PORT), "--seed", "5"],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  child.stdout?.on("data", (chunk: Buffer) => {
    childLog += chunk.toString();
  });
  child.stderr?.on("data", (chunk: Buffer) => {
    childLog += chunk.toString();
  });
  const deadline = Date.now() + 45000;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`gateway exited early (${child.exitCode}):\n${childLog}`);
    }
    if (await portOpen()) {
      return;
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error(`gateway never opened port ${PORT}:\n${childLog}`);
});

afterAll(async () => {
  if (child === undefined || child.exitCode !== null) {
    return;
  }
  child.kill("SIGTERM");
  await new Promise((resolve) => {
    const fallback = setTimeout(() => {
      child.kill("SIGKILL");
      resolve(undefined);
    }, 5000);
    child.once("exit", () => {
      clearTimeout(fallback);
      resolve(undefined);
    });
  });
});

async function collectReplay(
  client: GatewayClient,
  after?: number,
): Promise<GatewayEvent[]> {
  const events: GatewayEvent[] = [];
  for await (const event of client.events({ replayOnly: true, after })) {
    events.push(event);
  }
  return events;
}

describe("GatewayClient against a live gateway", () => {
  it("performs turns and replays their events in order", { timeout: 60000 }, async () => {
    const client = new GatewayClient(BASE);

    const before = await client.getSession();
    expect(before.status).toBe("running");
    expect(before.bench).toEqual([1, 2]);
    expect(before.catalog).toHaveLength(9);

    const first = await client.postAction({ action: "assemble_delivered" });
    expect(first.accepted).toBe(true);
    expect(first.event?.kind).toBe("assembled");
    expect(first.event?.component).toBe(1);
    expect(first.event?.origin).toBe("bench");

    const second = await client.postAction({ action: "assemble_delivered" });
    expect(second.event?.component).toBe(2);

    const events = await collectReplay(client);
    expect(events.length).toBeGreaterThanOrEqual(3);
    expect(events[0]?.type).toBe("session");
    const mounted = events
      .filter(
        (event): event is Extract<GatewayEvent, { type: "operator" }> =>
          event.type === "operator",
      )
      .map((event) => event.data.component);
    expect(mounted.slice(0, 2)).toEqual([1, 2]);
    const ids = events.map((event) => event.id);
    expect(ids.every((id, i) => i === 0 || id > ids[i - 1]!)).toBe(true);

    const tail = await collectReplay(client, ids[0]);
    expect(tail.map((event) => event.id)).toEqual(ids.slice(1));

    const snapshot = await client.getSession();
    expect(snapshot.realized_sequence).toEqual([1, 2]);
    expect(snapshot.assembled).toEqual([1, 2]);
  });

  it("refuses an unknown component with a reason payload", async () => {
    const client = new GatewayClient(BASE);
    const outcome = await client.postAction({
      action: "take_from_magazine",
      component: 42,
    });
    expect(outcome.accepted).toBe(false);
    expect(outcome.event).toBeUndefined();
    expect(outcome.reason).toBe("unknown_component");
  });
});
