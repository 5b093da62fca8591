/** DOM wiring: renders console state and forwards clicks to the gateway.
 *
 * The layout is a board of zones (assembled, delivery, bench, magazine),
 * one assemble button, per-slot take buttons, a realized-order strip, a
 * toast stack for refusals, and a scrolling event log.
 */

import { GatewayClient } from "./client.js";
import type { OperatorAction } from "./types.js";
import {
  applyEvent,
  applyOutcome,
  applySnapshot,
  componentName,
  expireToast,
  initialState,
  pushToast,
  realizedLabel,
  setConnection,
  type ConsoleState,
} from "./viewmodel.js";

export interface ConsoleHandle {
  state(): ConsoleState;
  refresh(): Promise<void>;
  dispose(): void;
}

export interface MountOptions {
  toastLifetimeMs?: number;
  /** Snapshot reconciliation period; the stream alone cannot show a
   * delivery that is still waiting on the operator turn to finish. */
  pollIntervalMs?: number;
}

const SKELETON = `
<div class="console">
  <header class="statusbar">
    <span data-role="session-state"></span>
    <span data-role="iteration"></span>
    <span data-role="clock"></span>
    <span data-role="planned"></span>
    <span data-role="connection"></span>
  </header>
  <section class="board">
    <div class="zone" data-zone="assembled">
      <h2>Assembled</h2>
      <ul data-role="assembled"></ul>
    </div>
    <div class="zone" data-zone="delivery">
      <h2>Delivery zone</h2>
      <ul data-role="delivery"></ul>
    </div>
    <div class="zone" data-zone="bench">
      <h2>Bench</h2>
      <ul data-role="bench"></ul>
    </div>
    <div class="zone" data-zone="magazine">
      <h2>Magazine</h2>
      <ul data-role="magazine"></ul>
    </div>
  </section>
  <section class="controls">
    <button type="button" data-action="assemble">Assemble delivered part</button>
  </section>
  <section class="summary">
    <div>Realized order: <span data-role="realized"></span></div>
    <div data-role="verdict"></div>
  </section>
  <ol class="log" data-role="log"></ol>
  <div class="toasts" data-role="toasts"></div>
</div>
`;

export function mountConsole(
  root: HTMLElement,
  client: GatewayClient,
  options: MountOptions = {},
): ConsoleHandle {
  const toastLifetimeMs = options.toastLifetimeMs ?? 6000;
  const pollIntervalMs = options.pollIntervalMs ?? 750;
  let state = initialState();
  let disposed = false;
  const abort = new AbortController();
  const toastTimers = new Map<number, ReturnType<typeof setTimeout>>();

  root.innerHTML = SKELETON;
  const el = (role: string): HTMLElement => {
    const found = root.querySelector<HTMLElement>(`[data-role="${role}"]`);
    if (found === null) {
      throw new Error(`console skeleton is missing role ${role}`);
    }
    return found;
  };
  const parts = {
    sessionState: el("session-state"),
    iteration: el("iteration"),
    clock: el("clock"),
    planned: el("planned"),
    connection: el("connection"),
    assembled: el("assembled"),
    delivery: el("delivery"),
    bench: el("bench"),
    magazine: el("magazine"),
    realized: el("realized"),
    verdict: el("verdict"),
    log: el("log"),
    toasts: el("toasts"),
  };

  function chip(id: number): HTMLLIElement {
    const item = document.createElement("li");
    item.className = "chip";
    item.dataset.component = String(id);
    item.textContent = componentName(state.catalog, id);
    return item;
  }

  function renderZone(target: HTMLElement, ids: number[], takeable: boolean): void {
    target.replaceChildren();
    for (const id of ids) {
      const item = chip(id);
      if (takeable) {
        const take = document.createElement("button");
        take.type = "button";
        take.dataset.action = "take";
        take.dataset.component = String(id);
        take.textContent = "take";
        take.disabled = state.sessionState !== "running";
        item.append(" ", take);
      }
      target.append(item);
    }
  }

  function renderToasts(): void {
    parts.toasts.replaceChildren();
    for (const toast of state.toasts) {
      const node = document.createElement("div");
      node.className = `toast toast-${toast.tone}`;
      node.dataset.role = "toast";
      node.dataset.tone = toast.tone;
      node.textContent = toast.text;
      parts.toasts.append(node);
      if (!toastTimers.has(toast.id)) {
        toastTimers.set(
          toast.id,
          setTimeout(() => {
            toastTimers.delete(toast.id);
            update(expireToast(state, toast.id));
          }, toastLifetimeMs),
        );
      }
    }
  }

  function render(): void {
    parts.sessionState.textContent = `session ${state.sessionState}`;
    parts.iteration.textContent = `iteration ${state.iteration}`;
    parts.clock.textContent = `clock ${state.clock.toFixed(1)}s`;
    parts.planned.textContent =
      state.planned === null
        ? ""
        : `next: ${componentName(state.catalog, state.planned)}`;
    parts.connection.textContent = state.connection;
    renderZone(parts.assembled, state.assembled, false);
    renderZone(parts.delivery, state.deliveryZone, false);
    renderZone(parts.bench, state.bench, false);
    renderZone(parts.magazine, state.magazine, true);
    parts.realized.textContent = realizedLabel(state);
    if (state.verdict !== null) {
      const outcome = state.verdict.success ? "success" : "failure";
      parts.verdict.textContent =
        `${state.verdict.termination}: ${outcome} after ` +
        `${state.verdict.iterations} iterations, ${state.verdict.elapsed_s.toFixed(1)}s`;
    } else {
      parts.verdict.textContent = "";
    }
    const assemble = root.querySelector<HTMLButtonElement>('[data-action="assemble"]');
    if (assemble !== null) {
      assemble.disabled = state.sessionState !== "running";
    }
    parts.log.replaceChildren();
    for (const line of state.log) {
      const item = document.createElement("li");
      item.textContent = line;
      parts.log.append(item);
    }
    renderToasts();
  }

  function update(next: ConsoleState): void {
    state = next;
    render();
  }

  async function refresh(): Promise<void> {
    try {
      update(applySnapshot(state, await client.getSession()));
    } catch (error) {
      if (!disposed) {
        update(pushToast(state, "error", `snapshot failed: ${String(error)}`));
      }
    }
  }

  async function act(action: OperatorAction): Promise<void> {
    try {
      const outcome = await client.postAction(action);
      update(applyOutcome(state, outcome));
    } catch (error) {
      update(pushToast(state, "error", `action failed: ${String(error)}`));
    }
    await refresh();
  }

  function onClick(raw: Event): void {
    const origin = raw.target;
    if (!(origin instanceof Element)) {
      return;
    }
    const button = origin.closest<HTMLElement>("[data-action]");
    if (button === null) {
      return;
    }
    if (button.dataset.action === "assemble") {
      void act({ action: "assemble_delivered" });
    } else if (button.dataset.action === "take") {
      const component = Number(button.dataset.component);
      if (Number.isInteger(component)) {
        void act({ action: "take_from_magazine", component });
      }
    }
  }
  root.addEventListener("click", onClick);

  function sessionOver(): boolean {
    return state.sessionState === "finished" || state.sessionState === "failed";
  }

  /** Keep one event stream alive, resuming from the last applied id so
   * a dropped connection replays nothing and loses nothing. */
  async function pump(): Promise<void> {
    await refresh();
    while (!disposed && !sessionOver()) {
      try {
        const stream = client.events({
          after: state.lastEventId,
          signal: abort.signal,
        });
        update(setConnection(state, "live"));
        for await (const event of stream) {
          update(applyEvent(state, event));
          if (sessionOver()) {
            break;
          }
        }
      } catch {
        if (disposed) {
          break;
        }
      }
      if (disposed || sessionOver()) {
        break;
      }
      update(setConnection(state, "connecting"));
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
    update(setConnection(state, "closed"));
  }
  const pumping = pump();
  const poller = setInterval(() => {
    if (!disposed && state.sessionState !== "finished" && state.sessionState !== "failed") {
      void refresh();
    }
  }, pollIntervalMs);

  render();
  return {
    state: () => state,
    refresh,
    dispose: () => {
      disposed = true;
      clearInterval(poller);
      abort.abort();
      for (const timer of toastTimers.values()) {
        clearTimeout(timer);
      }
      toastTimers.clear();
      root.removeEventListener("click", onClick);
      void pumping.catch(() => undefined);
    },
  };
}
