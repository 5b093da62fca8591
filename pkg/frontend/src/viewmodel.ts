/** Pure console state: snapshots and stream events in, render model out.
 *
 * Every function returns a new state object, so the DOM layer can treat
 * updates as replace-and-render and the tests can replay event scripts
 * without a browser.
 */

import type {
  ActionOutcome,
  CatalogEntry,
  ConnectionState,
  GatewayEvent,
  OperatorStreamData,
  SessionSnapshot,
  SessionVerdict,
  StepEventData,
} from "./types.js";

export type ToastTone = "info" | "warning" | "error";

export interface Toast {
  id: number;
  tone: ToastTone;
  text: string;
}

export interface ConsoleState {
  connection: ConnectionState;
  sessionState: "idle" | "running" | "finished" | "failed";
  catalog: CatalogEntry[];
  assembled: number[];
  deliveryZone: number[];
  magazine: number[];
  bench: number[];
  realized: number[];
  iteration: number;
  clock: number;
  planned: number | null;
  verdict: SessionVerdict | null;
  toasts: Toast[];
  log: string[];
  errorDetail: string | null;
  nextToastId: number;
  lastEventId: number;
}

const LOG_LIMIT = 80;

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    sessionState: "idle",
    catalog: [],
    assembled: [],
    deliveryZone: [],
    magazine: [],
    bench: [],
    realized: [],
    iteration: 0,
    clock: 0,
    planned: null,
    verdict: null,
    toasts: [],
    log: [],
    errorDetail: null,
    nextToastId: 1,
    lastEventId: 0,
  };
}

export function componentName(catalog: CatalogEntry[], id: number): string {
  const entry = catalog.find((candidate) => candidate.id === id);
  return entry ? `${entry.name} (${id})` : `component ${id}`;
}

/** Turn a machine reason like "missing_prerequisites:[5, 6]" into prose. */
export function describeReason(reason: string): string {
  const colon = reason.indexOf(":");
  const head = (colon < 0 ? reason : reason.slice(0, colon)).replace(/_/g, " ");
  if (colon < 0) {
    return head;
  }
  const detail = reason
    .slice(colon + 1)
    .replace(/[[\]]/g, "")
    .trim();
  return detail === "" ? head : `${head} ${detail}`;
}

export function setConnection(
  state: ConsoleState,
  connection: ConnectionState,
): ConsoleState {
  return { ...state, connection };
}

export function pushToast(
  state: ConsoleState,
  tone: ToastTone,
  text: string,
): ConsoleState {
  const toast: Toast = { id: state.nextToastId, tone, text };
  return {
    ...state,
    toasts: [...state.toasts, toast],
    nextToastId: state.nextToastId + 1,
  };
}

export function expireToast(state: ConsoleState, id: number): ConsoleState {
  return { ...state, toasts: state.toasts.filter((toast) => toast.id !== id) };
}

function appendLog(state: ConsoleState, line: string): ConsoleState {
  const log = [...state.log, line];
  return { ...state, log: log.slice(-LOG_LIMIT) };
}

function without(values: number[], id: number): number[] {
  return values.filter((value) => value !== id);
}

function withSorted(values: number[], id: number): number[] {
  return values.includes(id) ? values : [...values, id].sort((a, b) => a - b);
}

export function applySnapshot(
  state: ConsoleState,
  snapshot: SessionSnapshot,
): ConsoleState {
  return {
    ...state,
    sessionState: snapshot.status,
    catalog: snapshot.catalog,
    assembled: [...snapshot.assembled],
    deliveryZone: [...snapshot.delivery_zone],
    magazine: [...snapshot.magazine],
    bench: [...snapshot.bench],
    realized: [...snapshot.realized_sequence],
    iteration: snapshot.iteration,
    clock: snapshot.clock,
    verdict: snapshot.result,
  };
}

export function applyEvent(
  state: ConsoleState,
  event: GatewayEvent,
): ConsoleState {
  if (event.id <= state.lastEventId) {
    return state;
  }
  const seen = { ...state, lastEventId: event.id };
  switch (event.type) {
    case "session":
      return appendLog(
        { ...seen, sessionState: "running" },
        `session ${event.data.state}`,
      );
    case "step":
      return applyStep(seen, event.data);
    case "operator":
      return applyOperator(seen, event.data);
    case "finished":
      return applyFinished(seen, event.data);
    case "error":
      return pushToast(
        appendLog(
          { ...seen, sessionState: "failed", errorDetail: event.data.detail },
          `session error: ${event.data.detail}`,
        ),
        "error",
        `session error: ${event.data.detail}`,
      );
  }
}

function applyStep(state: ConsoleState, step: StepEventData): ConsoleState {
  let next: ConsoleState = {
    ...state,
    iteration: step.iteration,
    clock: step.clock,
    planned: step.planned,
  };
  let line: string;
  if (step.delivered !== null) {
    next = {
      ...next,
      magazine: without(next.magazine, step.delivered),
      bench: without(next.bench, step.delivered),
      deliveryZone: withSorted(next.deliveryZone, step.delivered),
    };
    line = `iteration ${step.iteration}: delivered ${componentName(next.catalog, step.delivered)}`;
  } else {
    line = `iteration ${step.iteration}: no delivery`;
  }
  if (step.delivery_failure !== null) {
    line += ` (${describeReason(step.delivery_failure)})`;
  }
  return appendLog(next, line);
}

function applyOperator(
  state: ConsoleState,
  data: OperatorStreamData,
): ConsoleState {
  const name =
    data.component === null
      ? "nothing"
      : componentName(state.catalog, data.component);
  if (data.kind === "assembled" && data.component !== null) {
    const next: ConsoleState = {
      ...state,
      deliveryZone: without(state.deliveryZone, data.component),
      magazine: without(state.magazine, data.component),
      bench: without(state.bench, data.component),
      assembled: withSorted(state.assembled, data.component),
      realized: [...state.realized, data.component],
    };
    const origin = data.origin === null ? "" : ` from ${data.origin.replace(/_/g, " ")}`;
    return appendLog(next, `assembled ${name}${origin}`);
  }
  if (data.kind === "rejected") {
    return appendLog(state, `rejected ${name}: ${describeReason(data.reason)}`);
  }
  return appendLog(state, `operator waited (${describeReason(data.reason)})`);
}

function applyFinished(
  state: ConsoleState,
  verdict: SessionVerdict,
): ConsoleState {
  const outcome = verdict.success ? "success" : "failed";
  return pushToast(
    appendLog(
      {
        ...state,
        sessionState: "finished",
        verdict,
        realized: [...verdict.realized_sequence],
        planned: null,
      },
      `finished: ${verdict.termination} (${outcome})`,
    ),
    verdict.success ? "info" : "error",
    `session finished: ${verdict.termination}`,
  );
}

/** Fold in the direct response to a posted action.
 *
 * Refusals toast here, right where the operator acted, so the feedback
 * does not depend on event stream latency.  Consumed turns also arrive
 * as stream operator events, which only feed the log, never a toast,
 * keeping the two paths from double-reporting.
 */
export function applyOutcome(
  state: ConsoleState,
  outcome: ActionOutcome,
): ConsoleState {
  if (outcome.event !== undefined) {
    if (outcome.event.kind !== "rejected") {
      return state;
    }
    const name =
      outcome.event.component === null
        ? "attempt"
        : componentName(state.catalog, outcome.event.component);
    const text = `rejected ${name}: ${describeReason(outcome.event.reason)}`;
    return pushToast(state, "warning", text);
  }
  const reason = outcome.reason ?? "unknown";
  const text = `action refused: ${describeReason(reason)}`;
  return pushToast(appendLog(state, text), "warning", text);
}

export type BoardZone = "assembled" | "delivery" | "magazine" | "bench" | "pending";

export function componentZone(state: ConsoleState, id: number): BoardZone {
  if (state.assembled.includes(id)) {
    return "assembled";
  }
  if (state.deliveryZone.includes(id)) {
    return "delivery";
  }
  if (state.magazine.includes(id)) {
    return "magazine";
  }
  if (state.bench.includes(id)) {
    return "bench";
  }
  return "pending";
}

export function realizedLabel(state: ConsoleState): string {
  return state.realized.join(" → ");
}
