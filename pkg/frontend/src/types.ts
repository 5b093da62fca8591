/** Wire-level shapes exchanged with the assembly gateway. */

export type ConnectionState = "connecting" | "live" | "closed";

export interface CatalogEntry {
  id: number;
  name: string;
  robot_deliverable: boolean;
  prerequisites: number[];
}

export interface SessionVerdict {
  termination: string;
  success: boolean;
  iterations: number;
  detector_calls: number;
  deliveries: number;
  realized_sequence: number[];
  elapsed_s: number;
  failure_detail: string | null;
}

export interface SessionSnapshot {
  status: "idle" | "running" | "finished" | "failed";
  clock: number;
  assembled: number[];
  delivery_zone: number[];
  magazine: number[];
  bench: number[];
  realized_sequence: number[];
  iteration: number;
  last_delivered: number | null;
  result: SessionVerdict | null;
  catalog: CatalogEntry[];
}

export type OperatorAction =
  | { action: "assemble_delivered" }
  | { action: "take_from_magazine"; component: number };

export interface OperatorEventData {
  kind: "assembled" | "rejected" | "no_op";
  component: number | null;
  origin: string | null;
  reason: string;
}

/**
 * Response body of POST /session/operator-action.  A consumed turn
 * carries the resulting event; transport-level refusals (unknown
 * component, finished session, timeout) carry only a reason.
 */
export interface ActionOutcome {
  accepted: boolean;
  event?: OperatorEventData;
  reason?: string;
}

export interface StepEventData {
  iteration: number;
  detected: number[];
  planned: number | null;
  delivered: number | null;
  delivery_failure: string | null;
  operator_kind: string | null;
  operator_component: number | null;
  available: number[];
  clock: number;
}

export interface OperatorStreamData extends OperatorEventData {
  position: number;
}

export type GatewayEvent =
  | { id: number; type: "session"; data: { state: string } }
  | { id: number; type: "step"; data: StepEventData }
  | { id: number; type: "operator"; data: OperatorStreamData }
  | { id: number; type: "finished"; data: SessionVerdict }
  | { id: number; type: "error"; data: { detail: string } };
