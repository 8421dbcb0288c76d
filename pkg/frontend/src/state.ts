/** Session state machine. All numbers on screen come from service payloads;
 * this module only decides when to fetch, never what the numbers are. */

import { ApiClient, ApiError } from "./api";
import type {
  NextPayload,
  PredictionPoint,
  SessionView,
  VariableInfo,
} from "./types";

export type Phase = "idle" | "loading" | "ready" | "submitting" | "finished" | "error";

export interface Banner {
  kind: "conflict" | "network" | "service" | "validation";
  message: string;
}

export interface ControllerState {
  phase: Phase;
  modelId: string | null;
  variables: VariableInfo[];
  session: SessionView | null;
  next: NextPayload | null;
  trace: PredictionPoint[];
  banner: Banner | null;
}

function initialState(): ControllerState {
  return {
    phase: "idle",
    modelId: null,
    variables: [],
    session: null,
    next: null,
    trace: [],
    banner: null,
  };
}

export class SessionController {
  private readonly api: ApiClient;
  private readonly onChange: (state: ControllerState) => void;
  private vars = new Map<string, VariableInfo>();
  private sessionId: string | null = null;
  state: ControllerState = initialState();

  constructor(api: ApiClient, onChange: (state: ControllerState) => void) {
    this.api = api;
    this.onChange = onChange;
  }

  private emit(patch: Partial<ControllerState>): void {
    this.state = { ...this.state, ...patch };
    this.onChange(this.state);
  }

  /** Range check against the schema before any POST leaves the client. */
  validate(variable: string, value: number): string | null {
    const info = this.vars.get(variable);
    if (!info) {
      return `unknown variable ${variable}`;
    }
    if (Number.isNaN(value)) {
      return `enter a number for ${variable}`;
    }
    if (info.kind === "binary") {
      return value === 0 || value === 1 ? null : `${variable} must be 0 or 1`;
    }
    if (value < info.lo || value > info.hi) {
      return `${variable} must lie in [${info.lo}, ${info.hi}]`;
    }
    return null;
  }

  async start(modelId: string, seed: number): Promise<void> {
    this.emit({ ...initialState(), phase: "loading", modelId });
    try {
      const models = await this.api.listModels();
      const model = models.models.find((m) => m.model_id === modelId);
      if (!model) {
        this.emit({ phase: "error", banner: { kind: "service", message: `no model ${modelId}` } });
        return;
      }
      this.vars = new Map(model.variables.map((v) => [v.name, v]));
      this.emit({ variables: model.variables });
      this.sessionId = await this.api.createSession(modelId, seed);
      await this.reload();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Answer any selectable variable; skipping the recommendation is just an
   * answer for a different variable, same endpoint. */
  async answer(variable: string, value: number): Promise<void> {
    if (this.state.phase !== "ready" || !this.sessionId || !this.state.session) {
      return;
    }
    const problem = this.validate(variable, value);
    if (problem) {
      this.emit({ banner: { kind: "validation", message: problem } });
      return;
    }
    this.emit({ phase: "submitting", banner: null });
    try {
      await this.api.submitAnswer(this.sessionId, variable, value, this.state.session.version);
      await this.reload();
    } catch (err) {
      if (err instanceof ApiError && err.body.code === "version_conflict") {
        // Someone else moved the session; show what happened and refetch.
        // Never resubmit the answer silently.
        this.emit({ banner: { kind: "conflict", message: err.body.message } });
        await this.reload(true);
        return;
      }
      this.fail(err);
    }
  }

  /** Refetch session and, while active, the next recommendation. */
  async reload(keepBanner = false): Promise<void> {
    if (!this.sessionId) {
      return;
    }
    try {
      const session = await this.api.getSession(this.sessionId);
      const next = session.status === "active" ? await this.api.getNext(this.sessionId) : null;
      const trace = this.state.trace.filter((p) => p.step < session.step);
      trace.push({ step: session.step, prediction: session.prediction });
      this.emit({
        phase: session.status === "active" ? "ready" : "finished",
        session,
        next,
        trace,
        banner: keepBanner ? this.state.banner : null,
      });
    } catch (err) {
      this.fail(err);
    }
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError) {
      // Service-level failure: surface code and message, keep current data.
      this.emit({
        phase: this.state.session ? "ready" : "error",
        banner: { kind: "service", message: `${err.body.code}: ${err.body.message}` },
      });
      return;
    }
    // Network failure: leave session state untouched and offer a retry.
    this.emit({
      phase: this.state.session ? "ready" : "error",
      banner: { kind: "network", message: "request failed; check the service and retry" },
    });
  }
}
