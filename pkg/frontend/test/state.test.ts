/** Controller flows against a scripted fetch: every network interaction is
 * asserted by method and path, in order, from recorded payloads. */

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { SessionController } from "../src/state";
import type { ControllerState } from "../src/state";

import answerOk from "./fixtures/answer_ok.json";
import errorConflict from "./fixtures/error_conflict.json";
import modelsFixture from "./fixtures/models.json";
import nextStep0 from "./fixtures/next_step0.json";
import nextStep1 from "./fixtures/next_step1.json";
import sessionAfter from "./fixtures/session_after_answer.json";
import sessionExhausted from "./fixtures/session_exhausted.json";
import sessionFresh from "./fixtures/session_fresh.json";

const SID = "recorded-session";

interface Step {
  method: string;
  path: string;
  status?: number;
  body?: unknown;
  reject?: boolean;
}

interface Call {
  method: string;
  path: string;
  body: unknown;
}

/** Serves a fixed script of responses; any deviation fails the test. */
function scriptedFetch(script: Step[]): { fetch: typeof fetch; calls: Call[] } {
  const remaining = [...script];
  const calls: Call[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    calls.push({
      method,
      path: url,
      body: init?.body ? JSON.parse(String(init.body)) : null,
    });
    const step = remaining.shift();
    if (!step) {
      throw new Error(`unexpected request ${method} ${url}`);
    }
    expect(`${method} ${url}`).toBe(`${step.method} ${step.path}`);
    if (step.reject) {
      throw new TypeError("network down");
    }
    return new Response(JSON.stringify(step.body), {
      status: step.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetch: impl as typeof fetch, calls };
}

const startScript: Step[] = [
  { method: "GET", path: "/v1/models", body: modelsFixture },
  { method: "POST", path: "/v1/sessions", body: { session_id: SID } },
  { method: "GET", path: `/v1/sessions/${SID}`, body: sessionFresh },
  { method: "GET", path: `/v1/sessions/${SID}/next`, body: nextStep0 },
];

async function startedController(extra: Step[]): Promise<{
  controller: SessionController;
  calls: Call[];
  states: ControllerState[];
}> {
  const { fetch, calls } = scriptedFetch([...startScript, ...extra]);
  const states: ControllerState[] = [];
  const controller = new SessionController(new ApiClient("", fetch), (s) => states.push(s));
  await controller.start("planted", 5);
  expect(controller.state.phase).toBe("ready");
  expect(controller.state.session?.step).toBe(0);
  return { controller, calls, states };
}

describe("answer round trip", () => {
  it("valid answer: one POST, then session and next are refetched", async () => {
    const { controller, calls } = await startedController([
      { method: "POST", path: `/v1/sessions/${SID}/answers`, body: answerOk },
      { method: "GET", path: `/v1/sessions/${SID}`, body: sessionAfter },
      { method: "GET", path: `/v1/sessions/${SID}/next`, body: nextStep1 },
    ]);
    await controller.answer("noise_6", 0.5);
    expect(calls.map((c) => c.method)).toEqual(["GET", "POST", "GET", "GET", "POST", "GET", "GET"]);
    expect(calls[4]!.body).toEqual({ variable: "noise_6", value: 0.5, version: 0 });
    expect(controller.state.phase).toBe("ready");
    expect(controller.state.session?.step).toBe(1);
    expect(controller.state.next?.recommended).toBe(nextStep1.recommended);
    expect(controller.state.trace.map((p) => p.step)).toEqual([0, 1]);
    expect(controller.state.banner).toBeNull();
  });

  it("skipping answers a non-recommended variable through the same endpoint", async () => {
    const { controller, calls } = await startedController([
      { method: "POST", path: `/v1/sessions/${SID}/answers`, body: answerOk },
      { method: "GET", path: `/v1/sessions/${SID}`, body: sessionAfter },
      { method: "GET", path: `/v1/sessions/${SID}/next`, body: nextStep1 },
    ]);
    expect(nextStep0.recommended).not.toBe("copy");
    await controller.answer("copy", 0.5);
    expect(calls[4]!.path).toBe(`/v1/sessions/${SID}/answers`);
    expect(calls[4]!.body).toEqual({ variable: "copy", value: 0.5, version: 0 });
  });

  it("exhaustion: final session is fetched but no further recommendation", async () => {
    const { controller, calls } = await startedController([
      {
        method: "POST",
        path: `/v1/sessions/${SID}/answers`,
        body: { status: "exhausted", step: 7 },
      },
      { method: "GET", path: `/v1/sessions/${SID}`, body: sessionExhausted },
    ]);
    await controller.answer("noise_6", 0.5);
    expect(controller.state.phase).toBe("finished");
    expect(controller.state.session?.status).toBe("exhausted");
    expect(controller.state.next).toBeNull();
    expect(calls.filter((c) => c.path.endsWith("/next"))).toHaveLength(1);
  });
});

describe("failure handling", () => {
  it("version conflict: surfaced and refetched, never silently retried", async () => {
    const { controller, calls } = await startedController([
      {
        method: "POST",
        path: `/v1/sessions/${SID}/answers`,
        status: 409,
        body: errorConflict,
      },
      { method: "GET", path: `/v1/sessions/${SID}`, body: sessionAfter },
      { method: "GET", path: `/v1/sessions/${SID}/next`, body: nextStep1 },
    ]);
    await controller.answer("noise_6", 0.5);
    expect(calls.filter((c) => c.method === "POST" && c.path.endsWith("/answers"))).toHaveLength(1);
    expect(controller.state.banner?.kind).toBe("conflict");
    expect(controller.state.banner?.message).toBe(errorConflict.message);
    expect(controller.state.session?.step).toBe(1);
    expect(controller.state.phase).toBe("ready");
  });

  it("network failure: retry banner, session state untouched", async () => {
    const { controller, calls } = await startedController([
      { method: "POST", path: `/v1/sessions/${SID}/answers`, reject: true },
    ]);
    const before = controller.state.session;
    await controller.answer("noise_6", 0.5);
    expect(controller.state.banner?.kind).toBe("network");
    expect(controller.state.phase).toBe("ready");
    expect(controller.state.session).toBe(before);
    expect(calls).toHaveLength(5);
  });

  it("out-of-range input is rejected before any request is made", async () => {
    const { controller, calls } = await startedController([]);
    await controller.answer("noise_6", 7.5);
    expect(controller.state.banner?.kind).toBe("validation");
    expect(calls).toHaveLength(4);
    await controller.answer("noise_6", Number.NaN);
    expect(controller.state.banner?.kind).toBe("validation");
    expect(calls).toHaveLength(4);
  });

  it("service error without conflict keeps data and reports code and message", async () => {
    const { controller } = await startedController([
      {
        method: "POST",
        path: `/v1/sessions/${SID}/answers`,
        status: 409,
        body: { code: "already_observed", message: "'noise_6' was already answered" },
      },
    ]);
    await controller.answer("noise_6", 0.5);
    expect(controller.state.banner?.kind).toBe("service");
    expect(controller.state.banner?.message).toContain("already_observed");
    expect(controller.state.session?.step).toBe(0);
  });
});
