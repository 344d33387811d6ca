import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ConflictError, SessionApi } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("SessionApi", () => {
  afterEach(() => vi.restoreAllMocks());

  it("fetches the next triplet with the evaluator in the query", async () => {
    const fetchMock = vi.spyOn(globalThis, "fetch").mockResolvedValue(
      jsonResponse(200, {
        done: false,
        triplet_id: "t0000",
        items: [
          { position: "A", token: "a".repeat(24) },
          { position: "B", token: "b".repeat(24) },
          { position: "C", token: "c".repeat(24) },
        ],
        judged: 0,
        total: 50,
      }),
    );
    const api = new SessionApi("");
    const next = await api.fetchNext("sess1", "eva");
    expect(fetchMock.mock.calls[0][0]).toBe("/sessions/sess1/next?evaluator=eva");
    expect(next.done).toBe(false);
  });

  it("posts judgments as JSON", async () => {
    const fetchMock = vi
      .spyOn(globalThis, "fetch")
      .mockResolvedValue(jsonResponse(200, { score: 1.0, ci95: [0.2, 1.0], judged: 1 }));
    const api = new SessionApi("");
    const score = await api.submitJudgment("sess1", {
      evaluator_id: "eva",
      triplet_id: "t0000",
      consistent: true,
      perceived_order: ["B", "A", "C"],
    });
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/sessions/sess1/judgments");
    expect(init?.method).toBe("POST");
    expect(JSON.parse(init?.body as string).perceived_order).toEqual(["B", "A", "C"]);
    expect(score.judged).toBe(1);
  });

  it("raises ConflictError on duplicate judgments", async () => {
    vi.spyOn(globalThis, "fetch").mockResolvedValue(
      new Response("already judged", { status: 409 }),
    );
    const api = new SessionApi("");
    await expect(
      api.submitJudgment("sess1", {
        evaluator_id: "eva",
        triplet_id: "t0000",
        consistent: true,
      }),
    ).rejects.toBeInstanceOf(ConflictError);
  });

  it("raises ApiError with the status on other failures", async () => {
    vi.spyOn(globalThis, "fetch").mockImplementation(async () =>
      new Response("no such session", { status: 404 }),
    );
    const api = new SessionApi("");
    await expect(api.fetchScore("nope")).rejects.toMatchObject({ status: 404 });
    await expect(api.fetchScore("nope")).rejects.toBeInstanceOf(ApiError);
  });

  it("builds opaque audio URLs", () => {
    const api = new SessionApi("");
    expect(api.audioUrl("deadbeef")).toBe("/audio/deadbeef");
  });
});
