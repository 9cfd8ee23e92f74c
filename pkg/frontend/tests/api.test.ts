import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, pollRun } from "../src/api.js";

type Route = (body: unknown) => { status: number; payload: unknown };

function fakeFetch(routes: Record<string, Route>) {
  const calls: { method: string; url: string }[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    calls.push({ method, url });
    const key = `${method} ${url.replace("http://test", "")}`;
    const route = routes[key];
    if (!route) {
      return new Response(JSON.stringify({ detail: `no route ${key}` }), { status: 404 });
    }
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    const { status, payload } = route(body);
    return new Response(JSON.stringify(payload), { status });
  };
  return { impl, calls };
}

describe("ApiClient", () => {
  it("sends auth header when configured", async () => {
    let seenToken: string | undefined;
    const impl = async (url: string, init?: RequestInit) => {
      seenToken = (init?.headers as Record<string, string>)["X-Auth-Token"];
      return new Response("[]", { status: 200 });
    };
    const client = new ApiClient("http://test", impl, "sesame");
    await client.listReviews("p1");
    expect(seenToken).toBe("sesame");
  });

  it("raises typed errors with server detail", async () => {
    const { impl } = fakeFetch({
      "POST /projects/p1/stages/Formulate/run": () => ({
        status: 409,
        payload: { detail: "stage precondition: expected ExtractParams" },
      }),
    });
    const client = new ApiClient("http://test", impl);
    await expect(client.startStage("p1", "Formulate")).rejects.toThrowError(ApiError);
    await expect(client.startStage("p1", "Formulate")).rejects.toMatchObject({
      status: 409,
    });
  });

  it("records every exchange in the audit trail", async () => {
    const { impl } = fakeFetch({
      "POST /projects": () => ({ status: 200, payload: { id: "p9" } }),
      "GET /projects/p9/state": () => ({
        status: 200,
        payload: { state: { version: 1 }, stage: "ExtractParams", outcome: null },
      }),
    });
    const client = new ApiClient("http://test", impl);
    await client.createProject("desc");
    await client.getState("p9");
    expect(client.audit.map((e) => [e.method, e.path, e.status])).toEqual([
      ["POST", "/projects", 200],
      ["GET", "/projects/p9/state", 200],
    ]);
    expect(client.audit[1]!.response).toMatchObject({ stage: "ExtractParams" });
  });
});

describe("pollRun", () => {
  it("polls until the run is terminal", async () => {
    let hits = 0;
    const { impl } = fakeFetch({
      "GET /runs/r1": () => {
        hits += 1;
        return {
          status: 200,
          payload: {
            id: "r1", project: "p", stage: "Code",
            status: hits < 3 ? "running" : "done", error: "", outcome: null,
          },
        };
      },
    });
    const client = new ApiClient("http://test", impl);
    const record = await pollRun(client, "r1", { intervalMs: 1 });
    expect(record.status).toBe("done");
    expect(hits).toBe(3);
  });

  it("returns failed runs instead of hanging", async () => {
    const { impl } = fakeFetch({
      "GET /runs/r2": () => ({
        status: 200,
        payload: { id: "r2", project: "p", stage: "Code",
                   status: "failed", error: "boom", outcome: null },
      }),
    });
    const client = new ApiClient("http://test", impl);
    const record = await pollRun(client, "r2", { intervalMs: 1 });
    expect(record.status).toBe("failed");
    expect(record.error).toBe("boom");
  });
});
