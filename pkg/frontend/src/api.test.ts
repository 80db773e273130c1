import { describe, expect, it } from "vitest";

import fixtures from "./__fixtures__/screening_responses.json";
import { ScreeningClient, ServiceError } from "./api.js";
import type { ScreeningResult } from "./types.js";

const USABLE = fixtures.usable_example as ScreeningResult;

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ScreeningClient", () => {
  it("posts the image to /screen with the eye flag", async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const client = new ScreeningClient("http://svc", async (url, init) => {
      calls.push({ url, init });
      return jsonResponse(USABLE);
    });
    const result = await client.screen(new Blob([new Uint8Array([1, 2, 3])]), "left");
    expect(calls[0].url).toBe("http://svc/screen?eye=left");
    expect(calls[0].init?.method).toBe("POST");
    expect(result).toEqual(USABLE);
  });

  it("raises ServiceError with the service detail on failure", async () => {
    const client = new ScreeningClient("", async () =>
      jsonResponse({ detail: "undecodable image" }, 400));
    await expect(client.screen(new Blob([]))).rejects.toThrowError(ServiceError);
    await expect(client.screen(new Blob([]))).rejects.toThrow("undecodable image");
  });

  it("parses health and model info", async () => {
    const client = new ScreeningClient("", async (url) => {
      if (url.endsWith("/health")) {
        return jsonResponse({ status: "ok", model_version: "abc123def456" });
      }
      return jsonResponse({
        version: "abc123def456", format: "redreflex-bundle/1",
        classes: ["normal", "abnormal"], providers: ["pixel-pca"], members: 1,
        augment_mix: "none", confidence_threshold: 0.8, feedback_rules: [],
      });
    });
    expect((await client.health()).status).toBe("ok");
    expect((await client.modelInfo()).confidence_threshold).toBe(0.8);
  });

  it("maps 503 on model info to ServiceError", async () => {
    const client = new ScreeningClient("", async () =>
      jsonResponse({ detail: "model bundle not loaded" }, 503));
    await expect(client.modelInfo()).rejects.toThrowError(ServiceError);
  });
});
