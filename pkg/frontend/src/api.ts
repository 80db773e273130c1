// Thin client for the screening service. The fetch implementation is
// injectable so tests can simulate responses without a network.

import type { EyeFlag, HealthResponse, ModelInfo, ScreeningResult } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ScreeningClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async health(): Promise<HealthResponse> {
    const resp = await this.fetchImpl(this.url("/health"));
    return (await resp.json()) as HealthResponse;
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await this.fetchImpl(this.url("/model"));
    if (!resp.ok) {
      throw new ServiceError(resp.status, `model info unavailable (${resp.status})`);
    }
    return (await resp.json()) as ModelInfo;
  }

  async screen(image: Blob | ArrayBuffer, eye: EyeFlag = "auto"): Promise<ScreeningResult> {
    const body = image instanceof Blob ? image : new Blob([image]);
    const resp = await this.fetchImpl(this.url(`/screen?eye=${eye}`), {
      method: "POST",
      body,
      headers: { "Content-Type": "application/octet-stream" },
    });
    if (!resp.ok) {
      let detail = `screen failed (${resp.status})`;
      try {
        const parsed = (await resp.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // non-JSON error body: keep the generic message
      }
      throw new ServiceError(resp.status, detail);
    }
    return (await resp.json()) as ScreeningResult;
  }
}
