/** Minimal fetch client for the service endpoints. */

import type {
  AskResponse,
  HealthResponse,
  MissingListResponse,
  SessionsResponse,
  UploadResponse,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(`${base}${path}`, init);
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail = typeof body === "object" && body && "error" in body ? String(body.error) : response.statusText;
    throw new ServiceError(response.status, detail);
  }
  return body as T;
}

export class ServiceClient {
  constructor(private readonly base: string) {}

  ask(question: string, ingest = false): Promise<AskResponse> {
    return request<AskResponse>(this.base, "/ask", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question, ingest }),
    });
  }

  upload(canonical: string, filename: string, bytesBase64: string): Promise<UploadResponse> {
    return request<UploadResponse>(this.base, "/upload", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ canonical, filename, bytes: bytesBase64 }),
    });
  }

  missingList(): Promise<MissingListResponse> {
    return request<MissingListResponse>(this.base, "/missing-list");
  }

  sessions(): Promise<SessionsResponse> {
    return request<SessionsResponse>(this.base, "/sessions");
  }

  health(): Promise<HealthResponse> {
    return request<HealthResponse>(this.base, "/health");
  }
}
