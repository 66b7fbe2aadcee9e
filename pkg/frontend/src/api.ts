/** Typed client for the backend HTTP API. A fetch function is injected so
 * the logic is testable without a network.
 */

import type { SensorRow } from "./state.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string) {
    super(`${status} ${code}`);
    this.name = "ApiError";
  }
}

export interface ConnectOffer {
  kind: "connect_offer";
  sensor_id: string;
  user_id: string;
  session_token: string;
  endpoint: string;
}

export interface ConnectReject {
  kind: "connect_reject";
  sensor_id: string;
  reason: "BUSY" | "OFFLINE" | "UNKNOWN_SENSOR";
}

export type ConnectReply = ConnectOffer | ConnectReject;

export interface Account {
  user_id: string;
  balance_mtk: number;
}

type Fetch = typeof fetch;

export class BackendApi {
  constructor(
    readonly baseUrl: string,
    readonly token: string,
    private readonly doFetch: Fetch = fetch,
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const response = await this.doFetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      ...(body !== undefined ? { body: JSON.stringify(body) } : {}),
    });
    if (!response.ok) {
      let code = `HTTP_${response.status}`;
      try {
        const doc = (await response.json()) as { detail?: string };
        if (doc.detail) code = doc.detail;
      } catch {
        // non-JSON error body, keep the status code
      }
      throw new ApiError(response.status, code);
    }
    return response.json();
  }

  async sensors(state?: string): Promise<SensorRow[]> {
    const query = state ? `?state=${encodeURIComponent(state)}` : "";
    return (await this.request("GET", `/api/sensors${query}`)) as SensorRow[];
  }

  async me(): Promise<Account> {
    return (await this.request("GET", "/api/me")) as Account;
  }

  async connect(sensorId: string): Promise<ConnectReply> {
    return (await this.request("POST", "/api/connect", {
      sensor_id: sensorId,
    })) as ConnectReply;
  }
}
