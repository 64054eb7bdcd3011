// City-manager HTTP panel: cycle traffic lights through the manager's
// API and only reflect states the server confirmed.

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ ok: boolean; status: number; json(): Promise<any> }>;

const CYCLE: Record<string, string> = { red: "green", green: "yellow", yellow: "red" };

export function nextLightState(current: string | null): string {
  return CYCLE[current ?? "red"] ?? "green";
}

export async function cycleLight(
  baseUrl: string,
  elementId: string,
  currentState: string | null,
  fetchFn: FetchLike = fetch as unknown as FetchLike,
): Promise<{ state: string; version: number }> {
  const response = await fetchFn(`${baseUrl}/elements/${elementId}/state`, {
    method: "PUT",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ state: nextLightState(currentState) }),
  });
  if (!response.ok) {
    const body = await response.json().catch(() => ({}));
    throw new Error(body.error ?? `element write failed (${response.status})`);
  }
  const body = await response.json();
  return { state: body.state, version: body.version };
}
