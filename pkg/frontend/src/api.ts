export interface Card {
  product_id: string;
  display_name: string;
  score: number;
}

export interface CardResponse {
  query: string;
  cards: Card[];
  triggered: boolean;
  latency_micros: number;
}

export type Surface = "search" | "autocomplete";

export interface FeedbackEvent {
  query: string;
  product_id: string;
  surface: Surface;
}

export interface ApiClient {
  autocomplete(query: string): Promise<CardResponse>;
  predict(query: string): Promise<CardResponse>;
  feedback(event: FeedbackEvent): Promise<void>;
}

/** Server address: ?api=http://host:port query parameter, else same-ish default. */
export function apiBase(search: string = window.location.search): string {
  const fromQuery = new URLSearchParams(search).get("api");
  return (fromQuery ?? "http://127.0.0.1:8321").replace(/\/$/, "");
}

export class HttpApiClient implements ApiClient {
  constructor(private readonly base: string) {}

  private async getCards(path: string, query: string): Promise<CardResponse> {
    const url = `${this.base}${path}?q=${encodeURIComponent(query)}`;
    const res = await fetch(url);
    if (!res.ok) {
      throw new Error(`${path} failed: ${res.status}`);
    }
    return (await res.json()) as CardResponse;
  }

  autocomplete(query: string): Promise<CardResponse> {
    return this.getCards("/v1/autocomplete", query);
  }

  predict(query: string): Promise<CardResponse> {
    return this.getCards("/v1/predict", query);
  }

  async feedback(event: FeedbackEvent): Promise<void> {
    const res = await fetch(`${this.base}/v1/feedback`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(event),
    });
    if (!res.ok) {
      throw new Error(`feedback failed: ${res.status}`);
    }
  }
}
