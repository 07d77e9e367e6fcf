import type { ApiClient, Card, CardResponse, Surface } from "./api.js";

export interface ClickRecord {
  query: string;
  product_id: string;
  display_name: string;
  surface: Surface;
}

export interface UiState {
  input: string;
  mode: Surface;
  response: CardResponse | null;
  history: ClickRecord[];
  error: string | null;
}

export const DEBOUNCE_MS = 150;
export const MIN_PREFIX_LEN = 2;

/**
 * UI state machine, kept free of DOM access so it can be tested headless.
 *
 * Every request carries a sequence number taken at issue time; a response
 * renders only if no newer request has been issued since, so a slow
 * autocomplete response for an older input can never overwrite the cards
 * for the current one.
 */
export class SearchController {
  readonly state: UiState = {
    input: "",
    mode: "autocomplete",
    response: null,
    history: [],
    error: null,
  };

  private seq = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (state: UiState) => void = () => {},
    private readonly debounceMs: number = DEBOUNCE_MS,
    private readonly minPrefixLen: number = MIN_PREFIX_LEN,
  ) {}

  /** Debounced autocomplete; short or cleared input cancels and clears. */
  onInput(text: string): void {
    this.state.input = text;
    this.cancelPending();
    if (text.trim().length < this.minPrefixLen) {
      this.seq += 1; // supersede any in-flight request
      this.state.mode = "autocomplete";
      this.state.response = null;
      this.emit();
      return;
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire("autocomplete", text);
    }, this.debounceMs);
    this.emit();
  }

  /** Immediate search-results request (enter key / button). */
  onSubmit(text: string): Promise<void> {
    this.state.input = text;
    this.cancelPending();
    if (text.trim().length === 0) {
      this.seq += 1;
      this.state.response = null;
      this.emit();
      return Promise.resolve();
    }
    return this.fire("search", text);
  }

  async onCardClick(card: Card): Promise<void> {
    const query = this.state.response?.query ?? this.state.input;
    await this.api.feedback({
      query,
      product_id: card.product_id,
      surface: this.state.mode,
    });
    this.state.history.push({
      query,
      product_id: card.product_id,
      display_name: card.display_name,
      surface: this.state.mode,
    });
    this.emit();
  }

  private cancelPending(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async fire(mode: Surface, text: string): Promise<void> {
    const issued = ++this.seq;
    let response: CardResponse;
    try {
      response =
        mode === "autocomplete"
          ? await this.api.autocomplete(text)
          : await this.api.predict(text);
    } catch (err) {
      if (issued === this.seq) {
        this.state.error = err instanceof Error ? err.message : String(err);
        this.emit();
      }
      return;
    }
    if (issued !== this.seq) {
      return; // superseded while in flight: discard
    }
    this.state.mode = mode;
    this.state.response = response;
    this.state.error = null;
    this.emit();
  }

  private emit(): void {
    this.onChange(this.state);
  }
}
