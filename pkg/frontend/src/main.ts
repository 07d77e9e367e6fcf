import { apiBase, HttpApiClient } from "./api.js";
import type { Card } from "./api.js";
import { SearchController } from "./controller.js";
import type { UiState } from "./controller.js";

const input = document.querySelector<HTMLInputElement>("#query")!;
const form = document.querySelector<HTMLFormElement>("#search-form")!;
const cardsEl = document.querySelector<HTMLElement>("#cards")!;
const statusEl = document.querySelector<HTMLElement>("#status")!;
const historyEl = document.querySelector<HTMLUListElement>("#history")!;

const controller = new SearchController(new HttpApiClient(apiBase()), render);

function render(state: UiState): void {
  cardsEl.replaceChildren();
  if (state.error) {
    statusEl.textContent = state.error;
    return;
  }
  if (!state.response) {
    statusEl.textContent = "";
    return;
  }
  const { cards, triggered, latency_micros } = state.response;
  statusEl.textContent = triggered
    ? `${state.mode} · ${cards.length} card(s) · ${(latency_micros / 1000).toFixed(1)} ms`
    : `${state.mode} · no cards`;
  for (const card of cards) {
    cardsEl.appendChild(renderCard(card));
  }
  historyEl.replaceChildren(
    ...state.history.map((click) => {
      const li = document.createElement("li");
      li.textContent = `${click.display_name} ← “${click.query}” (${click.surface})`;
      return li;
    }),
  );
}

function renderCard(card: Card): HTMLElement {
  const el = document.createElement("button");
  el.className = "card";
  el.type = "button";
  const name = document.createElement("strong");
  name.textContent = card.display_name;
  const score = document.createElement("span");
  score.className = "score";
  score.textContent = card.score.toFixed(3);
  el.append(name, score);
  el.addEventListener("click", () => {
    el.classList.add("clicked");
    void controller.onCardClick(card);
  });
  return el;
}

input.addEventListener("input", () => controller.onInput(input.value));
form.addEventListener("submit", (event) => {
  event.preventDefault();
  void controller.onSubmit(input.value);
});
