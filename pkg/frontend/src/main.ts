/** Browser entry point: wires the controller to the DOM. All rendering goes
 * through the pure functions in render.ts; this file only moves events in and
 * HTML out. */

import { ApiClient } from "./api";
import { renderApp } from "./render";
import { SessionController } from "./state";

function mount(): void {
  const root = document.querySelector<HTMLElement>("#app");
  const picker = document.querySelector<HTMLSelectElement>("#model-picker");
  const seedInput = document.querySelector<HTMLInputElement>("#seed");
  const startButton = document.querySelector<HTMLButtonElement>("#start");
  if (!root || !picker || !seedInput || !startButton) {
    throw new Error("missing app shell elements");
  }

  const api = new ApiClient("", (url, init) => fetch(url, init));
  const controller = new SessionController(api, (state) => {
    root.innerHTML = renderApp(state);
  });

  void api
    .listModels()
    .then((list) => {
      picker.innerHTML = list.models
        .map((m) => `<option value="${m.model_id}">${m.model_id}</option>`)
        .join("");
    })
    .catch(() => {
      root.innerHTML =
        '<div class="banner banner--network" role="alert">cannot reach the service;' +
        " start it and reload</div>";
    });

  startButton.addEventListener("click", () => {
    const seed = Number.parseInt(seedInput.value, 10) || 0;
    void controller.start(picker.value, seed);
  });

  const submitFrom = (variable: string): void => {
    const input = root.querySelector<HTMLInputElement>(`input[data-variable="${variable}"]`);
    if (!input) {
      return;
    }
    void controller.answer(variable, Number.parseFloat(input.value));
  };

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const action = target?.closest<HTMLElement>("[data-action]");
    if (!action) {
      return;
    }
    if (action.dataset.action === "retry") {
      void controller.reload();
    } else if (action.dataset.action === "answer" && action.dataset.variable) {
      submitFrom(action.dataset.variable);
    }
  });

  root.addEventListener("keydown", (event) => {
    if (event.key !== "Enter") {
      return;
    }
    const input = event.target as HTMLElement | null;
    if (input instanceof HTMLInputElement && input.dataset.variable) {
      event.preventDefault();
      submitFrom(input.dataset.variable);
    }
  });
}

mount();
