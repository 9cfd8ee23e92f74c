/** Browser bootstrap: wires the controller to the DOM.
 *
 * The page is a single wizard; every click goes through the controller (and
 * therefore the server). Served statically next to the API or via any file
 * server with the API URL in the `data-api` attribute.
 */

import { ApiClient } from "./api.js";
import { ProjectController } from "./controller.js";
import { generateData } from "./datagen.js";
import { ProjectStore } from "./store.js";
import type { StageName } from "./types.js";
import { renderNotifications, renderStep, renderStepTabs } from "./views.js";
import type { StepId } from "./wizard.js";

export async function mount(root: HTMLElement, apiBase: string): Promise<void> {
  const api = new ApiClient(apiBase);
  const store = new ProjectStore();
  let controller: ProjectController | null = null;
  let activeStep: StepId = "parameters";

  const render = () => {
    const snapshot = store.current();
    if (!controller || !snapshot.stage) {
      root.innerHTML = `
        <form class="new-project">
          <textarea name="description" rows="6"
            placeholder="Describe the optimization problem..."></textarea>
          <button type="submit">start project</button>
        </form>`;
      return;
    }
    root.innerHTML = `
      ${renderStepTabs(snapshot, activeStep)}
      ${renderNotifications(snapshot.notifications)}
      ${renderStep(snapshot, activeStep)}`;
  };

  store.subscribe(render);
  render();

  root.addEventListener("submit", async (event) => {
    const form = event.target as HTMLFormElement;
    if (!form.classList.contains("new-project")) return;
    event.preventDefault();
    const description = (form.elements.namedItem("description") as HTMLTextAreaElement).value;
    controller = await ProjectController.create(api, store, description);
  });

  root.addEventListener("click", async (event) => {
    if (!controller) return;
    const target = event.target as HTMLElement;
    const stepButton = target.closest<HTMLElement>("[data-step]");
    if (stepButton?.dataset.step && target.tagName === "BUTTON") {
      activeStep = stepButton.dataset.step as StepId;
      render();
      return;
    }
    const runButton = target.closest<HTMLElement>("[data-run]");
    if (runButton?.dataset.run) {
      await controller.runStage(runButton.dataset.run as StageName);
      return;
    }
    const action = target.dataset.action;
    if (!action) return;
    const reviewRow = target.closest<HTMLElement>("[data-review]");
    if (reviewRow?.dataset.review) {
      const payload =
        action === "modify"
          ? { formulation: window.prompt("replacement formulation") ?? "" }
          : undefined;
      await controller.resolveReview(
        reviewRow.dataset.review,
        action as "keep" | "remove" | "modify",
        payload,
      );
      return;
    }
    if (action === "edit-formulation") {
      const itemId = target.dataset.item;
      const formulation = window.prompt("replacement formulation");
      if (itemId && formulation) {
        await controller.editItem(itemId, { formulation });
      }
      return;
    }
    if (action === "generate-data") {
      const snapshot = store.current();
      if (snapshot.state) {
        // generated client-side for preview; persisting data goes through
        // instance files today, so this only fills the preview table
        console.info("generated", generateData(snapshot.state.parameters));
      }
    }
  });
}

declare global {
  interface Window {
    prompt(message?: string): string | null;
  }
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement) {
  void mount(rootElement, rootElement.dataset.api ?? "http://127.0.0.1:8000");
}
