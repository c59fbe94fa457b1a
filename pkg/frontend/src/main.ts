// Bootstrap: wire the queue controller, keyboard, and metrics chart to the
// DOM. The UI is stateless across reloads beyond the annotator name; every
// render reflects server truth, and the queue refreshes after each
// submission.

import { ApiClient } from "./api.js";
import { renderChart } from "./chart.js";
import { actionForKey } from "./keyboard.js";
import { QueueController } from "./state.js";
import { renderQueue, renderQueueStatus } from "./view.js";
import type { CategoryName } from "./types.js";

const base = window.location.pathname.startsWith("/ui")
  ? window.location.origin
  : (localStorage.getItem("newstriage.base") ?? "http://127.0.0.1:8000");
const api = new ApiClient(base);

const annotator =
  localStorage.getItem("newstriage.annotator") ??
  `reviewer-${Math.random().toString(36).slice(2, 8)}`;
localStorage.setItem("newstriage.annotator", annotator);

const queueEl = document.getElementById("queue")!;
const statusEl = document.getElementById("queue-status")!;
const chartEl = document.getElementById("chart")!;
const alertsEl = document.getElementById("alerts")!;
const languageEl = document.getElementById("language") as HTMLSelectElement;

const controller = new QueueController(api, annotator, { onChange: render });

function render(): void {
  statusEl.innerHTML = renderQueueStatus(
    controller.cards.length,
    controller.loading,
    controller.loadError,
  );
  queueEl.innerHTML = renderQueue(controller.cards, controller.cursor);
  queueEl.querySelector(".focused")?.scrollIntoView({ block: "nearest" });
}

async function refreshMetrics(): Promise<void> {
  try {
    const metrics = await api.metrics();
    chartEl.innerHTML = renderChart(metrics.buckets, metrics.alerts);
    alertsEl.innerHTML = metrics.alerts.length
      ? metrics.alerts
          .map(
            (a) =>
              `<li>drift: <b>${a.language}</b> ${a.period} precision ` +
              `${a.observed.toFixed(2)} (reference ${a.reference.toFixed(2)})</li>`,
          )
          .join("")
      : "<li>no drift alerts</li>";
  } catch (err) {
    chartEl.innerHTML = `<p class="load-error">metrics unavailable: ${String(err)}</p>`;
  }
}

async function refreshAll(): Promise<void> {
  await controller.refresh(languageEl.value);
  await refreshMetrics();
}

async function decide(relevant: boolean): Promise<void> {
  const ok = await controller.submit(relevant);
  if (ok) {
    await refreshAll();
  }
}

queueEl.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const chip = target.closest<HTMLElement>(".chip");
  if (chip) {
    const card = chip.closest<HTMLElement>(".card");
    controller.cursor = controller.cards.findIndex(
      (c) => c.item.article.id === card?.dataset.id,
    );
    controller.toggleCategory(chip.dataset.category as CategoryName);
    return;
  }
  if (target.closest(".accept")) void decide(true);
  if (target.closest(".reject")) void decide(false);
});

statusEl.addEventListener("click", (event) => {
  if ((event.target as HTMLElement).closest(".retry")) void refreshAll();
});

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement || event.target instanceof HTMLSelectElement) {
    return;
  }
  const action = actionForKey(event.key);
  switch (action.kind) {
    case "move":
      controller.move(action.delta);
      break;
    case "decide":
      void decide(action.relevant);
      break;
    case "toggle":
      controller.toggleCategory(action.category);
      break;
    case "refresh":
      void refreshAll();
      break;
    case "none":
      return;
  }
  event.preventDefault();
});

languageEl.addEventListener("change", () => void refreshAll());

void refreshAll();
setInterval(() => void refreshMetrics(), 30_000);
