// Roundtrip against the running fixture service: these assertions drive the
// same client, controller, and render code the browser uses.

import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { buildSeries, renderChart } from "../src/chart.js";
import { QueueController } from "../src/state.js";
import { renderQueue } from "../src/view.js";
import { SERVICE_URL } from "./config.js";

const api = new ApiClient(SERVICE_URL);

describe("review UI against the live service", () => {
  it("service is healthy with an active artifact", async () => {
    const health = await api.health();
    expect(health.status).toBe("ok");
    expect(health.active_artifact).toMatch(/^linear-/);
  });

  it("metrics chart shows per-language series with the drift month flagged", async () => {
    const metrics = await api.metrics();
    const series = buildSeries(metrics.buckets);
    for (const lang of ["en", "fr", "ar"]) {
      expect(series.get(lang)!.length).toBeGreaterThanOrEqual(4);
    }
    expect(metrics.alerts.length).toBe(3); // final fixture month drops everywhere
    const svg = renderChart(metrics.buckets, metrics.alerts);
    expect(svg).toContain("data-alert=");
  });

  it("queue renders in score order", async () => {
    const items = await api.queue(undefined, 50);
    expect(items.length).toBe(10);
    const scores = items.map((i) => i.prediction.relevance_score);
    expect(scores).toEqual([...scores].sort((a, b) => b - a));

    const controller = new QueueController(api, "it-reviewer");
    controller.setItems(items);
    const html = renderQueue(controller.cards, 0);
    const rendered = [...html.matchAll(/data-id="([^"]+)"/g)].map((m) => m[1]);
    expect(rendered).toEqual(items.map((i) => i.article.id));
  });

  it("language filter narrows the queue", async () => {
    const fr = await api.queue("fr", 50);
    expect(fr.length).toBe(2);
    expect(fr.every((i) => i.article.language === "fr")).toBe(true);
  });

  it("category-without-relevance submission is rejected and surfaced", async () => {
    const controller = new QueueController(api, "it-reviewer");
    controller.setItems(await api.queue(undefined, 50));
    const before = controller.cards.length;
    const targetId = controller.current!.item.article.id;
    controller.toggleCategory("health");

    const ok = await controller.submit(false); // invalid: categories w/o relevance
    expect(ok).toBe(false);
    expect(controller.cards.length).toBe(before);
    const card = controller.cards[controller.cursor];
    expect(card.status).toBe("rejected");
    expect(card.errorField).toBe("categories");
    expect(renderQueue(controller.cards, controller.cursor)).toContain("card-error");

    // the server never recorded it: the article is still queued
    const again = await api.queue(undefined, 50);
    expect(again.some((i) => i.article.id === targetId)).toBe(true);
  });

  it("a submitted decision appears in metrics within one refresh", async () => {
    const controller = new QueueController(api, "it-reviewer");
    controller.setItems(await api.queue(undefined, 50));
    const targetId = controller.current!.item.article.id;
    controller.toggleCategory("health");
    const ok = await controller.submit(true);
    expect(ok).toBe(true);

    const month = new Date().toISOString().slice(0, 7);
    const metrics = await api.metrics();
    const bucket = metrics.buckets.find(
      (b) => b.period === month && b.language === "en",
    );
    expect(bucket).toBeDefined();
    expect(bucket!.reviewed).toBeGreaterThanOrEqual(1);
    expect(bucket!.confirmed).toBeGreaterThanOrEqual(1);

    // one refresh later the card is gone from the queue
    const items = await api.queue(undefined, 50);
    expect(items.some((i) => i.article.id === targetId)).toBe(false);
    expect(items.length).toBe(9);
  });

  it("serves the UI shell at /ui", async () => {
    const res = await fetch(`${SERVICE_URL}/ui/`);
    expect(res.status).toBe(200);
    expect(await res.text()).toContain("Review queue");
  });
});
