import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { QueueController } from "../src/state.js";
import type { DecisionBody, QueueItem } from "../src/types.js";

function item(id: string, score: number): QueueItem {
  return {
    article: {
      id,
      source: "GDELT",
      url: `https://x.example/${id}`,
      language: "en",
      title: `title ${id}`,
      body: `body ${id}`,
      published_at: "2024-05-01T00:00:00Z",
      fetched_at: "2024-05-01T01:00:00Z",
    },
    prediction: {
      article_id: id,
      artifact_id: "m",
      relevance_score: score,
      category_scores: { health: 0.6, protection: 0.2 },
      scored_at: "2024-05-01T02:00:00Z",
    },
  };
}

interface FakeCall {
  articleId: string;
  decision: DecisionBody;
}

function fakeApi(behavior: (articleId: string) => Promise<void>) {
  const calls: FakeCall[] = [];
  const api = {
    async submitDecision(articleId: string, decision: DecisionBody) {
      calls.push({ articleId, decision });
      await behavior(articleId);
    },
  } as unknown as ApiClient;
  return { api, calls };
}

describe("QueueController", () => {
  it("keeps server order and removes a card on successful submit", async () => {
    const { api, calls } = fakeApi(async () => {});
    const controller = new QueueController(api, "alice");
    controller.setItems([item("a", 0.9), item("b", 0.8), item("c", 0.7)]);
    expect(controller.cards.map((c) => c.item.article.id)).toEqual(["a", "b", "c"]);

    controller.toggleCategory("health");
    const ok = await controller.submit(true);
    expect(ok).toBe(true);
    expect(calls).toEqual([
      { articleId: "a", decision: { annotator_id: "alice", relevant: true, categories: ["health"] } },
    ]);
    expect(controller.cards.map((c) => c.item.article.id)).toEqual(["b", "c"]);
  });

  it("rolls back on server rejection and surfaces the error inline", async () => {
    const { api } = fakeApi(async () => {
      throw new ApiError(422, "validation", "categories require relevant=true", "categories");
    });
    const controller = new QueueController(api, "alice");
    controller.setItems([item("a", 0.9), item("b", 0.8)]);
    controller.toggleCategory("health");

    const ok = await controller.submit(false);
    expect(ok).toBe(false);
    // decision was NOT recorded: the card is back at its old position
    expect(controller.cards.map((c) => c.item.article.id)).toEqual(["a", "b"]);
    const card = controller.cards[0];
    expect(card.status).toBe("rejected");
    expect(card.error).toContain("categories require relevant=true");
    expect(card.errorField).toBe("categories");
    // selections survive so the reviewer can correct and resubmit
    expect([...card.selected]).toEqual(["health"]);
  });

  it("marks transport failures as retryable without losing state", async () => {
    const { api } = fakeApi(async () => {
      throw new ApiError(0, "network", "service unreachable");
    });
    const controller = new QueueController(api, "alice");
    controller.setItems([item("a", 0.9)]);
    const ok = await controller.submit(true);
    expect(ok).toBe(false);
    expect(controller.cards).toHaveLength(1);
    expect(controller.cards[0].status).toBe("failed");
  });

  it("toggles categories on the focused card only", () => {
    const { api } = fakeApi(async () => {});
    const controller = new QueueController(api, "alice");
    controller.setItems([item("a", 0.9), item("b", 0.8)]);
    controller.move(1);
    controller.toggleCategory("protection");
    expect([...controller.cards[0].selected]).toEqual([]);
    expect([...controller.cards[1].selected]).toEqual(["protection"]);
    controller.toggleCategory("protection");
    expect([...controller.cards[1].selected]).toEqual([]);
  });

  it("clamps cursor movement to the queue bounds", () => {
    const { api } = fakeApi(async () => {});
    const controller = new QueueController(api, "alice");
    controller.setItems([item("a", 0.9), item("b", 0.8)]);
    controller.move(-5);
    expect(controller.cursor).toBe(0);
    controller.move(7);
    expect(controller.cursor).toBe(1);
  });

  it("notifies listeners on every state change", async () => {
    let changes = 0;
    const { api } = fakeApi(async () => {});
    const controller = new QueueController(api, "alice", { onChange: () => changes++ });
    controller.setItems([item("a", 0.9)]);
    controller.toggleCategory("health");
    await controller.submit(true);
    expect(changes).toBeGreaterThanOrEqual(3);
  });
});
