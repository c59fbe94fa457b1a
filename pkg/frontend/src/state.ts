// Queue controller: server-ordered cards, optimistic submission with
// rollback, and per-card retry state. No decision is ever dropped
// silently — a failed submission leaves the card in place with its
// selections intact and the error surfaced.

import { ApiClient, ApiError } from "./api.js";
import type { CategoryName, QueueItem } from "./types.js";

export type CardStatus = "pending" | "submitting" | "rejected" | "failed";

export interface Card {
  item: QueueItem;
  selected: Set<CategoryName>;
  status: CardStatus;
  error?: string;
  errorField?: string;
}

export interface ControllerEvents {
  onChange?: () => void;
}

export class QueueController {
  cards: Card[] = [];
  cursor = 0;
  loading = false;
  loadError?: string;

  constructor(
    private readonly api: ApiClient,
    public annotatorId: string,
    private readonly events: ControllerEvents = {},
  ) {}

  private notify(): void {
    this.events.onChange?.();
  }

  /** Replace the queue with fresh server state (server order preserved). */
  setItems(items: QueueItem[]): void {
    this.cards = items.map((item) => ({
      item,
      selected: new Set<CategoryName>(),
      status: "pending",
    }));
    this.cursor = Math.min(this.cursor, Math.max(0, this.cards.length - 1));
    this.loadError = undefined;
    this.notify();
  }

  async refresh(language?: string): Promise<void> {
    this.loading = true;
    this.notify();
    try {
      this.setItems(await this.api.queue(language || undefined));
    } catch (err) {
      this.loadError = err instanceof Error ? err.message : String(err);
    } finally {
      this.loading = false;
      this.notify();
    }
  }

  get current(): Card | undefined {
    return this.cards[this.cursor];
  }

  move(delta: number): void {
    if (!this.cards.length) return;
    this.cursor = Math.min(Math.max(this.cursor + delta, 0), this.cards.length - 1);
    this.notify();
  }

  toggleCategory(category: CategoryName): void {
    const card = this.current;
    if (!card || card.status === "submitting") return;
    if (card.selected.has(category)) {
      card.selected.delete(category);
    } else {
      card.selected.add(category);
    }
    this.notify();
  }

  /**
   * Submit the focused card. The card is removed optimistically; a server
   * rejection or transport failure puts it back at its old position with
   * the error attached.
   */
  async submit(relevant: boolean): Promise<boolean> {
    const card = this.current;
    if (!card || card.status === "submitting") return false;
    const index = this.cursor;
    const categories = relevant ? [...card.selected].sort() : [...card.selected];
    card.status = "submitting";
    card.error = undefined;
    this.cards.splice(index, 1);
    this.cursor = Math.min(index, Math.max(0, this.cards.length - 1));
    this.notify();
    try {
      await this.api.submitDecision(card.item.article.id, {
        annotator_id: this.annotatorId,
        relevant,
        categories,
      });
      return true;
    } catch (err) {
      // rollback: the decision was not recorded
      card.status = err instanceof ApiError && !err.retryable ? "rejected" : "failed";
      card.error = err instanceof Error ? err.message : String(err);
      card.errorField = err instanceof ApiError ? err.field : undefined;
      this.cards.splice(Math.min(index, this.cards.length), 0, card);
      this.cursor = Math.min(index, this.cards.length - 1);
      this.notify();
      return false;
    }
  }
}
