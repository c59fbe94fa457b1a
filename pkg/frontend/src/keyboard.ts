// Keyboard map for review flow: j/k or arrows to move, a/x to decide,
// digits 1-5 to toggle categories, r to refresh.

import { CATEGORIES, type CategoryName } from "./types.js";

export type KeyAction =
  | { kind: "move"; delta: number }
  | { kind: "decide"; relevant: boolean }
  | { kind: "toggle"; category: CategoryName }
  | { kind: "refresh" }
  | { kind: "none" };

export function actionForKey(key: string): KeyAction {
  switch (key) {
    case "j":
    case "ArrowDown":
      return { kind: "move", delta: 1 };
    case "k":
    case "ArrowUp":
      return { kind: "move", delta: -1 };
    case "a":
      return { kind: "decide", relevant: true };
    case "x":
      return { kind: "decide", relevant: false };
    case "r":
      return { kind: "refresh" };
    default: {
      const digit = Number.parseInt(key, 10);
      if (digit >= 1 && digit <= CATEGORIES.length) {
        return { kind: "toggle", category: CATEGORIES[digit - 1] };
      }
      return { kind: "none" };
    }
  }
}
