import { describe, expect, it } from "vitest";

import { actionForKey, attachKeyboard } from "../src/keyboard.js";

describe("actionForKey", () => {
  it("maps the review shortcuts", () => {
    expect(actionForKey("a", false)).toBe("accept");
    expect(actionForKey("A", false)).toBe("accept");
    expect(actionForKey("r", false)).toBe("reject");
    expect(actionForKey("n", false)).toBe("next");
    expect(actionForKey("ArrowRight", false)).toBe("next");
  });

  it("ignores unrelated keys", () => {
    expect(actionForKey("x", false)).toBeNull();
    expect(actionForKey("Enter", false)).toBeNull();
  });

  it("ignores shortcuts while typing", () => {
    expect(actionForKey("a", true)).toBeNull();
    expect(actionForKey("r", true)).toBeNull();
  });
});

describe("attachKeyboard", () => {
  it("dispatches actions and supports detach", () => {
    const listeners = new Map<string, (event: Event) => void>();
    const fakeWindow = {
      addEventListener: (type: string, fn: (event: Event) => void) =>
        listeners.set(type, fn),
      removeEventListener: (type: string) => listeners.delete(type),
    } as unknown as Window;

    const seen: string[] = [];
    const detach = attachKeyboard(fakeWindow, (action) => seen.push(action));
    const fire = (key: string) =>
      listeners.get("keydown")?.({
        key,
        target: null,
        preventDefault: () => {},
      } as unknown as Event);

    fire("a");
    fire("x");
    fire("n");
    expect(seen).toEqual(["accept", "next"]);

    detach();
    expect(listeners.has("keydown")).toBe(false);
  });
});
