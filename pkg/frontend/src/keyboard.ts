export type ReviewAction = "accept" | "reject" | "next";

/**
 * a = accept, r = reject, n / ArrowRight = next. Keys pressed while the
 * annotator is typing in a form field are ignored.
 */
export function actionForKey(key: string, isTyping: boolean): ReviewAction | null {
  if (isTyping) return null;
  switch (key) {
    case "a":
    case "A":
      return "accept";
    case "r":
    case "R":
      return "reject";
    case "n":
    case "N":
    case "ArrowRight":
      return "next";
    default:
      return null;
  }
}

function isTypingTarget(target: EventTarget | null): boolean {
  if (typeof HTMLElement === "undefined" || !(target instanceof HTMLElement)) {
    return false;
  }
  return (
    target instanceof HTMLInputElement ||
    target instanceof HTMLTextAreaElement ||
    target.isContentEditable
  );
}

export function attachKeyboard(
  target: Pick<Window, "addEventListener" | "removeEventListener">,
  onAction: (action: ReviewAction) => void,
): () => void {
  const listener = (event: Event) => {
    const keyEvent = event as KeyboardEvent;
    const action = actionForKey(keyEvent.key, isTypingTarget(keyEvent.target));
    if (action) {
      keyEvent.preventDefault();
      onAction(action);
    }
  };
  target.addEventListener("keydown", listener);
  return () => target.removeEventListener("keydown", listener);
}
