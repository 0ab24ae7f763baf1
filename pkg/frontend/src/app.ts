import { ApiClient } from "./api.js";
import { attachKeyboard, ReviewAction } from "./keyboard.js";
import { renderEvidencePanel, renderQueueRows, renderStatusBar } from "./render.js";
import { ReviewStore } from "./state.js";

export interface AppElements {
  queueList: HTMLElement;
  panel: HTMLElement;
  statusBar: HTMLElement;
  annotatorInput: HTMLInputElement;
}

export class App {
  readonly store: ReviewStore;

  constructor(api: ApiClient, private readonly el: AppElements) {
    this.store = new ReviewStore(api);
  }

  async start(): Promise<void> {
    this.el.annotatorInput.addEventListener("input", () => {
      this.store.setAnnotator(this.el.annotatorInput.value);
    });
    this.el.queueList.addEventListener("click", (event) => {
      const row = (event.target as HTMLElement).closest<HTMLElement>("[data-item-id]");
      if (row?.dataset.itemId) {
        this.store.select(row.dataset.itemId);
        this.render();
      }
    });
    this.el.panel.addEventListener("click", (event) => {
      const button = (event.target as HTMLElement).closest("button");
      if (!button) return;
      if (button.dataset.decision === "accept") void this.act("accept");
      else if (button.dataset.decision === "reject") void this.act("reject");
      else if (button.id === "next-btn") void this.act("next");
    });
    this.el.statusBar.addEventListener("click", (event) => {
      if ((event.target as HTMLElement).id === "retry-btn") {
        void this.store.refresh().then(() => this.render());
      }
    });
    attachKeyboard(window, (action) => void this.act(action));
    await this.store.refresh();
    this.render();
  }

  private async act(action: ReviewAction): Promise<void> {
    if (action === "next") {
      this.store.next();
    } else {
      await this.store.submit(action);
    }
    this.render();
  }

  render(): void {
    this.el.queueList.innerHTML = renderQueueRows(
      this.store.pending,
      this.store.currentId,
    );
    this.el.panel.innerHTML = renderEvidencePanel(this.store.current);
    this.el.statusBar.innerHTML = renderStatusBar(
      this.store.decidedCount,
      this.store.pending.length,
      this.store.conflictNotice,
      this.store.lastError,
    );
  }
}
