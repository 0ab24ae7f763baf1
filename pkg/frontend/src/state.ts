import { ApiClient, ConflictError } from "./api.js";
import type { Decision, QueueItemView } from "./types.js";

export type SubmitOutcome = "recorded" | "skipped" | "conflict" | "failed";

/**
 * Annotation session state. Decisions flow through submit(), which
 * guards against double submission: while one request is in flight,
 * further submits are no-ops, so a double-click produces one POST.
 */
export class ReviewStore {
  pending: QueueItemView[] = [];
  currentId: string | null = null;
  decidedCount = 0;
  submitting = false;
  lastError: string | null = null;
  conflictNotice: string | null = null;
  annotator = "";

  constructor(private readonly api: ApiClient) {}

  get current(): QueueItemView | null {
    return this.pending.find((item) => item.item_id === this.currentId) ?? null;
  }

  setAnnotator(name: string): void {
    this.annotator = name.trim();
  }

  async refresh(): Promise<void> {
    try {
      const page = await this.api.fetchQueue("pending");
      this.pending = page.items;
      this.lastError = null;
      if (!this.current) {
        this.currentId = this.pending[0]?.item_id ?? null;
      }
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
    }
  }

  select(itemId: string): void {
    if (this.pending.some((item) => item.item_id === itemId)) {
      this.currentId = itemId;
    }
  }

  next(): void {
    if (this.pending.length === 0) {
      this.currentId = null;
      return;
    }
    const index = this.pending.findIndex((item) => item.item_id === this.currentId);
    const nextIndex = index < 0 ? 0 : (index + 1) % this.pending.length;
    this.currentId = this.pending[nextIndex].item_id;
  }

  private removeCurrent(): void {
    const index = this.pending.findIndex((item) => item.item_id === this.currentId);
    if (index >= 0) this.pending.splice(index, 1);
    this.currentId =
      this.pending[Math.min(index, this.pending.length - 1)]?.item_id ?? null;
  }

  async submit(decision: Decision): Promise<SubmitOutcome> {
    const item = this.current;
    if (!item || this.submitting) return "skipped";
    if (!this.annotator) {
      this.lastError = "enter an annotator name first";
      return "failed";
    }
    this.submitting = true;
    this.conflictNotice = null;
    try {
      await this.api.postDecision(item.item_id, this.annotator, decision);
      this.decidedCount += 1;
      this.lastError = null;
      this.removeCurrent();
      return "recorded";
    } catch (error) {
      if (error instanceof ConflictError) {
        this.conflictNotice = `"${item.entity_name || item.item_id}" was already decided by someone else`;
        await this.refreshAfterConflict();
        return "conflict";
      }
      this.lastError = error instanceof Error ? error.message : String(error);
      return "failed";
    } finally {
      this.submitting = false;
    }
  }

  private async refreshAfterConflict(): Promise<void> {
    const staleId = this.currentId;
    try {
      const page = await this.api.fetchQueue("pending");
      this.pending = page.items;
      if (!this.pending.some((item) => item.item_id === staleId)) {
        this.currentId = this.pending[0]?.item_id ?? null;
      }
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
    }
  }
}
