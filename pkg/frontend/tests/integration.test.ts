/**
 * End-to-end tests against the real verification service: decisions made
 * through the UI state layer must land in the append-only log exactly
 * once, and the rendered evidence must average to the reported P(H).
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ConflictError } from "../src/api.js";
import { crossCheck, meanWeighted, sortEvidence } from "../src/evidence.js";
import { ReviewStore } from "../src/state.js";

const PYTHON = process.env.PYTHON ?? "python3";

let proc: ChildProcess;
let baseUrl: string;
let logPath: string;
let workdir: string;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address && typeof address === "object") {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitForHealth(url: string, timeoutMs = 45_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${url}/v1/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("service did not become healthy");
}

function readLogDecisions(): Array<{ item_id: string }> {
  const raw = readFileSync(logPath, "utf-8");
  return raw
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line))
    .filter((event) => event.event === "decision");
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "verify-ui-"));
  logPath = join(workdir, "decisions.jsonl");
  execFileSync(PYTHON, [
    "-m", "cogground.cli", "make-world",
    "--n-entities", "60", "--seed", "21", "--out", workdir,
  ]);
  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  proc = spawn(
    PYTHON,
    [
      "-m", "cogground.cli", "serve",
      "--entities", join(workdir, "entities.jsonl"),
      "--images", join(workdir, "images.jsonl"),
      "--pairs", join(workdir, "pairs.jsonl"),
      "--scorer", "synthetic", "--scorer-seed", "21", "--noise-sigma", "0.5",
      "--decision-log", logPath,
      "--port", String(port),
    ],
    { stdio: "ignore" },
  );
  await waitForHealth(baseUrl);

  // ground every labeled pair so stage-1 rejections fill the queue
  const pairs = readFileSync(join(workdir, "pairs.jsonl"), "utf-8")
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
  for (const pair of pairs) {
    const response = await fetch(`${baseUrl}/v1/ground`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ entity_id: pair.entity_id, image_ids: [pair.image_id] }),
    });
    if (!response.ok) throw new Error(`ground failed: ${response.status}`);
  }
});

afterAll(() => {
  proc?.kill("SIGKILL");
});

describe("decision round-trip through the UI layer", () => {
  it("records one log entry, removes the item from pending, and guards double submits", async () => {
    const api = new ApiClient(baseUrl);
    const store = new ReviewStore(api);
    store.setAnnotator("ann-ui");
    await store.refresh();
    expect(store.pending.length).toBeGreaterThanOrEqual(20);

    const target = store.current!;
    const before = readLogDecisions().filter((d) => d.item_id === target.item_id);
    expect(before).toHaveLength(0);

    // double-click: two submits race, the in-flight guard lets one through
    const [first, second] = await Promise.all([
      store.submit("accept"),
      store.submit("accept"),
    ]);
    expect([first, second].sort()).toEqual(["recorded", "skipped"]);

    const after = readLogDecisions().filter((d) => d.item_id === target.item_id);
    expect(after).toHaveLength(1);

    const page = await api.fetchQueue("pending");
    expect(page.items.map((i) => i.item_id)).not.toContain(target.item_id);
    expect(store.decidedCount).toBe(1);

    const decided = await api.fetchItem(target.item_id);
    expect(decided.status).toBe("accepted");
    expect(decided.decided_by).toBe("ann-ui");
  });

  it("turns a bypassed double submission into a conflict with a single log record", async () => {
    const api = new ApiClient(baseUrl);
    const page = await api.fetchQueue("pending");
    const target = page.items[0];
    await api.postDecision(target.item_id, "ann-a", "reject");
    await expect(
      api.postDecision(target.item_id, "ann-b", "accept"),
    ).rejects.toBeInstanceOf(ConflictError);
    const records = readLogDecisions().filter((d) => d.item_id === target.item_id);
    expect(records).toHaveLength(1);
  });

  it("shows a conflict notice and drops the stolen item on refresh", async () => {
    const api = new ApiClient(baseUrl);
    const store = new ReviewStore(api);
    store.setAnnotator("ann-slow");
    await store.refresh();
    const target = store.current!;
    // another annotator wins the race out-of-band
    await api.postDecision(target.item_id, "ann-fast", "accept");
    const outcome = await store.submit("reject");
    expect(outcome).toBe("conflict");
    expect(store.conflictNotice).toBeTruthy();
    expect(store.pending.map((i) => i.item_id)).not.toContain(target.item_id);
  });
});

describe("evidence fidelity", () => {
  it("weighted values average to P(H) and cards sort by contribution", async () => {
    const api = new ApiClient(baseUrl);
    const page = await api.fetchQueue("pending", 20);
    expect(page.items.length).toBeGreaterThanOrEqual(20);
    for (const item of page.items.slice(0, 20)) {
      expect(item.verdict.p_h).not.toBeNull();
      expect(
        Math.abs(meanWeighted(item.verdict.evidence) - item.verdict.p_h!),
      ).toBeLessThanOrEqual(1e-6);
      expect(crossCheck(item).consistent).toBe(true);

      const cards = sortEvidence(item.verdict.evidence);
      for (let i = 1; i < cards.length; i += 1) {
        expect(cards[i].contribution).toBeLessThanOrEqual(
          cards[i - 1].contribution,
        );
      }
      for (const card of item.verdict.evidence) {
        expect(Math.abs(card.weighted - card.p_e * card.contribution))
          .toBeLessThanOrEqual(1e-12);
      }
    }
  });
});
