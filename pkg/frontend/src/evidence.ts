import type { EvidenceView, QueueItemView } from "./types.js";

/** Displayed precision for probabilities and the cross-check tolerance. */
export const DISPLAY_DECIMALS = 6;
export const CROSS_CHECK_TOLERANCE = 1e-6;

export const DEFAULT_SENTENCE_TEMPLATE = "The image matches {article} {concept}";

/**
 * Cards sorted by contribution descending, so the most specific concept
 * (the strongest evidence) comes first. Ties fall back to the weighted
 * value, then to the concept name for a stable layout.
 */
export function sortEvidence(evidence: EvidenceView[]): EvidenceView[] {
  return [...evidence].sort(
    (a, b) =>
      b.contribution - a.contribution ||
      b.weighted - a.weighted ||
      a.concept.localeCompare(b.concept),
  );
}

export function meanWeighted(evidence: EvidenceView[]): number {
  if (evidence.length === 0) return 0;
  let total = 0;
  for (const item of evidence) total += item.weighted;
  return total / evidence.length;
}

export interface CrossCheck {
  mean: number;
  reported: number | null;
  consistent: boolean;
}

/**
 * The service's fused probability must equal the mean of the weighted
 * evidence it displays; recompute client-side so a serialization or
 * rendering bug cannot silently misrepresent the verdict.
 */
export function crossCheck(item: QueueItemView): CrossCheck {
  const mean = meanWeighted(item.verdict.evidence);
  const reported = item.verdict.p_h;
  const consistent =
    reported !== null && Math.abs(mean - reported) <= CROSS_CHECK_TOLERANCE;
  return { mean, reported, consistent };
}

function articleFor(word: string): string {
  return /^[aeiou]/i.test(word.trim()) ? "an" : "a";
}

export function evidenceSentence(
  concept: string,
  template: string = DEFAULT_SENTENCE_TEMPLATE,
): string {
  return template
    .replace("{article}", articleFor(concept))
    .replace("{concept}", concept);
}

export function formatProbability(value: number | null): string {
  return value === null ? "—" : value.toFixed(DISPLAY_DECIMALS);
}
