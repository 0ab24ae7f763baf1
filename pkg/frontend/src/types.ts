export interface EvidenceView {
  concept: string;
  p_e: number;
  contribution: number;
  weighted: number;
}

export interface VerdictView {
  entity_id: string;
  image_id: string;
  stage1_prediction: number;
  stage1_accept: boolean;
  evidence: EvidenceView[];
  p_h: number | null;
  stage2_accept: boolean | null;
  final_label: boolean;
}

export type ItemStatus = "pending" | "accepted" | "rejected";

export interface QueueItemView {
  item_id: string;
  entity_id: string;
  image_id: string;
  entity_name: string;
  image_locator: string;
  verdict: VerdictView;
  status: ItemStatus;
  decided_by: string | null;
  decided_at: string | null;
  enqueued_at: string;
}

export interface QueuePage {
  items: QueueItemView[];
  total: number;
}

export type Decision = "accept" | "reject";
