// Shapes of the gateway's JSON API. The console renders these fields and
// nothing else: every number on screen is traceable to one of them.

export type Status = "accepted" | "rejected_ood" | "failed";

export interface GateDecision {
  in_dist_prob: number;
  threshold: number;
  accepted: boolean;
  ood_model_version: string;
}

export interface Prediction {
  probabilities: Record<string, number>;
  argmax_label: string;
  model_version: string;
}

export interface Review {
  action: "none" | "confirmed" | "overridden";
  note: string;
}

export interface StudyRecord {
  study_uid: string;
  sop_instance_uid: string;
  received_at: string;
  status: Status;
  gate: GateDecision | null;
  prediction: Prediction | null;
  sr_sop_uid: string | null;
  source_bytes_path: string;
  error: string | null;
  review: Review;
}

export interface PredictionsPage {
  total: number;
  records: StudyRecord[];
}

export interface Healthz {
  status: string;
  classifier_version: string;
  ood_version: string;
  ood_threshold: number;
  storage_dir: string;
  record_count: number;
}

export interface StowOutcome {
  accepted: { sop: string; prediction: Prediction; sr_sop: string }[];
  rejected: { sop: string; reason: string }[];
  failed: { index: number; error: string }[];
}
