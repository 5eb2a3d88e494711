// Wire types mirroring the annotation service's JSON bodies.

export type TaskKind = "binary" | "multiclass" | "multilabel";

export interface TaskInfo {
  task_kind: TaskKind;
  num_classes: number;
  feature_dim: number;
}

export interface DatasetInfo {
  dataset_id: string;
  items: number;
  task: TaskInfo;
  evaluation_mode: boolean;
}

export interface BudgetGauge {
  used: number;
  total: number;
}

export interface SuggestionEntry {
  class: number;
  prob: number;
}

export interface TriageScores {
  al: number | null;
  al_normalized: boolean;
  eat: number | null;
  al_exp: number | null;
  combined: number | null;
  max_pred: number | null;
}

export interface PendingItem {
  item_id: string;
  text: string | null;
  suggestion: SuggestionEntry[];
  scores: TriageScores | null;
  rule: string | null;
  phase: string;
  budget: BudgetGauge;
}

export type SessionStatus = "running" | "awaiting_label" | "done";

export interface NextResponse {
  status: SessionStatus;
  item: PendingItem | null;
  budget: BudgetGauge;
}

export interface SubmitAck {
  ok: boolean;
  status: SessionStatus;
  budget: BudgetGauge;
  phase: string;
}

export interface SessionCounts {
  human: number;
  model: number;
  reallocated: number;
  reannotated: number;
}

export interface LossEntry {
  step: number;
  l_f: number;
  l_d: number;
  l_m: number;
  total: number;
}

export interface SessionMetrics {
  session_id: string;
  status: SessionStatus;
  phase: string;
  budget: BudgetGauge;
  counts: SessionCounts;
  annotated: number;
  quality_overall: number | null;
  quality_model_annotated: number | null;
  train_steps: number;
  last_loss: LossEntry | null;
}

export interface SessionInfo {
  session_id: string;
  status: SessionStatus;
  phase: string;
  budget: BudgetGauge;
  counts: SessionCounts;
}

// A label is a class index, or a list of tag indices for multilabel tasks.
export type Label = number | number[];
