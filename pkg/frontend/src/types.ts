/** Wire types for the v1 questionnaire API. Field names match the JSON exactly. */

export interface VariableInfo {
  name: string;
  kind: "continuous" | "binary";
  lo: number;
  hi: number;
  group: number | null;
  target: boolean;
}

export interface ModelInfo {
  model_id: string;
  variables: VariableInfo[];
  targets: string[];
}

export interface ModelList {
  models: ModelInfo[];
}

export interface RewardBar {
  variable: string;
  value: number;
  stderr: number;
}

export interface TargetPrediction {
  target: string;
  mean: number;
  variance: number;
}

export interface NextPayload {
  recommended: string;
  rewards: RewardBar[];
  prediction: TargetPrediction[];
  step: number;
  version: number;
  status: string;
}

export interface AnsweredEntry {
  step: number;
  variable: string;
  value: number;
}

export interface HistoryEntry {
  step: number;
  recommended: string | null;
  rewards: RewardBar[] | null;
  answer: AnsweredEntry | { variable: string; value: number };
}

export interface SessionView {
  session_id: string;
  model_id: string;
  status: "active" | "exhausted" | "closed";
  version: number;
  step: number;
  seed: number;
  created: string;
  updated: string;
  targets: string[];
  answered: AnsweredEntry[];
  available: string[];
  prediction: TargetPrediction[];
  history: HistoryEntry[];
}

export interface AnswerResult {
  status: string;
  step: number;
}

export interface ErrorBody {
  code: string;
  message: string;
  field?: string;
}

/** One prediction snapshot per completed step, accumulated from payloads. */
export interface PredictionPoint {
  step: number;
  prediction: TargetPrediction[];
}
