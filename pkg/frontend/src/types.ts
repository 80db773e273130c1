// Mirrors of the screening service's JSON schemas. The UI never reshapes
// these: every displayed number is a field of ScreeningResult verbatim.

export interface FeedbackItem {
  property: string;
  measured: number | null;
  threshold: number | null;
  suggestion: string;
}

export interface ScreeningResult {
  usable: boolean;
  verdict: string;
  label: string | null;
  probabilities: number[] | null;
  confidence: number | null;
  feedback: FeedbackItem[];
  timings_ms: Record<string, number>;
  total_ms: number;
  model_version: string;
}

export interface ModelInfo {
  version: string;
  format: string;
  classes: string[];
  providers: string[];
  members: number;
  augment_mix: string;
  confidence_threshold: number;
  feedback_rules: Record<string, unknown>[];
}

export interface HealthResponse {
  status: string;
  model_version: string | null;
}

export type EyeFlag = "left" | "right" | "auto";
