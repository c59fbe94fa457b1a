// Wire types for the triage service JSON endpoints.

export interface ArticleRecord {
  id: string;
  source: string;
  url: string;
  language: string;
  title: string;
  body: string;
  published_at: string;
  fetched_at: string;
}

export interface PredictionRecord {
  article_id: string;
  artifact_id: string;
  relevance_score: number;
  category_scores: Record<string, number>;
  scored_at: string;
}

export interface QueueItem {
  article: ArticleRecord;
  prediction: PredictionRecord;
}

export interface QueueResponse {
  items: QueueItem[];
}

export interface DecisionBody {
  annotator_id: string;
  relevant: boolean;
  categories: string[];
}

export interface MetricsBucket {
  period: string;
  language: string;
  reviewed: number;
  confirmed: number;
  precision: number | null;
}

export interface DriftAlert {
  language: string;
  period: string;
  observed: number;
  reference: number;
  drop: number;
}

export interface MetricsResponse {
  buckets: MetricsBucket[];
  alerts: DriftAlert[];
  statuses: { language: string; status: string; buckets: number }[];
}

export interface HealthResponse {
  status: string;
  active_artifact: string | null;
  policy_digest: string;
  articles: number;
}

export const CATEGORIES = [
  "food_security",
  "aid_security",
  "education",
  "health",
  "protection",
] as const;

export type CategoryName = (typeof CATEGORIES)[number];

export const CATEGORY_LABELS: Record<CategoryName, string> = {
  food_security: "Food security",
  aid_security: "Aid security",
  education: "Education",
  health: "Health",
  protection: "Protection",
};
