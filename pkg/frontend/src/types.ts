// Payload types mirroring the service API. Task views are the sanitized
// annotator-facing projections: they never carry truth fields.

export interface DocItem {
  doc_id: string;
  text: string;
}

export interface IntruderTaskView {
  task_id: string;
  kind: 'intruder';
  items: DocItem[];
}

export interface AssignmentTaskView {
  task_id: string;
  kind: 'assignment';
  topic_a: number;
  topic_b: number;
  exemplars: Record<string, DocItem[]>;
  queries: DocItem[];
}

export interface ExpertTaskView {
  task_id: string;
  kind: 'expert';
  topic_id: number;
  sample: DocItem[];
  attributes: string[];
  emotion_scale: number[];
}

export type TaskView = IntruderTaskView | AssignmentTaskView | ExpertTaskView;

// Field names that must never appear in anything we render.
export const TRUTH_FIELDS = ['truth_index', 'truth_topic', 'source_topics', 'split', 'base_topic', 'intruder_topic'];

export interface NextTaskResponse {
  task: TaskView | null;
  remaining: number;
  done: number;
  total: number;
}

export interface ExpertAnswers {
  trigger: string | null;
  entity: string | null;
  concern: string | null;
  emotion: number | null;
  consequence: string | null;
}

export type AnnotationBody =
  | { task_id: string; annotator_id: string; kind: 'intruder'; chosen: string }
  | { task_id: string; annotator_id: string; kind: 'assignment'; assignments: Record<string, number> }
  | { task_id: string; annotator_id: string; kind: 'expert'; answers: ExpertAnswers };

export interface TopicCardData {
  topic_id: number;
  size: number;
  name: string | null;
  theme: string | null;
  representative_id: string;
  representative_text: string;
  sample_docs: DocItem[];
  member_ids?: string[];
}

export interface TrendSeriesData {
  topic_id: number;
  name: string | null;
  representative_text: string;
  buckets: [string, number][];
  slope: number;
  direction: 'rising' | 'falling' | 'flat';
}

export interface TrendPanels {
  rising: TrendSeriesData[];
  falling: TrendSeriesData[];
  flat: TrendSeriesData[];
}

export interface ProjectionPoint {
  doc_id: string;
  x: number;
  y: number;
  label: number;
}

export interface RunSummary {
  run_id: string;
  created_at: string;
  stages_completed: string[];
  fingerprint: string;
}

export interface StatsData {
  n_topics: number;
  coverage: number;
  mean_size: number;
  sd_size: number;
  total_assigned: number;
  corpus_size: number;
}

export interface AnnotationRecord {
  task_id: string;
  annotator_id: string;
  kind: string;
  choices?: Record<string, unknown>;
  answers?: Record<string, string | number | null>;
}
