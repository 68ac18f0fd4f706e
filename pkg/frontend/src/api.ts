// Thin typed client over the service HTTP/JSON API. All console state
// derives from these calls; nothing is kept client-side that the server
// cannot reproduce.

import type {
  AnnotationBody,
  AnnotationRecord,
  NextTaskResponse,
  ProjectionPoint,
  RunSummary,
  StatsData,
  TopicCardData,
  TrendPanels,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { 'Content-Type': 'application/json' },
      ...init,
    });
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = (await response.json()).detail;
      } catch {
        detail = response.statusText;
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listRuns(): Promise<RunSummary[]> {
    return this.request('/api/runs');
  }

  stats(runId: string): Promise<StatsData> {
    return this.request(`/api/runs/${runId}/stats`);
  }

  topics(runId: string, samples = 3): Promise<TopicCardData[]> {
    return this.request(`/api/runs/${runId}/topics?samples=${samples}`);
  }

  topicDetail(runId: string, topicId: number, samples = 10): Promise<TopicCardData> {
    return this.request(`/api/runs/${runId}/topics/${topicId}?samples=${samples}`);
  }

  setTopicName(runId: string, topicId: number, name: string): Promise<unknown> {
    return this.request(`/api/runs/${runId}/topics/${topicId}/name`, {
      method: 'PUT',
      body: JSON.stringify({ name }),
    });
  }

  setTopicTheme(runId: string, topicId: number, theme: string): Promise<unknown> {
    return this.request(`/api/runs/${runId}/topics/${topicId}/theme`, {
      method: 'PUT',
      body: JSON.stringify({ theme }),
    });
  }

  vocabulary(): Promise<{ themes: string[] }> {
    return this.request('/api/themes/vocabulary');
  }

  trends(runId: string): Promise<TrendPanels> {
    return this.request(`/api/runs/${runId}/trends`);
  }

  projection(runId: string): Promise<{ points: ProjectionPoint[] }> {
    return this.request(`/api/runs/${runId}/projection`);
  }

  nextTask(runId: string, annotatorId: string, kind?: string): Promise<NextTaskResponse> {
    const filter = kind ? `&kind=${encodeURIComponent(kind)}` : '';
    return this.request(
      `/api/runs/${runId}/eval/tasks/next?annotator_id=${encodeURIComponent(annotatorId)}${filter}`,
    );
  }

  submitAnnotation(runId: string, body: AnnotationBody): Promise<unknown> {
    return this.request(`/api/runs/${runId}/eval/annotations`, {
      method: 'POST',
      body: JSON.stringify(body),
    });
  }

  annotations(runId: string, kind?: string, taskId?: string): Promise<AnnotationRecord[]> {
    const params = new URLSearchParams();
    if (kind) params.set('kind', kind);
    if (taskId) params.set('task_id', taskId);
    const suffix = params.toString() ? `?${params.toString()}` : '';
    return this.request(`/api/runs/${runId}/eval/annotations${suffix}`);
  }

  report(runId: string, kind: string): Promise<Record<string, unknown>> {
    return this.request(`/api/runs/${runId}/eval/reports/${kind}`);
  }
}
