// Submission queue: annotations are never applied optimistically. A
// submission that fails with a network error stays queued and is retried
// until the server acknowledges it; the UI shows the queue status.

import type { ApiClient } from './api.js';
import { ApiError } from './api.js';
import type { AnnotationBody } from './types.js';

export type QueueStatus = 'idle' | 'sending' | 'offline';

export interface QueueEvents {
  onStatus?: (status: QueueStatus, pending: number) => void;
  onAck?: (body: AnnotationBody) => void;
  onRejected?: (body: AnnotationBody, error: ApiError) => void;
}

export class SubmissionQueue {
  private pending: AnnotationBody[] = [];
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inflight: Promise<void> | null = null;

  constructor(
    private api: ApiClient,
    private runId: string,
    private events: QueueEvents = {},
    private retryDelayMs = 2000,
  ) {}

  get size(): number {
    return this.pending.length;
  }

  submit(body: AnnotationBody): void {
    this.pending.push(body);
    void this.flush();
  }

  flush(): Promise<void> {
    if (!this.inflight) {
      this.inflight = this.drain().finally(() => {
        this.inflight = null;
      });
    }
    return this.inflight;
  }

  private async drain(): Promise<void> {
    this.events.onStatus?.('sending', this.pending.length);
    while (this.pending.length > 0) {
      const body = this.pending[0]!;
      try {
        await this.api.submitAnnotation(this.runId, body);
        this.pending.shift();
        this.events.onAck?.(body);
      } catch (error) {
        if (error instanceof ApiError) {
          // The server saw it and said no (duplicate, validation):
          // retrying cannot help, surface it and drop from the queue.
          this.pending.shift();
          this.events.onRejected?.(body, error);
          continue;
        }
        // Network failure: keep the submission and retry later.
        this.events.onStatus?.('offline', this.pending.length);
        this.scheduleRetry();
        return;
      }
    }
    this.events.onStatus?.('idle', 0);
  }

  private scheduleRetry(): void {
    if (this.timer) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.flush();
    }, this.retryDelayMs);
  }
}
