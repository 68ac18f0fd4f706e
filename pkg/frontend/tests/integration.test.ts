// End-to-end session against the real service: build a run with the CLI,
// sample tasks, drive a complete two-annotator session (intruder +
// assignment + expert) through the console code, and check that the
// reports reproduce the session's own outcomes under the agreement
// arithmetic. Rendered views are scanned for truth leaks on live data.

import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync, appendFileSync, mkdirSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { createAnnotationFlow, renderTask } from '../src/views/annotate.js';
import type { AnnotationBody, TaskView } from '../src/types.js';
import { TRUTH_FIELDS } from '../src/types.js';

const PORT = 8800 + (process.pid % 100);
const BASE = `http://127.0.0.1:${PORT}`;
const RUN_ID = 'console-run';

let workdir: string;
let server: ChildProcess | null = null;
let api: ApiClient;

interface IntruderTruth {
  task_id: string;
  items: { doc_id: string }[];
  truth_index: number;
}

interface AssignmentTruth {
  task_id: string;
  topic_a: number;
  topic_b: number;
  queries: { doc_id: string; truth_topic: number }[];
}

let intruderTruth: IntruderTruth[];
let assignmentTruth: AssignmentTruth[];
let expertTaskIds: string[];

function runCli(args: string[]): void {
  const result = spawnSync('python3', ['-m', 'feedtopics.cli', ...args], {
    cwd: workdir,
    encoding: 'utf-8',
  });
  if (result.status !== 0) {
    throw new Error(`cli ${args.join(' ')} failed (${result.status}): ${result.stderr}`);
  }
}

function readJsonl<T>(path: string): T[] {
  return readFileSync(path, 'utf-8')
    .split('\n')
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line) as T);
}

// Half-up percentage with one decimal, the arithmetic the reports use.
function pct(n: number, d: number): number {
  return Math.round((n * 1000) / d) / 10;
}

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 120; attempt += 1) {
    try {
      const response = await fetch(`${BASE}/api/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error('service did not come up');
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), 'console-it-'));
  const config = {
    handles: ['ExampleTelco'],
    embedding: { backend_id: 'hashing', dimension: 64, batch_size: 256, seed: 1 },
    reduction: { output_dims: 8, n_neighbors: 40, min_dist: 0.0, seed: 1 },
    clustering: { min_cluster_size: 25, selection: 'leaf' },
    trends: { window_days: 7.0, horizon: 8, threshold: 0.5 },
    projection_seed: 1,
  };
  writeFileSync(join(workdir, 'config.json'), JSON.stringify(config));
  const gen = spawnSync(
    'python3',
    ['-c', `from feedtopics.synth import make_corpus; make_corpus(600, 6, seed=3).write(r'${join(workdir, 'c.jsonl')}')`],
    { encoding: 'utf-8' },
  );
  if (gen.status !== 0) throw new Error(`corpus generation failed: ${gen.stderr}`);

  const base = ['--store', 'store', '--run-id', RUN_ID, '--config', 'config.json'];
  runCli(['trends', '--source', 'c.jsonl', ...base]);
  runCli(['eval-sample', 'intruder', '--n', '6', '--seed', '5', ...base]);
  runCli(['eval-sample', 'assign', '--n', '3', '--seed', '5', ...base]);
  runCli(['eval-sample', 'expert', '--n', '3', '--seed', '5', ...base]);

  const evalDir = join(workdir, 'store', RUN_ID, 'eval');
  intruderTruth = readJsonl<IntruderTruth>(join(evalDir, 'tasks-intruder.jsonl'));
  assignmentTruth = readJsonl<AssignmentTruth>(join(evalDir, 'tasks-assignment.jsonl'));
  expertTaskIds = readJsonl<{ task_id: string }>(join(evalDir, 'tasks-expert.jsonl')).map((t) => t.task_id);

  server = spawn('python3', ['-m', 'feedtopics.cli', 'serve', '--store', 'store', '--port', String(PORT)], {
    cwd: workdir,
    stdio: 'ignore',
  });
  await waitForServer();
  api = new ApiClient(BASE);
});

afterAll(() => {
  server?.kill();
  if (workdir) rmSync(workdir, { recursive: true, force: true });
});

function scanForTruth(view: HTMLElement): void {
  const html = view.outerHTML.toLowerCase();
  for (const field of TRUTH_FIELDS) {
    expect(html).not.toContain(field);
  }
}

function intruderAnswer(task: TaskView, correct: boolean): string {
  const truth = intruderTruth.find((t) => t.task_id === task.task_id)!;
  const truthDoc = truth.items[truth.truth_index]!.doc_id;
  if (correct) return truthDoc;
  return truth.items.find((i) => i.doc_id !== truthDoc)!.doc_id;
}

// Drive one rendered task in jsdom: fill the inputs, dispatch submit,
// capture the body the view produced.
function submitThroughDom(task: TaskView, fill: (view: HTMLElement) => void): AnnotationBody {
  const captured: AnnotationBody[] = [];
  const view = renderTask(task, 'ui-alice', (body) => captured.push(body));
  document.body.append(view);
  scanForTruth(view);
  fill(view);
  view.dispatchEvent(new Event('submit'));
  expect(captured, `view for ${task.task_id} must submit`).toHaveLength(1);
  view.remove();
  return captured[0]!;
}

function check(view: HTMLElement, selector: string): void {
  const input = view.querySelector(selector) as HTMLInputElement | null;
  expect(input, selector).not.toBeNull();
  input!.checked = true;
}

describe('console session round-trip', () => {
  it('completes a full two-annotator session and reproduces the agreement arithmetic', async () => {
    // ui-alice works through the sanitized queue, always answering with
    // the ground truth (looked up from the store, never from payloads),
    // except one planted mistake in the assignment tasks.
    const aliceWrongUnit = { task: assignmentTruth[0]!.task_id, doc: assignmentTruth[0]!.queries[0]!.doc_id };
    let guard = 0;
    for (;;) {
      guard += 1;
      if (guard > 50) throw new Error('queue did not drain');
      const next = await api.nextTask(RUN_ID, 'ui-alice');
      if (!next.task) break;
      const task = next.task;
      let body: AnnotationBody;
      if (task.kind === 'intruder') {
        const chosen = intruderAnswer(task, true);
        body = submitThroughDom(task, (view) => check(view, `input[value="${chosen}"]`));
      } else if (task.kind === 'assignment') {
        const truth = assignmentTruth.find((t) => t.task_id === task.task_id)!;
        body = submitThroughDom(task, (view) => {
          for (const query of truth.queries) {
            let topic = query.truth_topic;
            if (task.task_id === aliceWrongUnit.task && query.doc_id === aliceWrongUnit.doc) {
              topic = query.truth_topic === truth.topic_a ? truth.topic_b : truth.topic_a;
            }
            check(view, `input[name="assign-${query.doc_id}"][value="${topic}"]`);
          }
        });
      } else {
        const index = expertTaskIds.indexOf(task.task_id);
        body = submitThroughDom(task, (view) => {
          (view.querySelector('input[name="trigger"]') as HTMLInputElement).value = 'planned maintenance wave';
          (view.querySelector('input[name="entity"]') as HTMLInputElement).value =
            index === 0 ? 'network routers' : '';
          if (index !== 0) check(view, 'input[name="entity-na"]');
          check(view, 'input[name="concern-na"]');
          check(view, 'input[name="consequence-na"]');
          check(view, `input[name="emotion"][value="2"]`);
        });
      }
      await api.submitAnnotation(RUN_ID, body);
    }
    const done = await api.nextTask(RUN_ID, 'ui-alice');
    expect(done.task).toBeNull();
    expect(done.done).toBe(done.total);
    expect(done.total).toBe(12);

    // bob annotates through the client with planted disagreements:
    // intruder wrong on the two last tasks, assignment wrong on three
    // units (one shared with alice's mistake), expert emotion differing
    // on the last form and entity left blank everywhere.
    const sortedIntruder = [...intruderTruth].sort((a, b) => a.task_id.localeCompare(b.task_id));
    for (const [index, truth] of sortedIntruder.entries()) {
      const truthDoc = truth.items[truth.truth_index]!.doc_id;
      const wrong = truth.items.find((i) => i.doc_id !== truthDoc)!.doc_id;
      await api.submitAnnotation(RUN_ID, {
        task_id: truth.task_id,
        annotator_id: 'bob',
        kind: 'intruder',
        chosen: index < 4 ? truthDoc : wrong,
      });
    }
    const bobWrongUnits = [
      { task: assignmentTruth[0]!.task_id, doc: assignmentTruth[0]!.queries[0]!.doc_id }, // shared with alice
      { task: assignmentTruth[1]!.task_id, doc: assignmentTruth[1]!.queries[0]!.doc_id },
      { task: assignmentTruth[1]!.task_id, doc: assignmentTruth[1]!.queries[1]!.doc_id },
    ];
    for (const truth of assignmentTruth) {
      const assignments: Record<string, number> = {};
      for (const query of truth.queries) {
        const flip = bobWrongUnits.some((u) => u.task === truth.task_id && u.doc === query.doc_id);
        assignments[query.doc_id] = flip
          ? query.truth_topic === truth.topic_a
            ? truth.topic_b
            : truth.topic_a
          : query.truth_topic;
      }
      await api.submitAnnotation(RUN_ID, {
        task_id: truth.task_id,
        annotator_id: 'bob',
        kind: 'assignment',
        assignments,
      });
    }
    for (const [index, taskId] of expertTaskIds.entries()) {
      await api.submitAnnotation(RUN_ID, {
        task_id: taskId,
        annotator_id: 'bob',
        kind: 'expert',
        answers: {
          trigger: 'maintenance announcement',
          entity: null,
          concern: null,
          emotion: index === expertTaskIds.length - 1 ? 4 : 2,
          consequence: null,
        },
      });
    }

    // Intruder outcomes from this session: 4 both-correct, 2 one-correct.
    const intruderReport = (await api.report(RUN_ID, 'intruder')) as {
      n_units: number;
      counts: Record<string, number>;
      percents: Record<string, number>;
    };
    expect(intruderReport.n_units).toBe(6);
    expect(intruderReport.counts).toEqual({ both_correct: 4, one_correct: 2, both_incorrect: 0 });
    expect(intruderReport.percents).toEqual({
      both_correct: pct(4, 6),
      one_correct: pct(2, 6),
      both_incorrect: pct(0, 6),
    });

    // Assignment outcomes: 30 units, 1 both-incorrect (shared mistake),
    // 2 one-correct (bob only), 27 both-correct.
    const assignmentReport = (await api.report(RUN_ID, 'assignment')) as {
      n_units: number;
      counts: Record<string, number>;
      percents: Record<string, number>;
    };
    expect(assignmentReport.n_units).toBe(30);
    expect(assignmentReport.counts).toEqual({ both_correct: 27, one_correct: 2, both_incorrect: 1 });
    expect(assignmentReport.percents).toEqual({
      both_correct: pct(27, 30),
      one_correct: pct(2, 30),
      both_incorrect: pct(1, 30),
    });

    // Expert: trigger pairs adjudicated agree; emotion agrees on all but
    // the last form; entity has one one-sided annotation (R2).
    const evalDir = join(workdir, 'store', RUN_ID, 'eval');
    const adjudications = expertTaskIds.map((taskId) => ({
      task_id: taskId,
      attribute: 'trigger',
      verdict: 'agree',
      rule: 'R1',
      override: false,
      note: 'same event, different words',
    }));
    mkdirSync(evalDir, { recursive: true });
    appendFileSync(
      join(evalDir, 'adjudications.jsonl'),
      adjudications.map((a) => JSON.stringify(a)).join('\n') + '\n',
    );

    const expertReport = (await api.report(RUN_ID, 'expert')) as {
      per_attribute: Record<string, { annotations: number; non_null: number; agreements: number }>;
      totals: { annotations: number; non_null: number; agreements: number };
      omitted_attributes: string[];
      incomplete: string[];
    };
    expect(expertReport.incomplete).toEqual([]);
    expect(expertReport.per_attribute['trigger']).toMatchObject({ annotations: 6, non_null: 6, agreements: 6 });
    expect(expertReport.per_attribute['emotion']).toMatchObject({ annotations: 6, non_null: 6, agreements: 4 });
    expect(expertReport.per_attribute['entity']).toMatchObject({ annotations: 6, non_null: 1, agreements: 0 });
    expect(expertReport.omitted_attributes).toEqual(expect.arrayContaining(['concern', 'consequence']));
    expect(expertReport.totals).toMatchObject({ annotations: 18, non_null: 13, agreements: 10 });
  });

  it('duplicate submissions are rejected and the queue surfaces them', async () => {
    const truth = intruderTruth[0]!;
    await expect(
      api.submitAnnotation(RUN_ID, {
        task_id: truth.task_id,
        annotator_id: 'ui-alice',
        kind: 'intruder',
        chosen: truth.items[0]!.doc_id,
      }),
    ).rejects.toMatchObject({ status: 409 });
  });

  it('annotation flow shows an empty queue at 100% for a finished annotator', async () => {
    const root = document.createElement('div');
    document.body.append(root);
    const flow = createAnnotationFlow(api, RUN_ID, 'ui-alice', root);
    await flow.refresh();
    expect(root.querySelector('.empty-queue')).not.toBeNull();
    expect(root.querySelector('.progress')?.textContent).toContain('12/12');
    expect(root.querySelector('.progress')?.textContent).toContain('100%');
    root.remove();
  });

  it('explorer names persist through the API round-trip', async () => {
    await api.setTopicName(RUN_ID, 0, 'maintenance chatter');
    const topics = await api.topics(RUN_ID);
    expect(topics.find((t) => t.topic_id === 0)?.name).toBe('maintenance chatter');
    const panels = await api.trends(RUN_ID);
    const everywhere = [...panels.rising, ...panels.falling, ...panels.flat];
    const ids = everywhere.map((s) => s.topic_id);
    expect(new Set(ids).size).toBe(ids.length); // disjoint partition
  });
});
