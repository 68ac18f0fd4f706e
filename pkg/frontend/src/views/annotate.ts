// Annotation task views. Each renderer builds its DOM purely from the
// sanitized task payload, collects exactly one answer per scored unit,
// and hands a submit body to the caller; nothing advances until the
// server acknowledges the submission.

import type { ApiClient } from '../api.js';
import { el, clear } from '../dom.js';
import { SubmissionQueue } from '../queue.js';
import type {
  AnnotationBody,
  AssignmentTaskView,
  ExpertAnswers,
  ExpertTaskView,
  IntruderTaskView,
  TaskView,
} from '../types.js';

type Submit = (body: AnnotationBody) => void;

export function renderIntruder(task: IntruderTaskView, annotatorId: string, onSubmit: Submit): HTMLElement {
  const hint = el('p', { class: 'hint', role: 'alert' });
  const form = el('form', { class: 'task task-intruder' });
  form.append(el('h3', {}, 'Which comment does not belong with the other two?'));
  for (const item of task.items) {
    const input = el('input', { type: 'radio', name: 'intruder-choice', value: item.doc_id });
    form.append(el('label', { class: 'choice' }, input, el('span', { class: 'doc-text' }, item.text)));
  }
  const submit = el('button', { type: 'submit' }, 'Submit answer');
  form.append(submit, hint);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const chosen = (form.querySelector('input[name="intruder-choice"]:checked') as HTMLInputElement | null)?.value;
    if (!chosen) {
      hint.textContent = 'Pick the one comment that does not fit.';
      return;
    }
    hint.textContent = '';
    onSubmit({ task_id: task.task_id, annotator_id: annotatorId, kind: 'intruder', chosen });
  });
  return form;
}

export function renderAssignment(task: AssignmentTaskView, annotatorId: string, onSubmit: Submit): HTMLElement {
  const hint = el('p', { class: 'hint', role: 'alert' });
  const form = el('form', { class: 'task task-assignment' });
  form.append(el('h3', {}, 'Assign each comment to topic A or topic B'));

  const exemplarWrap = el('div', { class: 'exemplars' });
  const topicLabels: Record<number, string> = { [task.topic_a]: 'A', [task.topic_b]: 'B' };
  for (const topicId of [task.topic_a, task.topic_b]) {
    const column = el('div', { class: 'exemplar-column' }, el('h4', {}, `Topic ${topicLabels[topicId]}`));
    for (const doc of task.exemplars[String(topicId)] ?? []) {
      column.append(el('p', { class: 'doc-text' }, doc.text));
    }
    exemplarWrap.append(column);
  }
  form.append(exemplarWrap);

  const queryWrap = el('div', { class: 'queries' });
  for (const query of task.queries) {
    const row = el('div', { class: 'query-row', 'data-doc': query.doc_id });
    row.append(el('span', { class: 'doc-text' }, query.text));
    for (const topicId of [task.topic_a, task.topic_b]) {
      const input = el('input', {
        type: 'radio',
        name: `assign-${query.doc_id}`,
        value: String(topicId),
      });
      row.append(el('label', { class: 'choice-inline' }, input, topicLabels[topicId] ?? ''));
    }
    queryWrap.append(row);
  }
  form.append(queryWrap);

  const submit = el('button', { type: 'submit' }, 'Submit assignments');
  form.append(submit, hint);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const assignments: Record<string, number> = {};
    const unanswered: string[] = [];
    const escape = globalThis.CSS?.escape ?? ((s: string) => s.replace(/"/g, '\\"'));
    for (const query of task.queries) {
      const checked = form.querySelector(
        `input[name="assign-${escape(query.doc_id)}"]:checked`,
      ) as HTMLInputElement | null;
      if (!checked) {
        unanswered.push(query.doc_id);
      } else {
        assignments[query.doc_id] = Number(checked.value);
      }
    }
    if (unanswered.length > 0) {
      hint.textContent = `Assign every comment before submitting (${unanswered.length} left).`;
      return;
    }
    hint.textContent = '';
    onSubmit({ task_id: task.task_id, annotator_id: annotatorId, kind: 'assignment', assignments });
  });
  return form;
}

const FREE_TEXT_ATTRIBUTES = ['trigger', 'entity', 'concern', 'consequence'] as const;

const ATTRIBUTE_PROMPTS: Record<string, string> = {
  trigger: 'What event triggered these comments?',
  entity: 'Which entities do the comments address?',
  concern: 'What is the concern of the comments?',
  emotion: 'How do you judge the emotion? (1 = very negative, 5 = very positive)',
  consequence: 'Do the authors state consequences?',
};

export function renderExpert(task: ExpertTaskView, annotatorId: string, onSubmit: Submit): HTMLElement {
  const hint = el('p', { class: 'hint', role: 'alert' });
  const form = el('form', { class: 'task task-expert' });
  form.append(el('h3', {}, 'Describe this topic from its ten sample comments'));
  const sampleWrap = el('div', { class: 'sample-docs' });
  for (const doc of task.sample) {
    sampleWrap.append(el('p', { class: 'doc-text' }, doc.text));
  }
  form.append(sampleWrap);

  for (const attr of FREE_TEXT_ATTRIBUTES) {
    const field = el(
      'div',
      { class: 'field', 'data-attr': attr },
      el('label', { for: `expert-${attr}` }, ATTRIBUTE_PROMPTS[attr] ?? attr),
      el('input', { type: 'text', id: `expert-${attr}`, name: attr }),
      el(
        'label',
        { class: 'na-toggle' },
        el('input', { type: 'checkbox', name: `${attr}-na` }),
        'not part of this topic',
      ),
    );
    form.append(field);
  }

  const emotionField = el('div', { class: 'field', 'data-attr': 'emotion' });
  emotionField.append(el('label', {}, ATTRIBUTE_PROMPTS['emotion'] ?? 'emotion'));
  for (const value of task.emotion_scale) {
    const input = el('input', { type: 'radio', name: 'emotion', value: String(value) });
    emotionField.append(el('label', { class: 'choice-inline' }, input, String(value)));
  }
  emotionField.append(
    el(
      'label',
      { class: 'na-toggle' },
      el('input', { type: 'checkbox', name: 'emotion-na' }),
      'not part of this topic',
    ),
  );
  form.append(emotionField);

  const submit = el('button', { type: 'submit' }, 'Submit description');
  form.append(submit, hint);

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const missing: string[] = [];
    const answers: ExpertAnswers = {
      trigger: null,
      entity: null,
      concern: null,
      emotion: null,
      consequence: null,
    };
    for (const attr of FREE_TEXT_ATTRIBUTES) {
      const text = (form.querySelector(`input[name="${attr}"]`) as HTMLInputElement).value.trim();
      const na = (form.querySelector(`input[name="${attr}-na"]`) as HTMLInputElement).checked;
      if (na) {
        answers[attr] = null;
      } else if (text) {
        answers[attr] = text;
      } else {
        missing.push(attr);
      }
    }
    const emotionChecked = form.querySelector('input[name="emotion"]:checked') as HTMLInputElement | null;
    const emotionNa = (form.querySelector('input[name="emotion-na"]') as HTMLInputElement).checked;
    if (emotionNa) {
      answers.emotion = null;
    } else if (emotionChecked) {
      answers.emotion = Number(emotionChecked.value);
    } else {
      missing.push('emotion');
    }
    if (missing.length > 0) {
      hint.textContent = `Answer or mark not-applicable: ${missing.join(', ')}.`;
      return;
    }
    hint.textContent = '';
    onSubmit({ task_id: task.task_id, annotator_id: annotatorId, kind: 'expert', answers });
  });
  return form;
}

export function renderTask(task: TaskView, annotatorId: string, onSubmit: Submit): HTMLElement {
  switch (task.kind) {
    case 'intruder':
      return renderIntruder(task, annotatorId, onSubmit);
    case 'assignment':
      return renderAssignment(task, annotatorId, onSubmit);
    case 'expert':
      return renderExpert(task, annotatorId, onSubmit);
  }
}

export interface AnnotationFlow {
  refresh: () => Promise<void>;
  queue: SubmissionQueue;
}

export function createAnnotationFlow(
  api: ApiClient,
  runId: string,
  annotatorId: string,
  root: HTMLElement,
  kind?: string,
): AnnotationFlow {
  const status = el('span', { class: 'queue-status' }, '');
  const progress = el('span', { class: 'progress' }, '');
  const taskHost = el('div', { class: 'task-host' });
  root.append(el('div', { class: 'annotate-header' }, progress, status), taskHost);

  const queue = new SubmissionQueue(api, runId, {
    onStatus: (state, pending) => {
      status.textContent =
        state === 'offline' ? `offline — ${pending} submission(s) queued, retrying` : state === 'sending' ? 'sending…' : '';
    },
    onAck: () => void refresh(),
    onRejected: (_body, error) => {
      status.textContent = `submission rejected: ${JSON.stringify(error.detail)}`;
      void refresh();
    },
  });

  async function refresh(): Promise<void> {
    const next = await api.nextTask(runId, annotatorId, kind);
    const done = next.done;
    const total = next.total;
    const pct = total > 0 ? Math.round((done / total) * 100) : 100;
    progress.textContent = `${done}/${total} tasks (${pct}%)`;
    clear(taskHost);
    if (!next.task) {
      taskHost.append(el('p', { class: 'empty-queue' }, 'All tasks completed. Nothing pending.'));
      return;
    }
    taskHost.append(renderTask(next.task, annotatorId, (body) => queue.submit(body)));
  }

  return { refresh, queue };
}
