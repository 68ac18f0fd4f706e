// Minimal side-by-side view of the two annotators' expert answers per
// form; verdict entry itself happens outside the console.

import type { ApiClient } from '../api.js';
import { el, clear } from '../dom.js';
import type { AnnotationRecord } from '../types.js';

const ATTRIBUTES = ['trigger', 'entity', 'concern', 'emotion', 'consequence'];

export function renderComparison(taskId: string, records: AnnotationRecord[]): HTMLElement {
  const wrap = el('div', { class: 'compare', 'data-task': taskId }, el('h4', {}, taskId));
  const table = el('table', { class: 'compare-table' });
  const header = el('tr', {}, el('th', {}, 'attribute'));
  for (const record of records) {
    header.append(el('th', {}, record.annotator_id));
  }
  table.append(header);
  for (const attr of ATTRIBUTES) {
    const row = el('tr', {}, el('td', {}, attr));
    for (const record of records) {
      const value = record.answers?.[attr];
      row.append(el('td', { class: value == null ? 'null-answer' : 'answer' }, value == null ? '—' : String(value)));
    }
    table.append(row);
  }
  wrap.append(table);
  return wrap;
}

export function createCompareView(api: ApiClient, runId: string, root: HTMLElement): { refresh: () => Promise<void> } {
  async function refresh(): Promise<void> {
    const records = await api.annotations(runId, 'expert');
    const byTask = new Map<string, AnnotationRecord[]>();
    for (const record of records) {
      const list = byTask.get(record.task_id) ?? [];
      list.push(record);
      byTask.set(record.task_id, list);
    }
    clear(root);
    root.append(el('h3', {}, 'Expert answers side by side'));
    const pairs = [...byTask.entries()].filter(([, list]) => list.length === 2);
    if (pairs.length === 0) {
      root.append(el('p', { class: 'empty' }, 'No fully peer-coded forms yet.'));
      return;
    }
    for (const [taskId, list] of pairs) {
      root.append(renderComparison(taskId, list));
    }
  }
  return { refresh };
}
