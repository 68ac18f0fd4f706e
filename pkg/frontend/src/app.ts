// Single-page shell: the annotator enters an id once per session, picks a
// run, then works in one of three tabs (annotate, explore, compare). All
// state lives on the server; reloading reconstructs the session from the
// entered id and the API alone.

import { ApiClient } from './api.js';
import { el, clear } from './dom.js';
import { createAnnotationFlow } from './views/annotate.js';
import { createCompareView } from './views/compare.js';
import { createExplorer } from './views/explorer.js';

export interface AppOptions {
  api?: ApiClient;
  root: HTMLElement;
}

export function startApp({ api = new ApiClient(), root }: AppOptions): void {
  clear(root);
  const sessionForm = el('form', { class: 'session-form' });
  const idInput = el('input', {
    type: 'text',
    name: 'annotator-id',
    placeholder: 'your annotator id',
    required: 'required',
  }) as HTMLInputElement;
  const runSelect = el('select', { name: 'run-id' }) as HTMLSelectElement;
  sessionForm.append(
    el('h2', {}, 'feedtopics console'),
    el('label', {}, 'Annotator id ', idInput),
    el('label', {}, 'Run ', runSelect),
    el('button', { type: 'submit' }, 'Start session'),
  );
  root.append(sessionForm);

  void api.listRuns().then((runs) => {
    for (const run of runs) {
      runSelect.append(el('option', { value: run.run_id }, run.run_id));
    }
  });

  sessionForm.addEventListener('submit', (event) => {
    event.preventDefault();
    const annotatorId = idInput.value.trim();
    const runId = runSelect.value;
    if (!annotatorId || !runId) return;
    openSession(api, root, runId, annotatorId);
  });
}

export function openSession(api: ApiClient, root: HTMLElement, runId: string, annotatorId: string): void {
  clear(root);
  const annotateHost = el('div', { class: 'tab-annotate' });
  const exploreHost = el('div', { class: 'tab-explore hidden' });
  const compareHost = el('div', { class: 'tab-compare hidden' });
  const hosts: Record<string, HTMLElement> = {
    annotate: annotateHost,
    explore: exploreHost,
    compare: compareHost,
  };

  const nav = el('nav', { class: 'tabs' });
  const title = el('header', {}, el('strong', {}, `run ${runId}`), ` — annotator ${annotatorId}`, nav);
  root.append(title, annotateHost, exploreHost, compareHost);

  const flow = createAnnotationFlow(api, runId, annotatorId, annotateHost);
  const explorer = createExplorer({ api, runId, root: exploreHost });
  const compare = createCompareView(api, runId, compareHost);

  const refreshers: Record<string, () => Promise<void>> = {
    annotate: flow.refresh,
    explore: explorer.refresh,
    compare: compare.refresh,
  };

  for (const name of Object.keys(hosts)) {
    nav.append(
      el(
        'button',
        {
          type: 'button',
          class: `tab-button tab-${name}`,
          click: () => {
            for (const [other, host] of Object.entries(hosts)) {
              host.classList.toggle('hidden', other !== name);
            }
            void refreshers[name]?.();
          },
        },
        name,
      ),
    );
  }

  void flow.refresh();
}
