// Topic exploration: rising/falling trend panels, topic cards with
// sparklines, a 2-D scatter of the corpus, and inline name/theme editing.
// Name edits render optimistically and reconcile with the server reply;
// everything else re-reads the API.

import type { ApiClient } from '../api.js';
import { el, clear, sparklineSvg, topicColor } from '../dom.js';
import type { ProjectionPoint, TopicCardData, TrendPanels, TrendSeriesData } from '../types.js';

function trendCard(
  series: TrendSeriesData,
  onOpen: (topicId: number) => void,
): HTMLElement {
  const title = series.name ?? `topic ${series.topic_id}`;
  const card = el(
    'div',
    { class: `topic-card trend-${series.direction}`, 'data-topic': String(series.topic_id) },
    el('div', { class: 'card-title' }, title),
    sparklineSvg(series.buckets.map(([, count]) => count)),
    el('p', { class: 'doc-text representative' }, series.representative_text),
    el('span', { class: 'slope' }, `${series.slope >= 0 ? '+' : ''}${series.slope.toFixed(2)}/window`),
    el('button', { type: 'button', class: 'open-topic', click: () => onOpen(series.topic_id) }, 'details'),
  );
  return card;
}

export function renderTrendPanels(
  panels: TrendPanels,
  onOpen: (topicId: number) => void,
): HTMLElement {
  const wrap = el('div', { class: 'trend-panels' });
  const sections: [keyof TrendPanels, string][] = [
    ['rising', 'Rising trends'],
    ['falling', 'Falling trends'],
    ['flat', 'Stable'],
  ];
  for (const [key, label] of sections) {
    const section = el('section', { class: `panel panel-${key}` }, el('h3', {}, label));
    for (const series of panels[key]) {
      section.append(trendCard(series, onOpen));
    }
    if (panels[key].length === 0) {
      section.append(el('p', { class: 'empty' }, 'none'));
    }
    wrap.append(section);
  }
  return wrap;
}

export function renderScatter(points: ProjectionPoint[], size = 420): SVGSVGElement {
  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
  svg.setAttribute('width', String(size));
  svg.setAttribute('height', String(size));
  svg.setAttribute('class', 'scatter');
  if (points.length === 0) return svg;
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  for (const point of points) {
    const circle = document.createElementNS('http://www.w3.org/2000/svg', 'circle');
    circle.setAttribute('cx', ((point.x - minX) / spanX) * (size - 8) + 4 + '');
    circle.setAttribute('cy', ((point.y - minY) / spanY) * (size - 8) + 4 + '');
    circle.setAttribute('r', '2');
    circle.setAttribute('fill', topicColor(point.label));
    circle.setAttribute('data-label', String(point.label));
    svg.append(circle);
  }
  return svg;
}

export interface TopicEditorHandlers {
  onRename: (topicId: number, name: string) => Promise<void>;
  onTheme: (topicId: number, theme: string) => Promise<void>;
}

export function renderTopicDetail(
  topic: TopicCardData,
  vocabulary: string[],
  handlers: TopicEditorHandlers,
): HTMLElement {
  const wrap = el('div', { class: 'topic-detail', 'data-topic': String(topic.topic_id) });
  const nameSpan = el('span', { class: 'topic-name' }, topic.name ?? `topic ${topic.topic_id}`);
  const nameInput = el('input', {
    type: 'text',
    class: 'name-input',
    value: topic.name ?? '',
    placeholder: 'name this topic',
  }) as HTMLInputElement;
  nameInput.value = topic.name ?? '';
  const renameButton = el('button', { type: 'button', class: 'rename' }, 'save name');
  renameButton.addEventListener('click', () => {
    const name = nameInput.value.trim();
    if (!name) return;
    // Optimistic for naming only; annotations always wait for the ack.
    nameSpan.textContent = name;
    void handlers.onRename(topic.topic_id, name);
  });

  const themeInput = el('input', {
    type: 'text',
    class: 'theme-input',
    list: 'theme-vocabulary',
    placeholder: 'theme',
  }) as HTMLInputElement;
  themeInput.value = topic.theme ?? '';
  const datalist = el('datalist', { id: 'theme-vocabulary' });
  for (const theme of vocabulary) {
    datalist.append(el('option', { value: theme }));
  }
  const themeButton = el('button', { type: 'button', class: 'set-theme' }, 'save theme');
  themeButton.addEventListener('click', () => {
    const theme = themeInput.value.trim();
    if (!theme) return;
    void handlers.onTheme(topic.topic_id, theme);
  });

  wrap.append(
    el('h3', {}, nameSpan, el('span', { class: 'topic-size' }, ` · ${topic.size} comments`)),
    el('p', { class: 'doc-text representative' }, topic.representative_text),
    el(
      'div',
      { class: 'sample-docs' },
      ...topic.sample_docs.map((d) => el('p', { class: 'doc-text' }, d.text)),
    ),
    el('div', { class: 'editor' }, nameInput, renameButton, themeInput, datalist, themeButton),
  );
  return wrap;
}

export interface ExplorerDeps {
  api: ApiClient;
  runId: string;
  root: HTMLElement;
}

export function createExplorer({ api, runId, root }: ExplorerDeps): { refresh: () => Promise<void> } {
  const panelsHost = el('div', { class: 'panels-host' });
  const detailHost = el('div', { class: 'detail-host' });
  const scatterHost = el('div', { class: 'scatter-host' });
  root.append(panelsHost, detailHost, scatterHost);

  async function openTopic(topicId: number): Promise<void> {
    const [topic, vocabulary] = await Promise.all([
      api.topicDetail(runId, topicId, 10),
      api.vocabulary().then((v) => v.themes),
    ]);
    clear(detailHost);
    detailHost.append(
      renderTopicDetail(topic, vocabulary, {
        onRename: async (id, name) => {
          await api.setTopicName(runId, id, name);
          await refresh();
        },
        onTheme: async (id, theme) => {
          await api.setTopicTheme(runId, id, theme);
          await openTopic(id);
        },
      }),
    );
  }

  async function refresh(): Promise<void> {
    const panels = await api.trends(runId);
    clear(panelsHost);
    panelsHost.append(renderTrendPanels(panels, (topicId) => void openTopic(topicId)));
  }

  async function loadScatter(): Promise<void> {
    const { points } = await api.projection(runId);
    clear(scatterHost);
    scatterHost.append(el('h3', {}, 'Corpus map'), renderScatter(points));
  }
  void loadScatter();

  return { refresh };
}
