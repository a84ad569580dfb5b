/**
 * Browser bootstrap: wires the service client, view models and renderer to
 * the page. The server is the single source of truth; local state is a cache
 * invalidated on every mutating response.
 */

import { DosebridgeClient, type TrialState } from './api.js';
import { renderDoseLadder, renderRecommendation, renderTrajectory, renderWhatIf } from './render.js';
import {
  countToToggles,
  doseLadder,
  recommendationCard,
  weightTrajectory,
  whatIfComparison,
} from './viewmodel.js';

const client = new DosebridgeClient(
  (document.querySelector('meta[name="service-url"]') as HTMLMetaElement)?.content ??
    'http://127.0.0.1:8710',
);

let sessionId: string | null = null;
let cohortCounter = 0; // optimistic lock: refreshed from the server on 409

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function refresh(): Promise<TrialState> {
  if (!sessionId) throw new Error('no active session');
  const state = await client.getTrial(sessionId);
  const trace = await client.getTrace(sessionId);
  cohortCounter = state.n_cohorts;
  el('ladder').innerHTML = renderDoseLadder(doseLadder(state));
  el('trajectory').innerHTML = renderTrajectory(weightTrajectory(trace.trace, trace.doses_given));
  el('recommendation').innerHTML = renderRecommendation(recommendationCard(state));
  const entry = el<HTMLFieldSetElement>('entry');
  entry.disabled = state.status !== 'enrolling';
  const doseInput = el<HTMLInputElement>('dose');
  if (state.recommendation.dose !== null) doseInput.value = String(state.recommendation.dose);
  return state;
}

function toggles(): number[] {
  return Array.from(document.querySelectorAll<HTMLInputElement>('#entry .toggle')).map((t) =>
    t.checked ? 1 : 0,
  );
}

async function submitCohort(): Promise<void> {
  if (!sessionId) return;
  const dose = Number(el<HTMLInputElement>('dose').value);
  const key = `${sessionId}:${cohortCounter + 1}`;
  try {
    await client.submitCohort(sessionId, dose, toggles(), key);
  } catch (err) {
    // another submission won the optimistic lock; re-sync with the server
    if ((err as { status?: number }).status !== 409) throw err;
  }
  await refresh();
}

async function exploreWhatIf(): Promise<void> {
  if (!sessionId) return;
  const dose = Number(el<HTMLInputElement>('whatif-dose').value);
  const dlts = Number(el<HTMLInputElement>('whatif-dlts').value);
  const [current, hypothetical] = [await client.getTrial(sessionId), await client.whatIf(sessionId, dose, dlts)];
  el('whatif-panel').innerHTML = renderWhatIf(whatIfComparison(current, hypothetical, dose, dlts));
}

async function start(): Promise<void> {
  const body = JSON.parse(el<HTMLTextAreaElement>('config').value);
  const created = await client.createTrial(body);
  sessionId = created.session_id;
  el('session-label').textContent = sessionId;
  await refresh();
}

el('start').addEventListener('click', () => void start());
el('submit').addEventListener('click', () => void submitCohort());
el('explore').addEventListener('click', () => void exploreWhatIf());
el('whatif-close').addEventListener('click', () => {
  el('whatif-panel').innerHTML = '';
});
el('count-shortcut').addEventListener('change', () => {
  const dlts = Number(el<HTMLInputElement>('count-shortcut').value);
  const boxes = document.querySelectorAll<HTMLInputElement>('#entry .toggle');
  countToToggles(dlts, boxes.length).forEach((v, i) => (boxes[i].checked = v === 1));
});
