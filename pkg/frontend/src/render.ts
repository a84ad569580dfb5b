/**
 * HTML string renderer (headless-testable; main.ts injects the output).
 *
 * Numbers are formatted with fixed decimals straight from the view model —
 * the formatter is the only transformation between service payload and
 * pixels.
 */

import type {
  DoseLadderRow,
  RecommendationCard,
  TrajectoryPoint,
  WhatIfComparison,
} from './viewmodel.js';

const esc = (s: string) => s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');

export function fmt(x: number): string {
  return x.toFixed(3);
}

export function renderDoseLadder(rows: DoseLadderRow[]): string {
  const body = rows
    .map((r) => {
      const bars =
        `<div class="bar under" style="width:${(r.underdose * 100).toFixed(1)}%"></div>` +
        `<div class="bar target" style="width:${(r.target * 100).toFixed(1)}%"></div>` +
        `<div class="bar over" style="width:${(r.overdose * 100).toFixed(1)}%"></div>`;
      return (
        `<tr class="${r.recommended ? 'recommended' : ''}" data-dose="${r.dose}">` +
        `<td class="dose">${r.dose}</td>` +
        `<td class="stack">${bars}</td>` +
        `<td data-field="underdose">${fmt(r.underdose)}</td>` +
        `<td data-field="target">${fmt(r.target)}</td>` +
        `<td data-field="overdose">${fmt(r.overdose)}</td>` +
        `<td data-field="median">${fmt(r.median)}</td>` +
        `<td data-field="prob-dlt">${fmt(r.probDlt)}</td>` +
        `<td class="pred">${r.prediction}</td>` +
        `<td class="n">${r.patients}</td>` +
        `</tr>`
      );
    })
    .join('');
  return (
    '<table class="ladder"><thead><tr>' +
    '<th>dose</th><th>under / target / over</th><th>P(under)</th><th>P(target)</th>' +
    '<th>P(over)</th><th>median</th><th>P(DLT)</th><th>prediction</th><th>n</th>' +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderTrajectory(points: TrajectoryPoint[]): string {
  if (points.length === 0) {
    return '<p class="empty">No cohorts recorded yet.</p>';
  }
  const items = points
    .map(
      (p) =>
        `<li data-cohort="${p.cohort}" class="${p.runIn ? 'run-in' : ''}">` +
        `cohort ${p.cohort} @ ${p.doseGiven} mg/m²: ` +
        `w=<span data-field="weight">${fmt(p.weight)}</span>, ` +
        `w⁺=<span data-field="posterior-weight">${fmt(p.posteriorWeight)}</span>` +
        (p.runIn ? ' (run-in)' : '') +
        '</li>',
    )
    .join('');
  return `<ol class="trajectory">${items}</ol>`;
}

export function renderRecommendation(card: RecommendationCard): string {
  const cls = card.kind === 'stop' ? 'banner stop' : card.kind === 'final' ? 'banner final' : 'card';
  return (
    `<div class="${cls}" data-status="${card.status}">` +
    `<strong>${esc(card.headline)}</strong>` +
    `<span class="wpost">posterior weight on animal component: ` +
    `<span data-field="posterior-weight">${fmt(card.posteriorWeight)}</span></span>` +
    '</div>'
  );
}

export function renderWhatIf(cmp: WhatIfComparison): string {
  return (
    '<section class="whatif" data-non-binding="true">' +
    `<h3>What if ${cmp.dlts} DLT(s) at ${cmp.dose} mg/m²? <em>(exploration only — not recorded)</em></h3>` +
    (cmp.wouldStop ? '<p class="stop">This outcome would stop the trial.</p>' : '') +
    (cmp.hypotheticalWeight === null
      ? ''
      : `<p>weight would become <span data-field="weight">${fmt(cmp.hypotheticalWeight)}</span></p>`) +
    `<div class="side current"><h4>current</h4>${renderDoseLadder(cmp.current)}</div>` +
    `<div class="side hypothetical"><h4>hypothetical</h4>${renderDoseLadder(cmp.hypothetical)}</div>` +
    '</section>'
  );
}
