/**
 * Pure view-model builders: service payloads in, render-ready structures out.
 *
 * Invariant: every number placed in a view structure is copied verbatim from
 * a service response field. Nothing is recomputed here — no sums, no
 * complements, no derived probabilities — so what the user sees is exactly
 * what the statistics engine produced.
 */

import type { TracePoint, TrialState, WhatIfResponse } from './api.js';

export interface DoseLadderRow {
  dose: number;
  underdose: number;
  target: number;
  overdose: number;
  median: number;
  probDlt: number;
  prediction: 'DLT' | 'no-DLT';
  patients: number;
  recommended: boolean;
}

export function doseLadder(state: TrialState): DoseLadderRow[] {
  const s = state.summary;
  return state.doses.map((dose, i) => ({
    dose,
    underdose: s.prob_underdose[i],
    target: s.prob_target[i],
    overdose: s.prob_overdose[i],
    median: s.median_risk[i],
    probDlt: s.prob_dlt[i],
    prediction: state.predictions[i] === 1 ? 'DLT' : 'no-DLT',
    patients: state.patients_per_dose[i],
    recommended: state.recommendation.dose_index === i,
  }));
}

export interface TrajectoryPoint {
  cohort: number;
  weight: number;
  posteriorWeight: number;
  runIn: boolean;
  doseGiven: number;
}

export function weightTrajectory(trace: TracePoint[], dosesGiven: number[]): TrajectoryPoint[] {
  return trace.map((p, i) => ({
    cohort: p.cohort,
    weight: p.weight,
    posteriorWeight: p.posterior_weight,
    runIn: p.run_in,
    doseGiven: dosesGiven[i],
  }));
}

export interface RecommendationCard {
  kind: 'dose' | 'stop' | 'final';
  headline: string;
  dose: number | null;
  mtdDose: number | null;
  status: TrialState['status'];
  posteriorWeight: number;
}

export function recommendationCard(state: TrialState): RecommendationCard {
  if (state.status === 'enrolling') {
    if (state.recommendation.stop || state.recommendation.dose === null) {
      return {
        kind: 'stop',
        headline: 'Stop: even the lowest dose exceeds the overdose-control bound',
        dose: null,
        mtdDose: null,
        status: state.status,
        posteriorWeight: state.summary.posterior_weight,
      };
    }
    return {
      kind: 'dose',
      headline: `Next cohort: ${state.recommendation.dose} mg/m²`,
      dose: state.recommendation.dose,
      mtdDose: null,
      status: state.status,
      posteriorWeight: state.summary.posterior_weight,
    };
  }
  const mtd = state.mtd?.dose ?? null;
  return {
    kind: state.status === 'stopped_early' ? 'stop' : 'final',
    headline:
      state.status === 'stopped_early'
        ? 'Trial stopped early for safety — no dose selected'
        : mtd === null
          ? 'Trial completed — no administered dose is currently safe'
          : `Trial completed — selected MTD ${mtd} mg/m²`,
    dose: null,
    mtdDose: mtd,
    status: state.status,
    posteriorWeight: state.summary.posterior_weight,
  };
}

export interface WhatIfComparison {
  dose: number;
  dlts: number;
  current: DoseLadderRow[];
  hypothetical: DoseLadderRow[];
  hypotheticalWeight: number | null;
  wouldStop: boolean;
  nonBinding: true;
}

export function whatIfComparison(
  current: TrialState,
  hypothetical: WhatIfResponse,
  dose: number,
  dlts: number,
): WhatIfComparison {
  if (!hypothetical.non_binding) {
    throw new Error('what-if responses must be flagged non-binding');
  }
  return {
    dose,
    dlts,
    current: doseLadder(current),
    hypothetical: doseLadder(hypothetical),
    hypotheticalWeight: hypothetical.trace_point ? hypothetical.trace_point.weight : null,
    wouldStop: hypothetical.recommendation.stop,
    nonBinding: true,
  };
}

/** Expand a DLT count into per-patient toggles (count entry shortcut). */
export function countToToggles(dlts: number, cohortSize: number): number[] {
  if (dlts < 0 || dlts > cohortSize) {
    throw new Error(`DLT count must lie in 0..${cohortSize}`);
  }
  return Array.from({ length: cohortSize }, (_, i) => (i < dlts ? 1 : 0));
}
