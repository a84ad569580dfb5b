/**
 * Typed client for the dosebridge conduct service.
 *
 * Every statistic shown in the UI originates from these response payloads;
 * the client performs no computation beyond HTTP plumbing.
 */

export interface PosteriorSummary {
  doses: number[];
  median_risk: number[];
  prob_underdose: number[];
  prob_target: number[];
  prob_overdose: number[];
  prob_dlt: number[];
  posterior_weight: number;
}

export interface Recommendation {
  dose_index: number | null;
  dose: number | null;
  stop: boolean;
}

export interface TracePoint {
  cohort: number;
  kappa: number | null;
  lambda: number | null;
  weight: number;
  run_in: boolean;
  posterior_weight: number;
}

export interface TrialState {
  session_id: string;
  status: 'enrolling' | 'stopped_early' | 'completed';
  n_cohorts: number;
  doses: number[];
  summary: PosteriorSummary;
  predictions: number[];
  prior_predictive: number[];
  recommendation: Recommendation;
  mtd: { dose_index: number | null; dose: number | null } | null;
  patients_per_dose: number[];
  state_hash: string;
}

export interface CohortResponse extends TrialState {
  trace_point: TracePoint;
}

export interface WhatIfResponse extends TrialState {
  non_binding: boolean;
  hypothetical: boolean;
  trace_point?: TracePoint;
}

export interface TraceResponse {
  session_id: string;
  trace: TracePoint[];
  doses_given: number[];
}

export interface CreateTrialRequest {
  grid: { doses: number[]; d_ref: number; gamma: number };
  trial?: Record<string, unknown>;
  animal_study?: { species_factor: number; arms: [number, number, number][] };
  prior?: { mu1: number; mu2: number; s11: number; s12: number; s22: number };
  idempotency_key?: string;
}

export class ServiceError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`service error ${status}`);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail: unknown = null;
    try {
      detail = (await resp.json()).detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ServiceError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class DosebridgeClient {
  constructor(private baseUrl: string, private fetchImpl: typeof fetch = fetch) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, '')}${path}`;
  }

  async health(): Promise<{ status: string }> {
    return expectJson(await this.fetchImpl(this.url('/health')));
  }

  async createTrial(body: CreateTrialRequest): Promise<TrialState & { session_id: string }> {
    const resp = await this.fetchImpl(this.url('/trials'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    return expectJson(resp);
  }

  async getTrial(sessionId: string): Promise<TrialState> {
    return expectJson(await this.fetchImpl(this.url(`/trials/${sessionId}`)));
  }

  async getTrace(sessionId: string): Promise<TraceResponse> {
    return expectJson(await this.fetchImpl(this.url(`/trials/${sessionId}/trace`)));
  }

  async submitCohort(
    sessionId: string,
    dose: number,
    outcomes: number[],
    idempotencyKey?: string,
  ): Promise<CohortResponse> {
    const resp = await this.fetchImpl(this.url(`/trials/${sessionId}/cohorts`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ dose, outcomes, idempotency_key: idempotencyKey }),
    });
    return expectJson(resp);
  }

  async whatIf(sessionId: string, dose: number, dlts: number, patients?: number): Promise<WhatIfResponse> {
    const params = new URLSearchParams({ dose: String(dose), dlts: String(dlts) });
    if (patients !== undefined) params.set('patients', String(patients));
    return expectJson(await this.fetchImpl(this.url(`/trials/${sessionId}/whatif?${params}`)));
  }
}
