"""Command-line interface: trial conduct verbs plus the simulation study."""

from __future__ import annotations

import argparse
import sys

from . import animal_prior as ap
from . import config_io
from .dose_model import scenario_table
from .sim_harness import procedure, run_study, write_reports
from .trial_engine import STOP, DoseEscalationTrial


def _load_informative_prior(args, doc, grid):
    if getattr(args, "prior", None):
        params, _d_ref, _delta = ap.load_prior_record(args.prior)
        return params
    if "animal_study" in doc:
        study = config_io.study_from(doc)
        return ap.fit_animal_prior(study, grid).params
    raise SystemExit("config has no [animal_study] section; pass --prior <record.json>")


def cmd_fit_prior(args) -> int:
    doc = config_io.load_document(args.config)
    grid = config_io.grid_from(doc)
    study = config_io.study_from(doc)
    fit = ap.fit_animal_prior(study, grid)
    ap.save_prior_record(args.out, fit.params, grid.d_ref, fit.delta)
    print(f"fitted prior written to {args.out} (distance {fit.delta:.5f})")
    return 0


def cmd_init(args) -> int:
    doc = config_io.load_document(args.config)
    grid = config_io.grid_from(doc)
    config = config_io.trial_config_from(doc, grid)
    informative = _load_informative_prior(args, doc, grid)
    trial = DoseEscalationTrial(config, informative)
    trial.save(args.session)
    rec = trial.recommend_next()
    print(f"session {args.session} created; first cohort dose: {grid.doses[rec]:g} mg/m^2")
    return 0


def cmd_recommend(args) -> int:
    trial = DoseEscalationTrial.load(args.session)
    if trial.status != "enrolling":
        print(f"trial is {trial.status}; no recommendation")
        return 1
    rec = trial.recommend_next()
    if rec == STOP:
        print("stop: even the lowest dose exceeds the overdose-control bound")
    else:
        print(f"recommended dose for cohort {trial.n_cohorts + 1}: "
              f"{trial.config.grid.doses[rec]:g} mg/m^2")
    return 0


def cmd_record(args) -> int:
    trial = DoseEscalationTrial.load(args.session)
    outcomes = tuple(int(x) for x in args.outcomes.split(","))
    dose_index = trial.config.grid.index_of(float(args.dose))
    point = trial.record_cohort(dose_index, outcomes, allow_deviation=args.force)
    trial.save(args.session)
    lam = "-" if point.lam is None else f"{point.lam:.3f}"
    kap = "-" if point.kappa is None else f"{point.kappa:.3f}"
    print(f"cohort {point.cohort} recorded: kappa={kap} lambda={lam} "
          f"weight={point.weight:.3f} posterior_weight={point.posterior_weight:.3f}")
    if trial.status == "enrolling":
        rec = trial.recommend_next()
        print(f"next dose: {trial.config.grid.doses[rec]:g} mg/m^2")
    else:
        print(f"trial {trial.status}")
    return 0


def cmd_status(args) -> int:
    trial = DoseEscalationTrial.load(args.session)
    summary = trial.summary()
    print(f"status: {trial.status}; cohorts: {trial.n_cohorts}/{trial.config.max_cohorts}")
    print(f"{'dose':>8} {'median':>8} {'P(under)':>9} {'P(target)':>9} {'P(over)':>8} {'P(DLT)':>8}")
    for i, d in enumerate(trial.config.grid.doses):
        print(f"{d:8g} {summary.median_risk[i]:8.3f} {summary.prob_underdose[i]:9.3f} "
              f"{summary.prob_target[i]:9.3f} {summary.prob_overdose[i]:8.3f} "
              f"{summary.prob_dlt[i]:8.3f}")
    if trial.trace:
        p = trial.trace[-1]
        lam = "-" if p.lam is None else f"{p.lam:.3f}"
        print(f"latest weights: kappa={p.kappa} lambda={lam} w={p.weight:.3f} "
              f"w_post={p.posterior_weight:.3f}")
    return 0


def cmd_mtd(args) -> int:
    trial = DoseEscalationTrial.load(args.session)
    if trial.status == "enrolling":
        print("trial still enrolling")
        return 1
    idx = trial.select_mtd()
    if idx is None:
        print("no dose selected (stopped early or no administered dose is safe)")
    else:
        print(f"selected MTD: {trial.config.grid.doses[idx]:g} mg/m^2")
    return 0


def cmd_simulate(args) -> int:
    if args.scenarios:
        doc = config_io.load_document(args.scenarios)
        grid = config_io.grid_from(doc)
        config = config_io.trial_config_from(doc, grid)
        scenarios = config_io.scenarios_from(doc)
        informative = _load_informative_prior(args, doc, grid)
    else:
        from .dose_model import reference_grid
        from .trial_engine import TrialConfig

        grid = reference_grid()
        config = TrialConfig(grid=grid, start_dose=4.0, max_cohorts=args.max_cohorts or 7,
                             u01=args.u01)
        scenarios = scenario_table()
        informative = ap.dog_reference_prior()
    if args.max_cohorts is not None:
        from dataclasses import replace

        config = replace(config, max_cohorts=args.max_cohorts)
    procedures = [procedure(p.strip(), lambda_mode=args.lambda_mode)
                  for p in args.procedures.split(",") if p.strip()]
    oc = run_study(
        scenarios,
        procedures,
        config,
        informative,
        n_replicates=args.reps,
        master_seed=args.seed,
        n_workers=args.workers,
    )
    paths = write_reports(oc, args.out)
    print(f"study finished in {oc.elapsed_seconds:.1f}s; reports: {paths['oc']}, "
          f"{paths['alloc']}, {paths['plot']}")
    for s in scenarios:
        row = " ".join(f"{pid}={oc.pcs(s, pid):5.1f}%" for pid in oc.procedure_ids)
        print(f"  {s.name} PCS: {row}")
    return 0


def cmd_serve(args) -> int:  # pragma: no cover
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.sessions), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dosebridge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-prior", help="fit the animal-informed prior and export it")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("init", help="create a trial session from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--prior", help="prior record JSON (skips fitting)")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("recommend", help="print the next recommended dose")
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("record", help="record one cohort's outcomes")
    p.add_argument("--session", required=True)
    p.add_argument("--dose", required=True)
    p.add_argument("--outcomes", required=True, help="comma-separated 0/1 per patient")
    p.add_argument("--force", action="store_true",
                   help="allow a dose other than the standing recommendation")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("status", help="print posterior summaries")
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("mtd", help="print the selected MTD of a finished trial")
    p.add_argument("--session", required=True)
    p.set_defaults(func=cmd_mtd)

    p = sub.add_parser("simulate", help="run the operating-characteristics study")
    p.add_argument("--scenarios", help="TOML with [grid], [trial], [[scenarios]]")
    p.add_argument("--procedures", default="A,B,C,D,E")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--max-cohorts", type=int, default=None, dest="max_cohorts")
    p.add_argument("--u01", type=float, default=0.6)
    p.add_argument("--lambda-mode", default="sd_ratio", dest="lambda_mode",
                   choices=["sd_ratio", "info_time"])
    p.add_argument("--prior", help="prior record JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the HTTP conduct service")
    p.add_argument("--sessions", default="sessions")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8710)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
