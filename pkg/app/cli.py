"""
Command-line front end.

    python -m app.cli run SCENARIO
    python -m app.cli simulate SCENARIO [--lambda L --sigma S --delta D --horizon T]
    python -m app.cli verify SCENARIO [--lambda L --sigma S --delta D --horizon T]
    python -m app.cli dgcs build SCENARIO [--k-max K]
    python -m app.cli dgcs certify SCENARIO [--k-max K --t-eval T]
    python -m app.cli sweep SCENARIO [--horizon T --trials N]
    python -m app.cli export SCENARIO

SCENARIO is a YAML file or the name of a preset in scenarios/. Flags
override the file, which overrides the defaults. Exit codes: 0 success,
1 a bound failed, 2 the scenario is invalid.
"""
import argparse
import json
import os
import sys

from app.database import SessionLocal, init_db
from app.errors import ContractViolation, ScenarioError
from app.log import configure_logging
from app.schemas.scenario import Scenario
from app.services.scenarios import apply_overrides, export_scenario, list_presets, load_preset, load_scenario, run_scenario

EXIT_OK, EXIT_AUDIT, EXIT_INVALID = 0, 1, 2

# flag dest -> scenario field, per subcommand
_OVERRIDES = {
    "simulate": {"lam": "parameters.lambda", "sigma": "parameters.sigma", "delta": "parameters.delta", "horizon": "parameters.horizon"},
    "verify": {"lam": "parameters.lambda", "sigma": "parameters.sigma", "delta": "parameters.delta", "horizon": "parameters.horizon"},
    "dgcs": {"k_max": "parameters.inputs.k_max", "t_eval": "parameters.t_eval"},
    "sweep": {"horizon": "parameters.horizon", "trials": "parameters.trials"},
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", help="Scenario file or preset name")
    parser.add_argument("--jobs", type=int, default=None, help="Worker processes (falls back to HYPDAMP_JOBS)")
    parser.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    parser.add_argument("--output-dir", default=None, help="Override the scenario output directory")
    parser.add_argument("--no-registry", action="store_true", help="Do not record the run in the database")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypdamp", description="Strongly damped wave equation: simulate, verify, construct")
    parser.add_argument("--log-level", default=None, help="Override HYPDAMP_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="Run any scenario"))

    for name in ("simulate", "verify"):
        p = sub.add_parser(name, help=f"Run a {name} scenario")
        _common(p)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--horizon", type=float, default=None)

    dgcs = sub.add_parser("dgcs", help="Loss-of-regularity construction")
    dgcs_sub = dgcs.add_subparsers(dest="stage", required=True)
    for stage in ("build", "certify"):
        p = dgcs_sub.add_parser(stage, help="Select and audit" if stage == "build" else "Select, audit and propagate")
        _common(p)
        p.add_argument("--k-max", type=int, default=None)
        if stage == "certify":
            p.add_argument("--t-eval", type=float, default=None)

    p = sub.add_parser("sweep", help="Phase sweep over (sigma, alpha, delta)")
    _common(p)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--trials", type=int, default=None)

    p = sub.add_parser("export", help="Write a scenario's coefficient without auditing it")
    _common(p)

    sub.add_parser("presets", help="List the shipped presets")
    return parser


def _load(ref: str) -> Scenario:
    if not os.path.exists(ref) and ref in list_presets():
        return load_preset(ref)
    return load_scenario(ref)


def resolve(args: argparse.Namespace) -> Scenario:
    """Load the scenario, check it matches the subcommand and apply flag overrides."""
    scenario = _load(args.scenario)
    operation = args.command
    if operation in _OVERRIDES and scenario.operation != operation:
        raise ScenarioError(args.scenario, f"scenario runs '{scenario.operation}', not '{operation}'")

    overrides = {"seed": args.seed}
    for dest, field in _OVERRIDES.get(operation, {}).items():
        overrides[field] = getattr(args, dest, None)
    if operation == "dgcs":
        overrides["parameters.certify"] = args.stage == "certify"
    return apply_overrides(scenario, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    if args.command == "presets":
        for name in list_presets():
            print(name)
        return EXIT_OK

    try:
        scenario = resolve(args)
        if args.command == "export":
            for path in export_scenario(scenario, output_dir=args.output_dir):
                print(path)
            return EXIT_OK

        db = None
        if not args.no_registry:
            init_db()
            db = SessionLocal()
        try:
            summary = run_scenario(scenario, jobs=args.jobs, output_dir=args.output_dir, db=db)
        finally:
            if db is not None:
                db.close()
    except (ScenarioError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    print(json.dumps(summary.model_dump(mode="json"), indent=2))
    if summary.exit_code == EXIT_AUDIT:
        print(f"failed bounds: {', '.join(summary.failures)}", file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
