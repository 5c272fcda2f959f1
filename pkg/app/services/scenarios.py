"""
Scenario files: loading, validation, execution and the artifacts a run leaves behind.

Every run writes into its output directory:
    report.json    deterministic report (same scenario + seed => same bytes)
    scenario.json  the resolved scenario after flag overrides
    stamp.json     config hash, seed, version and timestamp
plus the CSV traces of the operation it ran.
"""
import csv
import hashlib
import json
import logging
import math
import os
from datetime import datetime, timezone

import numpy as np
import yaml
from pydantic import BaseModel, ValidationError
from sqlalchemy.orm import Session

from app import __version__
from app.config import settings
from app.errors import ConstructionRejected, IntegrationFailure, PreconditionFailed, ScenarioError
from app.schemas.audit import BoundAudit
from app.schemas.mode import ModeParams
from app.schemas.run import BoundOutcome
from app.schemas.scenario import (
    PARAMS_BY_OPERATION,
    DgcsParams,
    Scenario,
    ScenarioSummary,
    SimulateParams,
    VerifyParams,
)
from app.schemas.sweep import SweepConfig
from app.services import dgcs_builder, phase_diagram
from app.services.coefficients import audit_grid, write_coefficient_csv, write_segment_table
from app.services.mode_solver import integrate, write_trajectory_csv
from app.services.runs import RunService
from app.services.theorem_verifier import verify_family, verify_low_frequency, verify_sub_lemma, verify_sup_lemma

logger = logging.getLogger(__name__)

PRESET_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "scenarios")

AUDIT_COLUMNS = ("bound_name", "k", "time", "lhs", "rhs", "margin", "passed")


class RunOutcome(BaseModel):
    """What one operation produced, before it is stamped and registered."""

    payload: dict
    outcomes: list[BoundOutcome]
    error: str | None = None


# ==================== Loading ====================


def _scenario_error(source: str, exc: ValidationError, prefix: tuple = ()) -> ScenarioError:
    first = exc.errors()[0]
    loc = ".".join(str(part) for part in (*prefix, *first["loc"]))
    return ScenarioError(f"{source}:{loc}" if loc else source, first["msg"])


def parse_scenario(record, source: str = "<scenario>") -> Scenario:
    """
    Validate a scenario record.

    parameters is checked against the named operation first, so error
    locations point into it (e.g. "file.yaml:parameters.sigma").

    Raises:
        ScenarioError: the record is not a mapping or fails validation
    """
    if not isinstance(record, dict):
        raise ScenarioError(source, "scenario must be a mapping")
    data = dict(record)
    model = PARAMS_BY_OPERATION.get(data.get("operation"))
    if model is not None and isinstance(data.get("parameters"), dict):
        try:
            data["parameters"] = model.model_validate(data["parameters"])
        except ValidationError as exc:
            raise _scenario_error(source, exc, prefix=("parameters",)) from exc
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise _scenario_error(source, exc) from exc


def load_scenario(path: str) -> Scenario:
    """Read a YAML (or JSON) scenario file."""
    try:
        with open(path) as handle:
            record = yaml.safe_load(handle)
    except OSError as exc:
        raise ScenarioError(path, exc.strerror or str(exc)) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark is not None else path
        raise ScenarioError(where, getattr(exc, "problem", None) or "not valid YAML") from exc
    return parse_scenario(record, source=path)


def list_presets() -> list[str]:
    """Names of the scenario files shipped in scenarios/."""
    if not os.path.isdir(PRESET_DIR):
        return []
    return sorted(os.path.splitext(f)[0] for f in os.listdir(PRESET_DIR) if f.endswith((".yaml", ".yml")))


def load_preset(name: str) -> Scenario:
    if name not in list_presets():
        raise ScenarioError(name, "no such preset")
    return load_scenario(os.path.join(PRESET_DIR, f"{name}.yaml"))


def apply_overrides(scenario: Scenario, overrides: dict) -> Scenario:
    """
    Override scenario fields by dotted path, e.g. {"parameters.sigma": 0.3}.

    None values are ignored, so unset flags keep the file's value.
    """
    record = scenario.model_dump(mode="json", by_alias=True)
    for key, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = key.split(".")
        node = record
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return parse_scenario(record, source="<flags>")


def config_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical scenario; the output directory is not part of it."""
    record = scenario.model_dump(mode="json", by_alias=True, exclude={"output_dir"})
    canonical = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ==================== Folding audits ====================


def _finite(value) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


def fold_audits(audits: list[BoundAudit], slack: float, informational: bool = False) -> list[BoundOutcome]:
    """One outcome per bound name, holding the worst margin over its checks."""
    groups: dict[str, list[BoundAudit]] = {}
    for audit in audits:
        groups.setdefault(audit.bound_name, []).append(audit)
    outcomes = []
    for name, group in groups.items():
        worst = min(group, key=lambda a: a.margin)
        failures = sum(1 for a in group if not a.passed(slack))
        detail = {"checks": len(group), "failures": failures, "worst_time": worst.time}
        if worst.k is not None:
            detail["k"] = worst.k
        if informational:
            detail["informational"] = True
        outcomes.append(
            BoundOutcome(bound_name=name, passed=failures == 0, worst_margin=_finite(worst.margin), detail=detail)
        )
    return outcomes


def _write_audit_csv(audits: list[BoundAudit], slack: float, path: str) -> None:
    rows = [
        [a.bound_name, "" if a.k is None else a.k, repr(a.time), repr(a.lhs), repr(a.rhs), repr(a.margin), a.passed(slack)]
        for a in audits
    ]
    _write_rows(path, AUDIT_COLUMNS, rows)


def _write_rows(path: str, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        writer.writerows(rows)


# ==================== Operations ====================


def _simulate(params: SimulateParams, out: str) -> RunOutcome:
    p = ModeParams(lam=params.lam, sigma=params.sigma, delta=params.delta)
    times = [float(t) for t in np.linspace(0.0, params.horizon, params.samples)]
    trajectory = integrate(p, params.coefficient, (params.u0, params.u1), (0.0, params.horizon), tol=params.tol, t_eval=times)
    write_trajectory_csv(trajectory, os.path.join(out, "trajectory.csv"))
    write_coefficient_csv(params.coefficient, os.path.join(out, "coefficient.csv"), times)
    payload = {
        "steps_accepted": trajectory.steps_accepted,
        "steps_rejected": trajectory.steps_rejected,
        "closed_form_spans": trajectory.closed_form_spans,
        "initial": trajectory.energies[0].model_dump(mode="json"),
        "final": trajectory.energies[-1].model_dump(mode="json"),
    }
    return RunOutcome(payload=payload, outcomes=[])


def _verify(params: VerifyParams, out: str, jobs: int | None) -> RunOutcome:
    c = params.coefficient
    if params.target == "family":
        spectrum = params.spectrum
        u0 = spectrum.vector(params.u0_modes or [1.0] * spectrum.count)
        u1 = spectrum.vector(params.u1_modes or [0.0] * spectrum.count)
        report = verify_family(
            params.theorem, spectrum, c, u0, u1, params.nu, params.horizon,
            params.sigma, params.delta, alpha=params.alpha, beta=params.beta, jobs=jobs,
        )
        slack = settings.family_slack
        outcomes = fold_audits(report.audits, slack)
        outcomes += fold_audits(
            [a.model_copy(update={"bound_name": f"low-mode:{a.bound_name}"}) for a in report.low_mode_audits],
            settings.audit_slack,
            informational=True,
        )
        _write_audit_csv(report.audits + report.low_mode_audits, slack, os.path.join(out, "audits.csv"))
        if report.norm_trajectory:
            _write_rows(
                os.path.join(out, "norms.csv"),
                ("t", "log_norm_u", "log_norm_v", "radius"),
                [[repr(n.time), repr(n.log_norm_u), repr(n.log_norm_v), repr(n.radius)] for n in report.norm_trajectory],
            )
        return RunOutcome(payload=report.model_dump(mode="json"), outcomes=outcomes)

    p = ModeParams(lam=params.lam, sigma=params.sigma, delta=params.delta)
    init = (params.u0, params.u1)
    if params.target == "sup-lemma":
        report = verify_sup_lemma(p, c, init, params.horizon, alpha=params.alpha, beta=params.beta, r=params.r)
    elif params.target == "sub-lemma":
        report = verify_sub_lemma(p, c, init, params.horizon, r=params.r)
    else:
        report = verify_low_frequency(p, c, init, params.horizon)
    slack = settings.audit_slack
    outcomes = fold_audits(report.audits, slack)
    for skipped in report.skipped:
        logger.warning("skipped %s: %s", skipped.bound_name, skipped.reason)
        outcomes.append(
            BoundOutcome(
                bound_name=skipped.bound_name,
                passed=True,
                detail={"skipped": skipped.reason, "gap": skipped.gap, "informational": True},
            )
        )
    _write_audit_csv(report.audits, slack, os.path.join(out, "audits.csv"))
    return RunOutcome(payload=report.model_dump(mode="json"), outcomes=outcomes)


def _ledger_outcomes(cons) -> list[BoundOutcome]:
    groups: dict[str, list] = {}
    for entry in cons.ledger:
        if entry.k >= cons.k0:
            groups.setdefault(entry.name, []).append(entry)
    outcomes = []
    for name, group in groups.items():
        worst = min(group, key=lambda e: e.margin)
        failing = [e.k for e in group if not e.passed]
        outcomes.append(
            BoundOutcome(
                bound_name=name,
                passed=not failing,
                worst_margin=_finite(worst.margin),
                detail={"stage": worst.stage, "checks": len(group), "failing_k": failing, "worst_k": worst.k},
            )
        )
    return outcomes


def _dgcs(params: DgcsParams, out: str, jobs: int | None, seed: int) -> RunOutcome:
    cons = dgcs_builder.build_construction(params.inputs, pairs=params.continuity_pairs, seed=seed)
    report = None
    if params.certify:
        report = dgcs_builder.propagate_and_certify(cons, params.t_eval, R_grid=params.R_grid, r_grid=params.r_grid, jobs=jobs)
    dgcs_builder.export_construction(cons, out, report)

    outcomes = _ledger_outcomes(cons)
    continuity = cons.continuity
    outcomes.append(
        BoundOutcome(
            bound_name="piece-continuity",
            passed=continuity.passed,
            worst_margin=_finite(1.0 - continuity.worst_ratio),
            detail={"pairs": continuity.pairs_checked, "worst_pair": continuity.worst_pair},
        )
    )
    h = cons.hyperbolicity
    outcomes.append(
        BoundOutcome(
            bound_name="strict-hyperbolicity",
            passed=h.kind == "strict" and h.measured_inf >= 0.5 and h.measured_sup <= 1.5,
            worst_margin=min(h.measured_inf - 0.5, 1.5 - h.measured_sup),
            detail={"inf": h.measured_inf, "sup": h.measured_sup},
        )
    )
    if cons.float_continuity is not None:
        outcomes.append(
            BoundOutcome(
                bound_name="sampled-continuity",
                passed=cons.float_continuity.passed,
                worst_margin=_finite(1.0 - cons.float_continuity.worst_ratio),
                detail={"pairs": cons.float_continuity.pairs_checked, "informational": True},
            )
        )

    payload = {
        "k0": cons.k0,
        "certified_modes": len(cons.certified_modes),
        "partial": cons.partial,
        "construction_passed": cons.passed,
    }
    if report is not None:
        groups: dict[str, list] = {}
        for bracket in report.brackets:
            groups.setdefault(bracket.name, []).append(bracket)
        for name, group in groups.items():
            worst = min(group, key=lambda b: b.margin)
            failing = [b.k for b in group if not b.passed(report.slack)]
            outcomes.append(
                BoundOutcome(
                    bound_name=name,
                    passed=not failing,
                    worst_margin=_finite(worst.margin),
                    detail={"checks": len(group), "failing_k": failing, "sources": sorted({b.source for b in group})},
                )
            )
        for evidence in report.series:
            # Inconclusive means too few modes, not a violated bound
            outcomes.append(
                BoundOutcome(
                    bound_name=f"series-{evidence.test}:{evidence.radius:g}",
                    passed=evidence.verdict != "refuted",
                    detail={"verdict": evidence.verdict, "terms": len(evidence.terms), "excluded": evidence.excluded},
                )
            )
        payload["t_eval"] = report.t_eval
        payload["certification_passed"] = report.passed
        payload["series"] = {f"{s.test}:{s.radius:g}": s.verdict for s in report.series}
    return RunOutcome(payload=payload, outcomes=outcomes)


def _sweep(cfg: SweepConfig, out: str, jobs: int | None, seed: int) -> RunOutcome:
    result = phase_diagram.sweep(cfg.model_copy(update={"seed": seed}), jobs=jobs)
    phase_diagram.write_sweep_csv(result, os.path.join(out, "sweep.csv"))
    phase_diagram.write_sweep_long(result, os.path.join(out, "sweep_long.csv"))
    with open(os.path.join(out, "sweep.json"), "w") as handle:
        handle.write(result.model_dump_json(indent=2))

    counts = result.counts()
    inconclusive = [(c.sigma, c.alpha, c.delta) for c in result.cells if c.classification == "inconclusive"]
    payload = {
        "counts": counts,
        "cells": [c.model_dump(mode="json", exclude={"probes"}) for c in result.cells],
    }
    outcomes = [
        BoundOutcome(
            bound_name="sweep-cells-conclusive",
            passed=not inconclusive,
            detail={"inconclusive": inconclusive, "cells": len(result.cells)},
        )
    ]
    return RunOutcome(payload=payload, outcomes=outcomes)


def execute(scenario: Scenario, out: str, jobs: int | None = None) -> RunOutcome:
    """
    Run the scenario's operation, writing its traces into out.

    Hypotheses that fail and rejected constructions become a failing
    outcome named after the inequality instead of an exception.
    """
    params = scenario.parameters
    try:
        if scenario.operation == "simulate":
            return _simulate(params, out)
        if scenario.operation == "verify":
            return _verify(params, out, jobs)
        if scenario.operation == "dgcs":
            return _dgcs(params, out, jobs, scenario.seed)
        return _sweep(params, out, jobs, scenario.seed)
    except PreconditionFailed as exc:
        detail = {"lhs": _finite(exc.lhs), "rhs": _finite(exc.rhs)}
        return RunOutcome(payload={}, outcomes=[BoundOutcome(bound_name=exc.inequality, passed=False, detail=detail)], error=str(exc))
    except ConstructionRejected as exc:
        detail = {"k": exc.k}
        return RunOutcome(payload={}, outcomes=[BoundOutcome(bound_name=exc.inequality, passed=False, detail=detail)], error=str(exc))
    except IntegrationFailure as exc:
        detail = {"reason": exc.reason, "t": exc.last_state.t}
        return RunOutcome(payload={}, outcomes=[BoundOutcome(bound_name="integration", passed=False, detail=detail)], error=str(exc))


# ==================== Running ====================


def failing_bounds(outcomes: list[BoundOutcome]) -> list[str]:
    """Names of the failing outcomes that count toward the exit code."""
    return [o.bound_name for o in outcomes if not o.passed and not o.detail.get("informational")]


def run_scenario(
    scenario: Scenario,
    jobs: int | None = None,
    output_dir: str | None = None,
    db: Session | None = None,
) -> ScenarioSummary:
    """
    Execute a scenario, write report.json, scenario.json and stamp.json, and
    register the run when a session is given.

    Exit code 0 iff no counted outcome failed; exploratory scenarios always get 0.
    """
    out = output_dir or scenario.output_dir or os.path.join(settings.output_dir, scenario.name)
    os.makedirs(out, exist_ok=True)
    digest = config_hash(scenario)
    logger.info("run %s (%s) -> %s", scenario.name, scenario.operation, out)

    result = execute(scenario, out, jobs=jobs)
    failures = failing_bounds(result.outcomes)
    exit_code = 1 if failures and not scenario.exploratory else 0

    report = {
        "schema_version": scenario.schema_version,
        "name": scenario.name,
        "operation": scenario.operation,
        "config_hash": digest,
        "seed": scenario.seed,
        "version": __version__,
        "exploratory": scenario.exploratory,
        "exit_code": exit_code,
        "failures": failures,
        "error": result.error,
        "outcomes": [o.model_dump(mode="json") for o in result.outcomes],
        "payload": result.payload,
    }
    _dump_json(report, os.path.join(out, "report.json"))
    _dump_json(scenario.model_dump(mode="json", by_alias=True), os.path.join(out, "scenario.json"))
    stamp = {
        "config_hash": digest,
        "seed": scenario.seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _dump_json(stamp, os.path.join(out, "stamp.json"))

    if failures:
        logger.warning("run %s: failing bounds %s", scenario.name, ", ".join(failures))
    logger.info("run %s finished with exit code %d", scenario.name, exit_code)

    summary = ScenarioSummary(
        name=scenario.name,
        operation=scenario.operation,
        exit_code=exit_code,
        config_hash=digest,
        output_dir=out,
        failures=failures,
        error=result.error,
    )
    if db is not None:
        run = RunService(db).log_run(
            name=scenario.name,
            operation=scenario.operation,
            config_hash=digest,
            seed=scenario.seed,
            version=__version__,
            exit_code=exit_code,
            output_dir=out,
            outcomes=result.outcomes,
        )
        summary.run_id = run.id
    return summary


def _dump_json(record: dict, path: str) -> None:
    with open(path, "w") as handle:
        json.dump(record, handle, indent=2, sort_keys=True)
        handle.write("\n")


# ==================== Export ====================


def export_scenario(scenario: Scenario, output_dir: str | None = None) -> list[str]:
    """
    Write the scenario's coefficient without running its audits.

    simulate / verify: coefficient.csv sampled on [0, horizon] and, for
    piecewise coefficients, the piece table. dgcs: the construction files
    without certification. sweep has no single coefficient to export.
    """
    out = output_dir or scenario.output_dir or os.path.join(settings.output_dir, scenario.name)
    os.makedirs(out, exist_ok=True)
    params = scenario.parameters
    if scenario.operation == "dgcs":
        cons = dgcs_builder.build_construction(params.inputs, pairs=params.continuity_pairs, seed=scenario.seed)
        return dgcs_builder.export_construction(cons, out)
    if scenario.operation == "sweep":
        raise ScenarioError(scenario.name, "sweep scenarios have no coefficient to export")

    c = params.coefficient
    written = [os.path.join(out, "coefficient.csv")]
    write_coefficient_csv(c, written[0], audit_grid(c, 0.0, params.horizon))
    if c.kind == "piecewise":
        written.append(os.path.join(out, "coefficient_pieces.csv"))
        write_segment_table(c, written[1])
    return written
