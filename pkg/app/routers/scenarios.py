from fastapi import APIRouter, Depends, HTTPException, status
from pydantic import BaseModel, Field, model_validator
from sqlalchemy.orm import Session

from app.database import get_db
from app.errors import ContractViolation, ScenarioError
from app.schemas.scenario import ScenarioSummary
from app.services.scenarios import list_presets, load_preset, parse_scenario, run_scenario

router = APIRouter(
    prefix="/scenarios",
    tags=["Scenarios"],
)


class ScenarioRequest(BaseModel):
    """Either an inline scenario record or the name of a shipped preset."""

    scenario: dict | None = None
    preset: str | None = None
    jobs: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.scenario is None) == (self.preset is None):
            raise ValueError("give exactly one of scenario or preset")
        return self


@router.get("/presets", response_model=list[str])
def get_presets():
    """List the preset scenario names shipped with the service."""
    return list_presets()


@router.post("/run", response_model=ScenarioSummary)
def run(
    request: ScenarioRequest,
    db: Session = Depends(get_db),
):
    """
    Run a scenario synchronously and register it.

    Example: POST /scenarios/run
    Body: {"preset": "verify_supercritical"}

    The summary carries the exit code and the failing bound names; the full
    report is written to the run's output directory.
    """
    try:
        scenario = load_preset(request.preset) if request.preset else parse_scenario(request.scenario, source="body")
        summary = run_scenario(scenario, jobs=request.jobs, db=db)
    except (ScenarioError, ContractViolation) as exc:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=str(exc),
        )

    # The run is registered either way; a failed hypothesis is a conflict
    if summary.error is not None and summary.exit_code != 0:
        raise HTTPException(
            status_code=status.HTTP_409_CONFLICT,
            detail={"run_id": summary.run_id, "error": summary.error, "failures": summary.failures},
        )
    return summary
