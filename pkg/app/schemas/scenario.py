from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.coefficient import Coefficient, ConstantCoefficient
from app.schemas.dgcs import DgcsInputs
from app.schemas.spaces import SpectralSequence
from app.schemas.sweep import SweepConfig

SCHEMA_VERSION = 1

Operation = Literal["simulate", "verify", "dgcs", "sweep"]


class SimulateParams(BaseModel):
    """One mode integrated over [0, horizon]."""

    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(..., gt=0, alias="lambda")
    sigma: float = Field(default=0.0, ge=0)
    delta: float = Field(default=0.0, ge=0)
    coefficient: Coefficient = Field(default_factory=lambda: ConstantCoefficient(c0=1.0))
    u0: float = 0.0
    u1: float = 1.0
    horizon: float = Field(default=1.0, gt=0)
    samples: int = Field(default=200, ge=2)
    tol: float | None = Field(default=None, gt=0)


class VerifyParams(BaseModel):
    """
    Energy-estimate audit.

    Lemma targets audit one mode (lambda, u0, u1); the family target sums
    over a spectrum with per-mode data and needs nu and a theorem name.
    """

    model_config = ConfigDict(populate_by_name=True)

    target: Literal["sup-lemma", "sub-lemma", "low-frequency", "family"]
    sigma: float = Field(..., ge=0)
    delta: float = Field(..., ge=0)
    coefficient: Coefficient = Field(default_factory=lambda: ConstantCoefficient(c0=1.0))
    horizon: float = Field(default=1.0, gt=0)

    # Single-mode targets
    lam: float | None = Field(default=None, gt=0, alias="lambda")
    u0: float = 1.0
    u1: float = 0.0
    r: float | None = Field(default=None, gt=0)

    # Supercritical weights; also used by the sup-* family theorems
    alpha: float | None = None
    beta: float | None = None

    # Family target
    theorem: Literal["sup-reg", "sub-reg", "sup-gevrey", "sub-gevrey"] | None = None
    spectrum: SpectralSequence | None = None
    u0_modes: list[float] | None = None
    u1_modes: list[float] | None = None
    nu: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_target(self):
        if self.target == "family":
            if self.theorem is None or self.spectrum is None:
                raise ValueError("family audits need theorem and spectrum")
            n = self.spectrum.count
            for name in ("u0_modes", "u1_modes"):
                values = getattr(self, name)
                if values is not None and len(values) != n:
                    raise ValueError(f"{name} needs {n} components")
        elif self.lam is None:
            raise ValueError(f"target {self.target} needs lambda")
        return self


class DgcsParams(BaseModel):
    """Construction inputs plus the certification request."""

    inputs: DgcsInputs
    certify: bool = True
    t_eval: float = Field(default=0.1, gt=0)
    R_grid: list[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0], min_length=1)
    r_grid: list[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0], min_length=1)
    continuity_pairs: int | None = Field(default=None, ge=1)


PARAMS_BY_OPERATION: dict[str, type[BaseModel]] = {
    "simulate": SimulateParams,
    "verify": VerifyParams,
    "dgcs": DgcsParams,
    "sweep": SweepConfig,
}


class Scenario(BaseModel):
    """
    A runnable scenario file.

    parameters is validated against the schema of the named operation
    before anything is computed. The scenario seed overrides every seed
    inside parameters.
    """

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = Field(..., min_length=1, max_length=100, pattern=r"^[A-Za-z0-9_.-]+$")
    operation: Operation
    parameters: Union[SimulateParams, VerifyParams, DgcsParams, SweepConfig]
    output_dir: str | None = None
    seed: int = 0
    exploratory: bool = False  # Audits are reported but never fail the run

    @model_validator(mode="before")
    @classmethod
    def _typed_parameters(cls, data):
        if isinstance(data, dict) and isinstance(data.get("parameters", {}), dict):
            model = PARAMS_BY_OPERATION.get(data.get("operation"))
            if model is not None:
                data = dict(data)
                data["parameters"] = model.model_validate(data.get("parameters", {}))
        return data

    @model_validator(mode="after")
    def _check_match(self):
        if not isinstance(self.parameters, PARAMS_BY_OPERATION[self.operation]):
            raise ValueError(f"parameters do not match operation {self.operation}")
        return self


class ScenarioSummary(BaseModel):
    """What a run returns to its caller; the full report lives in output_dir."""

    run_id: str | None = None
    name: str
    operation: Operation
    exit_code: int
    config_hash: str
    output_dir: str
    failures: list[str] = Field(default_factory=list)  # Failing bound names
    error: str | None = None  # Failed hypothesis, rejected construction or integration failure
