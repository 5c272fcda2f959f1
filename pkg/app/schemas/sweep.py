from typing import Literal

from pydantic import BaseModel, Field, model_validator


class SweepConfig(BaseModel):
    """Grid over (sigma, alpha, delta) with the probe frequencies integrated in every cell."""

    sigma_grid: list[float] = Field(..., min_length=1, examples=[[0.0, 0.25, 0.6]])
    alpha_grid: list[float] = Field(..., min_length=1, examples=[[0.1, 0.5, 0.9]])
    delta_grid: list[float] = Field(default_factory=lambda: [1.0], min_length=1)
    lambda_probe: list[float] = Field(default_factory=lambda: [2.0 ** 10, 2.0 ** 14, 2.0 ** 17, 2.0 ** 20], min_length=1)
    horizon: float = Field(default=1.0, gt=0)  # Cap on each probe's window
    trials: int = Field(default=2, ge=1)  # Random Hoelder coefficients per cell
    spread: float = Field(default=0.25, ge=0, lt=1)  # |c - 1| bound of the random coefficients
    tol: float = Field(default=1e-8, gt=0)  # Local error per unit of rescaled time
    seed: int = 0

    @model_validator(mode="after")
    def _check_grids(self):
        if any(s < 0 for s in self.sigma_grid):
            raise ValueError("sigma must be nonnegative")
        if any(not 0 < a <= 1 for a in self.alpha_grid):
            raise ValueError("regularity exponents must lie in (0, 1]; 1 means Lipschitz")
        if any(d < 0 for d in self.delta_grid):
            raise ValueError("delta must be nonnegative")
        if any(lam <= 0 for lam in self.lambda_probe):
            raise ValueError("probe frequencies must be positive")
        return self


class ProbeMeasurement(BaseModel):
    """Growth exponent of log F over one probe window, per unit time."""

    lam: float
    source: Literal["hoelder", "lipschitz", "resonant"]
    trial: int | None = None
    eps: float | None = None  # Amplitude of the resonant coefficient
    exponent: float
    predicted: float  # Closed-form rate for resonant runs, pure damping for random ones
    conflict: float  # Resonance-versus-damping heuristic rate


CellClass = Literal["damping-dominates", "resonance-dominates", "borderline", "inconclusive"]


class CellVerdict(BaseModel):
    """Classification of one (sigma, alpha, delta) cell."""

    sigma: float
    alpha: float
    delta: float
    slope_res: float | None = None  # d exponent / d (lambda omega(1/lambda))
    slope_damp: float | None = None  # d exponent / d lambda^(2 sigma)
    peak_ratio: float | None = None  # max over probes of exponent / (lambda omega(1/lambda))
    classification: CellClass
    probes: list[ProbeMeasurement] = Field(default_factory=list)
    error: str | None = None


class SweepResult(BaseModel):
    config: SweepConfig
    cells: list[CellVerdict]

    def counts(self) -> dict[str, int]:
        tally: dict[str, int] = {}
        for cell in self.cells:
            tally[cell.classification] = tally.get(cell.classification, 0) + 1
        return tally
