from app.schemas.spaces import (
    ContinuityModulus,
    HoelderModulus,
    LipschitzModulus,
    LogTypeModulus,
    TabulatedModulus,
    PowerWeight,
    TabulatedWeight,
    WeightFunction,
    SpectralSequence,
    GeometricSpectrum,
    ModeVector,
    NormSign,
    WeightedNorm,
    NormValue,
    ModulusAudit,
    ContinuityAudit,
    parse_modulus,
    parse_weight,
)
from app.schemas.coefficient import (
    Coefficient,
    CoefficientBase,
    ConstantCoefficient,
    PiecewiseCoefficient,
    SampledCoefficient,
    LacunaryCoefficient,
    LinearCombination,
    RegularizedCoefficient,
    ConstantPiece,
    AffinePiece,
    SinePiece,
    GammaPiece,
    parse_coefficient,
)
from app.schemas.mode import ModeParams, ModeState, EnergyRecord, Trajectory
from app.schemas.audit import BoundAudit, SkippedAudit, LemmaReport, FamilyAudit, FrequencySplit, NormSample
from app.schemas.dgcs import DgcsInputs, DgcsConstruction, DivergenceReport, LedgerEntry, SelectedMode, Segment
from app.schemas.sweep import SweepConfig, SweepResult, CellVerdict, ProbeMeasurement
from app.schemas.scenario import Scenario, ScenarioSummary, SimulateParams, VerifyParams, DgcsParams
from app.schemas.run import RunResponse, AuditEntryResponse, AuditSummary, BoundOutcome
