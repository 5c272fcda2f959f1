from typing import Annotated, Literal, Union

import mpmath
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    WithJsonSchema,
    computed_field,
)

from app.schemas.coefficient import HyperbolicityClass
from app.schemas.spaces import ContinuityAudit, ContinuityModulus, GeometricSpectrum, SpectralSequence, WeightFunction


def _to_mpf(value) -> mpmath.mpf:
    if isinstance(value, mpmath.mpf):
        return value
    try:
        return mpmath.mpf(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"not a real number: {value!r}") from exc


# Arbitrary-range real; serialized as a decimal string
Mpf = Annotated[
    mpmath.mpf,
    PlainValidator(_to_mpf),
    PlainSerializer(lambda v: mpmath.nstr(v, 25), return_type=str),
    WithJsonSchema({"type": "string"}),
]

BaseSpectrum = Annotated[Union[SpectralSequence, GeometricSpectrum], Field(discriminator="kind")]


class DgcsInputs(BaseModel):
    """Parameters of the loss-of-regularity construction."""

    model_config = ConfigDict(frozen=True)

    sigma: float = Field(..., ge=0, lt=0.5, examples=[0.25])
    delta: float = Field(..., gt=0, examples=[1.0])
    omega: ContinuityModulus
    phi: WeightFunction
    psi: WeightFunction
    spectrum: BaseSpectrum = Field(default_factory=GeometricSpectrum)
    k_max: int = Field(default=8, ge=2)


# ==================== Construction ====================


class SelectedMode(BaseModel):
    """
    One frequency of the selected subsequence, with its activation window.

    half_turns counts the half-periods pi/lam of the oscillating piece on [t, s].
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    index: int  # Position in the base spectrum
    lam: Mpf
    eps: Mpf
    t: Mpf
    s: Mpf | None = None  # Undefined for the first pick
    half_turns: Mpf | None = None

    @property
    def eps_lam(self) -> mpmath.mpf:
        return self.eps * self.lam


class LedgerEntry(BaseModel):
    """One checked inequality lhs <= rhs at subsequence index k."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    stage: Literal["selection", "large-k", "derived"]
    k: int
    lhs: Mpf
    rhs: Mpf

    @computed_field
    @property
    def margin(self) -> Mpf:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= 0


class Selection(BaseModel):
    """Output of subsequence selection: picks, ledger and the first certified index k0."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    modes: list[SelectedMode]
    k0: int
    ledger: list[LedgerEntry]
    partial: bool = False


class Segment(BaseModel):
    """
    One piece of the constructed coefficient, stored as its excess over 1.

    ramp and affine: excess0 + slope * (t - start).
    oscillation: shift - 16 eps^2 sin^4(x) - 8 eps sin(2x), x = lam (t - start).
    constant: excess0 on [start, +inf).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["ramp", "oscillation", "affine", "constant"]
    k: int
    start: Mpf
    end: Mpf | None = None
    excess0: Mpf = mpmath.mpf(0)
    slope: Mpf = mpmath.mpf(0)
    eps: Mpf = mpmath.mpf(0)
    lam: Mpf = mpmath.mpf(0)
    shift: Mpf = mpmath.mpf(0)
    half_turns: Mpf = mpmath.mpf(0)

    @property
    def length(self) -> mpmath.mpf | None:
        return None if self.end is None else self.end - self.start


class PieceContinuityAudit(BaseModel):
    """Worst |c(t) - c(s)| / omega(|t - s|) over structurally placed sample pairs."""

    worst_ratio: float
    worst_pair: tuple[str, str] | None = None  # Segment labels, e.g. "oscillation:5"
    pairs_checked: int

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0


class DgcsConstruction(BaseModel):
    """Selected subsequence, assembled coefficient and the ledger certifying them."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    inputs: DgcsInputs
    modes: list[SelectedMode]
    k0: int
    segments: list[Segment]
    ledger: list[LedgerEntry]
    partial: bool = False  # Base spectrum ran out before k_max picks
    continuity: PieceContinuityAudit | None = None
    float_continuity: ContinuityAudit | None = None  # Sampled audit of the float-visible part; informational
    hyperbolicity: HyperbolicityClass | None = None

    @property
    def certified_modes(self) -> list[SelectedMode]:
        return [m for m in self.modes if m.k >= self.k0]

    def mode(self, k: int) -> SelectedMode:
        return self.modes[k - 1]

    def failures(self) -> list[LedgerEntry]:
        return [e for e in self.ledger if e.k >= self.k0 and not e.passed]

    @property
    def passed(self) -> bool:
        if self.failures():
            return False
        if self.continuity is not None and not self.continuity.passed:
            return False
        if self.hyperbolicity is None:
            return True
        h = self.hyperbolicity
        return h.kind == "strict" and h.measured_inf >= 0.5 and h.measured_sup <= 1.5


class ModeInit(BaseModel):
    """Data at activation: u(t) = 0 and u'(t) = e^log_velocity; amplitude e^log_amplitude."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    t: Mpf
    log_velocity: Mpf
    log_amplitude: Mpf


# ==================== Certification ====================

EnergySource = Literal["closed-form", "integrated", "envelope"]


class ModeEnergy(BaseModel):
    """Log-energies of one certified mode; log_f_eval is None when the mode is not yet active."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    log_e_initial: Mpf
    initial_source: EnergySource
    log_f_activation: Mpf  # Weighted energy at the end of the activation window
    log_f_eval: Mpf | None = None
    eval_source: EnergySource | None = None


class EnergyBracket(BaseModel):
    """A measured log-energy compared with the bound it must respect."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    name: str
    direction: Literal["upper", "lower"]
    measured: Mpf
    bound: Mpf
    source: EnergySource

    @computed_field
    @property
    def margin(self) -> Mpf:
        if self.direction == "upper":
            return self.bound - self.measured
        return self.measured - self.bound

    def passed(self, slack: float) -> bool:
        return self.margin >= -slack


class SeriesEvidence(BaseModel):
    """Monotonicity of the log series terms at one radius."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    test: Literal["convergence", "divergence"]
    radius: float
    terms: list[tuple[int, Mpf]] = Field(default_factory=list)
    verdict: Literal["supported", "refuted", "inconclusive"]
    excluded: list[int] = Field(default_factory=list)  # Modes k left out of the monotonicity check


class DivergenceReport(BaseModel):
    """Energies, brackets and series evidence of a certified construction at one time."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    t_eval: float
    modes: list[ModeEnergy]
    brackets: list[EnergyBracket]
    series: list[SeriesEvidence]
    slack: float

    def defects(self) -> list[EnergyBracket]:
        return [b for b in self.brackets if not b.passed(self.slack)]

    @property
    def passed(self) -> bool:
        return not self.defects() and all(s.verdict == "supported" for s in self.series)
