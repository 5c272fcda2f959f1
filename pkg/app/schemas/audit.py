import math
from typing import Literal

from pydantic import BaseModel, Field, computed_field


class FrequencySplit(BaseModel):
    """Partition of a spectrum at nu: low modes have lambda < nu, high modes lambda >= nu."""

    nu: float = Field(..., ge=0)
    low: list[int] = Field(default_factory=list)
    high: list[int] = Field(default_factory=list)


class BoundAudit(BaseModel):
    """
    One inequality lhs <= rhs checked at one time, in log space.

    A zero left-hand side (log -inf) always passes with margin +inf.
    """

    bound_name: str
    lhs: float
    rhs: float
    time: float
    k: int | None = None
    params: dict = Field(default_factory=dict)

    @computed_field
    @property
    def margin(self) -> float:
        if self.lhs == -math.inf:
            return math.inf
        return self.rhs - self.lhs

    def passed(self, slack: float) -> bool:
        return self.margin >= -slack


class SkippedAudit(BaseModel):
    """A sub-audit whose hypotheses do not hold; gap is the measured shortfall, when there is one."""

    bound_name: str
    reason: str
    gap: float | None = None


class LemmaReport(BaseModel):
    """Per-mode audits of one energy estimate."""

    lemma: Literal["supercritical", "subcritical", "low-frequency"]
    lam: float
    sigma: float
    delta: float
    radius: float | None = None  # Decay radius r used by the exponential bound
    audits: list[BoundAudit] = Field(default_factory=list)
    skipped: list[SkippedAudit] = Field(default_factory=list)

    def worst(self) -> BoundAudit | None:
        return min(self.audits, key=lambda a: a.margin, default=None)

    def failures(self, slack: float) -> list[BoundAudit]:
        return [a for a in self.audits if not a.passed(slack)]

    def passed(self, slack: float) -> bool:
        return not self.failures(slack)


class NormSample(BaseModel):
    """Squared weighted norms of (u, u') over the high modes at time t, as logs."""

    time: float
    log_norm_u: float
    log_norm_v: float
    radius: float


class FamilyAudit(BaseModel):
    """Aggregated estimate over the high modes of a spectrum."""

    theorem: Literal["sup-reg", "sub-reg", "sup-gevrey", "sub-gevrey"]
    split: FrequencySplit
    radius: float | None = None
    audits: list[BoundAudit] = Field(default_factory=list)
    norm_trajectory: list[NormSample] = Field(default_factory=list)
    low_mode_audits: list[BoundAudit] = Field(default_factory=list)  # Informational only

    def worst(self) -> BoundAudit | None:
        return min(self.audits, key=lambda a: a.margin, default=None)

    def passed(self, slack: float) -> bool:
        return all(a.passed(slack) for a in self.audits)
