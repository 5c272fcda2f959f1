import math
from enum import Enum
from typing import Annotated, Literal, Union

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator


def _as_float_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# ==================== Continuity moduli ====================


class HoelderModulus(BaseModel):
    """omega(x) = M * x**alpha."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["hoelder"] = "hoelder"
    alpha: float = Field(..., gt=0, le=1, examples=[0.25, 0.5])
    M: float = Field(default=1.0, gt=0)

    def __call__(self, x):
        return self.M * x ** self.alpha


class LipschitzModulus(BaseModel):
    """omega(x) = L * x."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["lipschitz"] = "lipschitz"
    L: float = Field(default=1.0, gt=0)

    def __call__(self, x):
        return self.L * x


class LogTypeModulus(BaseModel):
    """
    omega(x) = M * x * (1 + log(1 + 1/x)), the log-Lipschitz gauge.

    Both omega and x/omega are increasing, and omega(0) = 0 as a limit.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["log_type"] = "log_type"
    M: float = Field(default=1.0, gt=0)

    def __call__(self, x):
        if isinstance(x, mpmath.mpf):
            return self.M * x * (1 + mpmath.log(1 + 1 / x)) if x > 0 else mpmath.mpf(0)
        if isinstance(x, np.ndarray):
            x = _as_float_array(x)
            out = np.zeros_like(x)
            pos = x > 0
            out[pos] = self.M * x[pos] * (1.0 + np.log1p(1.0 / x[pos]))
            return out
        x = float(x)
        return self.M * x * (1.0 + math.log1p(1.0 / x)) if x > 0 else 0.0


class TabulatedModulus(BaseModel):
    """Piecewise-linear modulus through (0, 0) and the given knots; constant past the last knot."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["tabulated"] = "tabulated"
    xs: tuple[float, ...]
    ys: tuple[float, ...]

    @model_validator(mode="after")
    def _check_table(self):
        if len(self.xs) != len(self.ys) or not self.xs:
            raise ValueError("xs and ys must be nonempty and of equal length")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])) or self.xs[0] <= 0:
            raise ValueError("xs must be positive and strictly increasing")
        if any(y <= 0 for y in self.ys):
            raise ValueError("ys must be positive")
        return self

    @classmethod
    def from_csv(cls, path: str) -> "TabulatedModulus":
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(xs=tuple(table[:, 0]), ys=tuple(table[:, 1]))

    def __call__(self, x):
        xs = np.concatenate([[0.0], self.xs])
        ys = np.concatenate([[0.0], self.ys])
        if isinstance(x, mpmath.mpf):
            return mpmath.mpf(float(np.interp(float(x), xs, ys)))
        if isinstance(x, np.ndarray):
            return np.interp(_as_float_array(x), xs, ys)
        return float(np.interp(float(x), xs, ys))


ContinuityModulus = Annotated[
    Union[HoelderModulus, LipschitzModulus, LogTypeModulus, TabulatedModulus],
    Field(discriminator="kind"),
]

_modulus_adapter = TypeAdapter(ContinuityModulus)


def parse_modulus(record: dict) -> ContinuityModulus:
    """Build a modulus from its structured-text record, e.g. {"kind": "hoelder", "alpha": 0.5}."""
    return _modulus_adapter.validate_python(record)


# ==================== Weight functions ====================


class PowerWeight(BaseModel):
    """phi(x) = x**p."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["power"] = "power"
    p: float = Field(..., gt=0, examples=[0.625])

    def __call__(self, x):
        return x ** self.p


class TabulatedWeight(BaseModel):
    """Piecewise-linear positive weight; constant extension outside the table."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["tabulated"] = "tabulated"
    xs: tuple[float, ...]
    ys: tuple[float, ...]

    @model_validator(mode="after")
    def _check_table(self):
        if len(self.xs) != len(self.ys) or not self.xs:
            raise ValueError("xs and ys must be nonempty and of equal length")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise ValueError("xs must be strictly increasing")
        if any(y <= 0 for y in self.ys):
            raise ValueError("weights must be positive")
        return self

    @classmethod
    def from_csv(cls, path: str) -> "TabulatedWeight":
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(xs=tuple(table[:, 0]), ys=tuple(table[:, 1]))

    def __call__(self, x):
        if isinstance(x, mpmath.mpf):
            return mpmath.mpf(float(np.interp(float(x), self.xs, self.ys)))
        if isinstance(x, np.ndarray):
            return np.interp(_as_float_array(x), self.xs, self.ys)
        return float(np.interp(float(x), self.xs, self.ys))


WeightFunction = Annotated[Union[PowerWeight, TabulatedWeight], Field(discriminator="kind")]

_weight_adapter = TypeAdapter(WeightFunction)


def parse_weight(record: dict) -> WeightFunction:
    """Build a weight from its structured-text record, e.g. {"kind": "power", "p": 0.625}."""
    return _weight_adapter.validate_python(record)


# ==================== Spectra and mode vectors ====================


class SpectralSequence(BaseModel):
    """Finite, strictly increasing list of positive frequencies lambda_k."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["explicit"] = "explicit"
    lambdas: tuple[float, ...]

    @field_validator("lambdas")
    @classmethod
    def _check_lambdas(cls, lambdas):
        if any(lam <= 0 or not math.isfinite(lam) for lam in lambdas):
            raise ValueError("frequencies must be positive and finite")
        if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
            raise ValueError("frequencies must be strictly increasing")
        return lambdas

    @property
    def count(self) -> int:
        return len(self.lambdas)

    def vector(self, values) -> "ModeVector":
        """Attach one real component to every frequency of the sequence."""
        values = tuple(float(v) for v in values)
        if len(values) != self.count:
            raise ValueError(f"expected {self.count} components, got {len(values)}")
        return ModeVector(lambdas=self.lambdas, values=values)


class GeometricSpectrum(BaseModel):
    """
    Lazy unbounded spectrum lambda_j = base**(start + j), j = 0, 1, 2, ...

    Elements are returned as mpmath numbers so indices far beyond float
    range stay exact powers of the base.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["geometric"] = "geometric"
    base: float = Field(default=2.0, gt=1)
    start: int = 0

    def element(self, j: int):
        return mpmath.mpf(self.base) ** (self.start + j)

    def log_element(self, j: int):
        return (self.start + j) * mpmath.log(self.base)


class ModeVector(BaseModel):
    """Fourier components u_k attached to frequencies lambda_k."""

    model_config = ConfigDict(frozen=True)

    lambdas: tuple[float, ...]
    values: tuple[float, ...]

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.lambdas) != len(self.values):
            raise ValueError("lambdas and values must have equal length")
        return self

    @property
    def components(self) -> list[tuple[float, float]]:
        return list(zip(self.lambdas, self.values))


# ==================== Weighted norms ====================


class NormSign(str, Enum):
    """Which family of sequence spaces a norm belongs to."""
    GEVREY = "gevrey"      # exp(+2 r phi(lambda))
    ULTRA = "ultra"        # exp(-2 R psi(lambda))
    SOBOLEV = "sobolev"    # radius ignored


class WeightedNorm(BaseModel):
    """Sum of (1 + lambda)^(4 alpha) u^2 exp(+-2 radius weight(lambda))."""

    model_config = ConfigDict(frozen=True)

    weight: WeightFunction | None = None
    radius: float = Field(default=0.0, ge=0)
    sobolev_exponent: float = 0.0
    sign: NormSign = NormSign.SOBOLEV

    @model_validator(mode="after")
    def _check_weight(self):
        if self.sign != NormSign.SOBOLEV and self.weight is None:
            raise ValueError("gevrey and ultra norms need a weight function")
        return self


class NormValue(BaseModel):
    """Log-safe norm result; value is None when it does not fit in a float."""

    model_config = ConfigDict(frozen=True)

    log_value: float
    overflow: bool = False

    @property
    def value(self) -> float | None:
        if self.overflow:
            return None
        return math.exp(self.log_value) if self.log_value > -math.inf else 0.0


# ==================== Audit reports ====================


class ModulusViolation(BaseModel):
    """One adjacent grid pair breaking a structural property of a modulus."""

    check: Literal["positive", "omega-nondecreasing", "ratio-nondecreasing"]
    x_left: float
    x_right: float
    left: float
    right: float


class ModulusAudit(BaseModel):
    """Result of check_modulus; an empty violation list means pass."""

    grid_points: int
    value_at_zero: float
    violations: list[ModulusViolation] = []
    violation_count: int = 0

    @property
    def passed(self) -> bool:
        return self.violation_count == 0 and self.value_at_zero == 0.0


class ContinuityAudit(BaseModel):
    """Worst ratio |c(s) - c(t)| / omega(|s - t|) over the audited pairs."""

    worst_ratio: float
    worst_pair: tuple[float, float] | None = None
    pairs_checked: int
    resolution: float  # Smallest positive sample spacing

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0
