import bisect
import math
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator
from scipy import integrate

from app.schemas.spaces import ContinuityModulus

# Steps per shortest oscillation period inside oscillating pieces
STEPS_PER_PERIOD = 20


# ==================== Closed-form pieces ====================


class ConstantPiece(BaseModel):
    """c(t) = value."""

    model_config = ConfigDict(frozen=True)

    shape: Literal["constant"] = "constant"
    value: float

    def value_at(self, t: float) -> float:
        return self.value

    def derivative_at(self, t: float) -> float:
        return 0.0

    def integral(self, a: float, b: float) -> float:
        return self.value * (b - a)

    def max_step(self) -> float:
        return math.inf


class AffinePiece(BaseModel):
    """c(t) = value0 + slope * (t - origin)."""

    model_config = ConfigDict(frozen=True)

    shape: Literal["affine"] = "affine"
    origin: float = 0.0
    value0: float
    slope: float

    def value_at(self, t: float) -> float:
        return self.value0 + self.slope * (t - self.origin)

    def derivative_at(self, t: float) -> float:
        return self.slope

    def integral(self, a: float, b: float) -> float:
        return (b - a) * (self.value_at(a) + self.value_at(b)) / 2.0

    def max_step(self) -> float:
        return math.inf


class SinePiece(BaseModel):
    """c(t) = offset + amplitude * sin(frequency * t + phase)."""

    model_config = ConfigDict(frozen=True)

    shape: Literal["sine"] = "sine"
    offset: float = 0.0
    amplitude: float
    frequency: float = Field(..., gt=0)
    phase: float = 0.0

    def value_at(self, t: float) -> float:
        return self.offset + self.amplitude * math.sin(self.frequency * t + self.phase)

    def derivative_at(self, t: float) -> float:
        return self.amplitude * self.frequency * math.cos(self.frequency * t + self.phase)

    def integral(self, a: float, b: float) -> float:
        w, p = self.frequency, self.phase
        return self.offset * (b - a) + self.amplitude * (math.cos(w * a + p) - math.cos(w * b + p)) / w

    def max_step(self) -> float:
        return 2.0 * math.pi / self.frequency / STEPS_PER_PERIOD


class GammaPiece(BaseModel):
    """
    Resonant oscillation
        c(t) = 1 + shift - 16 eps^2 sin^4(x) - 8 eps sin(2x),  x = lam (t - origin).

    With shift = delta^2 / lam^(2 - 4 sigma) this is the coefficient for
    which sin(lam t) exp(b(t)) solves the damped mode equation.
    """

    model_config = ConfigDict(frozen=True)

    shape: Literal["gamma"] = "gamma"
    eps: float = Field(..., ge=0)
    lam: float = Field(..., gt=0)
    shift: float = Field(default=0.0, ge=0)
    origin: float = 0.0

    def value_at(self, t: float) -> float:
        x = self.lam * (t - self.origin)
        s = math.sin(x)
        return 1.0 + self.shift - 16.0 * self.eps ** 2 * s ** 4 - 8.0 * self.eps * math.sin(2.0 * x)

    def derivative_at(self, t: float) -> float:
        x = self.lam * (t - self.origin)
        s, c = math.sin(x), math.cos(x)
        return self.lam * (-64.0 * self.eps ** 2 * s ** 3 * c - 16.0 * self.eps * math.cos(2.0 * x))

    def _antiderivative(self, t: float) -> float:
        x = self.lam * (t - self.origin)
        # sin^4 x = 3/8 - cos(2x)/2 + cos(4x)/8
        sin4 = (3.0 * x / 8.0 - math.sin(2.0 * x) / 4.0 + math.sin(4.0 * x) / 32.0) / self.lam
        sin2 = -math.cos(2.0 * x) / (2.0 * self.lam)
        return (1.0 + self.shift) * t - 16.0 * self.eps ** 2 * sin4 - 8.0 * self.eps * sin2

    def integral(self, a: float, b: float) -> float:
        return self._antiderivative(b) - self._antiderivative(a)

    def max_step(self) -> float:
        return 2.0 * math.pi / self.lam / STEPS_PER_PERIOD


Piece = Annotated[
    Union[ConstantPiece, AffinePiece, SinePiece, GammaPiece],
    Field(discriminator="shape"),
]


class PieceSpan(BaseModel):
    """The closed-form piece governing an interval, as seen by the integrator."""

    model_config = ConfigDict(frozen=True)

    piece: Piece
    start: float
    end: float


# ==================== Coefficients ====================


class CoefficientBase(BaseModel):
    """
    Time-dependent propagation speed c(t) with declared regularity.

    Subclasses implement value(); everything else has a generic fallback.
    """

    model_config = ConfigDict(frozen=True)

    declared_mu1: float = Field(default=0.0, ge=0)
    declared_mu2: float = Field(default=1.0, gt=0)
    declared_modulus: ContinuityModulus | None = None

    def value(self, t: float) -> float:
        raise NotImplementedError

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value(float(t))
        return np.array([self.value(float(s)) for s in np.ravel(t)]).reshape(np.shape(t))

    def breakpoints(self, a: float, b: float) -> list[float]:
        """Points in (a, b) where the closed form changes."""
        return []

    def piece_span(self, t: float) -> PieceSpan | None:
        """Closed-form piece containing the open interval right of t, if any."""
        return None

    def max_step(self, t: float) -> float:
        """Largest integrator step that resolves the coefficient near t."""
        return math.inf

    def integral(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        lo, hi = min(a, b), max(a, b)
        points = self.breakpoints(lo, hi) or None
        result, _ = integrate.quad(self.value, lo, hi, points=points, epsabs=1e-12, limit=500)
        return result if a < b else -result

    def abs_integral(self, a: float, b: float) -> float:
        """Integral of |c| over [a, b], a <= b."""
        if a == b:
            return 0.0
        points = self.breakpoints(a, b) or None
        result, _ = integrate.quad(lambda s: abs(self.value(s)), a, b, points=points, epsabs=1e-12, limit=500)
        return result

    def mean(self, a: float, b: float) -> float:
        """Average of c over [a, b]."""
        return self.integral(a, b) / (b - a)

    def __add__(self, other: "CoefficientBase") -> "LinearCombination":
        return LinearCombination(terms=((1.0, self), (1.0, other)))

    def __mul__(self, weight: float) -> "LinearCombination":
        return LinearCombination(terms=((float(weight), self),))

    __rmul__ = __mul__


class ConstantCoefficient(CoefficientBase):
    """c(t) = c0 for all t."""

    kind: Literal["constant"] = "constant"
    c0: float = Field(..., ge=0)

    @model_validator(mode="before")
    @classmethod
    def _declare_bounds(cls, data):
        if isinstance(data, dict) and "c0" in data:
            data = dict(data)
            data.setdefault("declared_mu1", data["c0"])
            data.setdefault("declared_mu2", max(data["c0"], 1e-300))
        return data

    def value(self, t: float) -> float:
        return self.c0

    def piece_span(self, t: float) -> PieceSpan:
        return PieceSpan(piece=ConstantPiece(value=self.c0), start=-math.inf, end=math.inf)

    def integral(self, a: float, b: float) -> float:
        return self.c0 * (b - a)

    def abs_integral(self, a: float, b: float) -> float:
        return abs(self.c0) * (b - a)

    def mean(self, a: float, b: float) -> float:
        return self.c0


class PiecewiseCoefficient(CoefficientBase):
    """
    Closed-form pieces tiling [starts[0], +inf).

    Piece i governs [starts[i], starts[i+1]); the last piece runs to +inf.
    Left of starts[0] the coefficient is extended by its left endpoint value.
    """

    kind: Literal["piecewise"] = "piecewise"
    starts: tuple[float, ...]
    pieces: tuple[Piece, ...]

    @model_validator(mode="after")
    def _check_tiling(self):
        if not self.pieces or len(self.starts) != len(self.pieces):
            raise ValueError("need one start per piece and at least one piece")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("piece starts must be strictly increasing")
        return self

    def _index(self, t: float) -> int:
        return bisect.bisect_right(self.starts, t) - 1

    def _left_piece(self) -> ConstantPiece:
        return ConstantPiece(value=self.pieces[0].value_at(self.starts[0]))

    def _span(self, i: int) -> tuple[float, float]:
        end = self.starts[i + 1] if i + 1 < len(self.starts) else math.inf
        return self.starts[i], end

    def value(self, t: float) -> float:
        i = self._index(t)
        if i < 0:
            return self._left_piece().value
        return self.pieces[i].value_at(t)

    def derivative(self, t: float) -> float:
        i = self._index(t)
        return 0.0 if i < 0 else self.pieces[i].derivative_at(t)

    def breakpoints(self, a: float, b: float) -> list[float]:
        lo = bisect.bisect_right(self.starts, a)
        hi = bisect.bisect_left(self.starts, b)
        return list(self.starts[lo:hi])

    def piece_span(self, t: float) -> PieceSpan:
        i = self._index(t)
        if i < 0:
            return PieceSpan(piece=self._left_piece(), start=-math.inf, end=self.starts[0])
        start, end = self._span(i)
        return PieceSpan(piece=self.pieces[i], start=start, end=end)

    def max_step(self, t: float) -> float:
        i = self._index(t)
        return math.inf if i < 0 else self.pieces[i].max_step()

    def integral(self, a: float, b: float) -> float:
        if a > b:
            return -self.integral(b, a)
        total = 0.0
        edges = [a, *self.breakpoints(a, b), b]
        for lo, hi in zip(edges, edges[1:]):
            span = self.piece_span((lo + hi) / 2.0)
            total += span.piece.integral(lo, hi)
        return total

    def mean(self, a: float, b: float) -> float:
        span = self.piece_span(a)
        if isinstance(span.piece, ConstantPiece) and b <= span.end:
            return span.piece.value
        return self.integral(a, b) / (b - a)


class SampledCoefficient(CoefficientBase):
    """Linear interpolation through (times, values); constant outside the samples."""

    kind: Literal["sampled"] = "sampled"
    times: tuple[float, ...]
    values: tuple[float, ...]

    @model_validator(mode="after")
    def _check_samples(self):
        if len(self.times) != len(self.values) or len(self.times) < 2:
            raise ValueError("need at least 2 samples with matching values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("sample times must be strictly increasing")
        return self

    @classmethod
    def from_csv(cls, path: str, **declared) -> "SampledCoefficient":
        """Read a two-column (t, c) CSV file."""
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(times=tuple(table[:, 0]), values=tuple(table[:, 1]), **declared)

    def value(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value(float(t))
        return np.interp(np.asarray(t, dtype=float), self.times, self.values)

    def breakpoints(self, a: float, b: float) -> list[float]:
        lo = bisect.bisect_right(self.times, a)
        hi = bisect.bisect_left(self.times, b)
        return list(self.times[lo:hi])

    def piece_span(self, t: float) -> PieceSpan:
        i = bisect.bisect_right(self.times, t) - 1
        if i < 0:
            return PieceSpan(piece=ConstantPiece(value=self.values[0]), start=-math.inf, end=self.times[0])
        if i >= len(self.times) - 1:
            return PieceSpan(piece=ConstantPiece(value=self.values[-1]), start=self.times[-1], end=math.inf)
        t0, t1 = self.times[i], self.times[i + 1]
        slope = (self.values[i + 1] - self.values[i]) / (t1 - t0)
        return PieceSpan(piece=AffinePiece(origin=t0, value0=self.values[i], slope=slope), start=t0, end=t1)

    def integral(self, a: float, b: float) -> float:
        if a > b:
            return -self.integral(b, a)
        edges = [a, *self.breakpoints(a, b), b]
        return sum(
            self.piece_span((lo + hi) / 2.0).piece.integral(lo, hi)
            for lo, hi in zip(edges, edges[1:])
        )


class LacunaryCoefficient(CoefficientBase):
    """
    c(t) = 1 + amplitude * normalizer * sum_j 2^(-j alpha) cos(2^j b t + phase_j).

    Built by coefficients.synthesize_hoelder, which fixes the phases, the
    normalizer and the declared modulus.
    """

    kind: Literal["hoelder_synthetic"] = "hoelder_synthetic"
    alpha: float = Field(..., gt=0, lt=1)
    amplitude: float = Field(..., ge=0)
    seed: int
    base_frequency: float = Field(..., gt=0)
    phases: tuple[float, ...]
    normalizer: float = Field(..., gt=0)

    def _terms(self):
        for j, phase in enumerate(self.phases):
            yield 2.0 ** (-j * self.alpha), (2.0 ** j) * self.base_frequency, phase

    def value(self, t: float) -> float:
        total = sum(w * math.cos(f * t + p) for w, f, p in self._terms())
        return 1.0 + self.amplitude * self.normalizer * total

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value(float(t))
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for w, f, p in self._terms():
            total += w * np.cos(f * t + p)
        return 1.0 + self.amplitude * self.normalizer * total

    def integral(self, a: float, b: float) -> float:
        total = sum(w * (math.sin(f * b + p) - math.sin(f * a + p)) / f for w, f, p in self._terms())
        return (b - a) + self.amplitude * self.normalizer * total

    def max_step(self, t: float) -> float:
        if not self.phases or self.amplitude == 0:
            return math.inf
        top = (2.0 ** (len(self.phases) - 1)) * self.base_frequency
        return 2.0 * math.pi / top / STEPS_PER_PERIOD


class LinearCombination(CoefficientBase):
    """c(t) = sum of weight * term(t)."""

    kind: Literal["combination"] = "combination"
    terms: tuple[tuple[float, "Coefficient"], ...]

    def value(self, t: float) -> float:
        return sum(w * term.value(t) for w, term in self.terms)

    def breakpoints(self, a: float, b: float) -> list[float]:
        return sorted({p for _, term in self.terms for p in term.breakpoints(a, b)})

    def max_step(self, t: float) -> float:
        return min((term.max_step(t) for _, term in self.terms), default=math.inf)

    def integral(self, a: float, b: float) -> float:
        return sum(w * term.integral(a, b) for w, term in self.terms)


Coefficient = Annotated[
    Union[ConstantCoefficient, PiecewiseCoefficient, SampledCoefficient, LacunaryCoefficient, LinearCombination],
    Field(discriminator="kind"),
]

LinearCombination.model_rebuild()

_coefficient_adapter = TypeAdapter(Coefficient)


def parse_coefficient(record: dict) -> Coefficient:
    """Build a coefficient from its structured-text record."""
    return _coefficient_adapter.validate_python(record)


class RegularizedCoefficient(BaseModel):
    """
    Forward moving average c_eps(t) = (1/eps) * integral of c over [t, t + eps].

    The derivative is the exact difference quotient (c(t + eps) - c(t)) / eps.
    """

    model_config = ConfigDict(frozen=True)

    base: Coefficient
    epsilon: float = Field(..., gt=0)

    def value(self, t: float) -> float:
        return self.base.mean(t, t + self.epsilon)

    def derivative(self, t: float) -> float:
        return (self.base.value(t + self.epsilon) - self.base.value(t)) / self.epsilon

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value(float(t))
        return np.array([self.value(float(s)) for s in np.ravel(t)]).reshape(np.shape(t))


# ==================== Reports ====================


class HyperbolicityClass(BaseModel):
    """Measured hyperbolicity of a coefficient on a grid."""

    kind: Literal["strict", "degenerate", "none"]
    mu1: float | None = None
    mu2: float | None = None
    measured_inf: float
    measured_sup: float


class RegularizationAudit(BaseModel):
    """Worst-case checks of a regularized coefficient against its base."""

    epsilon: float
    omega_at_eps: float
    min_value: float
    max_value: float
    bounds_ok: bool             # mu1 <= c_eps <= mu2
    worst_gap: float            # max |c - c_eps|
    gap_ok: bool                # worst_gap <= omega(eps)
    worst_derivative: float     # max |c_eps'|
    derivative_ok: bool         # worst_derivative <= omega(eps) / eps

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.gap_ok and self.derivative_ok
