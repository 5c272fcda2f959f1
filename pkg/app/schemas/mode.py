import math
import sys

from pydantic import BaseModel, ConfigDict, Field

# Largest log-value whose exponential is still a finite float
_LOG_FLOAT_MAX = math.log(sys.float_info.max)
_LN2 = math.log(2.0)


def renormalize(u: float, v: float, log_scale: float) -> tuple[float, float, float]:
    """
    Rescale (u, v) by a power of two so that max(|u|, |v|) lies in [1/2, 1).

    Powers of two keep the direction bits exact; the exponent moves into
    log_scale. A zero pair is returned unchanged.
    """
    m = max(abs(u), abs(v))
    if m == 0.0:
        return 0.0, 0.0, log_scale
    _, e = math.frexp(m)
    return math.ldexp(u, -e), math.ldexp(v, -e), log_scale + e * _LN2


def scaled(direction: float, log_scale: float) -> float:
    """e^log_scale * direction, saturating to +-inf instead of raising."""
    if direction == 0.0:
        return 0.0
    log_abs = log_scale + math.log(abs(direction))
    if log_abs > _LOG_FLOAT_MAX:
        return math.copysign(math.inf, direction)
    return math.copysign(math.exp(log_abs), direction)


class ModeParams(BaseModel):
    """Frequency lambda and damping (sigma, delta) of one Fourier mode."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(..., gt=0, alias="lambda")
    sigma: float = Field(default=0.0, ge=0)
    delta: float = Field(default=0.0, ge=0)

    @property
    def damping(self) -> float:
        """Half the friction coefficient: delta * lambda^(2 sigma)."""
        return self.delta * self.lam ** (2.0 * self.sigma)


class ModeState(BaseModel):
    """
    Log-renormalized mode state at time t.

    Physical values are (u, u') = e^log_scale * (u_dir, v_dir).
    """

    model_config = ConfigDict(frozen=True)

    t: float
    u_dir: float
    v_dir: float
    log_scale: float = 0.0

    @classmethod
    def from_values(cls, t: float, u: float, v: float, log_scale: float = 0.0) -> "ModeState":
        u_dir, v_dir, log_scale = renormalize(float(u), float(v), float(log_scale))
        return cls(t=t, u_dir=u_dir, v_dir=v_dir, log_scale=log_scale)

    @property
    def u(self) -> float:
        return scaled(self.u_dir, self.log_scale)

    @property
    def v(self) -> float:
        return scaled(self.v_dir, self.log_scale)

    @property
    def is_zero(self) -> bool:
        return self.u_dir == 0.0 and self.v_dir == 0.0


class EnergyRecord(BaseModel):
    """Log-energies of one mode at time t; a zero state has every log at -inf."""

    t: float
    log_e_classic: float        # |u'|^2 + lambda^2 |u|^2
    log_f_weighted: float       # |u'|^2 + lambda^2 c(t) |u|^2
    log_e_kova: float           # |u' + a u|^2 + a^2 |u|^2, a = delta lambda^(2 sigma)
    log_e_approx: float | None = None  # Kovaleskyan plus lambda^2 c_eps(t) |u|^2


class Trajectory(BaseModel):
    """States and energies at every stop of an integration run."""

    params: ModeParams
    states: list[ModeState]
    energies: list[EnergyRecord]
    steps_accepted: int = 0
    steps_rejected: int = 0
    closed_form_spans: int = 0

    @property
    def final(self) -> ModeState:
        return self.states[-1]

    def at(self, t: float) -> ModeState:
        """State recorded at exactly t."""
        for state in self.states:
            if state.t == t:
                return state
        raise KeyError(t)
