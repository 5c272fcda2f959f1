import csv
import logging
import math
import sys
from typing import Literal

from app.config import settings
from app.errors import ContractViolation, IntegrationFailure
from app.schemas.coefficient import Coefficient, ConstantPiece, RegularizedCoefficient
from app.schemas.mode import EnergyRecord, ModeParams, ModeState, Trajectory, renormalize
from app.schemas.spaces import ContinuityModulus

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau; the last row equals the weights (FSAL)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B_HAT = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b - bh for b, bh in zip(_A[6] + (0.0,), _B_HAT))

# PI step-size controller
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5

# Oracle contract
ORACLE_MIN_STEPS = 10_000

# Relative rounding of one stage combination, per unit of mode speed
ROUNDING_FLOOR = 128 * sys.float_info.epsilon

_LN2 = math.log(2.0)

InitialData = ModeState | tuple[float, float]


# ==================== Closed forms ====================


def propagate_constant(a: float, w2: float, u: float, v: float, dt: float) -> tuple[float, float, float]:
    """
    Exact step of u'' + 2a u' + w2 u = 0 over dt.

    Returns (u1, v1, log_gain) with the physical result e^log_gain * (u1, v1).
    The exponential growth or decay is factored out so that u1, v1 stay of
    the order of the input.

    Near a double root, |a^2 - w2| < 1e-12 w2 included, no separate branch is
    needed: the physical result depends on mu only through mu^2, via cos(mu dt)
    and sin(mu dt) / mu or their hyperbolic counterparts, so the cancellation
    in a^2 - w2 perturbs it by O(eps a^2 dt^2) only.
    """
    disc = a * a - w2
    if disc < 0:
        mu = math.sqrt(-disc)
        cos_term = math.cos(mu * dt)
        sin_term = math.sin(mu * dt) / mu
        log_gain = -a * dt
    else:
        mu = math.sqrt(disc)
        if dt >= 0:
            # Slow root -a + mu = -w2 / (a + mu), written without cancellation
            log_gain = -w2 / (a + mu) * dt if a + mu > 0 else 0.0
            cos_term = (1.0 + math.exp(-2.0 * mu * dt)) / 2.0
            sin_term = -math.expm1(-2.0 * mu * dt) / (2.0 * mu) if mu > 0 else dt
        else:
            log_gain = -(mu + a) * dt
            cos_term = (1.0 + math.exp(2.0 * mu * dt)) / 2.0
            sin_term = math.expm1(2.0 * mu * dt) / (2.0 * mu) if mu > 0 else dt

    u1 = u * cos_term + (v + a * u) * sin_term
    v1 = v * cos_term - (a * v + w2 * u) * sin_term
    return u1, v1, log_gain


def _initial_state(init: InitialData, t0: float) -> ModeState:
    if isinstance(init, ModeState):
        if init.t != t0:
            raise ContractViolation(f"initial state is at t={init.t}, span starts at {t0}")
        return init
    u0, u1 = init
    return ModeState.from_values(t0, u0, u1)


def closed_form_constant(p: ModeParams, c0: float, init: InitialData, t: float, t0: float = 0.0) -> ModeState:
    """Exact solution at t for c identically c0, starting from init at t0."""
    if c0 < 0:
        raise ContractViolation(f"constant coefficient must be nonnegative, got {c0!r}")
    start = _initial_state(init, t0)
    u1, v1, gain = propagate_constant(p.damping, p.lam ** 2 * c0, start.u_dir, start.v_dir, t - t0)
    return ModeState.from_values(t, u1, v1, start.log_scale + gain)


def closed_form_gamma(eps: float, lam: float, delta: float, sigma: float, t: float) -> tuple[ModeState, float]:
    """
    The resonant solution w = sin(lam t) e^b and its derivative at t.

    b(t) = (2 eps lam - delta lam^(2 sigma)) t - eps sin(2 lam t). w solves the
    mode equation with the oscillating coefficient GammaPiece(eps, lam,
    shift=delta^2 lam^(4 sigma - 2)).

    Returns:
        (state, b) where state holds (w, w') with log_scale absorbing b
    """
    if lam <= 0:
        raise ContractViolation("frequency must be positive")
    damping = delta * lam ** (2.0 * sigma)
    x = lam * t
    s, c = math.sin(x), math.cos(x)
    b = (2.0 * eps * lam - damping) * t - eps * math.sin(2.0 * x)
    b_prime = 4.0 * eps * lam * s * s - damping
    return ModeState.from_values(t, s, lam * c + s * b_prime, b), b


# ==================== Energies ====================


def _log_sum_squares(x: float, y: float) -> float:
    """log(x^2 + y^2) without overflow; -inf for a zero pair."""
    m = max(abs(x), abs(y))
    if m == 0.0:
        return -math.inf
    return 2.0 * math.log(m) + math.log((x / m) ** 2 + (y / m) ** 2)


def _log_weighted(u: float, v: float, lam: float, c: float) -> float:
    """log(v^2 + lam^2 c u^2) for directions of order one; nan if it is negative."""
    value = v * v + lam * lam * c * u * u
    if value > 0:
        return math.log(value)
    return -math.inf if value == 0 else math.nan


def energy_record(
    p: ModeParams,
    c: Coefficient,
    state: ModeState,
    approx: RegularizedCoefficient | None = None,
) -> EnergyRecord:
    """Classic, weighted, Kovaleskyan and optionally approximated log-energies of a state."""
    if state.is_zero:
        return EnergyRecord(
            t=state.t,
            log_e_classic=-math.inf,
            log_f_weighted=-math.inf,
            log_e_kova=-math.inf,
            log_e_approx=-math.inf if approx is not None else None,
        )
    u, v, two_l = state.u_dir, state.v_dir, 2.0 * state.log_scale
    a = p.damping
    log_kova = _log_sum_squares(v + a * u, a * u)
    log_approx = None
    if approx is not None:
        hyperbolic = p.lam * p.lam * approx.value(state.t) * u * u
        total = math.exp(log_kova) + hyperbolic if math.isfinite(log_kova) else hyperbolic
        log_approx = (math.log(total) if total > 0 else -math.inf) + two_l
    return EnergyRecord(
        t=state.t,
        log_e_classic=_log_sum_squares(v, p.lam * u) + two_l,
        log_f_weighted=_log_weighted(u, v, p.lam, c.value(state.t)) + two_l,
        log_e_kova=log_kova + two_l,
        log_e_approx=log_approx,
    )


# ==================== Adaptive integration ====================


def _stops(c: Coefficient, t0: float, t1: float, t_eval) -> list[float]:
    lo, hi = min(t0, t1), max(t0, t1)
    points = {t0, t1, *c.breakpoints(lo, hi)}
    for t in t_eval or ():
        if lo <= t <= hi:
            points.add(float(t))
    return sorted(points, reverse=t1 < t0)


def _exponent(u: float, v: float) -> int:
    """Binary exponent that brings max(|u|, |v|) into [1/2, 1)."""
    m = max(abs(u), abs(v))
    return math.frexp(m)[1] if m != 0.0 and math.isfinite(m) else 0


def _dopri_step(rhs, t, u, v, h, k1):
    """One Dormand-Prince step; returns (u_new, v_new, err_u, err_v, k_last)."""
    ku, kv = [k1[0]], [k1[1]]
    su = sv = 0.0
    for i in range(1, 7):
        row = _A[i]
        su = u + h * sum(w * k for w, k in zip(row, ku))
        sv = v + h * sum(w * k for w, k in zip(row, kv))
        du, dv = rhs(t + _C[i] * h, su, sv)
        ku.append(du)
        kv.append(dv)
    err_u = h * sum(e * k for e, k in zip(_E, ku))
    err_v = h * sum(e * k for e, k in zip(_E, kv))
    return su, sv, err_u, err_v, (ku[6], kv[6])


def integrate(
    p: ModeParams,
    c: Coefficient,
    init: InitialData,
    t_span: tuple[float, float],
    tol: float | None = None,
    t_eval=None,
    approx: RegularizedCoefficient | None = None,
    max_steps: int | None = None,
) -> Trajectory:
    """
    Integrate u'' + 2 delta lambda^(2 sigma) u' + lambda^2 c(t) u = 0 over t_span.

    Constant pieces are propagated in closed form; everything else uses an
    adaptive Dormand-Prince 5(4) pair with PI step control on the direction
    variables, renormalized after every accepted step. The local error is
    held to tol per unit time in the energy norm. Steps never straddle a
    coefficient breakpoint, and inside oscillating pieces they stay below
    one twentieth of the coefficient period. Integrating backward
    (t_span[1] < t_span[0]) is allowed.

    Args:
        p: Mode parameters
        c: Coefficient
        init: (u0, u1) at t_span[0], or a ModeState at that time
        t_span: (t0, t1), both finite
        tol: Local error tolerance (defaults to settings.solver_tol)
        t_eval: Extra times to record, clipped to the span
        approx: Regularized coefficient for the approximated energy

    Returns:
        Trajectory with a state and an energy record at every stop: t0,
        every breakpoint, every t_eval inside the span and t1.

    Raises:
        IntegrationFailure: step underflow, nonfinite state or too many steps
    """
    tol = settings.solver_tol if tol is None else tol
    max_steps = settings.max_steps if max_steps is None else max_steps
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not tol > 0:
        raise ContractViolation("tolerance must be positive")
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ContractViolation("time span must be finite")

    state = _initial_state(init, t0)
    stops = _stops(c, t0, t1, t_eval)
    direction = 1.0 if t1 >= t0 else -1.0
    min_step = settings.min_step * max(abs(t1 - t0), 1.0)
    lam2, a = p.lam ** 2, p.damping

    states = [state]
    energies = [energy_record(p, c, state, approx)]
    accepted = rejected = closed = 0
    h_abs = None

    u, v, log_scale, t = state.u_dir, state.v_dir, state.log_scale, t0
    for left, right in zip(stops, stops[1:]):
        mid = (left + right) / 2.0
        span = c.piece_span(mid)

        if span is not None and isinstance(span.piece, ConstantPiece):
            u, v, gain = propagate_constant(a, lam2 * span.piece.value, u, v, right - left)
            u, v, log_scale = renormalize(u, v, log_scale + gain)
            t = right
            closed += 1
        else:
            if span is not None:
                value_at, cap = span.piece.value_at, span.piece.max_step()
            else:
                value_at, cap = c.value, c.max_step(mid)

            def rhs(s, x, y, value_at=value_at):
                return y, -2.0 * a * y - lam2 * value_at(s) * x

            if h_abs is None:
                speed = p.lam * math.sqrt(max(abs(value_at(left)), 1.0)) + a
                h_abs = 0.1 / speed
            # Below this the error estimate is rounding noise that no step size removes
            span_tol = max(tol, ROUNDING_FLOOR * (p.lam + 2.0 * a))
            h_abs = min(h_abs, cap)
            k1 = rhs(t, u, v)
            err_prev = 1e-4
            last_rejected = False

            while t != right:
                if accepted + rejected >= max_steps:
                    raise IntegrationFailure("max-steps", ModeState(t=t, u_dir=u, v_dir=v, log_scale=log_scale))
                remaining = abs(right - t)
                if h_abs < min_step and remaining > min_step:
                    raise IntegrationFailure("step-underflow", ModeState(t=t, u_dir=u, v_dir=v, log_scale=log_scale))
                last = h_abs >= remaining
                h = direction * (remaining if last else h_abs)

                u_new, v_new, err_u, err_v, k_last = _dopri_step(rhs, t, u, v, h, k1)
                scale = max(p.lam * abs(u), abs(v), p.lam * abs(u_new), abs(v_new), 1e-300)
                err = max(p.lam * abs(err_u), abs(err_v)) / (span_tol * abs(h) * scale)
                if math.isnan(err):
                    raise IntegrationFailure("nonfinite", ModeState(t=t, u_dir=u, v_dir=v, log_scale=log_scale))

                if err <= 1.0:
                    t = right if last else t + h
                    # The equation is linear, so the last stage rescales with the state
                    shift = _exponent(u_new, v_new)
                    u, v = math.ldexp(u_new, -shift), math.ldexp(v_new, -shift)
                    log_scale += shift * _LN2
                    k1 = (math.ldexp(k_last[0], -shift), math.ldexp(k_last[1], -shift))
                    accepted += 1
                    factor = SAFETY * max(err, 1e-10) ** -_ALPHA * err_prev ** _BETA
                    factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
                    if last_rejected:
                        factor = min(factor, 1.0)
                    err_prev = max(err, 1e-4)
                    last_rejected = False
                else:
                    rejected += 1
                    factor = MIN_FACTOR if math.isinf(err) else max(MIN_FACTOR, SAFETY * err ** -_ALPHA)
                    last_rejected = True
                    logger.debug("rejected step h=%.3e at t=%.6g (err=%.3g)", abs(h), t, err)
                h_abs = min(abs(h) * factor, cap)

        if not (math.isfinite(u) and math.isfinite(v) and math.isfinite(log_scale)):
            raise IntegrationFailure("nonfinite", states[-1])
        state = ModeState(t=right, u_dir=u, v_dir=v, log_scale=log_scale)
        states.append(state)
        energies.append(energy_record(p, c, state, approx))

    return Trajectory(
        params=p,
        states=states,
        energies=energies,
        steps_accepted=accepted,
        steps_rejected=rejected,
        closed_form_spans=closed,
    )


# ==================== Oracle ====================


def oracle_integrate(
    p: ModeParams,
    c: Coefficient,
    init: InitialData,
    t_span: tuple[float, float],
    steps: int,
) -> ModeState:
    """
    Fixed-step classical RK4 with Kahan-compensated accumulation.

    Independent of integrate(): no closed forms, no step control. The
    directions and their compensation terms are renormalized together by
    powers of two, so renormalization adds no rounding.
    """
    if steps < ORACLE_MIN_STEPS:
        raise ContractViolation(f"oracle needs at least {ORACLE_MIN_STEPS} steps, got {steps}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    state = _initial_state(init, t0)
    lam2, a = p.lam ** 2, p.damping
    h = (t1 - t0) / steps

    def rhs(s, x, y):
        return y, -2.0 * a * y - lam2 * c.value(s) * x

    u, v, log_scale = state.u_dir, state.v_dir, state.log_scale
    comp_u = comp_v = 0.0
    for i in range(steps):
        t = t0 + i * h
        k1u, k1v = rhs(t, u, v)
        k2u, k2v = rhs(t + h / 2, u + h / 2 * k1u, v + h / 2 * k1v)
        k3u, k3v = rhs(t + h / 2, u + h / 2 * k2u, v + h / 2 * k2v)
        k4u, k4v = rhs(t + h, u + h * k3u, v + h * k3v)

        du = h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) - comp_u
        new_u = u + du
        comp_u = (new_u - u) - du
        u = new_u

        dv = h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) - comp_v
        new_v = v + dv
        comp_v = (new_v - v) - dv
        v = new_v

        e = _exponent(u, v)
        u, v = math.ldexp(u, -e), math.ldexp(v, -e)
        comp_u, comp_v = math.ldexp(comp_u, -e), math.ldexp(comp_v, -e)
        log_scale += e * _LN2

    return ModeState(t=t1, u_dir=u, v_dir=v, log_scale=log_scale)


# ==================== Heuristic envelopes ====================


EnvelopeKind = Literal["dh", "sh", "damped", "conflict"]


def heuristic_envelope(
    kind: EnvelopeKind,
    p: ModeParams,
    t: float,
    c: Coefficient | None = None,
    modulus: ContinuityModulus | None = None,
    M1: float = 1.0,
    M2: float = 1.0,
) -> float:
    """
    Log of the crude growth envelope E(t) / E(0) for t >= 0.

    dh:       lambda t + lambda * integral of |c| over [0, t]   (needs c)
    sh:       log M1 + M2 lambda omega(1/lambda) t               (needs modulus)
    damped:   -2 delta lambda^(2 sigma) t
    conflict: log M1 + (M2 lambda omega(1/lambda) - 2 delta lambda^(2 sigma)) t
    """
    if t < 0:
        raise ContractViolation("envelopes are stated for t >= 0")
    if kind == "dh":
        if c is None:
            raise ContractViolation("the dh envelope needs the coefficient")
        return p.lam * t + p.lam * c.abs_integral(0.0, t)
    if kind == "damped":
        return -2.0 * p.damping * t
    if kind in ("sh", "conflict"):
        if modulus is None:
            raise ContractViolation(f"the {kind} envelope needs a continuity modulus")
        rate = M2 * p.lam * float(modulus(1.0 / p.lam))
        if kind == "conflict":
            rate -= 2.0 * p.damping
        return math.log(M1) + rate * t
    raise ContractViolation(f"unknown envelope kind {kind!r}")


# ==================== Export ====================


TRAJECTORY_COLUMNS = ("t", "log_scale", "u_dir", "v_dir", "logE_classic", "logF_weighted", "logE_kova")


def write_trajectory_csv(trajectory: Trajectory, path: str) -> None:
    """One row per recorded stop."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_COLUMNS)
        for state, energy in zip(trajectory.states, trajectory.energies):
            writer.writerow([
                repr(state.t),
                repr(state.log_scale),
                repr(state.u_dir),
                repr(state.v_dir),
                repr(energy.log_e_classic),
                repr(energy.log_f_weighted),
                repr(energy.log_e_kova),
            ])
