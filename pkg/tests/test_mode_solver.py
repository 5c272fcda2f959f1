import csv
import math

import numpy as np
import pytest

from app.errors import ContractViolation, IntegrationFailure
from app.schemas.coefficient import ConstantCoefficient, ConstantPiece, GammaPiece, PiecewiseCoefficient, SinePiece
from app.schemas.mode import ModeParams, ModeState
from app.schemas.spaces import HoelderModulus
from app.services.mode_solver import (
    TRAJECTORY_COLUMNS,
    closed_form_constant,
    closed_form_gamma,
    energy_record,
    heuristic_envelope,
    integrate,
    oracle_integrate,
    propagate_constant,
    write_trajectory_csv,
)


def numeric_constant(c0: float):
    # A combination has no closed-form span, so the adaptive stepper runs
    return 2.0 * ConstantCoefficient(c0=c0 / 2.0)


# ==================== Closed forms ====================


@pytest.mark.parametrize(
    "lam, sigma, delta",
    [
        (10.0, 0.0, 0.0),    # undamped
        (10.0, 0.5, 0.1),    # under-damped
        (10.0, 1.0, 1.0),    # over-damped
        (50.0, 0.25, 2.0),
    ],
)
def test_adaptive_stepper_matches_constant_closed_form(lam, sigma, delta):
    p = ModeParams(lam=lam, sigma=sigma, delta=delta)
    trajectory = integrate(p, numeric_constant(1.0), (0.3, -1.2), (0.0, 2.0))
    assert trajectory.closed_form_spans == 0
    assert trajectory.steps_accepted > 0

    exact = closed_form_constant(p, 1.0, (0.3, -1.2), 2.0)
    got = trajectory.energies[-1].log_e_classic
    want = energy_record(p, ConstantCoefficient(c0=1.0), exact).log_e_classic
    assert got == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("seed", range(200))
def test_piecewise_composition_matches_constant_closed_form(seed):
    rng = np.random.default_rng(seed)
    sigma, delta = rng.uniform(0.0, 1.5), rng.uniform(0.0, 4.0)
    lam, c0 = 10.0 ** rng.uniform(0.0, 3.0), rng.uniform(0.1, 2.0)
    init = tuple(rng.uniform(-1.0, 1.0, 2))
    p = ModeParams(lam=lam, sigma=sigma, delta=delta)
    # Four closed-form spans composed through the log-renormalized state
    c = PiecewiseCoefficient(starts=(0.0, 0.25, 0.5, 0.75), pieces=(ConstantPiece(value=c0),) * 4)

    trajectory = integrate(p, c, init, (0.0, 1.0))
    assert trajectory.closed_form_spans == 4
    exact = closed_form_constant(p, c0, init, 1.0)
    want = energy_record(p, ConstantCoefficient(c0=c0), exact).log_e_classic
    assert trajectory.energies[-1].log_e_classic == pytest.approx(want, rel=1e-10, abs=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_adaptive_stepper_matches_random_constant_cases(seed):
    rng = np.random.default_rng(1000 + seed)
    p = ModeParams(lam=10.0 ** rng.uniform(0.0, 2.0), sigma=rng.uniform(0.0, 1.0), delta=rng.uniform(0.0, 2.0))
    c0 = rng.uniform(0.1, 2.0)
    init = tuple(rng.uniform(-1.0, 1.0, 2))
    trajectory = integrate(p, numeric_constant(c0), init, (0.0, 1.0))
    exact = closed_form_constant(p, c0, init, 1.0)
    want = energy_record(p, ConstantCoefficient(c0=c0), exact).log_e_classic
    assert trajectory.energies[-1].log_e_classic == pytest.approx(want, abs=1e-7)


@pytest.mark.parametrize("rel", [-1e-13, 0.0, 1e-13])
def test_near_double_root_matches_double_root_solution(rel):
    a, dt, u, v = 3.0, 0.7, 0.4, -1.1
    u1, v1, gain = propagate_constant(a, a * a * (1.0 + rel), u, v, dt)
    decay = math.exp(-a * dt)
    assert math.exp(gain) * u1 == pytest.approx(decay * (u + (v + a * u) * dt), rel=1e-10)
    assert math.exp(gain) * v1 == pytest.approx(decay * (v - a * (v + a * u) * dt), rel=1e-10)


def test_constant_coefficient_uses_closed_form():
    p = ModeParams(lam=100.0, sigma=0.5, delta=0.1)
    trajectory = integrate(p, ConstantCoefficient(c0=1.0), (0.0, 1.0), (0.0, 5.0))
    assert trajectory.closed_form_spans == 1
    assert trajectory.steps_accepted == 0
    exact = closed_form_constant(p, 1.0, (0.0, 1.0), 5.0)
    assert trajectory.final.log_scale == pytest.approx(exact.log_scale)


def test_backward_integration_recovers_initial_data():
    p = ModeParams(lam=10.0, sigma=0.5, delta=0.1)
    c = ConstantCoefficient(c0=1.0)
    forward = integrate(p, c, (1.0, 0.5), (0.0, 1.0))
    back = integrate(p, c, forward.final, (1.0, 0.0))
    assert back.final.u == pytest.approx(1.0, rel=1e-10)
    assert back.final.v == pytest.approx(0.5, rel=1e-10)


def test_resonant_closed_form_matches_integration():
    eps, lam, sigma, delta = 0.05, 16.0, 0.25, 1.0
    p = ModeParams(lam=lam, sigma=sigma, delta=delta)
    shift = delta ** 2 * lam ** (4.0 * sigma - 2.0)
    c = PiecewiseCoefficient(
        starts=(0.0,), pieces=(GammaPiece(eps=eps, lam=lam, shift=shift),), declared_mu1=0.5, declared_mu2=1.5
    )
    horizon = 10 * 2.0 * math.pi / lam

    start, b0 = closed_form_gamma(eps, lam, delta, sigma, 0.0)
    assert b0 == 0.0
    assert (start.u, start.v) == pytest.approx((0.0, lam))

    trajectory = integrate(p, c, (0.0, lam), (0.0, horizon))
    exact, b = closed_form_gamma(eps, lam, delta, sigma, horizon)
    assert b == pytest.approx((2.0 * eps * lam - p.damping) * horizon, abs=1e-12)
    got = trajectory.energies[-1].log_e_classic
    want = energy_record(p, c, exact).log_e_classic
    assert got == pytest.approx(want, abs=1e-6)


def test_resonant_solution_satisfies_the_mode_equation():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        eps, lam, t = rng.uniform(0.0, 0.25), 10.0 ** rng.uniform(0.0, 3.0), rng.uniform(0.0, 1.0)
        sigma, delta = rng.uniform(0.0, 1.0), rng.uniform(0.0, 4.0)
        a = delta * lam ** (2.0 * sigma)
        state, b = closed_form_gamma(eps, lam, delta, sigma, t)
        s, co = math.sin(lam * t), math.cos(lam * t)
        b1, b2 = 4.0 * eps * lam * s * s - a, 8.0 * eps * lam * lam * s * co
        growth = math.exp(b)
        w, w1 = state.u, state.v
        w2 = (-lam * lam * s + 2.0 * lam * co * b1 + s * b2 + s * b1 * b1) * growth
        gamma = GammaPiece(eps=eps, lam=lam, shift=delta ** 2 * lam ** (4.0 * sigma - 2.0)).value_at(t)
        terms = (w2, 2.0 * a * w1, lam * lam * gamma * w)
        size = sum(abs(x) for x in terms)
        if size > 0:
            worst = max(worst, abs(sum(terms)) / size)
    assert worst <= 1e-9


def test_closed_forms_contract():
    p = ModeParams(lam=1.0)
    with pytest.raises(ContractViolation):
        closed_form_constant(p, -1.0, (1.0, 0.0), 1.0)
    with pytest.raises(ContractViolation):
        closed_form_gamma(0.1, 0.0, 1.0, 0.0, 1.0)


# ==================== Energies ====================


def test_energy_record_components():
    p = ModeParams(lam=3.0, sigma=0.0, delta=0.5)
    state = ModeState.from_values(0.0, 1.0, 2.0)
    record = energy_record(p, ConstantCoefficient(c0=2.0), state)
    assert record.log_e_classic == pytest.approx(math.log(4.0 + 9.0))
    assert record.log_f_weighted == pytest.approx(math.log(4.0 + 18.0))
    assert record.log_e_kova == pytest.approx(math.log(2.5 ** 2 + 0.25))
    assert record.log_e_approx is None


def test_zero_state_energies():
    record = energy_record(ModeParams(lam=1.0), ConstantCoefficient(c0=1.0), ModeState.from_values(0.0, 0.0, 0.0))
    assert record.log_e_classic == record.log_f_weighted == record.log_e_kova == -math.inf


def test_huge_growth_stays_in_log_space():
    state, b = closed_form_gamma(0.05, 2.0 ** 20, 1.0, 0.0, 1.0)
    assert b > 1e5
    assert math.isinf(state.v)
    c = ConstantCoefficient(c0=1.0)
    record = energy_record(ModeParams(lam=2.0 ** 20, delta=1.0), c, state)
    assert math.isfinite(record.log_e_classic)
    assert record.log_e_classic > 2.0 * b


# ==================== Integration ====================


def test_oracle_agrees_with_adaptive_stepper():
    p = ModeParams(lam=20.0, sigma=0.5, delta=0.05)
    c = PiecewiseCoefficient(starts=(0.0,), pieces=(SinePiece(offset=1.0, amplitude=0.3, frequency=5.0),))
    trajectory = integrate(p, c, (1.0, 0.0), (0.0, 1.0))
    oracle = oracle_integrate(p, c, (1.0, 0.0), (0.0, 1.0), steps=20_000)
    want = energy_record(p, c, oracle).log_e_classic
    assert trajectory.energies[-1].log_e_classic == pytest.approx(want, abs=1e-7)


def test_rounding_floor_keeps_high_frequencies_integrable():
    lam = 2.0 ** 20
    p = ModeParams(lam=lam, sigma=0.25, delta=1.0)
    horizon = 5 * 2.0 * math.pi / lam
    trajectory = integrate(p, numeric_constant(1.0), (0.0, lam), (0.0, horizon))
    assert trajectory.closed_form_spans == 0
    exact = closed_form_constant(p, 1.0, (0.0, lam), horizon)
    want = energy_record(p, ConstantCoefficient(c0=1.0), exact).log_e_classic
    assert trajectory.energies[-1].log_e_classic == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize(
    "c",
    [
        PiecewiseCoefficient(starts=(0.0,), pieces=(SinePiece(offset=1.0, amplitude=0.3, frequency=5.0),)),
        PiecewiseCoefficient(starts=(0.0, 0.4), pieces=(ConstantPiece(value=0.5), ConstantPiece(value=1.5))),
    ],
)
def test_rescaled_initial_data_only_shifts_log_scale(c):
    p = ModeParams(lam=20.0, sigma=0.5, delta=0.3)
    base = ModeState.from_values(0.0, 0.3, -1.2)
    lifted = base.model_copy(update={"log_scale": base.log_scale + 7.0})
    first = integrate(p, c, base, (0.0, 1.0), t_eval=[0.25, 0.5, 0.75])
    second = integrate(p, c, lifted, (0.0, 1.0), t_eval=[0.25, 0.5, 0.75])
    for x, y in zip(first.states, second.states):
        assert (y.u_dir, y.v_dir) == (x.u_dir, x.v_dir)
        assert y.log_scale - x.log_scale == pytest.approx(7.0, abs=1e-12)


def test_classic_energy_identity():
    p = ModeParams(lam=5.0, sigma=0.5, delta=0.1)
    piece = SinePiece(offset=1.0, amplitude=0.3, frequency=2.0)
    c = PiecewiseCoefficient(starts=(0.0,), pieces=(piece,))
    h = 1e-4
    centers = [0.3, 0.9, 1.6]
    times = sorted(t + d for t in centers for d in (-h, 0.0, h))
    trajectory = integrate(p, c, (1.0, 0.5), (0.0, 2.0), tol=1e-12, t_eval=times)
    energy = {s.t: math.exp(e.log_e_classic) for s, e in zip(trajectory.states, trajectory.energies)}
    for t in centers:
        state = trajectory.at(t)
        derivative = (energy[t + h] - energy[t - h]) / (2.0 * h)
        identity = -4.0 * p.damping * state.v ** 2 - 2.0 * p.lam ** 2 * (piece.value_at(t) - 1.0) * state.u * state.v
        assert derivative == pytest.approx(identity, rel=1e-5, abs=1e-6)


def test_oracle_needs_enough_steps():
    with pytest.raises(ContractViolation):
        oracle_integrate(ModeParams(lam=1.0), ConstantCoefficient(c0=1.0), (1.0, 0.0), (0.0, 1.0), steps=10)


def test_requested_times_are_recorded():
    p = ModeParams(lam=5.0)
    c = PiecewiseCoefficient(starts=(0.0, 0.5), pieces=(ConstantPiece(value=1.0), ConstantPiece(value=2.0)))
    trajectory = integrate(p, c, (1.0, 0.0), (0.0, 1.0), t_eval=[0.25, 0.75, 3.0])
    assert [s.t for s in trajectory.states] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert trajectory.at(0.75).t == 0.75
    with pytest.raises(KeyError):
        trajectory.at(3.0)


def test_step_budget_raises_integration_failure():
    p = ModeParams(lam=1000.0)
    c = PiecewiseCoefficient(starts=(0.0,), pieces=(SinePiece(offset=1.0, amplitude=0.1, frequency=1000.0),))
    with pytest.raises(IntegrationFailure) as info:
        integrate(p, c, (1.0, 0.0), (0.0, 10.0), max_steps=50)
    assert info.value.reason == "max-steps"
    assert info.value.last_state.t < 10.0


def test_integration_contract():
    p = ModeParams(lam=1.0)
    c = ConstantCoefficient(c0=1.0)
    with pytest.raises(ContractViolation):
        integrate(p, c, (1.0, 0.0), (0.0, 1.0), tol=0.0)
    with pytest.raises(ContractViolation):
        integrate(p, c, (1.0, 0.0), (0.0, math.inf))
    with pytest.raises(ContractViolation):
        integrate(p, c, ModeState.from_values(0.5, 1.0, 0.0), (0.0, 1.0))


def test_trajectory_csv(tmp_path):
    p = ModeParams(lam=2.0)
    trajectory = integrate(p, ConstantCoefficient(c0=1.0), (1.0, 0.0), (0.0, 1.0), t_eval=[0.5])
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(trajectory, str(path))
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert [float(r[0]) for r in rows[1:]] == [0.0, 0.5, 1.0]


# ==================== Heuristic envelopes ====================


def test_envelopes():
    p = ModeParams(lam=100.0, sigma=0.5, delta=0.5)
    omega = HoelderModulus(alpha=0.5)
    assert heuristic_envelope("damped", p, 2.0) == pytest.approx(-2.0 * 50.0 * 2.0)
    assert heuristic_envelope("sh", p, 1.0, modulus=omega, M1=2.0, M2=3.0) == pytest.approx(math.log(2.0) + 30.0)
    assert heuristic_envelope("conflict", p, 1.0, modulus=omega) == pytest.approx(10.0 - 100.0)
    assert heuristic_envelope("dh", p, 1.0, c=ConstantCoefficient(c0=2.0)) == pytest.approx(300.0)


@pytest.mark.parametrize("kind, kwargs", [("dh", {}), ("sh", {}), ("conflict", {})])
def test_envelopes_need_their_inputs(kind, kwargs):
    with pytest.raises(ContractViolation):
        heuristic_envelope(kind, ModeParams(lam=1.0), 1.0, **kwargs)


def test_envelopes_reject_negative_time():
    with pytest.raises(ContractViolation):
        heuristic_envelope("damped", ModeParams(lam=1.0), -1.0)
