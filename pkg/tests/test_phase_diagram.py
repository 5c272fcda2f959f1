import csv
import math

import pytest
from pydantic import ValidationError

from app.errors import IntegrationFailure
from app.schemas.coefficient import ConstantCoefficient
from app.schemas.mode import ModeParams, ModeState
from app.schemas.spaces import LipschitzModulus
from app.schemas.sweep import SweepConfig
from app.services import phase_diagram
from app.services.coefficients import synthesize_hoelder
from app.services.mode_solver import integrate
from app.services.phase_diagram import (
    LONG_COLUMNS,
    SWEEP_COLUMNS,
    _fit_slope,
    classify,
    measure_exponent,
    cell_coefficient,
    probe_window,
    rescaled_exponent,
    resonant_coefficient,
    sweep,
    sweep_cell,
    write_sweep_csv,
    write_sweep_long,
)
from app.services.scenarios import load_preset


@pytest.fixture(scope="module")
def small_sweep():
    cfg = SweepConfig(sigma_grid=[0.0, 0.6], alpha_grid=[0.3], lambda_probe=[64.0, 256.0], trials=1)
    return sweep(cfg, jobs=1)


# ==================== Probes ====================


def test_probe_window_counts_whole_periods():
    lam = 2.0 * math.pi
    assert probe_window(lam, 100.0) == pytest.approx(40.0)
    assert probe_window(lam, 5.5) == pytest.approx(5.0)
    assert probe_window(lam, 0.1) == pytest.approx(1.0)


def test_resonant_amplitude_is_capped():
    _, eps = resonant_coefficient(0.0, 0.3, 1.0, 64.0)
    assert eps == phase_diagram.MAX_RESONANT_EPS
    c, eps = resonant_coefficient(0.0, 0.3, 1.0, 256.0)
    assert eps == pytest.approx(256.0 ** -0.65)
    assert c.pieces[0].shift == pytest.approx(256.0 ** -2)
    assert (c.declared_mu1, c.declared_mu2) == (0.5, 1.5)


@pytest.mark.parametrize("lam, sigma", [(64.0, 0.0), (256.0, 0.1)])
def test_resonant_exponent_matches_closed_form(lam, sigma):
    c, eps = resonant_coefficient(sigma, 0.3, 1.0, lam)
    p = ModeParams(lam=lam, sigma=sigma, delta=1.0)
    measured = measure_exponent(p, c, probe_window(lam, 1.0))
    predicted = 4.0 * eps * lam - 2.0 * p.damping
    assert measured == pytest.approx(predicted, rel=1e-6, abs=1e-6)


def test_rescaled_cell_coefficient_is_a_time_change():
    lam = 64.0
    physical = synthesize_hoelder(0.5, 0.25, seed=3)
    rescaled = cell_coefficient(0.5, 0.25, 3, lam)
    for tau in (0.0, 1.7, 40.0, 250.0):
        assert rescaled.value(tau) == pytest.approx(physical.value(tau / lam), rel=1e-12)


def test_rescaled_exponent_matches_physical_time():
    lam = 64.0
    p = ModeParams(lam=lam, sigma=0.25, delta=1.0)
    window = probe_window(lam, 1.0)
    physical = measure_exponent(p, synthesize_hoelder(0.5, 0.25, seed=0), window)
    rescaled = rescaled_exponent(p, cell_coefficient(0.5, 0.25, 0, lam), window, tol=1e-10)
    assert rescaled == pytest.approx(physical, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("lam", [2.0 ** 17, 2.0 ** 20])
def test_resonant_exponent_at_high_frequency(lam):
    c, eps = resonant_coefficient(0.25, 0.1, 1.0, lam, rescaled=True)
    p = ModeParams(lam=lam, sigma=0.25, delta=1.0)
    measured = rescaled_exponent(p, c, probe_window(lam, 1.0), tol=1e-8)
    assert measured == pytest.approx(4.0 * eps * lam - 2.0 * p.damping, rel=1e-5)
    assert measured > 0


def test_lipschitz_cell_coefficient():
    c = cell_coefficient(1.0, 0.25, 0, 64.0)
    assert c.declared_modulus == LipschitzModulus(L=0.25 / 64.0)
    assert (c.declared_mu1, c.declared_mu2) == (0.75, 1.25)
    assert c == cell_coefficient(1.0, 0.25, 0, 64.0)


@pytest.mark.parametrize("lam, sigma", [(100.0, 0.25), (1000.0, 0.25), (64.0, 0.4)])
def test_constant_coefficient_decay_rate(lam, sigma):
    p = ModeParams(lam=lam, sigma=sigma, delta=1.0)
    assert p.damping < lam
    # Adaptive path; whole periods of the damped oscillation
    c = 2.0 * ConstantCoefficient(c0=0.5)
    window = 10 * 2.0 * math.pi / math.sqrt(lam * lam - p.damping ** 2)
    assert measure_exponent(p, c, window) == pytest.approx(-2.0 * p.damping, rel=0.05)


# ==================== Classification ====================


def test_fit_slope():
    assert _fit_slope([2.0], [6.0]) == pytest.approx(3.0)
    assert _fit_slope([1.0, 2.0, 3.0], [3.0, 5.0, 7.0]) == pytest.approx(2.0)


@pytest.mark.parametrize(
    "sigma, alpha, peak, expected",
    [
        (0.25, 0.5, 10.0, "borderline"),
        (0.25, 0.51, -1.0, "borderline"),
        (0.0, 0.3, 0.5, "resonance-dominates"),
        (0.6, 0.5, -1.0, "damping-dominates"),
        (0.0, 0.3, 1e-6, "damping-dominates"),
    ],
)
def test_classify(sigma, alpha, peak, expected):
    assert classify(sigma, alpha, peak) == expected


def test_config_accepts_lipschitz_cells():
    assert SweepConfig(sigma_grid=[0.0], alpha_grid=[1.0]).alpha_grid == [1.0]


def test_config_rejects_bad_grids():
    with pytest.raises(ValidationError):
        SweepConfig(sigma_grid=[0.0], alpha_grid=[1.5])
    with pytest.raises(ValidationError):
        SweepConfig(sigma_grid=[0.0], alpha_grid=[0.0])
    with pytest.raises(ValidationError):
        SweepConfig(sigma_grid=[-0.1], alpha_grid=[0.5])
    with pytest.raises(ValidationError):
        SweepConfig(sigma_grid=[0.0], alpha_grid=[])


# ==================== Sweep ====================


def test_sweep_separates_the_two_regimes(small_sweep):
    cells = {(c.sigma, c.alpha): c for c in small_sweep.cells}
    resonant = cells[(0.0, 0.3)]
    damped = cells[(0.6, 0.3)]

    assert resonant.classification == "resonance-dominates"
    assert {m.source for m in resonant.probes} == {"hoelder", "resonant"}
    assert all(m.exponent > 0 for m in resonant.probes if m.source == "resonant")

    assert damped.classification == "damping-dominates"
    assert {m.source for m in damped.probes} == {"hoelder"}
    assert damped.peak_ratio < 0
    assert small_sweep.counts() == {"resonance-dominates": 1, "damping-dominates": 1}


def test_sweep_exports(small_sweep, tmp_path):
    wide, long = tmp_path / "sweep.csv", tmp_path / "sweep_long.csv"
    write_sweep_csv(small_sweep, str(wide))
    write_sweep_long(small_sweep, str(long))

    rows = list(csv.reader(wide.open()))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 1 + 2 * 2

    rows = list(csv.reader(long.open()))
    assert tuple(rows[0]) == LONG_COLUMNS
    assert len(rows) == 1 + sum(len(c.probes) for c in small_sweep.cells)


def test_integration_failure_makes_cell_inconclusive(monkeypatch):
    def fail(*args, **kwargs):
        raise IntegrationFailure("max-steps", ModeState(t=0.0, u_dir=0.5, v_dir=0.5))

    monkeypatch.setattr(phase_diagram, "measure_exponent", fail)
    cfg = SweepConfig(sigma_grid=[0.0], alpha_grid=[0.3], lambda_probe=[64.0], trials=1)
    verdict = sweep_cell((0.0, 0.3, 1.0), cfg)
    assert verdict.classification == "inconclusive"
    assert "max-steps" in verdict.error
    assert verdict.slope_res is None


def test_lipschitz_cell_shows_no_growth():
    cfg = SweepConfig(sigma_grid=[0.0], alpha_grid=[1.0], lambda_probe=[64.0, 1024.0], trials=2)
    verdict = sweep_cell((0.0, 1.0, 1.0), cfg)
    assert verdict.classification == "borderline"
    assert {m.source for m in verdict.probes} == {"lipschitz"}
    assert len(verdict.probes) == 4
    assert all(m.exponent < 0 for m in verdict.probes)


@pytest.mark.parametrize("cell, expected", [((0.6, 0.9, 1.0), "damping-dominates"), ((0.25, 0.1, 1.0), "resonance-dominates")])
def test_sweep_cell_at_preset_frequencies(cell, expected):
    cfg = SweepConfig(sigma_grid=[cell[0]], alpha_grid=[cell[1]], lambda_probe=[2.0 ** 17, 2.0 ** 20], trials=1)
    verdict = sweep_cell(cell, cfg)
    assert verdict.error is None
    assert verdict.classification == expected


def test_classification_ignores_initial_scale():
    lam = 256.0
    p = ModeParams(lam=lam, sigma=0.25, delta=1.0)
    c = synthesize_hoelder(0.3, 0.25, seed=0)
    window = probe_window(lam, 1.0)
    scale = lam * lam ** -0.3

    def peak(init):
        energies = integrate(p, c, init, (0.0, window)).energies
        return (energies[-1].log_f_weighted - energies[0].log_f_weighted) / window / scale

    base, scaled = peak((0.0, lam)), peak((0.0, lam * math.exp(7.0)))
    assert scaled == pytest.approx(base, abs=1e-9)
    assert classify(0.25, 0.3, scaled) == classify(0.25, 0.3, base)


@pytest.mark.slow
def test_preset_grid_is_conclusive():
    cfg = load_preset("sweep_smoke").parameters
    result = sweep(cfg, jobs=4)
    assert len(result.cells) == 25
    assert "inconclusive" not in result.counts()
    for cell in result.cells:
        line = 1.0 - 2.0 * cell.sigma
        if cell.alpha > line + 0.02:
            assert cell.classification == "damping-dominates", (cell.sigma, cell.alpha)
        elif cell.alpha < line - 0.02:
            assert cell.classification == "resonance-dominates", (cell.sigma, cell.alpha)
            assert any(m.exponent > 0 for m in cell.probes if m.source == "resonant")
        else:
            assert cell.classification == "borderline"
