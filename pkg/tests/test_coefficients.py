import csv

import numpy as np
import pytest
from scipy import integrate

from app.errors import ContractViolation
from app.schemas.coefficient import (
    AffinePiece,
    ConstantCoefficient,
    ConstantPiece,
    GammaPiece,
    LinearCombination,
    PiecewiseCoefficient,
    SampledCoefficient,
    SinePiece,
    parse_coefficient,
)
from app.schemas.spaces import LipschitzModulus
from app.services.coefficients import (
    audit_continuity,
    audit_grid,
    audit_regularization,
    hyperbolicity_class,
    regularize,
    synthesize_hoelder,
    synthesize_lipschitz,
    write_coefficient_csv,
    write_segment_table,
)


def sine_coefficient(amplitude=0.2, frequency=3.0, offset=1.0):
    return PiecewiseCoefficient(
        starts=(0.0,),
        pieces=(SinePiece(offset=offset, amplitude=amplitude, frequency=frequency),),
        declared_mu1=offset - amplitude,
        declared_mu2=offset + amplitude,
        declared_modulus=LipschitzModulus(L=amplitude * frequency),
    )


# ==================== Representations ====================


def test_piecewise_integral_crosses_breakpoints():
    c = PiecewiseCoefficient(starts=(0.0, 1.0), pieces=(ConstantPiece(value=1.0), ConstantPiece(value=3.0)))
    assert c.breakpoints(0.0, 2.0) == [1.0]
    assert c.integral(0.5, 1.5) == pytest.approx(2.0)
    assert c.integral(1.5, 0.5) == pytest.approx(-2.0)
    # Left of the first piece the endpoint value is held
    assert c.value(-5.0) == 1.0


def test_gamma_integral_matches_quadrature():
    c = PiecewiseCoefficient(starts=(0.0,), pieces=(GammaPiece(eps=0.05, lam=7.0, shift=0.01),))
    expected, _ = integrate.quad(c.value, 0.1, 2.3, epsabs=1e-13, limit=500)
    assert c.integral(0.1, 2.3) == pytest.approx(expected, abs=1e-10)


def test_sampled_coefficient_interpolates_and_integrates():
    c = SampledCoefficient(times=(0.0, 1.0, 2.0), values=(1.0, 2.0, 1.0))
    assert c.value(0.5) == pytest.approx(1.5)
    assert c.value(10.0) == 1.0
    assert c.integral(0.0, 2.0) == pytest.approx(3.0)


def test_linear_combination_adds_terms():
    c = ConstantCoefficient(c0=1.0) + sine_coefficient()
    assert isinstance(c, LinearCombination)
    assert c.value(0.0) == pytest.approx(2.0)
    scaled = 2.0 * ConstantCoefficient(c0=0.5)
    assert scaled.value(3.0) == pytest.approx(1.0)
    assert scaled.piece_span(0.0) is None


def test_parse_coefficient_from_record():
    c = parse_coefficient({
        "kind": "piecewise",
        "starts": [0.0, 1.0],
        "pieces": [
            {"shape": "constant", "value": 1.0},
            {"shape": "sine", "offset": 1.0, "amplitude": 0.1, "frequency": 2.0},
        ],
        "declared_mu1": 0.9,
        "declared_mu2": 1.1,
        "declared_modulus": {"kind": "lipschitz", "L": 0.2},
    })
    assert isinstance(c, PiecewiseCoefficient)
    assert c.value(0.5) == 1.0
    assert isinstance(c.declared_modulus, LipschitzModulus)


def test_constant_declares_its_bounds():
    c = ConstantCoefficient(c0=2.0)
    assert (c.declared_mu1, c.declared_mu2) == (2.0, 2.0)


# ==================== Regularization ====================


def test_regularize_constant_is_identity():
    reg = regularize(ConstantCoefficient(c0=1.5), 0.25)
    assert reg.value(3.0) == 1.5
    assert reg.derivative(3.0) == 0.0


def test_regularize_affine_is_forward_average():
    c = PiecewiseCoefficient(starts=(0.0,), pieces=(AffinePiece(value0=1.0, slope=2.0),))
    reg = regularize(c, 0.5)
    assert reg.value(1.0) == pytest.approx(3.5)
    assert reg.derivative(1.0) == pytest.approx(2.0)


def test_regularize_is_linear():
    first = sine_coefficient()
    second = PiecewiseCoefficient(starts=(0.0, 0.7), pieces=(AffinePiece(value0=1.0, slope=2.0), ConstantPiece(value=0.4)))
    combined = regularize(2.0 * first + (-0.5) * second, 0.3)
    parts = regularize(first, 0.3), regularize(second, 0.3)
    for t in np.linspace(0.0, 2.0, 17):
        want = 2.0 * parts[0].value(t) - 0.5 * parts[1].value(t)
        assert combined.value(t) == pytest.approx(want, abs=1e-10)
        want = 2.0 * parts[0].derivative(t) - 0.5 * parts[1].derivative(t)
        assert combined.derivative(t) == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("eps", [0.0, -1.0, float("inf")])
def test_regularize_rejects_bad_window(eps):
    with pytest.raises(ContractViolation):
        regularize(ConstantCoefficient(c0=1.0), eps)


@pytest.mark.parametrize("eps", [0.1, 0.01, 0.001])
def test_regularization_audit_passes_for_lipschitz_sine(eps):
    c = sine_coefficient()
    audit = audit_regularization(regularize(c, eps), audit_grid(c, 0.0, 5.0, 801))
    assert audit.passed
    assert audit.worst_gap <= 0.6 * eps


def test_regularization_audit_needs_modulus():
    with pytest.raises(ContractViolation):
        audit_regularization(regularize(ConstantCoefficient(c0=1.0), 0.1), [0.0, 1.0])


# ==================== Hyperbolicity ====================


def test_hyperbolicity_classes():
    grid = np.linspace(0.0, 10.0, 1001)
    strict = hyperbolicity_class(sine_coefficient(), grid)
    assert strict.kind == "strict"
    assert strict.mu1 == pytest.approx(0.8, abs=1e-4)
    assert hyperbolicity_class(ConstantCoefficient(c0=0.0), grid).kind == "degenerate"
    assert hyperbolicity_class(sine_coefficient(amplitude=1.0, offset=0.0), grid).kind == "none"


def test_hyperbolicity_needs_grid():
    with pytest.raises(ContractViolation):
        hyperbolicity_class(ConstantCoefficient(c0=1.0), [])


# ==================== Synthetic Hoelder coefficients ====================


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_synthesized_coefficient_respects_declared_data(alpha):
    c = synthesize_hoelder(alpha, 0.3, seed=11)
    grid = audit_grid(c, 0.0, 10.0, 8001)
    values = c(grid)
    assert values.min() >= 0.7 - 1e-12
    assert values.max() <= 1.3 + 1e-12
    assert (c.declared_mu1, c.declared_mu2) == pytest.approx((0.7, 1.3))
    assert audit_continuity(c, 0.0, 10.0, samples=8001, pairs=5000, seed=3).passed


def test_synthesized_regularization_audit_passes():
    c = synthesize_hoelder(0.5, 0.25, seed=2)
    audit = audit_regularization(regularize(c, 0.01), audit_grid(c, 0.0, 2.0, 401))
    assert audit.passed


def test_synthesis_is_seeded():
    assert synthesize_hoelder(0.5, 0.3, seed=1) == synthesize_hoelder(0.5, 0.3, seed=1)
    assert synthesize_hoelder(0.5, 0.3, seed=1).phases != synthesize_hoelder(0.5, 0.3, seed=2).phases


def test_zero_spread_is_the_constant_one():
    c = synthesize_hoelder(0.5, 0.0, seed=0)
    assert c.declared_modulus is None
    assert c.value(1.234) == 1.0


@pytest.mark.parametrize(
    "alpha, M, base",
    [(0.0, 0.3, 1.0), (1.0, 0.3, 1.0), (0.5, -0.1, 1.0), (0.5, 1.0, 1.0), (0.5, 0.3, 0.0)],
)
def test_synthesis_contract(alpha, M, base):
    with pytest.raises(ContractViolation):
        synthesize_hoelder(alpha, M, seed=0, base_frequency=base)


def test_lipschitz_synthesis():
    c = synthesize_lipschitz(0.25, seed=4, base_frequency=2.0)
    assert c == synthesize_lipschitz(0.25, seed=4, base_frequency=2.0)
    assert c.declared_modulus == LipschitzModulus(L=0.5)
    assert (c.declared_mu1, c.declared_mu2) == (0.75, 1.25)
    assert audit_continuity(c, 0.0, 10.0, samples=4001, pairs=2000, seed=1).passed
    with pytest.raises(ContractViolation):
        synthesize_lipschitz(1.0, seed=0)


# ==================== Export ====================


def test_coefficient_csv_and_segment_table(tmp_path):
    c = PiecewiseCoefficient(
        starts=(0.0, 1.0),
        pieces=(ConstantPiece(value=1.0), SinePiece(offset=1.0, amplitude=0.1, frequency=2.0)),
    )
    samples = tmp_path / "c.csv"
    write_coefficient_csv(c, str(samples), np.linspace(0.0, 2.0, 5))
    rows = list(csv.reader(samples.open()))
    assert rows[0] == ["t", "c"]
    assert len(rows) == 6
    assert float(rows[1][1]) == 1.0

    table = tmp_path / "pieces.csv"
    write_segment_table(c, str(table))
    rows = list(csv.reader(table.open()))
    assert rows[0] == ["index", "start", "end", "shape", "parameters"]
    assert [r[3] for r in rows[1:]] == ["constant", "sine"]
    assert rows[2][2] == "inf"
