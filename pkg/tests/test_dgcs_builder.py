import csv
import json
import math
import os

import mpmath
import pytest
from pydantic import ValidationError

from app.errors import ConstructionRejected, ContractViolation
from app.schemas.dgcs import DgcsInputs
from app.schemas.spaces import GeometricSpectrum, HoelderModulus, LipschitzModulus, PowerWeight
from app.services.dgcs_builder import (
    SEGMENT_COLUMNS,
    activation_amplitude,
    build_construction,
    export_construction,
    init_modes,
    precheck,
    propagate_and_certify,
)


def quarter_inputs(**overrides) -> DgcsInputs:
    record = dict(
        sigma=0.25,
        delta=1.0,
        omega=HoelderModulus(alpha=0.25),
        phi=PowerWeight(p=0.625),
        psi=PowerWeight(p=0.625),
        spectrum=GeometricSpectrum(base=2.0, start=0),
        k_max=12,
    )
    record.update(overrides)
    return DgcsInputs(**record)


@pytest.fixture(scope="module")
def construction():
    return build_construction(quarter_inputs(), pairs=20_000, seed=0)


@pytest.fixture(scope="module")
def report(construction):
    return propagate_and_certify(construction, 0.1)


# ==================== Hypotheses ====================


def test_inputs_stay_subcritical():
    with pytest.raises(ValidationError):
        quarter_inputs(sigma=0.5)


def test_lipschitz_modulus_is_rejected():
    with pytest.raises(ConstructionRejected) as info:
        precheck(quarter_inputs(omega=LipschitzModulus(L=1.0)))
    assert info.value.inequality == "modulus-beats-critical-power"


def test_weight_too_strong_is_rejected():
    with pytest.raises(ConstructionRejected) as info:
        precheck(quarter_inputs(phi=PowerWeight(p=0.9)))
    assert info.value.inequality == "modulus-beats-phi"


def test_activation_amplitude():
    lam = mpmath.mpf(16)
    expected = math.sqrt((4.0 + 2.0 * 16.0 ** 0.625) * 0.5 / 16.0)
    assert float(activation_amplitude(quarter_inputs(), lam)) == pytest.approx(expected, rel=1e-12)


# ==================== Construction ====================


def test_construction_certifies_enough_modes(construction):
    assert len(construction.certified_modes) >= 6
    assert construction.failures() == []
    assert all(e.passed for e in construction.ledger if e.k >= construction.k0)
    lams = [m.lam for m in construction.modes]
    assert all(b > a for a, b in zip(lams, lams[1:]))
    assert lams[0] >= 1


def test_constructed_coefficient_is_admissible(construction):
    assert construction.continuity.passed
    h = construction.hyperbolicity
    assert h.kind == "strict"
    assert h.measured_inf >= 0.5
    assert h.measured_sup <= 1.5
    assert construction.passed


def test_activation_data(construction):
    inits = init_modes(construction)
    assert [m.k for m in inits] == [m.k for m in construction.certified_modes]
    assert all(m.t == construction.mode(m.k).t for m in inits)


# ==================== Certification ====================


def test_energy_brackets_hold(report):
    assert report.defects() == []
    assert {b.name for b in report.brackets}


def test_series_evidence_supports_loss_of_regularity(report):
    by_test = {(s.test, s.radius): s.verdict for s in report.series}
    for radius in (0.1, 1.0, 10.0):
        assert by_test[("convergence", radius)] == "supported"
        assert by_test[("divergence", radius)] == "supported"
    assert report.passed


def test_series_evidence_lists_excluded_modes(report):
    all_k = sorted(e.k for e in report.modes)
    for s in report.series:
        judged = [k for k, _ in s.terms]
        assert sorted(judged + s.excluded) == all_k
        assert not set(judged) & set(s.excluded)
        if s.test == "convergence":
            assert s.excluded == [k for k in all_k if k <= s.radius]


def test_certification_needs_positive_time(construction):
    with pytest.raises(ContractViolation):
        propagate_and_certify(construction, 0.0)


def test_export(construction, report, tmp_path):
    written = export_construction(construction, str(tmp_path), report)
    names = {os.path.basename(p) for p in written}
    assert {"construction.json", "segments.csv", "divergence.json", "divergence.csv"} <= names

    with open(tmp_path / "construction.json") as handle:
        payload = json.load(handle)
    assert payload["k0"] == construction.k0
    # Frequencies beyond float range survive as decimal strings
    assert isinstance(payload["modes"][-1]["lam"], str)

    with open(tmp_path / "segments.csv") as handle:
        rows = list(csv.reader(handle))
    assert tuple(rows[0]) == SEGMENT_COLUMNS
    assert len(rows) == len(construction.segments) + 1
