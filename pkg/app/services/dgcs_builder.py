"""
Loss-of-regularity construction for the subcritical damped wave equation.

A sparse subsequence of frequencies is selected, and for each selected
lambda_k the coefficient oscillates resonantly on an activation window
[t_k, s_k], pumping the k-th mode from size one to exp(eps_k lambda_k s_k).
Between windows it is affine; before the last window it ramps from 1.

Every quantity lives in mpmath at settings.dgcs_dps digits: the selected
frequencies leave float range after a handful of picks.
"""
import csv
import functools
import logging
import math
import os

import mpmath
import numpy as np

from app.config import settings
from app.errors import ConstructionRejected, ContractViolation, IntegrationFailure
from app.schemas.coefficient import AffinePiece, ConstantPiece, GammaPiece, HyperbolicityClass, PiecewiseCoefficient
from app.schemas.dgcs import (
    DgcsConstruction,
    DgcsInputs,
    DivergenceReport,
    EnergyBracket,
    LedgerEntry,
    ModeEnergy,
    ModeInit,
    PieceContinuityAudit,
    Segment,
    Selection,
    SelectedMode,
    SeriesEvidence,
)
from app.schemas.mode import ModeParams, ModeState
from app.schemas.spaces import ContinuityAudit
from app.schemas.spaces import GeometricSpectrum
from app.services.coefficients import audit_continuity, audit_grid, write_coefficient_csv, write_segment_table
from app.services.mode_solver import closed_form_gamma, energy_record, integrate
from app.services.workers import parallel_map

logger = logging.getLogger(__name__)

# Adjacent pieces must agree to this absolute tolerance
JUNCTION_TOL = 1e-12
# Closed-form and integrated log-energies must agree on the activation window
CROSS_CHECK_TOL = 1e-7
# Doublings tried while galloping through a geometric spectrum
_GALLOP_LIMIT = 256
# The sup over (0, t_k) is taken on a log grid spanning this many decades, then doubled
_SUP_DECADES = 30
_SUP_SAFETY = 2
# Phase samples per half-period of an oscillating piece
_PHASE_POINTS = 256
# Dyadic refinement depth for continuity samples
_SAMPLE_DEPTH = 12
# Spot-check grid for the divergence hypotheses: 10^(-4j), j = 1 .. 64
_PRECHECK_STEPS = 64


# ==================== Sequences ====================


def _mp(value) -> mpmath.mpf:
    return mpmath.mpf(value)


def _weights(inp: DgcsInputs, lam) -> mpmath.mpf:
    """lambda^(2 sigma) + phi(lambda) + psi(lambda)."""
    return lam ** (2 * inp.sigma) + _mp(inp.phi(lam)) + _mp(inp.psi(lam))


def activation_amplitude(inp: DgcsInputs, lam) -> mpmath.mpf:
    """eps = sqrt((lambda^(2 sigma) + phi + psi)(lambda) * omega(1/lambda) / lambda)."""
    return mpmath.sqrt(_weights(inp, lam) * _mp(inp.omega(1 / lam)) / lam)


def _growth(inp: DgcsInputs, lam) -> mpmath.mpf:
    return lam ** (1 + 2 * inp.sigma) * _mp(inp.omega(1 / lam))


def _weight_ratio(inp: DgcsInputs, lam) -> mpmath.mpf:
    scale = lam * _mp(inp.omega(1 / lam))
    return 1 / (lam ** (1 - 2 * inp.sigma) * _mp(inp.omega(1 / lam))) + (_mp(inp.phi(lam)) + _mp(inp.psi(lam))) / scale


def _shift(inp: DgcsInputs, lam) -> mpmath.mpf:
    """delta^2 / lambda^(2 - 4 sigma), the value of c - 1 at both ends of a window."""
    return _mp(inp.delta) ** 2 * lam ** -(2 - 4 * inp.sigma)


def _entry(name: str, stage: str, k: int, lhs, rhs) -> LedgerEntry:
    return LedgerEntry(name=name, stage=stage, k=k, lhs=lhs, rhs=rhs)


# ==================== Hypotheses ====================


def _check_diverges(name: str, ratios: list) -> None:
    if any(b < a for a, b in zip(ratios, ratios[1:])) or ratios[-1] < 10 * ratios[0]:
        raise ConstructionRejected(
            name,
            detail=f"ratio goes from {mpmath.nstr(ratios[0], 6)} to {mpmath.nstr(ratios[-1], 6)}; it must grow without bound",
        )


def precheck(inp: DgcsInputs) -> None:
    """
    Spot-check that omega(e) / e^(1 - 2 sigma) and x omega(1/x) / phi(x),
    x omega(1/x) / psi(x) grow without bound, on a grid reaching 10^-256.

    Raises:
        ConstructionRejected: a ratio is not increasing or grows by less than 10x
    """
    with mpmath.workdps(settings.dgcs_dps):
        small = [_mp(10) ** (-4 * j) for j in range(1, _PRECHECK_STEPS + 1)]
        _check_diverges(
            "modulus-beats-critical-power",
            [_mp(inp.omega(e)) / e ** (1 - 2 * inp.sigma) for e in small],
        )
        for label, weight in (("phi", inp.phi), ("psi", inp.psi)):
            _check_diverges(
                f"modulus-beats-{label}",
                [(1 / e) * _mp(inp.omega(e)) / _mp(weight(1 / e)) for e in small],
            )


# ==================== Selection ====================


def _element(inp: DgcsInputs, j: int) -> mpmath.mpf | None:
    spectrum = inp.spectrum
    if isinstance(spectrum, GeometricSpectrum):
        return spectrum.element(j)
    return _mp(spectrum.lambdas[j]) if j < spectrum.count else None


def selection_entries(inp: DgcsInputs, k: int, lam, prev) -> list[LedgerEntry]:
    """The inequalities a candidate lambda must satisfy against the previous pick."""
    pi2 = mpmath.pi ** 2
    k2 = _mp(k) ** 2
    growth = _growth(inp, lam)
    prev_weights = _weights(inp, prev) * _mp(inp.omega(1 / prev))
    square = _mp(inp.delta) ** 4 / (2 ** 10 * pi2) * prev ** -(2 - 8 * inp.sigma) + 4 * k2 / pi2 * prev ** 2
    return [
        _entry("frequency-gap", "selection", k, 4 * prev, lam),
        _entry("growth-vs-previous-square", "selection", k, square, growth),
        _entry("growth-vs-previous-weights", "selection", k, 4 * k2 / pi2 * prev ** 3 * prev_weights, growth),
        _entry("growth-vs-previous-amplitude", "selection", k, prev * prev_weights, growth),
        _entry("weight-ratio-decay", "selection", k, _weight_ratio(inp, lam), pi2 / (4 * k2 * prev ** 2)),
    ]


def _admissible(entries: list[LedgerEntry]) -> bool:
    # The frequency gap is strict
    return entries[0].margin > 0 and all(e.passed for e in entries[1:])


def _next_pick(inp: DgcsInputs, k: int, prev, j_prev: int) -> tuple[int, list[LedgerEntry]] | None:
    """
    Least base-spectrum index after j_prev whose element passes every selection
    inequality. Explicit spectra are scanned; geometric ones are galloped and
    bisected, relying on the predicates being monotone in lambda.
    """

    def check(j):
        entries = selection_entries(inp, k, _element(inp, j), prev)
        return _admissible(entries), entries

    if not isinstance(inp.spectrum, GeometricSpectrum):
        for j in range(j_prev + 1, inp.spectrum.count):
            ok, entries = check(j)
            if ok:
                return j, entries
        return None

    lo, step = j_prev, 1
    for _ in range(_GALLOP_LIMIT):
        hi = j_prev + step
        ok, entries = check(hi)
        if ok:
            break
        lo, step = hi, step * 2
    else:
        return None

    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok, mid_entries = check(mid)
        if ok:
            hi, entries = mid, mid_entries
        else:
            lo = mid
        logger.debug("k=%d: bisection bracket [%d, %d]", k, lo, hi)
    return hi, entries


def _first_index(inp: DgcsInputs) -> int | None:
    spectrum = inp.spectrum
    if isinstance(spectrum, GeometricSpectrum):
        return max(0, -spectrum.start)
    for j, lam in enumerate(spectrum.lambdas):
        if lam >= 1:
            return j
    return None


def _make_mode(inp: DgcsInputs, k: int, j: int, lam, prev) -> SelectedMode:
    t = 4 * mpmath.pi / lam
    if prev is None:
        return SelectedMode(k=k, index=j, lam=lam, eps=activation_amplitude(inp, lam), t=t)
    turns = mpmath.floor(2 * lam / prev)
    return SelectedMode(
        k=k,
        index=j,
        lam=lam,
        eps=activation_amplitude(inp, lam),
        t=t,
        s=mpmath.pi * turns / lam,
        half_turns=turns - 4,
    )


def _sup_node_ratio(inp: DgcsInputs, t) -> mpmath.mpf:
    """Estimate of sup over (0, t) of x^(1 - 2 sigma) / omega(x), doubled."""
    n = settings.dgcs_sup_points
    best = _mp(0)
    for i in range(n):
        x = t * _mp(10) ** (-_mp(_SUP_DECADES) * i / max(n - 1, 1))
        best = max(best, x ** (1 - 2 * inp.sigma) / _mp(inp.omega(x)))
    return _SUP_SAFETY * best


def large_k_entries(inp: DgcsInputs, mode: SelectedMode, prev: SelectedMode) -> list[LedgerEntry]:
    """The seven inequalities required of every certified index."""
    k, lam, eps, pi = mode.k, mode.lam, mode.eps, mpmath.pi
    delta, sigma = _mp(inp.delta), inp.sigma
    omega_lam = _mp(inp.omega(1 / lam))
    node = delta ** 2 / (4 * pi) ** (2 - 4 * sigma) * (2 * mode.t) ** (1 - 2 * sigma) * _sup_node_ratio(inp, mode.t)
    ramp = 2 * delta ** 2 / (prev.lam ** (2 - 4 * sigma) * _mp(inp.omega(1 / prev.lam)))
    return [
        _entry("coefficient-bound", "large-k", k, _shift(inp, lam) + 16 * eps ** 2 + 8 * eps, _mp(1) / 2),
        _entry("amplitude-cap", "large-k", k, eps, _mp(1) / 4),
        _entry("backward-growth-budget", "large-k", k, 16 * pi * eps + 16 * pi * delta / lam ** (1 - 2 * sigma), 2 * pi),
        _entry("modulus-ratio-small", "large-k", k, _weight_ratio(inp, lam), 1 / (25 * 2 ** 10 * pi ** 2)),
        _entry("node-modulus-sup", "large-k", k, node, _mp(1) / 5),
        _entry("activation-beats-damping", "large-k", k, delta ** 2, lam ** (1 - 2 * sigma) * omega_lam),
        _entry("ramp-modulus", "large-k", k, ramp, _mp(1) / 5),
    ]


def _oscillation_slope(eps, lam) -> mpmath.mpf:
    """Sampled max of |d/dt (-16 eps^2 sin^4(lam t) - 8 eps sin(2 lam t))| over one half-period."""
    best = _mp(0)
    for i in range(_PHASE_POINTS):
        x = mpmath.pi * i / _PHASE_POINTS
        s, c = mpmath.sin(x), mpmath.cos(x)
        best = max(best, abs(-64 * eps ** 2 * s ** 3 * c - 16 * eps * mpmath.cos(2 * x)))
    return lam * best


def _affine_slope(inp: DgcsInputs, mode: SelectedMode, prev: SelectedMode) -> mpmath.mpf:
    return (_shift(inp, prev.lam) - _shift(inp, mode.lam)) / (prev.t - mode.s)


def derived_entries(inp: DgcsInputs, mode: SelectedMode, prev: SelectedMode) -> list[LedgerEntry]:
    """Consequences of the selection and large-k inequalities used by the energy estimates."""
    k, lam, eps, pi = mode.k, mode.lam, mode.eps, mpmath.pi
    delta, sigma = _mp(inp.delta), inp.sigma
    elam, prev_elam = mode.eps_lam, prev.eps_lam
    pump = elam * mode.s
    weights = _weights(inp, lam)
    return [
        _entry("activation-window-lower", "derived", k, prev.t / 4, mode.s),
        _entry("activation-window-upper", "derived", k, mode.s, prev.t / 2),
        _entry("damping-dominated", "derived", k, delta * lam ** (2 * sigma), elam),
        _entry("oscillation-modulus", "derived", k, 32 * pi * eps / _mp(inp.omega(1 / lam)), _mp(1) / 5),
        _entry("activation-energy-budget", "derived", k, delta ** 2 / (32 * prev.lam ** (2 - 4 * sigma)), pump),
        _entry("activation-beats-index", "derived", k, _mp(2 * k), pump),
        _entry("activation-beats-previous", "derived", k, 2 * k * prev_elam, pump),
        _entry("activation-beats-weights", "derived", k, 2 * k * weights, pump),
        _entry("activation-total", "derived", k, k * prev_elam + 2 * k * weights + k, 2 * pump),
        _entry("amplitude-monotone", "derived", k, prev_elam, elam),
        _entry("oscillation-slope", "derived", k, _oscillation_slope(eps, lam), 32 * elam),
        _entry("ramp-slope", "derived", k, abs(_affine_slope(inp, mode, prev)), 32 * elam),
    ]


def select_subsequence(inp: DgcsInputs) -> Selection:
    """
    Greedy least-admissible subsequence of the base spectrum, plus k0.

    k0 is the least index from which every large-k and derived inequality
    holds up to the last pick. That is the scope of the certificate: the
    inequalities are checked for k0 <= k <= K, never for every k.

    Raises:
        ConstructionRejected: the divergence hypotheses fail, fewer than two
            frequencies can be picked, or no k0 exists
    """
    precheck(inp)
    with mpmath.workdps(settings.dgcs_dps):
        j = _first_index(inp)
        if j is None:
            raise ConstructionRejected("spectrum-exhausted", k=1, detail="no base frequency >= 1")
        modes = [_make_mode(inp, 1, j, _element(inp, j), None)]
        ledger: list[LedgerEntry] = []
        partial = False

        for k in range(2, inp.k_max + 1):
            prev = modes[-1]
            pick = _next_pick(inp, k, prev.lam, prev.index)
            if pick is None:
                partial = True
                logger.warning("base spectrum exhausted after %d picks (k_max=%d)", len(modes), inp.k_max)
                break
            j, entries = pick
            mode = _make_mode(inp, k, j, _element(inp, j), prev.lam)
            ledger.extend(entries)
            ledger.extend(large_k_entries(inp, mode, prev))
            ledger.extend(derived_entries(inp, mode, prev))
            modes.append(mode)
            logger.info("picked k=%d at base index %d, log lambda=%s", k, j, mpmath.nstr(mpmath.log(mode.lam), 8))

        if len(modes) < 2:
            raise ConstructionRejected("spectrum-exhausted", k=2, detail="fewer than two admissible frequencies")

        last = modes[-1]
        truncation = _entry("truncation-ramp-modulus", "derived", last.k, _shift(inp, last.lam), _mp(inp.omega(last.t)))
        ledger.append(truncation)

        failing = [e for e in ledger if e.stage != "selection" and not e.passed]
        k0 = max((e.k for e in failing), default=1) + 1
        if k0 > last.k:
            worst = max(failing, key=lambda e: e.k)
            raise ConstructionRejected(
                worst.name,
                k=worst.k,
                detail=f"lhs={mpmath.nstr(worst.lhs, 8)} rhs={mpmath.nstr(worst.rhs, 8)}",
            )
    logger.info("selected %d frequencies, certified from k0=%d", len(modes), k0)
    return Selection(modes=modes, k0=k0, ledger=ledger, partial=partial)


# ==================== Coefficient ====================


def segment_excess(seg: Segment, turns, phase) -> mpmath.mpf:
    """
    c - 1 at a point of a segment.

    Oscillating segments take the point as whole half-turns plus a phase in
    [0, pi); only the phase matters. Other segments take the time offset from
    the segment start as the phase.
    """
    if seg.kind == "oscillation":
        s = mpmath.sin(phase)
        return seg.shift - 16 * seg.eps ** 2 * s ** 4 - 8 * seg.eps * mpmath.sin(2 * phase)
    if seg.kind == "constant":
        return seg.excess0
    return seg.excess0 + seg.slope * phase


def _end_excess(seg: Segment) -> mpmath.mpf:
    if seg.kind == "oscillation":
        return segment_excess(seg, seg.half_turns, _mp(0))
    if seg.kind == "constant":
        return seg.excess0
    return seg.excess0 + seg.slope * seg.length


def assemble_coefficient(selection: Selection, inp: DgcsInputs) -> list[Segment]:
    """
    Pieces of c on [0, +inf), in time order.

    The ramp covers [0, t_K]; then for k = K down to k0 an oscillation on
    [t_k, s_k], an affine join on [s_k, t_(k-1)] when k > k0, and finally the
    constant tail from s_k0. Left of 0 the coefficient is 1.

    Raises:
        ConstructionRejected: two adjacent pieces disagree at their junction
    """
    with mpmath.workdps(settings.dgcs_dps):
        modes = [m for m in selection.modes if m.k >= selection.k0]
        top = modes[-1]
        top_shift = _shift(inp, top.lam)
        segments = [
            Segment(kind="ramp", k=top.k, start=_mp(0), end=top.t, slope=top_shift / top.t),
        ]
        for mode in reversed(modes):
            shift = _shift(inp, mode.lam)
            segments.append(
                Segment(
                    kind="oscillation",
                    k=mode.k,
                    start=mode.t,
                    end=mode.s,
                    eps=mode.eps,
                    lam=mode.lam,
                    shift=shift,
                    half_turns=mode.half_turns,
                )
            )
            if mode.k > selection.k0:
                prev = selection.modes[mode.k - 2]
                segments.append(
                    Segment(
                        kind="affine",
                        k=mode.k,
                        start=mode.s,
                        end=prev.t,
                        excess0=shift,
                        slope=_affine_slope(inp, mode, prev),
                    )
                )
        bottom = modes[0]
        segments.append(Segment(kind="constant", k=bottom.k, start=bottom.s, excess0=_shift(inp, bottom.lam)))

        for left, right in zip(segments, segments[1:]):
            gap = abs(_end_excess(left) - segment_excess(right, _mp(0), _mp(0)))
            if gap > JUNCTION_TOL:
                raise ConstructionRejected(
                    "junction-continuity",
                    k=right.k,
                    detail=f"{left.kind} -> {right.kind} mismatch {mpmath.nstr(gap, 6)}",
                )
    return segments


def float_view(segments: list[Segment], inp: DgcsInputs) -> PiecewiseCoefficient | None:
    """
    The float-representable suffix of the coefficient as a PiecewiseCoefficient.

    Pieces too close to 0 for doubles are dropped from the front; the result
    is exact on [starts[0], +inf) and constant to the left. None when no
    piece fits.
    """
    starts: list[float] = []
    pieces = []
    for seg in segments:
        start = float(seg.start)
        if seg.kind == "oscillation":
            piece = GammaPiece(eps=float(seg.eps), lam=float(seg.lam), shift=float(seg.shift), origin=start)
            finite = math.isfinite(piece.lam) and piece.lam > 0
        elif seg.kind == "constant":
            piece = ConstantPiece(value=1.0 + float(seg.excess0))
            finite = True
        else:
            piece = AffinePiece(origin=start, value0=1.0 + float(seg.excess0), slope=float(seg.slope))
            finite = math.isfinite(piece.slope)
        visible = finite and (start > 0 or seg.kind == "ramp") and (not starts or start > starts[-1])
        if not visible:
            starts.clear()
            pieces.clear()
            continue
        starts.append(start)
        pieces.append(piece)
    if not pieces:
        return None
    return PiecewiseCoefficient(
        starts=tuple(starts),
        pieces=tuple(pieces),
        declared_mu1=0.5,
        declared_mu2=1.5,
        declared_modulus=inp.omega,
    )


def construction_hyperbolicity(segments: list[Segment]) -> HyperbolicityClass:
    """Measured range of c over every piece, with the declared bounds [1/2, 3/2]."""
    with mpmath.workdps(settings.dgcs_dps):
        values = [_mp(0)]  # c = 1 left of the ramp
        for seg in segments:
            if seg.kind == "oscillation":
                values.extend(segment_excess(seg, 0, mpmath.pi * i / _PHASE_POINTS) for i in range(_PHASE_POINTS))
            else:
                values.extend([segment_excess(seg, 0, _mp(0)), _end_excess(seg)])
        lo, hi = 1.0 + float(min(values)), 1.0 + float(max(values))
    kind = "strict" if lo > 0 else ("degenerate" if lo == 0 else "none")
    return HyperbolicityClass(kind=kind, mu1=0.5, mu2=1.5, measured_inf=lo, measured_sup=hi)


# ==================== Piece-aware continuity ====================


def _segment_samples(seg: Segment, i: int) -> list[tuple[int, mpmath.mpf, mpmath.mpf]]:
    """Sample points (segment, half-turns, phase) clustered at dyadic scales near the ends."""
    halves = [_mp(2) ** -d for d in range(1, _SAMPLE_DEPTH + 1)]
    if seg.kind == "oscillation":
        pi = mpmath.pi
        phases = [pi * j / 16 for j in range(16)]
        phases += [a + pi * h for a in (_mp(0), pi / 4, pi / 2) for h in halves]
        points = [(i, _mp(turns), x) for turns in (0, 1, seg.half_turns - 1) for x in phases]
        points.append((i, seg.half_turns, _mp(0)))
        return points
    if seg.kind == "constant":
        return [(i, _mp(0), _mp(0)), (i, _mp(0), _mp(1))]
    length = seg.length
    offsets = [_mp(0), length] + [length * h for h in halves] + [length - length * h for h in halves]
    return [(i, _mp(0), x) for x in offsets]


def _offset(seg: Segment, turns, phase) -> mpmath.mpf:
    if seg.kind == "oscillation":
        return (turns * mpmath.pi + phase) / seg.lam
    return phase


def _remaining(seg: Segment, turns, phase) -> mpmath.mpf:
    if seg.kind == "oscillation":
        return ((seg.half_turns - turns) * mpmath.pi - phase) / seg.lam
    return seg.length - phase


def _distance(segments: list[Segment], a, b) -> mpmath.mpf:
    """|t_b - t_a| for points a <= b, measured from the piece structure."""
    seg_a, seg_b = segments[a[0]], segments[b[0]]
    if a[0] == b[0]:
        if seg_a.kind == "oscillation":
            return abs((b[1] - a[1]) * mpmath.pi + b[2] - a[2]) / seg_a.lam
        return abs(b[2] - a[2])
    return _remaining(seg_a, a[1], a[2]) + (seg_b.start - seg_a.end) + _offset(seg_b, b[1], b[2])


def piece_continuity_audit(
    segments: list[Segment],
    inp: DgcsInputs,
    pairs: int | None = None,
    seed: int = 0,
) -> PieceContinuityAudit:
    """
    Worst |c(t) - c(s)| / omega(|t - s|) over structurally placed samples.

    Checked pairs: every adjacent sample, every piece's two ends, and `pairs`
    seeded random pairs. Points sit in (piece, half-turns, phase) form, so
    separations far below double resolution are exact.
    """
    pairs = settings.continuity_pairs if pairs is None else pairs
    with mpmath.workdps(settings.dgcs_dps):
        points = [p for i, seg in enumerate(segments) for p in _segment_samples(seg, i)]
        points.sort(key=lambda p: (p[0], p[1], p[2]))
        excess = [segment_excess(segments[p[0]], p[1], p[2]) for p in points]

        candidates = [(n, n + 1) for n in range(len(points) - 1)]
        firsts: dict[int, int] = {}
        for n, p in enumerate(points):
            firsts.setdefault(p[0], n)
        lasts = {p[0]: n for n, p in enumerate(points)}
        candidates += [(firsts[i], lasts[i]) for i in firsts]
        rng = np.random.default_rng(seed)
        drawn = rng.integers(0, len(points), size=(pairs, 2))
        candidates += [(int(min(x, y)), int(max(x, y))) for x, y in drawn if x != y]

        worst, worst_pair, checked = _mp(0), None, 0
        for left, right in candidates:
            d = _distance(segments, points[left], points[right])
            if d <= 0:
                continue
            ratio = abs(excess[left] - excess[right]) / _mp(inp.omega(d))
            checked += 1
            if ratio > worst:
                worst, worst_pair = ratio, (left, right)

    label = None
    if worst_pair is not None:
        segs = [segments[points[n][0]] for n in worst_pair]
        label = (f"{segs[0].kind}:{segs[0].k}", f"{segs[1].kind}:{segs[1].k}")
    return PieceContinuityAudit(worst_ratio=float(worst), worst_pair=label, pairs_checked=checked)


def _float_window(view: PiecewiseCoefficient) -> tuple[float, float]:
    """From the first visible piece to twice the start of the constant tail."""
    a, last = view.starts[0], view.starts[-1]
    return a, (2.0 * last if last > a else a + 1.0)


def float_continuity_audit(
    segments: list[Segment],
    inp: DgcsInputs,
    pairs: int | None = None,
    seed: int = 0,
) -> ContinuityAudit | None:
    """Sampled omega-continuity audit of the float-visible part; None when nothing is visible."""
    view = float_view(segments, inp)
    if view is None:
        return None
    a, b = _float_window(view)
    return audit_continuity(view, a, b, pairs=pairs, seed=seed)


def build_construction(inp: DgcsInputs, pairs: int | None = None, seed: int = 0) -> DgcsConstruction:
    """Select, assemble and audit; the result carries its own pass/fail in .passed."""
    selection = select_subsequence(inp)
    segments = assemble_coefficient(selection, inp)
    continuity = piece_continuity_audit(segments, inp, pairs=pairs, seed=seed)
    hyperbolicity = construction_hyperbolicity(segments)
    float_continuity = float_continuity_audit(segments, inp, pairs=pairs, seed=seed)
    if float_continuity is not None and not float_continuity.passed:
        logger.warning("sampled continuity ratio %.3g on the float-visible part", float_continuity.worst_ratio)
    construction = DgcsConstruction(
        inputs=inp,
        modes=selection.modes,
        k0=selection.k0,
        segments=segments,
        ledger=selection.ledger,
        partial=selection.partial,
        continuity=continuity,
        float_continuity=float_continuity,
        hyperbolicity=hyperbolicity,
    )
    logger.info(
        "construction: %d certified modes, continuity ratio %.3g, c in [%.4f, %.4f]",
        len(construction.certified_modes),
        continuity.worst_ratio,
        hyperbolicity.measured_inf,
        hyperbolicity.measured_sup,
    )
    return construction


# ==================== Modes ====================


def init_modes(cons: DgcsConstruction) -> list[ModeInit]:
    """
    Activation data of every certified mode: u_k(t_k) = 0 and
    u_k'(t_k) = lambda_k exp((2 eps_k lambda_k - delta lambda_k^(2 sigma)) t_k),
    amplitude a_k = exp(-k phi(lambda_k)) / (k lambda_k).
    """
    inp = cons.inputs
    with mpmath.workdps(settings.dgcs_dps):
        return [
            ModeInit(
                k=m.k,
                t=m.t,
                log_velocity=mpmath.log(m.lam) + _pump_rate(inp, m) * m.t,
                log_amplitude=log_amplitude(inp, m.k, m.lam),
            )
            for m in cons.certified_modes
        ]


def log_amplitude(inp: DgcsInputs, k: int, lam) -> mpmath.mpf:
    with mpmath.workdps(settings.dgcs_dps):
        lam = _mp(lam)
        return -mpmath.log(k) - mpmath.log(lam) - k * _mp(inp.phi(lam))


def _damping(inp: DgcsInputs, lam) -> mpmath.mpf:
    return _mp(inp.delta) * lam ** (2 * inp.sigma)


def _pump_rate(inp: DgcsInputs, mode: SelectedMode) -> mpmath.mpf:
    """2 eps lambda - delta lambda^(2 sigma), the growth rate of the resonant solution."""
    return 2 * mode.eps_lam - _damping(inp, mode.lam)


# ==================== Propagation ====================


def rescaled_coefficient(cons: DgcsConstruction, mode: SelectedMode, lo, hi) -> PiecewiseCoefficient | None:
    """
    c(tau / lambda_k) on [lo, hi] in the rescaled time tau = lambda_k t.

    None when a piece is not float-representable in rescaled time or the
    span holds more oscillation periods than settings.dgcs_oscillation_budget.
    """
    lam = mode.lam
    periods = (hi - lo) * lam / (2 * mpmath.pi)
    starts: list[float] = []
    pieces = []
    for seg in cons.segments:
        end = seg.end if seg.end is not None else mpmath.inf
        if end <= lo or seg.start >= hi:
            continue
        origin = float(seg.start * lam)
        if seg.kind == "oscillation":
            ratio = seg.lam / lam
            periods += (min(end, hi) - max(seg.start, lo)) * seg.lam / mpmath.pi
            piece = GammaPiece(eps=float(seg.eps), lam=float(ratio), shift=float(seg.shift), origin=origin)
            finite = math.isfinite(piece.lam) and piece.lam > 0
        elif seg.kind == "constant":
            piece = ConstantPiece(value=1.0 + float(seg.excess0))
            finite = True
        else:
            piece = AffinePiece(origin=origin, value0=1.0 + float(seg.excess0), slope=float(seg.slope / lam))
            finite = math.isfinite(piece.slope)
        if not (finite and math.isfinite(origin)) or (starts and origin <= starts[-1]):
            return None
        starts.append(origin)
        pieces.append(piece)
    if not pieces or periods > settings.dgcs_oscillation_budget:
        return None
    return PiecewiseCoefficient(starts=tuple(starts), pieces=tuple(pieces))


def _rescaled_params(inp: DgcsInputs, mode: SelectedMode) -> ModeParams:
    # lambda = 1 and the damping becomes delta lambda_k^(2 sigma - 1)
    return ModeParams(lam=1.0, sigma=0.0, delta=float(_mp(inp.delta) * mode.lam ** (2 * inp.sigma - 1)))


def _cross_check(inp: DgcsInputs, mode: SelectedMode) -> EnergyBracket:
    """Integrated vs closed-form log-energy over the first periods of the activation window."""
    params = _rescaled_params(inp, mode)
    shift = float(_shift(inp, mode.lam))
    eps = float(mode.eps)
    coef = PiecewiseCoefficient(starts=(0.0,), pieces=(GammaPiece(eps=eps, lam=1.0, shift=shift),))
    tau0 = 4.0 * math.pi
    tau1 = tau0 + math.pi * float(min(_mp(settings.dgcs_cross_check_periods), mode.half_turns))
    start, _ = closed_form_gamma(eps, 1.0, params.delta, 0.0, tau0)
    numeric = integrate(params, coef, start, (tau0, tau1)).energies[-1]
    exact, _ = closed_form_gamma(eps, 1.0, params.delta, 0.0, tau1)
    gap = abs(numeric.log_e_classic - energy_record(params, coef, exact).log_e_classic)
    return EnergyBracket(
        k=mode.k,
        name="closed-form-agreement",
        direction="upper",
        measured=gap,
        bound=CROSS_CHECK_TOL,
        source="integrated",
    )


def _initial_energy(cons: DgcsConstruction, mode: SelectedMode, log_f_start) -> tuple:
    """log E_k(0) from the activation data at t_k, integrated backward when affordable."""
    inp = cons.inputs
    rate = _damping(inp, mode.lam) * 4 + mode.lam / 2
    envelope = log_f_start + rate * mode.t
    coef = rescaled_coefficient(cons, mode, _mp(0), mode.t)
    if coef is None:
        return envelope, "envelope", []

    params = _rescaled_params(inp, mode)
    tau_k = float(mode.t * mode.lam)
    try:
        trajectory = integrate(params, coef, ModeState.from_values(tau_k, 0.0, 1.0), (tau_k, 0.0))
    except IntegrationFailure as exc:
        logger.warning("k=%d: backward integration failed (%s); using the envelope", mode.k, exc.reason)
        return envelope, "envelope", []

    # Energy never grows faster than (4 delta~ + 1/2) backward in rescaled time
    slope = 4.0 * params.delta + 0.5
    worst = max(e.log_e_classic - slope * (tau_k - e.t) for e in trajectory.energies)
    bracket = EnergyBracket(
        k=mode.k,
        name="backward-envelope",
        direction="upper",
        measured=worst,
        bound=0,
        source="integrated",
    )
    return log_f_start + trajectory.energies[-1].log_e_classic, "integrated", [bracket]


def _forward_energy(cons: DgcsConstruction, mode: SelectedMode, log_f_s, t_eval) -> tuple:
    """Lower bound or measurement of log F_k(t_eval) from the state at s_k."""
    inp = cons.inputs
    prev = cons.mode(mode.k - 1)
    coef = rescaled_coefficient(cons, mode, mode.s, t_eval)
    if coef is not None:
        params = _rescaled_params(inp, mode)
        tau_s, tau_e = float(mode.s * mode.lam), float(t_eval * mode.lam)
        try:
            trajectory = integrate(params, coef, ModeState.from_values(tau_s, 0.0, 1.0), (tau_s, tau_e))
            return log_f_s + trajectory.energies[-1].log_f_weighted, "integrated"
        except IntegrationFailure as exc:
            logger.warning("k=%d: forward integration failed (%s); using the envelope", mode.k, exc.reason)

    damping = 4 * _damping(inp, mode.lam)
    if mode.k == cons.k0:
        # c is constant after s_k0
        return log_f_s - damping * (t_eval - mode.s), "envelope"
    at_join = log_f_s - damping * (prev.t - mode.s)
    return at_join - (damping + 64 * prev.eps_lam) * (t_eval - prev.t), "envelope"


def propagate_mode(mode: SelectedMode, cons: DgcsConstruction, t_eval: float) -> tuple[ModeEnergy, list[EnergyBracket]]:
    """Energies and brackets of one certified mode."""
    inp = cons.inputs
    with mpmath.workdps(settings.dgcs_dps):
        t_eval = _mp(t_eval)
        log_lam2 = 2 * mpmath.log(mode.lam)
        rate = _pump_rate(inp, mode)
        log_f_t = log_lam2 + 2 * rate * mode.t  # u(t_k) = 0, so F = E = |u'|^2
        log_f_s = log_lam2 + 2 * rate * mode.s  # sin vanishes at s_k as well

        log_e0, e0_source, brackets = _initial_energy(cons, mode, log_f_t)
        brackets.append(_cross_check(inp, mode))
        brackets.append(
            EnergyBracket(
                k=mode.k,
                name="initial-energy",
                direction="upper",
                measured=log_e0,
                bound=log_lam2 + 4 * mpmath.pi,
                source=e0_source,
            )
        )
        brackets.append(
            EnergyBracket(
                k=mode.k,
                name="activation-growth",
                direction="lower",
                measured=log_f_s,
                bound=log_lam2 + 2 * mode.eps_lam * mode.s,
                source="closed-form",
            )
        )

        energy = ModeEnergy(
            k=mode.k,
            log_e_initial=log_e0,
            initial_source=e0_source,
            log_f_activation=log_f_s,
        )
        prev = cons.mode(mode.k - 1)
        if t_eval >= prev.t:
            log_f_eval, source = _forward_energy(cons, mode, log_f_s, t_eval)
            energy.log_f_eval, energy.eval_source = log_f_eval, source
            persistence = log_lam2 + 2 * mode.eps_lam * mode.s - (8 * _damping(inp, mode.lam) + 64 * prev.eps_lam) * t_eval
            brackets.append(
                EnergyBracket(
                    k=mode.k,
                    name="persistence",
                    direction="lower",
                    measured=log_f_eval,
                    bound=persistence,
                    source=source,
                )
            )
    return energy, brackets


def _strictly(values: list, increasing: bool) -> bool:
    pairs = list(zip(values, values[1:]))
    return all((b > a) if increasing else (b < a) for a, b in pairs)


def series_evidence(cons: DgcsConstruction, energies: list[ModeEnergy], r_grid, R_grid) -> list[SeriesEvidence]:
    """
    Log terms of the data series (must eventually decrease) and of the
    solution series at t_eval (must eventually increase past k - 2 log k).

    Convergence is judged on k > r, divergence on the last three propagated
    modes; every mode left out is listed in the record.
    """
    inp = cons.inputs
    evidence = []
    with mpmath.workdps(settings.dgcs_dps):
        by_k = {e.k: e for e in energies}
        logs_a = {k: 2 * log_amplitude(inp, k, cons.mode(k).lam) for k in by_k}

        for r in r_grid:
            terms = [
                (k, logs_a[k] + e.log_e_initial + 2 * r * _mp(inp.phi(cons.mode(k).lam)))
                for k, e in sorted(by_k.items())
                if k > r
            ]
            excluded = [k for k in sorted(by_k) if k <= r]
            if len(terms) < 2:
                verdict = "inconclusive"
            else:
                verdict = "supported" if _strictly([v for _, v in terms], increasing=False) else "refuted"
            evidence.append(
                SeriesEvidence(test="convergence", radius=r, terms=terms, verdict=verdict, excluded=excluded)
            )

        active = [e for _, e in sorted(by_k.items()) if e.log_f_eval is not None][-3:]
        active_k = {e.k for e in active}
        dropped = [k for k in sorted(by_k) if k not in active_k]
        for R in R_grid:
            terms = [
                (e.k, logs_a[e.k] + e.log_f_eval - 2 * R * _mp(inp.psi(cons.mode(e.k).lam)))
                for e in active
            ]
            if len(terms) < 3:
                verdict = "inconclusive"
            else:
                last_k, last = terms[-1]
                grows = _strictly([v for _, v in terms], increasing=True)
                verdict = "supported" if grows and last >= last_k - 2 * mpmath.log(last_k) else "refuted"
            evidence.append(
                SeriesEvidence(test="divergence", radius=R, terms=terms, verdict=verdict, excluded=dropped)
            )
    return evidence


def propagate_and_certify(
    cons: DgcsConstruction,
    t_eval: float,
    R_grid=(0.1, 1.0, 10.0),
    r_grid=(0.1, 1.0, 10.0),
    jobs: int | None = None,
    slack: float | None = None,
) -> DivergenceReport:
    """
    Propagate every certified mode and collect the divergence evidence at t_eval.

    Each energy is taken from the most exact source available: closed form
    on the activation window, numeric integration in rescaled time when the
    span fits the oscillation budget, and the proven differential-inequality
    envelopes otherwise.
    """
    if not t_eval > 0:
        raise ContractViolation("t_eval must be positive")
    slack = settings.audit_slack if slack is None else slack
    results = parallel_map(
        functools.partial(propagate_mode, cons=cons, t_eval=t_eval),
        cons.certified_modes,
        jobs=jobs,
    )
    energies = [energy for energy, _ in results]
    brackets = [b for _, mode_brackets in results for b in mode_brackets]
    report = DivergenceReport(
        t_eval=t_eval,
        modes=energies,
        brackets=brackets,
        series=series_evidence(cons, energies, r_grid, R_grid),
        slack=slack,
    )
    for defect in report.defects():
        logger.warning("k=%d: bracket %s violated (margin %s)", defect.k, defect.name, mpmath.nstr(defect.margin, 6))
    return report


# ==================== Export ====================


SEGMENT_COLUMNS = ("kind", "k", "start", "end", "excess0", "slope", "eps", "lam", "shift", "half_turns")


def write_segment_csv(cons: DgcsConstruction, path: str) -> None:
    """One row per piece of the constructed coefficient; numbers as decimal strings."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SEGMENT_COLUMNS)
        for seg in cons.segments:
            record = seg.model_dump()
            writer.writerow([record[column] for column in SEGMENT_COLUMNS])


def write_divergence_csv(report: DivergenceReport, path: str) -> None:
    """One row per mode: k, log E_k(0), log F_k(t_eval) and their sources."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["k", "logE0", "logE0_source", "logF_activation", "logF_t", "logF_t_source"])
        for mode in report.modes:
            record = mode.model_dump()
            writer.writerow([
                record["k"],
                record["log_e_initial"],
                record["initial_source"],
                record["log_f_activation"],
                record["log_f_eval"] if record["log_f_eval"] is not None else "",
                record["eval_source"] or "",
            ])


def export_construction(cons: DgcsConstruction, directory: str, report: DivergenceReport | None = None) -> list[str]:
    """
    Write construction.json and segments.csv, the float view as coefficient_pieces.csv
    and a sampled coefficient.csv, and, when given, divergence.json/csv. Returns the paths.
    """
    os.makedirs(directory, exist_ok=True)
    written = []
    path = os.path.join(directory, "construction.json")
    with open(path, "w") as handle:
        handle.write(cons.model_dump_json(indent=2))
    written.append(path)
    path = os.path.join(directory, "segments.csv")
    write_segment_csv(cons, path)
    written.append(path)
    view = float_view(cons.segments, cons.inputs)
    if view is not None:
        path = os.path.join(directory, "coefficient_pieces.csv")
        write_segment_table(view, path)
        written.append(path)
        path = os.path.join(directory, "coefficient.csv")
        write_coefficient_csv(view, path, audit_grid(view, *_float_window(view)))
        written.append(path)
    if report is not None:
        path = os.path.join(directory, "divergence.json")
        with open(path, "w") as handle:
            handle.write(report.model_dump_json(indent=2))
        written.append(path)
        path = os.path.join(directory, "divergence.csv")
        write_divergence_csv(report, path)
        written.append(path)
    return written
