import functools
import logging
import math

import numpy as np
from scipy.special import logsumexp

from app.config import settings
from app.errors import ContractViolation, PreconditionFailed
from app.schemas.audit import BoundAudit, FamilyAudit, FrequencySplit, LemmaReport, NormSample, SkippedAudit
from app.schemas.coefficient import Coefficient, HyperbolicityClass
from app.schemas.mode import ModeParams, ModeState, Trajectory
from app.schemas.spaces import ModeVector, NormSign, PowerWeight, SpectralSequence, WeightedNorm
from app.services.coefficients import hyperbolicity_class, regularize
from app.services.mode_solver import integrate
from app.services.spaces import norm_squared
from app.services.workers import parallel_map

logger = logging.getLogger(__name__)

# Strict inequality delta lambda^(4 sigma - 2) > r mu2 is kept by this relative margin
_STRICT_MARGIN = 1e-10
_BISECTION_RTOL = 1e-10
# Tolerance when comparing sampled coefficient values with declared bounds
_BOUND_TOL = 1e-12


# ==================== Log-space helpers ====================


def _logsum(*terms: float) -> float:
    """log of a sum of exponentials; -inf when every term is -inf."""
    finite = [t for t in terms if t > -math.inf]
    if not finite:
        return -math.inf
    return float(logsumexp(finite))


def _log_sq(x: float) -> float:
    return 2.0 * math.log(abs(x)) if x != 0 else -math.inf


def _state_logs(state: ModeState) -> tuple[float, float]:
    """(log |u|^2, log |u'|^2) of a renormalized state."""
    lu = 2.0 * (math.log(abs(state.u_dir)) + state.log_scale) if state.u_dir != 0 else -math.inf
    lv = 2.0 * (math.log(abs(state.v_dir)) + state.log_scale) if state.v_dir != 0 else -math.inf
    return lu, lv


def _log_coef(value: float) -> float:
    return math.log(value) if value > 0 else -math.inf


# ==================== Sampling ====================


def sample_times(c: Coefficient, horizon: float, count: int | None = None) -> list[float]:
    """
    Audit times: 0, count log-spaced times up to horizon, and every
    coefficient breakpoint inside [0, horizon].
    """
    if not horizon > 0:
        raise ContractViolation("horizon must be positive")
    count = settings.sample_count if count is None else count
    grid = np.geomspace(horizon * 1e-4, horizon, count)
    return sorted({0.0, *map(float, grid), *c.breakpoints(0.0, horizon)})


def _cumulative_integrals(c: Coefficient, times: list[float], absolute: bool = False) -> list[float]:
    """Integral of c (or |c|) over [0, t] for every t in times (sorted, starting at 0)."""
    total, out, prev = 0.0, [], 0.0
    for t in times:
        if t > prev:
            total += c.abs_integral(prev, t) if absolute else c.integral(prev, t)
        out.append(total)
        prev = t
    return out


def _check_upper_bound(c: Coefficient, times: list[float]) -> HyperbolicityClass:
    measured = hyperbolicity_class(c, times, tol=_BOUND_TOL)
    if measured.measured_sup > c.declared_mu2 + _BOUND_TOL:
        raise PreconditionFailed(
            "coefficient-upper-bound", measured.measured_sup, c.declared_mu2,
            "sampled c exceeds the declared mu2",
        )
    return measured


# ==================== Decay radii ====================


def sup_radius_gaps(p: ModeParams, mu2: float, r: float) -> dict[str, float]:
    """
    Slack of the three conditions on a supercritical decay radius r:
    delta lambda^(4 sigma - 2) > r mu2, 2 delta r <= 1 and
    4 delta^2 lambda^(4 sigma - 2) >= (1 + 2 r delta) mu2. All must be >= 0.
    """
    scale = p.lam ** (4.0 * p.sigma - 2.0)
    return {
        "radius-below-damping": p.delta * scale - r * mu2,
        "radius-below-half-inverse-damping": 1.0 - 2.0 * p.delta * r,
        "radius-threshold": 4.0 * p.delta ** 2 * scale - (1.0 + 2.0 * r * p.delta) * mu2,
    }


def largest_sup_radius(p: ModeParams, mu2: float) -> float | None:
    """
    Largest r satisfying all three supercritical radius conditions, or None.

    r* = min(1 / (2 delta), delta lambda^(4 sigma - 2) / mu2,
             (4 delta^2 lambda^(4 sigma - 2) / mu2 - 1) / (2 delta)),
    with the strict condition kept by a relative margin. When mu2 = 0 only
    the first term applies.
    """
    if p.delta <= 0:
        return None
    candidates = [1.0 / (2.0 * p.delta)]
    if mu2 > 0:
        scale = p.lam ** (4.0 * p.sigma - 2.0)
        candidates.append((1.0 - _STRICT_MARGIN) * p.delta * scale / mu2)
        candidates.append((4.0 * p.delta ** 2 * scale / mu2 - 1.0) / (2.0 * p.delta))
    r = min(candidates)
    return r if r > 0 else None


def sub_lambda_term(p: ModeParams, c: Coefficient) -> float:
    """lambda^(1 - 2 sigma) omega(1 / lambda) for the declared modulus of c."""
    if c.declared_modulus is None:
        raise ContractViolation("subcritical estimates need a declared continuity modulus")
    return p.lam ** (1.0 - 2.0 * p.sigma) * float(c.declared_modulus(1.0 / p.lam))


def sub_threshold_gap(delta: float, mu1: float, term: float) -> float:
    """4 delta^2 mu1 - term^2 - 2 delta term; nonnegative when the lambda threshold holds."""
    return 4.0 * delta ** 2 * mu1 - term ** 2 - 2.0 * delta * term


def sub_decay_gap(delta: float, mu1: float, mu2: float, term: float, r: float) -> float:
    """
    4 (delta - r)(delta mu1 - r mu2) - term^2 - 2 delta (1 + 2 r) term - 8 r delta^3.

    A decay radius r in (0, delta) is admissible when this is >= 0.
    """
    return (
        4.0 * (delta - r) * (delta * mu1 - r * mu2)
        - term ** 2
        - 2.0 * delta * (1.0 + 2.0 * r) * term
        - 8.0 * r * delta ** 3
    )


def largest_sub_radius(delta: float, mu1: float, mu2: float, term: float) -> float | None:
    """
    Largest admissible subcritical decay radius, found by bisection.

    The gap decreases on [0, min(delta, delta mu1 / mu2)], so bisection on
    that bracket converges; the returned value is the feasible end of the
    final bracket. None when no positive radius is admissible.
    """
    if delta <= 0 or sub_decay_gap(delta, mu1, mu2, term, 0.0) <= 0:
        return None
    lo, hi = 0.0, min(delta, delta * mu1 / mu2) if mu2 > 0 else delta
    while hi - lo > _BISECTION_RTOL * hi:
        mid = (lo + hi) / 2.0
        if sub_decay_gap(delta, mu1, mu2, term, mid) >= 0:
            lo = mid
        else:
            hi = mid
    logger.debug("subcritical radius bracket [%.12g, %.12g]", lo, hi)
    return lo if lo > 0 else None


# ==================== Per-mode lemmas ====================


def _run(p: ModeParams, c: Coefficient, init: tuple[float, float], times: list[float], approx=None) -> Trajectory:
    return integrate(p, c, init, (0.0, times[-1]), t_eval=times, approx=approx)


def _monotone_audits(name: str, times: list[float], logs: list[float]) -> list[BoundAudit]:
    return [
        BoundAudit(bound_name=name, lhs=logs[i], rhs=logs[i - 1], time=times[i])
        for i in range(1, len(logs))
    ]


def verify_sup_lemma(
    p: ModeParams,
    c: Coefficient,
    init: tuple[float, float],
    horizon: float,
    alpha: float | None = None,
    beta: float | None = None,
    r: float | None = None,
    times: list[float] | None = None,
) -> LemmaReport:
    """
    Audit the supercritical energy estimates on one mode.

    Always checks the displacement and velocity bounds and that the
    Kovaleskyan energy never increases. With lambda >= 1, sigma >= 1/2 and
    1 - sigma <= alpha - beta <= sigma it also checks the weighted energy
    bound, and, when a decay radius exists, its exponentially decaying
    version with rate 2 r lambda^(2 (1 - sigma)) C(t), C(t) = integral of c.

    Raises:
        PreconditionFailed: 4 delta^2 lambda^(4 sigma - 2) < mu2, or sampled c
            negative or above mu2
    """
    times = sample_times(c, horizon) if times is None else times
    mu2 = c.declared_mu2
    threshold = 4.0 * p.delta ** 2 * p.lam ** (4.0 * p.sigma - 2.0)
    if p.delta <= 0 or threshold < mu2:
        raise PreconditionFailed("supercritical-threshold", threshold, mu2)
    measured = _check_upper_bound(c, times)
    if measured.kind == "none":
        raise PreconditionFailed("degenerate-hyperbolicity", measured.measured_inf, 0.0)

    u0, u1 = init
    lu0, lu1 = _log_sq(u0), _log_sq(u1)
    log_lam, log_delta = math.log(p.lam), math.log(p.delta)
    log_mu2 = _log_coef(mu2)
    sigma = p.sigma

    rhs_u = _logsum(math.log(2.0) - 2.0 * log_delta - 4.0 * sigma * log_lam + lu1, math.log(3.0) + lu0)
    rhs_v = _logsum(
        _logsum(math.log(2.0), 2.0 * log_mu2 - 4.0 * log_delta - (8.0 * sigma - 4.0) * log_lam) + lu1,
        math.log(1.5) + 2.0 * log_mu2 - 2.0 * log_delta - (4.0 * sigma - 4.0) * log_lam + lu0,
    )

    report = LemmaReport(lemma="supercritical", lam=p.lam, sigma=sigma, delta=p.delta)
    weighted = False
    if alpha is None or beta is None:
        report.skipped.append(SkippedAudit(bound_name="weighted-energy-bound", reason="alpha and beta not given"))
    elif p.lam < 1 or sigma < 0.5:
        report.skipped.append(SkippedAudit(bound_name="weighted-energy-bound", reason="needs lambda >= 1 and sigma >= 1/2"))
    elif not (1.0 - sigma <= alpha - beta <= sigma):
        report.skipped.append(SkippedAudit(
            bound_name="weighted-energy-bound",
            reason="alpha - beta outside [1 - sigma, sigma]",
            gap=min(alpha - beta - (1.0 - sigma), sigma - (alpha - beta)),
        ))
    else:
        weighted = True

    radius = None
    if weighted:
        if r is None:
            radius = largest_sup_radius(p, mu2)
            if radius is None:
                report.skipped.append(SkippedAudit(bound_name="gevrey-decay-bound", reason="no admissible decay radius"))
        else:
            gaps = sup_radius_gaps(p, mu2, r)
            failing = {name: gap for name, gap in gaps.items() if gap < 0 or (name == "radius-below-damping" and gap == 0)}
            if r <= 0 or failing:
                name, gap = next(iter(failing.items()), ("radius-positive", r))
                report.skipped.append(SkippedAudit(bound_name="gevrey-decay-bound", reason=f"{name} fails", gap=gap))
            else:
                radius = r
    report.radius = radius

    w_beta, w_alpha = 4.0 * beta * log_lam if weighted else 0.0, 4.0 * alpha * log_lam if weighted else 0.0
    d2, d4 = p.delta ** 2, p.delta ** 4
    rhs_weighted = rhs_gevrey = -math.inf
    if weighted:
        rhs_weighted = _logsum(
            math.log(2.0 + 2.0 / d2 + mu2 ** 2 / d4) + w_beta + lu1,
            math.log(3.0 * (1.0 + mu2 ** 2 / (2.0 * d2))) + w_alpha + lu0,
        )
        rhs_gevrey = _logsum(
            math.log(2.0 * (1.0 + 2.0 * mu2 ** 2 / d4 + 1.0 / d2)) + w_beta + lu1,
            math.log(3.0 * (1.0 + 2.0 * mu2 ** 2 / d2)) + w_alpha + lu0,
        )

    trajectory = _run(p, c, init, times)
    stops = [s.t for s in trajectory.states]
    integrals = _cumulative_integrals(c, stops) if radius is not None else None
    rate = 2.0 * (radius or 0.0) * p.lam ** (2.0 * (1.0 - sigma))

    for i, state in enumerate(trajectory.states):
        lu, lv = _state_logs(state)
        t = state.t
        report.audits.append(BoundAudit(bound_name="displacement-bound", lhs=lu, rhs=rhs_u, time=t))
        report.audits.append(BoundAudit(bound_name="velocity-bound", lhs=lv, rhs=rhs_v, time=t))
        if weighted:
            lhs = _logsum(w_beta + lv, w_alpha + lu)
            report.audits.append(BoundAudit(bound_name="weighted-energy-bound", lhs=lhs, rhs=rhs_weighted, time=t))
            if radius is not None:
                report.audits.append(BoundAudit(
                    bound_name="gevrey-decay-bound", lhs=lhs, rhs=rhs_gevrey - rate * integrals[i], time=t,
                    params={"r": radius},
                ))

    report.audits.extend(_monotone_audits(
        "kovaleskyan-nonincreasing", stops, [e.log_e_kova for e in trajectory.energies],
    ))
    return report


def verify_sub_lemma(
    p: ModeParams,
    c: Coefficient,
    init: tuple[float, float],
    horizon: float,
    r: float | None = None,
    times: list[float] | None = None,
) -> LemmaReport:
    """
    Audit the subcritical energy estimates on one mode.

    Checks |u'|^2 + 2 lambda^2 mu1 |u|^2 <= 4 u1^2 + 2 (3 delta^2 lambda^(4 sigma)
    + lambda^2 mu2) u0^2 and that the approximated energy with eps = 1/lambda
    never increases. With lambda >= 1 and an admissible decay radius r it also
    checks both bounds with the factor exp(-2 r lambda^(2 sigma) t).

    Raises:
        PreconditionFailed: sigma > 1/2, the lambda threshold fails, or c
            leaves [mu1, mu2] on the samples
    """
    if p.sigma > 0.5:
        raise PreconditionFailed("subcritical-exponent", p.sigma, 0.5)
    times = sample_times(c, horizon) if times is None else times
    mu1, mu2 = c.declared_mu1, c.declared_mu2
    if mu1 <= 0:
        raise PreconditionFailed("strict-hyperbolicity", mu1, 0.0, "declared mu1 must be positive")
    measured = _check_upper_bound(c, times)
    if measured.measured_inf < mu1 - _BOUND_TOL:
        raise PreconditionFailed("strict-hyperbolicity", measured.measured_inf, mu1, "sampled c below mu1")

    term = sub_lambda_term(p, c)
    gap = sub_threshold_gap(p.delta, mu1, term)
    if p.delta <= 0 or gap < 0:
        raise PreconditionFailed("subcritical-threshold", 4.0 * p.delta ** 2 * mu1, term ** 2 + 2.0 * p.delta * term)

    report = LemmaReport(lemma="subcritical", lam=p.lam, sigma=p.sigma, delta=p.delta)
    radius = None
    if p.lam < 1:
        report.skipped.append(SkippedAudit(bound_name="hyperbolic-energy-decay", reason="needs lambda >= 1"))
    elif r is None:
        radius = largest_sub_radius(p.delta, mu1, mu2, term)
        if radius is None:
            report.skipped.append(SkippedAudit(
                bound_name="hyperbolic-energy-decay", reason="no admissible decay radius",
                gap=sub_decay_gap(p.delta, mu1, mu2, term, 0.0),
            ))
    else:
        decay_gap = sub_decay_gap(p.delta, mu1, mu2, term, r)
        if not 0 < r < p.delta or decay_gap < 0:
            report.skipped.append(SkippedAudit(
                bound_name="hyperbolic-energy-decay", reason="radius not admissible", gap=decay_gap,
            ))
        else:
            radius = r
    report.radius = radius

    u0, u1 = init
    lu0, lu1 = _log_sq(u0), _log_sq(u1)
    log_lam = math.log(p.lam)
    lift = _logsum(
        math.log(3.0) + 2.0 * math.log(p.delta) + 4.0 * p.sigma * log_lam,
        2.0 * log_lam + _log_coef(mu2),
    )
    rhs = _logsum(math.log(4.0) + lu1, math.log(2.0) + lift + lu0)
    log_stiff = math.log(2.0 * mu1) + 2.0 * log_lam
    rate = 2.0 * (radius or 0.0) * p.lam ** (2.0 * p.sigma)

    approx = regularize(c, 1.0 / p.lam)
    trajectory = _run(p, c, init, times, approx=approx)
    stops = [s.t for s in trajectory.states]
    approx_logs = [e.log_e_approx for e in trajectory.energies]

    for state in trajectory.states:
        lu, lv = _state_logs(state)
        lhs = _logsum(lv, log_stiff + lu)
        report.audits.append(BoundAudit(bound_name="hyperbolic-energy-bound", lhs=lhs, rhs=rhs, time=state.t))
        if radius is not None:
            report.audits.append(BoundAudit(
                bound_name="hyperbolic-energy-decay", lhs=lhs, rhs=rhs - rate * state.t, time=state.t,
                params={"r": radius},
            ))

    report.audits.extend(_monotone_audits("approximated-energy-nonincreasing", stops, approx_logs))
    if radius is not None:
        report.audits.extend(
            BoundAudit(
                bound_name="approximated-energy-decay", lhs=approx_logs[i],
                rhs=approx_logs[0] - rate * stops[i], time=stops[i], params={"r": radius},
            )
            for i in range(1, len(stops))
        )
    return report


def verify_low_frequency(
    p: ModeParams,
    c: Coefficient,
    init: tuple[float, float],
    horizon: float,
    times: list[float] | None = None,
) -> LemmaReport:
    """
    Audit |u'|^2 + lambda^2 |u|^2 against (u1^2 + lambda^2 u0^2) exp(lambda t + lambda * integral of |c|).

    Holds for any delta >= 0 and integrable c; low modes may grow, so this
    is the only estimate available for them.
    """
    times = sample_times(c, horizon) if times is None else times
    trajectory = _run(p, c, init, times)
    return _low_frequency_report(p, c, init, trajectory)


def _low_frequency_report(p: ModeParams, c: Coefficient, init, trajectory: Trajectory) -> LemmaReport:
    u0, u1 = init
    log_lam = math.log(p.lam)
    rhs0 = _logsum(_log_sq(u1), 2.0 * log_lam + _log_sq(u0))
    stops = [s.t for s in trajectory.states]
    abs_integrals = _cumulative_integrals(c, stops, absolute=True)

    report = LemmaReport(lemma="low-frequency", lam=p.lam, sigma=p.sigma, delta=p.delta)
    for state, energy, integral in zip(trajectory.states, trajectory.energies, abs_integrals):
        growth = p.lam * state.t + p.lam * integral
        report.audits.append(BoundAudit(
            bound_name="low-frequency-growth", lhs=energy.log_e_classic, rhs=rhs0 + growth, time=state.t,
        ))
    return report


# ==================== Families ====================


def _integrate_mode(item: tuple[ModeParams, tuple[float, float]], c: Coefficient, times: list[float]) -> Trajectory:
    p, init = item
    return _run(p, c, init, times)


def frequency_split(spectrum: SpectralSequence, nu: float) -> FrequencySplit:
    return FrequencySplit(
        nu=nu,
        low=[k for k, lam in enumerate(spectrum.lambdas) if lam < nu],
        high=[k for k, lam in enumerate(spectrum.lambdas) if lam >= nu],
    )


def _family_preconditions(theorem: str, spectrum, c, split, sigma, delta, alpha, beta) -> list[float]:
    """Check the theorem's hypotheses on every high mode; returns per-mode sub radii for sub-gevrey."""
    if split.nu < 1:
        raise PreconditionFailed("frequency-split-at-least-one", split.nu, 1.0)
    if delta <= 0:
        raise PreconditionFailed("positive-damping", delta, 0.0)
    mu1, mu2 = c.declared_mu1, c.declared_mu2

    if theorem.startswith("sup"):
        if sigma < 0.5:
            raise PreconditionFailed("supercritical-exponent", sigma, 0.5)
        if alpha is None or beta is None:
            raise ContractViolation("supercritical families need alpha and beta")
        if not 1.0 - sigma <= alpha - beta <= sigma:
            raise PreconditionFailed("regularity-gap", alpha - beta, sigma, "need 1 - sigma <= alpha - beta <= sigma")
        for k in split.high:
            lam = spectrum.lambdas[k]
            lhs = 4.0 * delta ** 2 * lam ** (4.0 * sigma - 2.0)
            if lhs < mu2:
                raise PreconditionFailed("supercritical-threshold", lhs, mu2, f"first failing mode k={k}, lambda={lam}")
        return []

    if sigma > 0.5:
        raise PreconditionFailed("subcritical-exponent", sigma, 0.5)
    if theorem == "sub-gevrey" and sigma <= 0:
        raise PreconditionFailed("positive-exponent", sigma, 0.0)
    if mu1 <= 0:
        raise PreconditionFailed("strict-hyperbolicity", mu1, 0.0)
    radii = []
    for k in split.high:
        lam = spectrum.lambdas[k]
        term = sub_lambda_term(ModeParams(lam=lam, sigma=sigma, delta=delta), c)
        if sub_threshold_gap(delta, mu1, term) < 0:
            raise PreconditionFailed(
                "subcritical-threshold", 4.0 * delta ** 2 * mu1, term ** 2 + 2.0 * delta * term,
                f"first failing mode k={k}, lambda={lam}",
            )
        radii.append(largest_sub_radius(delta, mu1, mu2, term))
    return radii


def verify_family(
    theorem: str,
    spectrum: SpectralSequence,
    c: Coefficient,
    u0: ModeVector,
    u1: ModeVector,
    nu: float,
    horizon: float,
    sigma: float,
    delta: float,
    alpha: float | None = None,
    beta: float | None = None,
    jobs: int | None = None,
    times: list[float] | None = None,
) -> FamilyAudit:
    """
    Sum per-mode estimates over the high modes (lambda >= nu) of a spectrum.

    sup-reg / sup-gevrey need sigma >= 1/2, alpha and beta; sub-reg /
    sub-gevrey need sigma <= 1/2 and a declared modulus. Sigma = 1/2 is
    accepted by both, each with its own hypotheses. The Gevrey variants use
    the smallest admissible radius over the high modes and report the
    weighted norms of the high-frequency part along the trajectory. Low
    modes get informational growth audits that do not affect passed().

    Raises:
        PreconditionFailed: a hypothesis fails; the detail names the first
            failing mode
    """
    if theorem not in ("sup-reg", "sub-reg", "sup-gevrey", "sub-gevrey"):
        raise ContractViolation(f"unknown theorem {theorem!r}")
    if u0.lambdas != spectrum.lambdas or u1.lambdas != spectrum.lambdas:
        raise ContractViolation("initial data must live on the given spectrum")

    split = frequency_split(spectrum, nu)
    sub_radii = _family_preconditions(theorem, spectrum, c, split, sigma, delta, alpha, beta)
    times = sample_times(c, horizon) if times is None else times
    mu1, mu2 = c.declared_mu1, c.declared_mu2
    _check_upper_bound(c, times)

    radius = None
    if theorem == "sup-gevrey":
        radii = [largest_sup_radius(ModeParams(lam=spectrum.lambdas[k], sigma=sigma, delta=delta), mu2) for k in split.high]
        if any(r is None for r in radii):
            raise PreconditionFailed("gevrey-radius", 0.0, 0.0, "no admissible decay radius on some high mode")
        radius = min(radii, default=None)
    elif theorem == "sub-gevrey":
        if any(r is None for r in sub_radii):
            raise PreconditionFailed("gevrey-radius", 0.0, 0.0, "no admissible decay radius on some high mode")
        radius = min(sub_radii, default=None)

    items = [
        (ModeParams(lam=spectrum.lambdas[k], sigma=sigma, delta=delta), (u0.values[k], u1.values[k]))
        for k in range(spectrum.count)
    ]
    trajectories = parallel_map(functools.partial(_integrate_mode, c=c, times=times), items, jobs=jobs)

    audit = FamilyAudit(theorem=theorem, split=split, radius=radius)
    for k in split.low:
        low = _low_frequency_report(items[k][0], c, items[k][1], trajectories[k])
        audit.low_mode_audits.extend(a.model_copy(update={"k": k}) for a in low.audits)
    if not split.high:
        return audit

    stops = [s.t for s in trajectories[split.high[0]].states]
    integrals = _cumulative_integrals(c, stops) if theorem == "sup-gevrey" else None
    d2, d4 = delta ** 2, delta ** 4

    # Per-mode initial-data terms and the exponents of the state terms
    rhs_terms, u_weights, v_weights, growth = [], [], [], []
    for k in split.high:
        lam = spectrum.lambdas[k]
        log_lam = math.log(lam)
        lu0, lu1 = _log_sq(u0.values[k]), _log_sq(u1.values[k])
        if theorem == "sup-reg":
            rhs_terms += [
                math.log(2.0 + 2.0 / d2 + mu2 ** 2 / d4) + 4.0 * beta * log_lam + lu1,
                math.log(3.0 * (1.0 + mu2 ** 2 / (2.0 * d2))) + 4.0 * alpha * log_lam + lu0,
            ]
        elif theorem == "sup-gevrey":
            rhs_terms += [
                math.log(2.0 * (1.0 + 2.0 * mu2 ** 2 / d4 + 1.0 / d2)) + 4.0 * beta * log_lam + lu1,
                math.log(3.0 * (1.0 + 2.0 * mu2 ** 2 / d2)) + 4.0 * alpha * log_lam + lu0,
            ]
        else:
            rhs_terms += [
                math.log(4.0) + lu1,
                math.log(2.0 * (3.0 * d2 + mu2)) + 2.0 * log_lam + lu0,
            ]
        if theorem.startswith("sup"):
            u_weights.append(4.0 * alpha * log_lam)
            v_weights.append(4.0 * beta * log_lam)
            growth.append(2.0 * (radius or 0.0) * lam ** (2.0 * (1.0 - sigma)))
        else:
            u_weights.append(math.log(2.0 * mu1) + 2.0 * log_lam)
            v_weights.append(0.0)
            growth.append(2.0 * (radius or 0.0) * lam ** (2.0 * sigma))
    rhs = _logsum(*rhs_terms)
    name = "high-frequency-gevrey-bound" if theorem.endswith("gevrey") else "high-frequency-energy-bound"

    for i, t in enumerate(stops):
        # exp(2 r phi(lambda) C(t)) for sup-gevrey, exp(2 r phi(lambda) t) for sub-gevrey
        clock = integrals[i] if integrals is not None else t
        terms = []
        for j, k in enumerate(split.high):
            lu, lv = _state_logs(trajectories[k].states[i])
            boost = growth[j] * clock if radius is not None else 0.0
            terms += [u_weights[j] + lu + boost, v_weights[j] + lv + boost]
        audit.audits.append(BoundAudit(bound_name=name, lhs=_logsum(*terms), rhs=rhs, time=t, params={"theorem": theorem}))
        audit.norm_trajectory.append(_norm_sample(theorem, spectrum, split, trajectories, i, t, sigma, alpha, beta, radius, clock))

    logger.info("family %s: %d high modes, %d low modes", theorem, len(split.high), len(split.low))
    return audit


def _norm_sample(theorem, spectrum, split, trajectories, i, t, sigma, alpha, beta, radius, clock) -> NormSample:
    lambdas = tuple(spectrum.lambdas[k] for k in split.high)
    u = ModeVector(lambdas=lambdas, values=tuple(trajectories[k].states[i].u for k in split.high))
    v = ModeVector(lambdas=lambdas, values=tuple(trajectories[k].states[i].v for k in split.high))
    r_t = (radius or 0.0) * clock
    if theorem.startswith("sup"):
        exp_u, exp_v, weight = alpha, beta, PowerWeight(p=2.0 * (1.0 - sigma)) if sigma < 1 else None
    else:
        exp_u, exp_v, weight = 0.5, 0.0, PowerWeight(p=2.0 * sigma) if sigma > 0 else None
    sign = NormSign.GEVREY if radius is not None and weight is not None else NormSign.SOBOLEV
    n_u = WeightedNorm(weight=weight, radius=r_t, sobolev_exponent=exp_u, sign=sign)
    n_v = WeightedNorm(weight=weight, radius=r_t, sobolev_exponent=exp_v, sign=sign)
    return NormSample(
        time=t,
        log_norm_u=norm_squared(u, n_u).log_value,
        log_norm_v=norm_squared(v, n_v).log_value,
        radius=r_t,
    )
