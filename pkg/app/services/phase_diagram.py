"""
Phase sweep over (sigma, alpha, delta).

Every cell integrates probe modes against random Hoelder coefficients and,
below the critical line alpha = 1 - 2 sigma, against a resonant coefficient
tuned to the probe. The per-unit-time growth of the weighted energy is then
regressed on the two competing scales, lambda omega(1/lambda) for
resonance and lambda^(2 sigma) for damping, and its peak ratio to the
resonance scale decides the cell.

Probes run in the rescaled time tau = lambda t, where every mode has unit
frequency and damping delta lambda^(2 sigma - 1). Step counts then depend
on the number of periods in the window, not on lambda.
"""
import csv
import functools
import itertools
import logging
import math

import numpy as np

from app.config import settings
from app.errors import IntegrationFailure
from app.schemas.coefficient import GammaPiece, PiecewiseCoefficient
from app.schemas.mode import ModeParams
from app.schemas.spaces import ContinuityModulus, HoelderModulus, LipschitzModulus
from app.schemas.sweep import CellVerdict, ProbeMeasurement, SweepConfig, SweepResult
from app.services.coefficients import synthesize_hoelder, synthesize_lipschitz
from app.services.mode_solver import heuristic_envelope, integrate
from app.services.workers import parallel_map

logger = logging.getLogger(__name__)

# Resonant amplitude cap; keeps the tuned coefficient inside [1/2, 3/2]
MAX_RESONANT_EPS = 0.05


def resonant_coefficient(
    sigma: float, alpha: float, delta: float, lam: float, rescaled: bool = False
) -> tuple[PiecewiseCoefficient, float]:
    """
    Oscillating coefficient tuned to lam, with amplitude
    eps = min(lam^((2 sigma - 1 - alpha) / 2), MAX_RESONANT_EPS).

    The uncapped amplitude is the one the loss-of-regularity construction
    uses for omega(x) = x^alpha; its growth 4 eps lam beats the damping
    2 delta lam^(2 sigma) exactly when alpha < 1 - 2 sigma. With rescaled=True
    the oscillation is written in tau = lam t.
    """
    eps = min(lam ** ((2.0 * sigma - 1.0 - alpha) / 2.0), MAX_RESONANT_EPS)
    shift = delta ** 2 * lam ** (4.0 * sigma - 2.0)
    piece = GammaPiece(eps=eps, lam=1.0 if rescaled else lam, shift=shift)
    return PiecewiseCoefficient(starts=(0.0,), pieces=(piece,), declared_mu1=0.5, declared_mu2=1.5), eps


def probe_window(lam: float, horizon: float) -> float:
    """Whole number of mode periods, settings.window_periods of them, capped by horizon."""
    period = 2.0 * math.pi / lam
    periods = min(settings.window_periods, max(1, int(horizon / period)))
    return periods * period


def measure_exponent(p: ModeParams, c, window: float, tol: float | None = None) -> float:
    """(log F(T) - log F(0)) / T for data (0, lambda); T spans whole periods."""
    trajectory = integrate(p, c, (0.0, p.lam), (0.0, window), tol=tol)
    first, last = trajectory.energies[0], trajectory.energies[-1]
    return (last.log_f_weighted - first.log_f_weighted) / window


def cell_modulus(alpha: float) -> ContinuityModulus:
    return LipschitzModulus() if alpha == 1.0 else HoelderModulus(alpha=alpha)


def cell_coefficient(alpha: float, spread: float, seed: int, lam: float):
    """
    Random coefficient of regularity alpha, written in tau = lam t.

    Same seed, same phases: the result at tau equals the physical-time
    coefficient (base frequency 1) at tau / lam. alpha = 1 gives a single
    seeded sine, which is Lipschitz.
    """
    if alpha == 1.0:
        return synthesize_lipschitz(spread, seed=seed, base_frequency=1.0 / lam)
    return synthesize_hoelder(alpha, spread, seed=seed, base_frequency=1.0 / lam)


def rescaled_exponent(p: ModeParams, c_tau, window: float, tol: float | None = None) -> float:
    """Physical growth exponent of mode p over window, integrated in tau = lambda t against c_tau."""
    q = ModeParams(lam=1.0, sigma=p.sigma, delta=p.damping / p.lam)
    return p.lam * measure_exponent(q, c_tau, p.lam * window, tol=tol)


def _fit_slope(x: list[float], y: list[float]) -> float:
    if len(x) < 2 or len(set(x)) < 2:
        return y[0] / x[0]
    return float(np.polyfit(np.asarray(x), np.asarray(y), 1)[0])


def classify(sigma: float, alpha: float, peak_ratio: float) -> str:
    """
    Borderline inside settings.borderline_band around alpha = 1 - 2 sigma.

    Elsewhere the cell is resonance-dominates when peak_ratio, the largest
    growth exponent divided by lambda omega(1/lambda) over the probes,
    exceeds settings.resonance_threshold, and damping-dominates otherwise.
    The fitted slopes are reported alongside but do not enter the decision.
    """
    if abs(alpha - (1.0 - 2.0 * sigma)) <= settings.borderline_band:
        return "borderline"
    if peak_ratio > settings.resonance_threshold:
        return "resonance-dominates"
    return "damping-dominates"


def sweep_cell(cell: tuple[float, float, float], cfg: SweepConfig) -> CellVerdict:
    """Integrate every probe of one cell and classify it; integration failures make it inconclusive."""
    sigma, alpha, delta = cell
    modulus = cell_modulus(alpha)
    probes: list[ProbeMeasurement] = []
    try:
        for lam in cfg.lambda_probe:
            p = ModeParams(lam=lam, sigma=sigma, delta=delta)
            window = probe_window(lam, cfg.horizon)
            conflict = heuristic_envelope("conflict", p, 1.0, modulus=modulus)
            for trial in range(cfg.trials):
                c = cell_coefficient(alpha, cfg.spread, cfg.seed + trial, lam)
                probes.append(
                    ProbeMeasurement(
                        lam=lam,
                        source="lipschitz" if alpha == 1.0 else "hoelder",
                        trial=trial,
                        exponent=rescaled_exponent(p, c, window, cfg.tol),
                        predicted=-2.0 * p.damping,
                        conflict=conflict,
                    )
                )
            if alpha < 1.0 - 2.0 * sigma:
                c, eps = resonant_coefficient(sigma, alpha, delta, lam, rescaled=True)
                probes.append(
                    ProbeMeasurement(
                        lam=lam,
                        source="resonant",
                        eps=eps,
                        exponent=rescaled_exponent(p, c, window, cfg.tol),
                        predicted=4.0 * eps * lam - 2.0 * p.damping,
                        conflict=conflict,
                    )
                )
    except IntegrationFailure as exc:
        logger.warning("cell sigma=%s alpha=%s delta=%s inconclusive: %s", sigma, alpha, delta, exc)
        return CellVerdict(
            sigma=sigma, alpha=alpha, delta=delta, classification="inconclusive", probes=probes, error=str(exc)
        )

    # Strongest growth per probe frequency
    best: dict[float, float] = {}
    for m in probes:
        best[m.lam] = max(best.get(m.lam, -math.inf), m.exponent)
    lams = sorted(best)
    growth = [best[lam] for lam in lams]
    resonance_scale = [lam * modulus(1.0 / lam) for lam in lams]
    damping_scale = [lam ** (2.0 * sigma) for lam in lams]
    peak_ratio = max(g / x for g, x in zip(growth, resonance_scale))

    verdict = CellVerdict(
        sigma=sigma,
        alpha=alpha,
        delta=delta,
        slope_res=_fit_slope(resonance_scale, growth),
        slope_damp=_fit_slope(damping_scale, growth),
        peak_ratio=peak_ratio,
        classification=classify(sigma, alpha, peak_ratio),
        probes=probes,
    )
    logger.info("cell sigma=%s alpha=%s delta=%s: %s", sigma, alpha, delta, verdict.classification)
    return verdict


def sweep(cfg: SweepConfig, jobs: int | None = None) -> SweepResult:
    """Classify every cell of the grid; cells are independent and mapped over the worker pool."""
    cells = list(itertools.product(cfg.sigma_grid, cfg.alpha_grid, cfg.delta_grid))
    verdicts = parallel_map(functools.partial(sweep_cell, cfg=cfg), cells, jobs=jobs)
    return SweepResult(config=cfg, cells=verdicts)


# ==================== Export ====================


SWEEP_COLUMNS = ("sigma", "alpha", "delta", "lambda", "slope_res", "slope_damp", "class")
LONG_COLUMNS = ("sigma", "alpha", "delta", "lambda", "source", "trial", "eps", "exponent", "predicted", "conflict")


def write_sweep_csv(result: SweepResult, path: str) -> None:
    """One row per cell and probe frequency."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_COLUMNS)
        for cell in result.cells:
            for lam in sorted({m.lam for m in cell.probes}) or [None]:
                writer.writerow([
                    cell.sigma, cell.alpha, cell.delta, lam, cell.slope_res, cell.slope_damp, cell.classification
                ])


def write_sweep_long(result: SweepResult, path: str) -> None:
    """Long format: one row per probe measurement, ready for plotting tools."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(LONG_COLUMNS)
        for cell in result.cells:
            for m in cell.probes:
                writer.writerow([
                    cell.sigma, cell.alpha, cell.delta, m.lam, m.source,
                    "" if m.trial is None else m.trial,
                    "" if m.eps is None else m.eps,
                    m.exponent, m.predicted, m.conflict,
                ])
