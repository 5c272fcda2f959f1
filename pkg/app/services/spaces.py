import logging
import math
import sys

import numpy as np
from scipy.special import logsumexp

from app.config import settings
from app.errors import ContractViolation
from app.schemas.spaces import (
    ContinuityAudit,
    ContinuityModulus,
    ModeVector,
    ModulusAudit,
    ModulusViolation,
    NormSign,
    NormValue,
    WeightedNorm,
)

logger = logging.getLogger(__name__)

# Largest log-value whose exponential is still a finite float
LOG_FLOAT_MAX = math.log(sys.float_info.max)

# Relative slack when comparing neighbouring samples of a modulus
_MONOTONE_RTOL = 1e-12


def norm_squared(v: ModeVector, n: WeightedNorm) -> NormValue:
    """
    Squared weighted norm of a mode vector, evaluated in log space.

    Args:
        v: Fourier components (lambda_k, u_k)
        n: Weight, radius, Sobolev exponent and sign of the norm

    Returns:
        NormValue with the log of the sum and an overflow flag set when the
        sum exceeds float range. An empty or all-zero vector has log -inf.
    """
    if n.radius < 0:
        raise ContractViolation("norm radius must be nonnegative")
    if not v.values:
        return NormValue(log_value=-math.inf)

    lam = np.asarray(v.lambdas, dtype=float)
    u = np.asarray(v.values, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ContractViolation("mode vector has nonfinite components")

    nonzero = u != 0.0
    if not nonzero.any():
        return NormValue(log_value=-math.inf)
    lam, u = lam[nonzero], u[nonzero]

    log_terms = 4.0 * n.sobolev_exponent * np.log1p(lam) + 2.0 * np.log(np.abs(u))
    if n.sign != NormSign.SOBOLEV and n.radius > 0:
        sign = 1.0 if n.sign == NormSign.GEVREY else -1.0
        log_terms = log_terms + sign * 2.0 * n.radius * np.asarray(n.weight(lam), dtype=float)

    log_sum = float(logsumexp(log_terms))
    return NormValue(log_value=log_sum, overflow=log_sum > LOG_FLOAT_MAX)


def default_modulus_grid() -> np.ndarray:
    """Log-spaced audit grid from the configured range."""
    return np.geomspace(settings.modulus_grid_min, settings.modulus_grid_max, settings.modulus_grid_size)


def check_modulus(omega: ContinuityModulus, grid=None, max_listed: int = 100) -> ModulusAudit:
    """
    Check the structural properties of a continuity modulus on a grid.

    Reports adjacent pairs where omega is not positive, omega decreases,
    or x / omega(x) decreases. Only the first max_listed violations are
    listed; violation_count counts all of them.
    """
    x = np.asarray(default_modulus_grid() if grid is None else grid, dtype=float)
    if x.size < 2:
        raise ContractViolation("modulus grid needs at least 2 points")
    if np.any(x <= 0) or np.any(np.diff(x) <= 0):
        raise ContractViolation("modulus grid must be positive and strictly increasing")

    w = np.asarray(omega(x), dtype=float)
    violations: list[ModulusViolation] = []
    count = 0

    # omega must be positive away from zero
    for i in np.flatnonzero(w <= 0):
        count += 1
        if len(violations) < max_listed:
            violations.append(ModulusViolation(
                check="positive", x_left=x[i], x_right=x[i], left=w[i], right=w[i],
            ))

    positive = w > 0
    ratio = np.where(positive, x / np.where(positive, w, 1.0), np.inf)
    for name, values in (("omega-nondecreasing", w), ("ratio-nondecreasing", ratio)):
        drops = values[1:] < values[:-1] * (1.0 - _MONOTONE_RTOL)
        for i in np.flatnonzero(drops):
            count += 1
            if len(violations) < max_listed:
                violations.append(ModulusViolation(
                    check=name, x_left=x[i], x_right=x[i + 1], left=values[i], right=values[i + 1],
                ))

    value_at_zero = float(omega(0.0))
    if count:
        logger.debug("modulus %s: %d violations on %d points", omega.kind, count, x.size)
    return ModulusAudit(
        grid_points=int(x.size),
        value_at_zero=value_at_zero,
        violations=violations,
        violation_count=count,
    )


def omega_continuity_audit(
    times,
    values,
    omega: ContinuityModulus,
    pairs: int | None = None,
    seed: int = 0,
) -> ContinuityAudit:
    """
    Worst ratio |c(s) - c(t)| / omega(|s - t|) over sampled pairs.

    Pairs are every adjacent sample plus `pairs` random pairs drawn with a
    seeded generator, so the audit is deterministic.

    Args:
        times: Sorted sample times
        values: Coefficient values at those times
        omega: Modulus to test against
        pairs: Number of random pairs (defaults to settings.continuity_pairs)
        seed: Seed for the pair generator
    """
    pairs = settings.continuity_pairs if pairs is None else pairs
    if pairs < 1:
        raise ContractViolation("pairs must be at least 1")
    t = np.asarray(times, dtype=float)
    c = np.asarray(values, dtype=float)
    if t.shape != c.shape or t.size < 2:
        raise ContractViolation("need at least 2 samples with matching values")
    if np.any(np.diff(t) < 0):
        raise ContractViolation("sample times must be sorted")

    rng = np.random.default_rng(seed)
    left = np.concatenate([np.arange(t.size - 1), rng.integers(0, t.size, pairs)])
    right = np.concatenate([np.arange(1, t.size), rng.integers(0, t.size, pairs)])

    gaps = np.abs(t[left] - t[right])
    keep = gaps > 0
    left, right, gaps = left[keep], right[keep], gaps[keep]
    ratios = np.abs(c[left] - c[right]) / np.asarray(omega(gaps), dtype=float)

    spacing = np.diff(t)
    resolution = float(spacing[spacing > 0].min()) if np.any(spacing > 0) else 0.0
    if ratios.size == 0:
        return ContinuityAudit(worst_ratio=0.0, pairs_checked=0, resolution=resolution)

    worst = int(np.argmax(ratios))
    return ContinuityAudit(
        worst_ratio=float(ratios[worst]),
        worst_pair=(float(t[left[worst]]), float(t[right[worst]])),
        pairs_checked=int(ratios.size),
        resolution=resolution,
    )
