import csv
import logging
import math

import numpy as np

from app.config import settings
from app.errors import ContractViolation
from app.schemas.coefficient import (
    Coefficient,
    HyperbolicityClass,
    LacunaryCoefficient,
    PiecewiseCoefficient,
    RegularizationAudit,
    RegularizedCoefficient,
    SinePiece,
)
from app.schemas.spaces import ContinuityAudit, HoelderModulus, LipschitzModulus
from app.services.spaces import omega_continuity_audit

logger = logging.getLogger(__name__)


def regularize(c: Coefficient, epsilon: float) -> RegularizedCoefficient:
    """
    Forward moving average of c over windows of length epsilon.

    Closed-form integrals are used wherever the coefficient has them;
    otherwise scipy's adaptive quadrature runs with absolute tolerance 1e-12.
    """
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise ContractViolation(f"regularization window must be positive, got {epsilon!r}")
    return RegularizedCoefficient(base=c, epsilon=epsilon)


def synthesize_hoelder(
    alpha: float,
    M: float,
    seed: int,
    base_frequency: float = 1.0,
    truncation: float | None = None,
    max_octaves: int | None = None,
) -> LacunaryCoefficient:
    """
    Random lacunary cosine series with a provable Hoelder modulus.

    c(t) = 1 + M * N * sum_j 2^(-j alpha) cos(2^j b t + phase_j), where N
    normalizes the weights so that |c - 1| <= M. The series stops at the
    first term below `truncation` or after `max_octaves` octaves.

    The declared modulus is omega(x) = M' x^alpha with
        M' = M N b^alpha (2^(1-alpha) / (2^(1-alpha) - 1) + 2 / (1 - 2^(-alpha))),
    which bounds every partial sum.

    Args:
        alpha: Hoelder exponent in (0, 1)
        M: Spread of c around 1; must stay below 1
        seed: Seed for the random phases
        base_frequency: Frequency b of the first octave

    Returns:
        LacunaryCoefficient with declared mu1 = 1 - M, mu2 = 1 + M
    """
    if not 0 < alpha < 1:
        raise ContractViolation(f"Hoelder exponent must lie in (0, 1), got {alpha!r}")
    if M < 0:
        raise ContractViolation("amplitude must be nonnegative")
    if M >= 1:
        raise ContractViolation(f"spread {M!r} >= 1 would break strict hyperbolicity")
    if base_frequency <= 0:
        raise ContractViolation("base frequency must be positive")

    truncation = settings.hoelder_truncation if truncation is None else truncation
    max_octaves = settings.hoelder_octaves if max_octaves is None else max_octaves

    # Terms j = 0 .. levels - 1 all have weight >= truncation
    levels = min(int(math.ceil(math.log2(1.0 / truncation) / alpha)), max_octaves + 1)
    levels = max(levels, 1)

    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, levels)
    weights = 2.0 ** (-alpha * np.arange(levels))
    normalizer = 1.0 / float(weights.sum())

    series_bound = 2.0 ** (1 - alpha) / (2.0 ** (1 - alpha) - 1.0) + 2.0 / (1.0 - 2.0 ** (-alpha))
    constant = M * normalizer * base_frequency ** alpha * series_bound
    modulus = HoelderModulus(alpha=alpha, M=constant) if M > 0 else None

    logger.debug("synthesized Hoelder coefficient alpha=%s M=%s levels=%d", alpha, M, levels)
    return LacunaryCoefficient(
        alpha=alpha,
        amplitude=M,
        seed=seed,
        base_frequency=base_frequency,
        phases=tuple(float(p) for p in phases),
        normalizer=normalizer,
        declared_mu1=1.0 - M,
        declared_mu2=1.0 + M,
        declared_modulus=modulus,
    )


def synthesize_lipschitz(M: float, seed: int, base_frequency: float = 1.0) -> PiecewiseCoefficient:
    """c(t) = 1 + M sin(b t + phase) with a seeded phase; Lipschitz with constant M b."""
    if M < 0:
        raise ContractViolation("amplitude must be nonnegative")
    if M >= 1:
        raise ContractViolation(f"spread {M!r} >= 1 would break strict hyperbolicity")
    if base_frequency <= 0:
        raise ContractViolation("base frequency must be positive")

    phase = float(np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi))
    piece = SinePiece(offset=1.0, amplitude=M, frequency=base_frequency, phase=phase)
    return PiecewiseCoefficient(
        starts=(0.0,),
        pieces=(piece,),
        declared_mu1=1.0 - M,
        declared_mu2=1.0 + M,
        declared_modulus=LipschitzModulus(L=M * base_frequency) if M > 0 else None,
    )


def audit_grid(c: Coefficient, a: float, b: float, points: int = 2001) -> np.ndarray:
    """Uniform grid on [a, b] merged with every breakpoint of c inside it."""
    grid = np.linspace(a, b, points)
    return np.unique(np.concatenate([grid, np.asarray(c.breakpoints(a, b), dtype=float)]))


def hyperbolicity_class(c: Coefficient, grid, tol: float = 1e-12) -> HyperbolicityClass:
    """
    Classify c by its measured infimum and supremum on a grid.

    strict: inf > tol; degenerate: inf >= -tol; none otherwise.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ContractViolation("hyperbolicity grid must be nonempty")

    values = np.asarray(c(grid), dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if lo > tol:
        return HyperbolicityClass(kind="strict", mu1=lo, mu2=hi, measured_inf=lo, measured_sup=hi)
    if lo >= -tol:
        return HyperbolicityClass(kind="degenerate", mu2=hi, measured_inf=lo, measured_sup=hi)
    return HyperbolicityClass(kind="none", measured_inf=lo, measured_sup=hi)


def audit_regularization(reg: RegularizedCoefficient, grid, tol: float = 1e-10) -> RegularizationAudit:
    """
    Check a regularized coefficient against its base on a grid:
    mu1 <= c_eps <= mu2, |c - c_eps| <= omega(eps) and |c_eps'| <= omega(eps) / eps.
    """
    base = reg.base
    if base.declared_modulus is None:
        raise ContractViolation("regularization audit needs a declared modulus")

    grid = np.asarray(grid, dtype=float)
    eps = reg.epsilon
    smooth = np.array([reg.value(t) for t in grid])
    slope = np.array([reg.derivative(t) for t in grid])
    raw = np.asarray(base(grid), dtype=float)
    omega_eps = float(base.declared_modulus(eps))

    worst_gap = float(np.max(np.abs(raw - smooth)))
    worst_derivative = float(np.max(np.abs(slope)))
    return RegularizationAudit(
        epsilon=eps,
        omega_at_eps=omega_eps,
        min_value=float(smooth.min()),
        max_value=float(smooth.max()),
        bounds_ok=bool(smooth.min() >= base.declared_mu1 - tol and smooth.max() <= base.declared_mu2 + tol),
        worst_gap=worst_gap,
        gap_ok=worst_gap <= omega_eps + tol,
        worst_derivative=worst_derivative,
        derivative_ok=worst_derivative <= omega_eps / eps + tol,
    )


def audit_continuity(
    c: Coefficient,
    a: float,
    b: float,
    samples: int = 4001,
    pairs: int | None = None,
    seed: int = 0,
) -> ContinuityAudit:
    """Sample c on [a, b] and run omega_continuity_audit against its declared modulus."""
    if c.declared_modulus is None:
        raise ContractViolation("coefficient has no declared modulus")
    times = audit_grid(c, a, b, samples)
    return omega_continuity_audit(times, c(times), c.declared_modulus, pairs=pairs, seed=seed)


def write_coefficient_csv(c: Coefficient, path: str, times) -> None:
    """Write a two-column (t, c) CSV of c sampled at `times`."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(c(times), dtype=float)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "c"])
        for t, v in zip(times, values):
            writer.writerow([repr(float(t)), repr(float(v))])


def write_segment_table(c: PiecewiseCoefficient, path: str) -> None:
    """Write one CSV row per piece: index, start, end, shape and parameters."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["index", "start", "end", "shape", "parameters"])
        ends = list(c.starts[1:]) + [math.inf]
        for i, (start, end, piece) in enumerate(zip(c.starts, ends, c.pieces)):
            params = piece.model_dump(exclude={"shape"})
            writer.writerow([i, repr(start), repr(end), piece.shape, params])
