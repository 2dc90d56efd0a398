"""
Required SNR at a target normalized rate, Shannon reference and gaps.

``required_snr`` bisects the SNR axis using a fixed-seed estimator, so the
objective is a deterministic (if slightly noisy) monotone function during
one solve.
"""

import logging
import math
from dataclasses import dataclass, replace

from joblib import Memory

from .awgn_metrics import GMI, MI, EstimatorConfig, estimate_metric
from .constellation import Constellation, spectral_efficiency
from .exceptions import LabelsRequiredError, SolverError, UnreachableTargetError

logger = logging.getLogger(__name__)

DEFAULT_BRACKET_DB = (-10.0, 30.0)
DEFAULT_RATE = 0.8
ULTIMATE_SHAPING_GAIN_DB = 1.53
DEFAULT_TOTAL_SAMPLES = 1_000_000
REFINEMENT_FACTOR = 4
DEFAULT_MAX_ITERATIONS = 64


@dataclass(frozen=True)
class SolveTarget:
    metric: str = MI
    normalized_rate: float = DEFAULT_RATE
    tolerance_db: float = 0.02

    def __post_init__(self):
        metric = str(self.metric).upper()
        if metric not in (MI, GMI):
            raise ValueError(f"metric must be MI or GMI, got {self.metric!r}")
        object.__setattr__(self, "metric", metric)
        if not 0.0 < self.normalized_rate < 1.0:
            raise ValueError(
                f"normalized_rate must lie in (0, 1), got {self.normalized_rate}"
            )
        if not self.tolerance_db > 0.0:
            raise ValueError(f"tolerance_db must be positive, got {self.tolerance_db}")


@dataclass(frozen=True)
class SnrSolveResult:
    """Required SNR with the final bracket and the rate reached there.

    ``achieved_rate`` and ``std_error_rate`` are normalized (divided by m).
    """

    snr_req_db: float
    bracket_lo: float
    bracket_hi: float
    iterations: int
    achieved_rate: float
    std_error_rate: float
    metric: str = MI
    normalized_rate: float = DEFAULT_RATE
    samples: int = 0
    refined: bool = False


class _NonMonotone(Exception):
    pass


def shannon_req_snr(m, rate):
    """SNR (dB) at which 2 log2(1 + SNR) bit/4D equals rate * m."""
    if not m > 0:
        raise ValueError(f"spectral efficiency must be positive, got {m}")
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must lie in (0, 1], got {rate}")
    return 10.0 * math.log10(2.0 ** (rate * m / 2.0) - 1.0)


def delta_snr_req(snr_req_db, m, rate):
    """Gap to AWGN capacity in dB."""
    return snr_req_db - shannon_req_snr(m, rate)


def asymptotic_vc_gap(gamma_s_db):
    """Gap a Voronoi constellation converges to for shaping gain gamma_s."""
    if not 0.0 <= gamma_s_db <= ULTIMATE_SHAPING_GAIN_DB:
        raise ValueError(
            f"shaping gain {gamma_s_db} dB outside [0, {ULTIMATE_SHAPING_GAIN_DB}] "
            "(exceeds ultimate shaping gain)"
        )
    return ULTIMATE_SHAPING_GAIN_DB - gamma_s_db


def _bisect(c, target, cfg, bracket, max_iterations):
    m = spectral_efficiency(c)
    goal = target.normalized_rate * m

    def evaluate(snr_db):
        return estimate_metric(target.metric, c, snr_db, cfg)

    lo, hi = float(bracket[0]), float(bracket[1])
    f_lo, f_hi = evaluate(lo), evaluate(hi)
    if f_hi.value < goal:
        raise UnreachableTargetError(
            f"target rate unreachable: {target.metric} of {c.name!r} at {hi:g} dB is "
            f"{f_hi.value:.4f} < {goal:.4f} bit/4D"
        )
    if f_lo.value > f_hi.value:
        raise _NonMonotone(f"metric at {lo:g} dB exceeds metric at {hi:g} dB")
    if f_lo.value >= goal:
        raise SolverError(
            f"target rate {goal:.4f} bit/4D already met at the lower bracket edge {lo:g} dB"
        )

    iterations = 0
    while hi - lo > target.tolerance_db:
        if iterations >= max_iterations:
            raise SolverError(f"bisection did not converge in {max_iterations} steps")
        mid = 0.5 * (lo + hi)
        f_mid = evaluate(mid)
        iterations += 1
        if not f_lo.value <= f_mid.value <= f_hi.value:
            raise _NonMonotone(f"metric not monotone around {mid:.4f} dB")
        if f_mid.value < goal:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        logger.debug(
            "%s %s: [%.4f, %.4f] dB after %d steps", c.name, target.metric, lo, hi, iterations
        )

    span = f_hi.value - f_lo.value
    fraction = (goal - f_lo.value) / span if span > 0 else 0.5
    snr_req = lo + min(max(fraction, 0.0), 1.0) * (hi - lo)
    final = evaluate(snr_req)
    if abs(final.value - goal) > 3.0 * final.std_error + 1e-12 * m:
        raise _NonMonotone(
            f"rate {final.value:.5f} at {snr_req:.4f} dB is more than 3 standard errors "
            f"from {goal:.5f}"
        )
    return SnrSolveResult(
        snr_req_db=snr_req,
        bracket_lo=lo,
        bracket_hi=hi,
        iterations=iterations,
        achieved_rate=final.value / m,
        std_error_rate=final.std_error / m,
        metric=target.metric,
        normalized_rate=target.normalized_rate,
        samples=final.samples,
    )


def required_snr(
    c, target=None, cfg=None, bracket=DEFAULT_BRACKET_DB, max_iterations=DEFAULT_MAX_ITERATIONS
):
    """Minimum SNR (dB) at which the metric reaches ``normalized_rate * m``.

    When the estimate is not monotone at the tested points, or the rate at
    the reported SNR misses the target by more than three standard errors,
    the solve is repeated once with four times the samples.
    """
    target = target or SolveTarget()
    if target.metric == GMI and not c.is_labeled:
        raise LabelsRequiredError()
    if int(max_iterations) < 1:
        raise ValueError(f"max_iterations must be at least 1, got {max_iterations}")
    if cfg is None:
        cfg = EstimatorConfig.for_total(c.size, DEFAULT_TOTAL_SAMPLES)

    try:
        return _bisect(c, target, cfg, bracket, max_iterations)
    except _NonMonotone as first:
        refined = cfg.with_samples(cfg.samples_per_point * REFINEMENT_FACTOR)
        logger.warning(
            "%s: %s; retrying with %d samples per point",
            c.name,
            first,
            refined.samples_per_point,
        )
        try:
            result = _bisect(c, target, refined, bracket, max_iterations)
        except _NonMonotone as second:
            raise SolverError(
                f"{c.name}: metric estimate not monotone after refinement ({second})"
            ) from None
    return replace(result, refined=True)


def _solve_from_arrays(points, labels, name, target, cfg, bracket, max_iterations):
    c = Constellation(points=points, labels=labels, name=name)
    return required_snr(c, target, cfg, bracket, max_iterations)


def make_solver(cache_dir=None):
    """``required_snr`` with results memoized on disk under ``cache_dir``."""
    if not cache_dir:
        return required_snr
    memory = Memory(location=str(cache_dir), verbose=0)
    cached = memory.cache(_solve_from_arrays)

    def solve(
        c, target=None, cfg=None, bracket=DEFAULT_BRACKET_DB, max_iterations=DEFAULT_MAX_ITERATIONS
    ):
        target = target or SolveTarget()
        if cfg is None:
            cfg = EstimatorConfig.for_total(c.size, DEFAULT_TOTAL_SAMPLES)
        return cached(
            c.points.copy(), c.labels, c.name, target, cfg, tuple(bracket), int(max_iterations)
        )

    return solve
