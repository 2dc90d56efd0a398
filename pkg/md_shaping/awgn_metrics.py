"""
Monte-Carlo MI and GMI of constellations over the AWGN channel.

Channel: Y = X + Z with isotropic Gaussian Z of variance 1/snr per 2D slot
(1/(2 snr) per real dimension), X uniform over the normalized points.
Results are reported in bit per 4D symbol, i.e. the per-N-dimensional
value scaled by 4/N.

The estimator is stratified: every point sends the same number of noise
draws. Draws are generated in fixed blocks, each from its own Philox
stream keyed by (seed, block index), so estimates do not depend on how
many workers evaluate the blocks.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate

from .constellation import spectral_efficiency
from .exceptions import LabelsRequiredError, MetricError

logger = logging.getLogger(__name__)

LLR_CLIP = 50.0
MAX_TOTAL_SAMPLES = 2**40
METRIC_NORMALIZATION_RTOL = 1e-9
LN2 = math.log(2.0)

MI = "MI"
GMI = "GMI"


@dataclass(frozen=True)
class EstimatorConfig:
    """Monte-Carlo settings.

    ``samples_per_point`` counts noise samples per constellation point;
    with ``antithetic`` the draws come in (z, -z) pairs.
    ``block_elements`` bounds the size of the per-block distance tensor.
    ``factorize`` estimates Cartesian-product formats one half at a time.
    """

    samples_per_point: int = 4096
    seed: int = 0
    antithetic: bool = True
    n_jobs: int = 1
    block_elements: int = 1 << 22
    factorize: bool = True

    def __post_init__(self):
        if int(self.samples_per_point) < 1:
            raise MetricError(
                f"samples_per_point must be >= 1, got {self.samples_per_point}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise MetricError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.block_elements) < 1:
            raise MetricError("block_elements must be positive")
        if int(self.n_jobs) == 0:
            raise MetricError("n_jobs must be nonzero")

    def with_samples(self, samples_per_point):
        return replace(self, samples_per_point=int(samples_per_point))

    @classmethod
    def for_total(cls, size, total_samples=1_000_000, **kwargs):
        """Config with at least ``total_samples`` samples over ``size`` points."""
        return cls(samples_per_point=max(1, math.ceil(total_samples / size)), **kwargs)

    @classmethod
    def from_config(cls, config, **overrides):
        section = dict(config.get("estimator", {}))
        section.update({k: v for k, v in overrides.items() if v is not None})
        fields = (
            "samples_per_point",
            "seed",
            "antithetic",
            "n_jobs",
            "block_elements",
            "factorize",
        )
        return cls(**{k: section[k] for k in fields if k in section})


@dataclass(frozen=True)
class MetricEstimate:
    """An MI or GMI estimate in bit/4D with its standard error."""

    kind: str
    value: float
    std_error: float
    samples: int
    snr_db: float
    spectral_efficiency: float
    constellation_name: str = ""
    size: int = 0
    dimension: int = 0


def db_to_linear(value_db):
    return 10.0 ** (value_db / 10.0)


def _block_rng(seed, block, stream=0):
    key = [int(seed), int(block)] + ([int(stream)] if stream else [])
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _block_plan(size, dimension, cfg):
    """Draws per point, draws per block and number of blocks."""
    draws = math.ceil(cfg.samples_per_point / 2) if cfg.antithetic else cfg.samples_per_point
    per_draw = size * size * max(dimension, 2) * (2 if cfg.antithetic else 1)
    per_block = max(1, min(draws, cfg.block_elements // per_draw))
    n_blocks = math.ceil(draws / per_block)
    return draws, per_block, n_blocks


def _evaluate_block(points, label_bits, snr_lin, seed, block, count, antithetic, stream=0):
    """Per-point sums of MI and GMI sample values for one block of draws.

    Returns (mi_sum, mi_sq, gmi_sum, gmi_sq) over the block's draws; with
    antithetic sampling a draw's value is the mean of its (z, -z) pair.
    ``gmi_*`` are None when ``label_bits`` is None.
    """
    size, dimension = points.shape
    rng = _block_rng(seed, block, stream)
    z = rng.standard_normal((size, count, dimension)) * math.sqrt(0.5 / snr_lin)
    if antithetic:
        z = np.concatenate([z, -z], axis=1)

    # metric[i, s, j] = -snr (|y - x_j|^2 - |y - x_i|^2), y = x_i + z[i, s]
    gram = points @ points.T
    sq = np.diag(gram)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * gram
    zx = z @ points.T
    zxi = np.einsum("isn,in->is", z, points)[:, :, None]
    metric = -snr_lin * (dist2[:, None, :] + 2.0 * (zxi - zx))

    peak = metric.max(axis=2, keepdims=True)
    weights = np.exp(metric - peak, out=metric)
    mi_values = math.log2(size) - (peak[:, :, 0] + np.log(weights.sum(axis=2))) / LN2

    gmi_values = None
    if label_bits is not None:
        ones = label_bits.astype(np.float64)
        # sums of the weights over the points whose bit k is 1 (0): (M, S, K)
        with np.errstate(divide="ignore"):
            llr = np.log(weights @ ones) - np.log(weights @ (1.0 - ones))
        llr = np.clip(llr, -LLR_CLIP, LLR_CLIP)
        sign = 1.0 - 2.0 * ones
        gmi_values = np.sum(1.0 - np.logaddexp(0.0, sign[:, None, :] * llr) / LN2, axis=2)

    def reduce(values):
        if values is None:
            return None, None
        if antithetic:
            values = 0.5 * (values[:, :count] + values[:, count:])
        return values.sum(axis=1), (values**2).sum(axis=1)

    mi_sum, mi_sq = reduce(mi_values)
    gmi_sum, gmi_sq = reduce(gmi_values)
    return mi_sum, mi_sq, gmi_sum, gmi_sq


def _product_factors(c, labeled):
    """The two halves of a Cartesian-product constellation, or None.

    Returns [(points_a, bits_a), (points_b, bits_b)] when every point is
    (a, b) with a and b ranging independently over the halves and, if
    ``labeled``, every label is label(a) + label(b).
    """
    n = c.dimension
    if n < 4 or n % 4:
        return None
    half = n // 2
    first, i_first = np.unique(c.points[:, :half], axis=0, return_inverse=True)
    second, i_second = np.unique(c.points[:, half:], axis=0, return_inverse=True)
    i_first, i_second = i_first.reshape(-1), i_second.reshape(-1)
    if len(first) < 2 or len(second) < 2 or len(first) * len(second) != c.size:
        return None
    if np.unique(i_first * len(second) + i_second).size != c.size:
        return None
    if not labeled:
        return [(first, None), (second, None)]

    k_first = int(round(math.log2(len(first))))
    if 2**k_first != len(first):
        return None
    bits = c.label_bits
    bits_first = np.zeros((len(first), k_first), dtype=bits.dtype)
    bits_second = np.zeros((len(second), bits.shape[1] - k_first), dtype=bits.dtype)
    bits_first[i_first] = bits[:, :k_first]
    bits_second[i_second] = bits[:, k_first:]
    if not (
        np.array_equal(bits_first[i_first], bits[:, :k_first])
        and np.array_equal(bits_second[i_second], bits[:, k_first:])
    ):
        return None
    return [(first, bits_first), (second, bits_second)]


def _point_sums(points, label_bits, snr_lin, cfg, stream=0):
    """Draws per point and per-point MI/GMI sums over all blocks."""
    size, dimension = points.shape
    draws, per_block, n_blocks = _block_plan(size, dimension, cfg)
    jobs = []
    for block in range(n_blocks):
        count = min(per_block, draws - block * per_block)
        jobs.append(
            delayed(_evaluate_block)(
                points, label_bits, snr_lin, cfg.seed, block, count, cfg.antithetic, stream
            )
        )
    results = Parallel(n_jobs=cfg.n_jobs)(jobs)

    sums = [np.zeros(size) for _ in range(4)]
    for block_sums in results:
        for total, part in zip(sums, block_sums):
            if part is not None:
                total += part
    return draws, sums


def _check_inputs(c, snr_db, cfg):
    if not math.isfinite(snr_db):
        raise MetricError(f"snr_db must be finite, got {snr_db}")
    if abs(c.mean_energy_per_2d() - 1.0) > METRIC_NORMALIZATION_RTOL:
        raise MetricError(
            f"constellation {c.name!r} is not normalized "
            f"(mean energy per 2D slot {c.mean_energy_per_2d():.6g})"
        )
    if cfg.samples_per_point * c.size > MAX_TOTAL_SAMPLES:
        raise MetricError(
            f"sample budget overflow: {cfg.samples_per_point} x {c.size} points"
        )


def _stratified(sums, squares, draws, size):
    """Mean and standard error of a stratified estimate (equal strata)."""
    means = sums / draws
    if draws > 1:
        variances = np.maximum(squares / draws - means**2, 0.0) * draws / (draws - 1)
    else:
        variances = np.zeros_like(means)
    value = float(means.mean())
    std_error = float(math.sqrt(variances.sum() / draws) / size)
    return value, std_error


def estimate_rates(c, snr_db, cfg, gmi=True):
    """MI and (optionally) GMI from one set of noise draws.

    Sharing the draws makes the GMI - MI difference much less noisy than
    two independent estimates. Cartesian products of two halves (such as
    ``cartesian_square`` formats) are estimated per half from independent
    streams, each half drawing the full sample budget, and the rates added.
    """
    cfg = cfg or EstimatorConfig()
    _check_inputs(c, snr_db, cfg)
    if gmi and not c.is_labeled:
        raise LabelsRequiredError()

    snr_lin = db_to_linear(snr_db)
    label_bits = c.label_bits if gmi else None
    factors = _product_factors(c, gmi) if cfg.factorize else None
    if factors is None:
        parts = [(np.ascontiguousarray(c.points), label_bits, cfg)]
    else:
        parts = []
        for points, bits in factors:
            part_cfg = cfg.with_samples(cfg.samples_per_point * (c.size // len(points)))
            parts.append((np.ascontiguousarray(points), bits, part_cfg))

    totals = {MI: [0.0, 0.0], GMI: [0.0, 0.0]}
    samples = 0
    for stream, (points, bits, part_cfg) in enumerate(parts):
        draws, (mi_sum, mi_sq, gmi_sum, gmi_sq) = _point_sums(
            points, bits, snr_lin, part_cfg, stream
        )
        kinds = [(MI, mi_sum, mi_sq)] + ([(GMI, gmi_sum, gmi_sq)] if gmi else [])
        for kind, sums, squares in kinds:
            value, std_error = _stratified(sums, squares, draws, len(points))
            totals[kind][0] += value
            totals[kind][1] += std_error**2
        samples = max(samples, draws * len(points) * (2 if cfg.antithetic else 1))

    per_4d = 4.0 / c.dimension
    m = spectral_efficiency(c)

    def make(kind):
        value, variance = totals[kind]
        return MetricEstimate(
            kind=kind,
            value=value * per_4d,
            std_error=math.sqrt(variance) * per_4d,
            samples=samples,
            snr_db=float(snr_db),
            spectral_efficiency=m,
            constellation_name=c.name,
            size=c.size,
            dimension=c.dimension,
        )

    estimates = {MI: make(MI)}
    if gmi:
        estimates[GMI] = make(GMI)
    logger.debug(
        "%s at %.3f dB: %s",
        c.name,
        snr_db,
        ", ".join(f"{k}={e.value:.5f}+-{e.std_error:.1e}" for k, e in estimates.items()),
    )
    return estimates


def mi_awgn(c, snr_db, cfg=None):
    """Symbol-wise mutual information in bit/4D."""
    return estimate_rates(c, snr_db, cfg, gmi=False)[MI]


def gmi_awgn(c, snr_db, cfg=None):
    """Bit-metric (BICM) generalized mutual information in bit/4D."""
    if not c.is_labeled:
        raise LabelsRequiredError()
    return estimate_rates(c, snr_db, cfg, gmi=True)[GMI]


def estimate_metric(kind, c, snr_db, cfg=None):
    if kind == MI:
        return mi_awgn(c, snr_db, cfg)
    if kind == GMI:
        return gmi_awgn(c, snr_db, cfg)
    raise MetricError(f"unknown metric kind {kind!r}")


def _check_match(e, c, kind):
    if e.kind != kind:
        raise MetricError(f"expected a {kind} estimate, got {e.kind}")
    if (
        e.size != c.size
        or e.dimension != c.dimension
        or (e.constellation_name and c.name and e.constellation_name != c.name)
    ):
        raise MetricError(
            f"estimate was produced for {e.constellation_name!r} "
            f"(N={e.dimension}, M={e.size}), not for {c.name!r} "
            f"(N={c.dimension}, M={c.size})"
        )


def nmi(e, c):
    """MI normalized by the spectral efficiency."""
    _check_match(e, c, MI)
    return e.value / spectral_efficiency(c)


def ngmi(e, c):
    _check_match(e, c, GMI)
    return e.value / spectral_efficiency(c)


def binary_input_mi(snr_lin, epsabs=1e-12):
    """MI in bits of antipodal +-a input over real AWGN with a^2/sigma^2 = snr_lin.

    Evaluated by quadrature of 1 - E[log2(1 + exp(-2 snr_lin y))] with
    y ~ N(1, 1/snr_lin).
    """
    if snr_lin <= 0:
        return 0.0
    sigma = 1.0 / math.sqrt(snr_lin)

    def integrand(y):
        pdf = math.exp(-0.5 * ((y - 1.0) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
        return pdf * np.logaddexp(0.0, -2.0 * snr_lin * y) / LN2

    loss, _ = integrate.quad(
        integrand, 1.0 - 40.0 * sigma, 1.0 + 40.0 * sigma, epsabs=epsabs, limit=200
    )
    return 1.0 - loss


def qpsk_mi_reference(snr_db):
    """MI of Gray QPSK in bit/4D from the binary-input integral."""
    return 4.0 * binary_input_mi(db_to_linear(snr_db))


def antipodal_mi_reference(snr_db):
    """MI in bit/4D of the 2-point format (+-1, 0) per 2D slot."""
    return 2.0 * binary_input_mi(2.0 * db_to_linear(snr_db))


def summarize(estimates: Dict[str, MetricEstimate], c) -> Dict[str, Optional[float]]:
    """Flat dict with MI/GMI and their normalized values, for reporting."""
    mi = estimates.get(MI)
    gmi = estimates.get(GMI)
    return {
        "name": c.name,
        "N": c.dimension,
        "M": c.size,
        "m": spectral_efficiency(c),
        "snr_db": (mi or gmi).snr_db,
        "mi": mi.value if mi else None,
        "mi_std_error": mi.std_error if mi else None,
        "nmi": nmi(mi, c) if mi else None,
        "gmi": gmi.value if gmi else None,
        "gmi_std_error": gmi.std_error if gmi else None,
        "ngmi": ngmi(gmi, c) if gmi else None,
        "samples": (mi or gmi).samples,
    }
