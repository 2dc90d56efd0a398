"""
ASE noise, modulation-dependent NLI and effective SNR over a WDM link.

Noise model per channel i at launch power P (W)::

    sigma2_nli_i = (eta_gn_i + eta_corr_i * Phi) * P**3
    SNR_eff_i    = P / (P_ASE + sigma2_nli_i)

with Phi the excess kurtosis of the transmitted format (0 for Gaussian
modulation). ASE is accumulated over the amplifier chain::

    P_ASE = span_count * NF * h * nu * (G - 1) * B,   G = 10**(alpha * L / 10)

where B is the symbol rate, nu = c / center_wavelength and h, c are the
CODATA values from ``scipy.constants``. The noise figure absorbs both
polarizations.

Two interchangeable NLI models are provided:

``GnKurtosisModel``
    Numerical GN integral over rectangular channel spectra, evaluated at
    the channel center and integrated over the channel bandwidth
    (locally white NLI). The self-channel part grows coherently across
    spans as N_s**(1 + eps); the cross-channel part adds incoherently.
    eta_corr is 5/6 of the incoherent cross-channel part, the XPM-style
    kurtosis weight of closed-form EGN expressions.

``ClosedFormGnModel``
    The incoherent asinh approximation of the same integral, using the
    same span accumulation and correction rules.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import yaml
from joblib import Parallel, delayed
from scipy import constants
from scipy.optimize import minimize_scalar

from .config import DEFAULT_CONFIG, LINK_PRESET_DIR
from .constellation import MomentSummary
from .exceptions import LinkConfigError, ModelValidityError, NliIntegrationError

logger = logging.getLogger(__name__)

NLI_PREFACTOR = 16.0 / 27.0
KURTOSIS_WEIGHT = 5.0 / 6.0
SMALL_ARGUMENT = 1e-6
GRADING_RATIO = 4.0
GOLDEN_TOLERANCE_DB = 0.01

LINK_FIELDS = (
    "span_count",
    "span_length",
    "alpha",
    "dispersion",
    "gamma_nl",
    "noise_figure",
    "symbol_rate",
    "channel_spacing",
    "channel_count",
    "center_wavelength",
)
PRESET_SUFFIX = ".cfg"


def dbm_to_watt(p_dbm):
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


def _to_db(value):
    return 10.0 * np.log10(value)


@dataclass(frozen=True)
class LinkSpec:
    """Fiber and WDM grid description, in the units of the preset files.

    span_length km, alpha dB/km, dispersion ps/nm/km, gamma_nl 1/W/km,
    noise_figure dB, symbol_rate GBaud, channel_spacing GHz,
    center_wavelength nm.
    """

    span_count: int
    span_length: float
    alpha: float
    dispersion: float
    gamma_nl: float
    noise_figure: float
    symbol_rate: float
    channel_spacing: float
    channel_count: int
    center_wavelength: float = 1550.0

    def __post_init__(self):
        for name in LINK_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise LinkConfigError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise LinkConfigError(f"{name} must be positive, got {value}")
        for name in ("span_count", "channel_count"):
            value = getattr(self, name)
            if int(value) != value:
                raise LinkConfigError(f"{name} must be an integer, got {value}")
            object.__setattr__(self, name, int(value))
        if self.channel_count % 2 == 0:
            raise LinkConfigError(
                f"channel_count must be odd, got {self.channel_count}"
            )
        if self.channel_spacing < self.symbol_rate:
            raise LinkConfigError(
                f"channel spacing {self.channel_spacing} GHz is below the symbol "
                f"rate {self.symbol_rate} GBaud"
            )

    # SI views
    @property
    def alpha_per_m(self):
        """Power attenuation in 1/m."""
        return self.alpha / (10.0 * math.log10(math.e)) / 1e3

    @property
    def span_length_m(self):
        return self.span_length * 1e3

    @property
    def beta2(self):
        """GVD parameter in s^2/m, from beta2 = -D lambda^2 / (2 pi c)."""
        d_si = self.dispersion * 1e-6
        wavelength = self.center_wavelength * 1e-9
        return -d_si * wavelength**2 / (2.0 * math.pi * constants.c)

    @property
    def gamma_per_w_m(self):
        return self.gamma_nl * 1e-3

    @property
    def bandwidth_hz(self):
        return self.symbol_rate * 1e9

    @property
    def spacing_hz(self):
        return self.channel_spacing * 1e9

    @property
    def carrier_hz(self):
        return constants.c / (self.center_wavelength * 1e-9)

    @property
    def center_channel(self):
        return self.channel_count // 2

    @property
    def span_loss_db(self):
        return self.alpha * self.span_length


def link_presets():
    return sorted(p.stem for p in LINK_PRESET_DIR.glob(f"*{PRESET_SUFFIX}"))


def _resolve_link_path(name_or_path):
    path = Path(name_or_path)
    if path.is_file():
        return path
    stem = path.name[: -len(PRESET_SUFFIX)] if path.name.endswith(PRESET_SUFFIX) else path.name
    preset = LINK_PRESET_DIR / f"{stem}{PRESET_SUFFIX}"
    if preset.is_file():
        return preset
    raise LinkConfigError(
        f"link {name_or_path!r} is neither a file nor a preset "
        f"(available: {', '.join(link_presets())})"
    )


def load_link(name_or_path):
    """LinkSpec from a preset name or a YAML file with the LinkSpec field names."""
    path = _resolve_link_path(name_or_path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise LinkConfigError(f"{path}: {e}") from None
    if not isinstance(data, dict):
        raise LinkConfigError(f"{path}: expected a mapping of link fields")
    unknown = sorted(set(data) - set(LINK_FIELDS))
    if unknown:
        raise LinkConfigError(f"{path}: unknown field(s) {', '.join(unknown)}")
    missing = [f for f in LINK_FIELDS[:-1] if f not in data]
    if missing:
        raise LinkConfigError(f"{path}: missing field(s) {', '.join(missing)}")
    logger.debug("Loaded link %s", path)
    return LinkSpec(**data)


def ase_power(link):
    """Accumulated ASE power per channel in W."""
    gain = 10.0 ** (link.span_loss_db / 10.0)
    nf = 10.0 ** (link.noise_figure / 10.0)
    return link.span_count * nf * constants.h * link.carrier_hz * (gain - 1.0) * link.bandwidth_hz


def coherence_exponent(link):
    """Closed-form coherence factor eps of the self-channel NLI."""
    a = link.alpha_per_m
    arg = math.pi**2 / 2.0 * abs(link.beta2) / a * link.bandwidth_hz**2
    return 0.3 * math.log(1.0 + (6.0 / a) / (link.span_length_m * math.asinh(arg)))


@dataclass(frozen=True, eq=False)
class NliCoefficients:
    """Per-channel coefficients (1/W^2) of sigma2_nli = (eta_gn + eta_corr Phi) P^3."""

    eta_gn: np.ndarray
    eta_corr: np.ndarray
    model: str = ""
    epsilon: float = 0.0
    grid: Dict = field(default_factory=dict)

    def __post_init__(self):
        gn = np.array(self.eta_gn, dtype=float).reshape(-1)
        corr = np.array(self.eta_corr, dtype=float).reshape(-1)
        if gn.shape != corr.shape:
            raise ValueError("eta_gn and eta_corr must have the same length")
        if not np.all(gn > 0):
            raise ValueError("eta_gn must be positive for every channel")
        gn.flags.writeable = False
        corr.flags.writeable = False
        object.__setattr__(self, "eta_gn", gn)
        object.__setattr__(self, "eta_corr", corr)

    @property
    def channel_count(self):
        return self.eta_gn.size

    def effective(self, phi):
        eta = self.eta_gn + self.eta_corr * phi
        if np.any(eta <= 0):
            raise ModelValidityError("correction dominates; model invalid")
        return eta


@dataclass(frozen=True, eq=False)
class NliResult:
    """Launch-power optimum per channel.

    Powers are per channel; ``launch_power_dbm`` is the same for every
    channel unless the optimum was taken per channel.
    """

    launch_power_dbm: np.ndarray
    p_ase_w: float
    p_nli_w: np.ndarray
    snr_eff_db: np.ndarray
    phi: float
    model: str
    per_channel: bool
    golden_check_db: float = 0.0
    grid: Dict = field(default_factory=dict)

    @property
    def center_channel(self):
        return self.snr_eff_db.size // 2

    @property
    def center_snr_eff_db(self):
        return float(self.snr_eff_db[self.center_channel])

    @property
    def center_launch_power_dbm(self):
        return float(self.launch_power_dbm[self.center_channel])

    def summary(self):
        return {
            "model": self.model,
            "phi": self.phi,
            "p_ase_dbm": float(watt_to_dbm(self.p_ase_w)),
            "launch_power_dbm": self.center_launch_power_dbm,
            "snr_eff_db": self.center_snr_eff_db,
            "per_channel": self.per_channel,
        }


class NliModel:
    """Span-level NLI terms; subclasses provide ``span_terms``.

    ``span_terms(link)`` returns per-channel (self, cross) terms of one
    span without the gamma**2 factor, so that eta = gamma**2 * term.
    """

    name = ""
    coherent_accumulation = True

    def span_terms(self, link):
        raise NotImplementedError

    def grid(self):
        return {}

    def coefficients(self, link):
        self_terms, cross_terms = _cached_span_terms(self, replace(link, gamma_nl=1.0))
        gamma2 = link.gamma_per_w_m**2
        n = link.span_count
        eps = coherence_exponent(link) if self.coherent_accumulation else 0.0
        eta_gn = gamma2 * (n ** (1.0 + eps) * self_terms + n * cross_terms)
        eta_corr = KURTOSIS_WEIGHT * gamma2 * n * cross_terms
        return NliCoefficients(eta_gn, eta_corr, model=self.name, epsilon=eps, grid=self.grid())


@lru_cache(maxsize=32)
def _cached_span_terms(model, link):
    return model.span_terms(link)


def _relative_channels(link, cut):
    offsets = (np.arange(link.channel_count) - cut) * link.spacing_hz
    half = 0.5 * link.bandwidth_hz
    return offsets - half, offsets + half


@dataclass(frozen=True)
class ClosedFormGnModel(NliModel):
    coherent_accumulation: bool = True
    name = "closed-form"

    def span_terms(self, link):
        a = link.alpha_per_m
        b2 = abs(link.beta2)
        bw = link.bandwidth_hz
        l_eff = (1.0 - math.exp(-a * link.span_length_m)) / a
        l_eff_a = 1.0 / a
        scale = NLI_PREFACTOR * l_eff**2 / (2.0 * math.pi * b2 * l_eff_a) / bw**2
        k = math.pi**2 * l_eff_a * b2 * bw
        n_ch = link.channel_count
        self_terms = np.full(n_ch, scale * math.asinh(0.5 * k * bw))
        cross_terms = np.zeros(n_ch)
        for i in range(n_ch):
            for n in range(n_ch):
                if n == i:
                    continue
                df = (i - n) * link.spacing_hz
                cross_terms[i] += math.asinh(k * (df + 0.5 * bw)) - math.asinh(k * (df - 0.5 * bw))
        return self_terms, scale * cross_terms


def _coerce_setting(name, value, kind):
    """Config value as ``kind``; YAML 1.1 leaves unsigned exponents as strings."""
    if kind is bool:
        if isinstance(value, bool):
            return value
    else:
        try:
            return kind(float(value)) if kind is int else kind(value)
        except (TypeError, ValueError):
            pass
    raise LinkConfigError(f"nli.{name}: expected {kind.__name__}, got {value!r}")


def _graded_edges(u, v, grading):
    """Subsegment edges of [u, v], geometrically refined towards both ends."""
    mid = 0.5 * (u + v)
    left, right = [u], [v]
    step = grading
    while u + step < mid:
        left.append(u + step)
        right.append(v - step)
        step *= GRADING_RATIO
    return np.array(left + [mid] + right[::-1])


@dataclass(frozen=True)
class GnKurtosisModel(NliModel):
    """Numerical GN integral with a kurtosis correction.

    For a CUT centred at f the per-span NLI PSD is integrated over the
    relative frequencies (x, y) of the two pump tones. The inner y
    integral runs over the channel overlaps C_n and C_m - x in closed
    form for the Lorentzian part of the span kernel; the oscillating
    span-interference term is integrated by Gauss-Legendre on a window of
    ``cross_periods`` periods. The outer x integral uses Gauss-Legendre
    panels between spectral breakpoints, graded towards each of them,
    with node doubling until the relative change drops below ``rel_tol``.
    """

    base_nodes: int = 8
    max_refinements: int = 4
    rel_tol: float = 1e-3
    cross_nodes: int = 48
    cross_periods: int = 6
    grading_hz: float = 2e7
    tile_size: int = 512
    n_jobs: int = 1
    coherent_accumulation: bool = True
    name = "gn-kurtosis"

    def __post_init__(self):
        if self.base_nodes < 1 or self.cross_nodes < 1 or self.tile_size < 1:
            raise ValueError("node counts and tile size must be positive")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be at least 1")
        if not self.rel_tol > 0 or not self.grading_hz > 0:
            raise ValueError("rel_tol and grading_hz must be positive")

    @classmethod
    def from_config(cls, config):
        section = {**DEFAULT_CONFIG["nli"], **dict(config.get("nli", {}))}
        names = (
            "base_nodes",
            "max_refinements",
            "rel_tol",
            "cross_nodes",
            "cross_periods",
            "grading_hz",
            "tile_size",
            "n_jobs",
            "coherent_accumulation",
        )
        return cls(**{k: _coerce_setting(k, section[k], type(getattr(cls, k))) for k in names})

    def grid(self):
        return {
            "base_nodes": self.base_nodes,
            "max_refinements": self.max_refinements,
            "rel_tol": self.rel_tol,
            "cross_nodes": self.cross_nodes,
            "cross_periods": self.cross_periods,
            "grading_hz": self.grading_hz,
        }

    def _inner(self, link, x, a, b):
        """Integral over y in [a, b] of the single-span kernel at outer node x."""
        alpha = link.alpha_per_m
        al = alpha * link.span_length_m
        rho = math.exp(-al)
        s = 4.0 * math.pi**2 * abs(link.beta2) * x / alpha
        ta, tb = s * a, s * b
        t_lo, t_hi = np.minimum(ta, tb), np.maximum(ta, tb)
        abs_s = np.abs(s)
        small = np.maximum(np.abs(t_lo), np.abs(t_hi)) < SMALL_ARGUMENT
        safe_s = np.where(small, 1.0, abs_s)

        lorentz = np.where(small, b - a, (np.arctan(t_hi) - np.arctan(t_lo)) / safe_s)

        window = self.cross_periods * 2.0 * math.pi / al
        lo_c = np.clip(t_lo, -window, window)
        hi_c = np.clip(t_hi, -window, window)
        nodes, weights = np.polynomial.legendre.leggauss(self.cross_nodes)
        half = 0.5 * (hi_c - lo_c)
        t = 0.5 * (hi_c + lo_c)[:, None] + half[:, None] * nodes
        osc = half * ((np.cos(al * t) / (1.0 + t * t)) @ weights)
        cross = np.where(small, b - a, osc / safe_s)

        return ((1.0 + rho * rho) * lorentz - 2.0 * rho * cross) / alpha**2

    def _integrand(self, link, cut, x):
        """Total and self-channel integrands at outer nodes ``x``."""
        lo, hi = _relative_channels(link, cut)
        a = np.maximum(lo[None, :, None], lo[None, None, :] - x[:, None, None])
        b = np.minimum(hi[None, :, None], hi[None, None, :] - x[:, None, None])
        valid = b > a
        rows, n_idx, m_idx = np.nonzero(valid)
        values = self._inner(link, x[rows], a[valid], b[valid])
        total = np.bincount(rows, weights=values, minlength=x.size)
        own = (n_idx == cut) & (m_idx == cut) & (x[rows] > lo[cut]) & (x[rows] < hi[cut])
        sci = np.bincount(rows[own], weights=values[own], minlength=x.size)
        return total, sci

    def _edges(self, link, cut):
        lo, hi = _relative_channels(link, cut)
        bw, df = link.bandwidth_hz, link.spacing_hz
        k = np.arange(-2 * link.channel_count, 2 * link.channel_count + 1) * df
        candidates = np.unique(np.concatenate([k, k + bw, k - bw, k + 0.5 * bw, k - 0.5 * bw]))
        pieces = []
        for u, v in zip(lo, hi):
            inner = candidates[(candidates > u) & (candidates < v)]
            points = np.concatenate([[u], inner, [v]])
            for p, q in zip(points[:-1], points[1:]):
                pieces.append(_graded_edges(p, q, self.grading_hz))
        return pieces

    def _quadrature(self, edges_list, nodes):
        t, w = np.polynomial.legendre.leggauss(nodes)
        xs, ws = [], []
        for edges in edges_list:
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            xs.append((mid[:, None] + half[:, None] * t).ravel())
            ws.append((half[:, None] * w).ravel())
        return np.concatenate(xs), np.concatenate(ws)

    def channel_integrals(self, link, cut):
        """(self, cross) outer integrals for channel ``cut`` in m^2 Hz^2."""
        edges = self._edges(link, cut)
        history = []
        previous = None
        for level in range(self.max_refinements + 1):
            nodes = self.base_nodes * 2**level
            x, w = self._quadrature(edges, nodes)
            total = sci = 0.0
            for start in range(0, x.size, self.tile_size):
                tile = slice(start, start + self.tile_size)
                f_total, f_sci = self._integrand(link, cut, x[tile])
                total += float(w[tile] @ f_total)
                sci += float(w[tile] @ f_sci)
            history.append({"nodes": nodes, "total": total, "self": sci})
            logger.debug("channel %d: %d nodes/panel -> %.6e", cut, nodes, total)
            if previous is not None:
                change = max(
                    abs(total - previous[0]) / abs(total),
                    abs(sci - previous[1]) / abs(sci),
                )
                if change < self.rel_tol:
                    return sci, total - sci
            previous = (total, sci)
        raise NliIntegrationError(
            f"NLI integral for channel {cut} did not converge to {self.rel_tol:g}",
            diagnostics={
                "channel": cut,
                "panels": int(sum(e.size - 1 for e in edges)),
                "history": history,
            },
        )

    def span_terms(self, link):
        jobs = Parallel(n_jobs=self.n_jobs)(
            delayed(self.channel_integrals)(link, cut) for cut in range(link.channel_count)
        )
        integrals = np.array(jobs)
        scale = NLI_PREFACTOR / link.bandwidth_hz**2
        return scale * integrals[:, 0], scale * integrals[:, 1]


NLI_MODELS = {
    GnKurtosisModel.name: GnKurtosisModel,
    ClosedFormGnModel.name: ClosedFormGnModel,
}


def get_model(name=None, config=None):
    """NLI model by name, configured from the ``nli`` config section."""
    config = config or DEFAULT_CONFIG
    section = config.get("nli", {})
    name = name or section.get("model", GnKurtosisModel.name)
    if name not in NLI_MODELS:
        raise LinkConfigError(
            f"unknown NLI model {name!r} (choose from {', '.join(NLI_MODELS)})"
        )
    if name == GnKurtosisModel.name:
        return GnKurtosisModel.from_config(config)
    return ClosedFormGnModel(
        coherent_accumulation=section.get("coherent_accumulation", True)
    )


def nli_coefficients(link, model: Optional[NliModel] = None):
    return (model or GnKurtosisModel()).coefficients(link)


def _phi(moments: Union[MomentSummary, float]):
    if isinstance(moments, MomentSummary):
        return float(moments.excess_kurtosis)
    return float(moments)


def snr_eff(link, coeffs, moments, p_dbm):
    """Per-channel effective SNR in dB at launch power ``p_dbm``."""
    eta = coeffs.effective(_phi(moments))
    p = dbm_to_watt(p_dbm)
    return _to_db(p / (ase_power(link) + eta * p**3))


def _golden_check(p_ase, eta, p_opt):
    def objective(p_dbm):
        p = dbm_to_watt(p_dbm)
        return -float(p / (p_ase + eta * p**3))

    p_opt_dbm = float(watt_to_dbm(p_opt))
    found = minimize_scalar(
        objective, bracket=(p_opt_dbm - 3.0, p_opt_dbm + 3.0), method="golden"
    )
    return abs(float(found.x) - p_opt_dbm)


def optimize_power(link, coeffs, moments, per_channel=False):
    """Launch power maximizing SNR_eff, jointly or per channel.

    The optimum of P / (P_ASE + eta P^3) is P = (P_ASE / (2 eta))^(1/3),
    where the NLI power equals P_ASE / 2. A joint optimum uses one power
    for the comb, chosen for the channel with the largest eta (the worst
    channel).
    """
    phi = _phi(moments)
    eta = coeffs.effective(phi)
    p_ase = ase_power(link)
    if per_channel:
        p = (p_ase / (2.0 * eta)) ** (1.0 / 3.0)
        governing = eta
    else:
        worst = float(np.max(eta))
        p = np.full(eta.size, (p_ase / (2.0 * worst)) ** (1.0 / 3.0))
        governing = np.array([worst])
    p_nli = eta * p**3
    snr = _to_db(p / (p_ase + p_nli))

    check = max(
        _golden_check(p_ase, e, (p_ase / (2.0 * e)) ** (1.0 / 3.0)) for e in np.unique(governing)
    )
    if check > GOLDEN_TOLERANCE_DB:
        logger.warning(
            "closed-form optimum differs from golden-section search by %.4f dB", check
        )
    return NliResult(
        launch_power_dbm=watt_to_dbm(p),
        p_ase_w=p_ase,
        p_nli_w=p_nli,
        snr_eff_db=snr,
        phi=phi,
        model=coeffs.model,
        per_channel=bool(per_channel),
        golden_check_db=check,
        grid=dict(coeffs.grid),
    )


def delta_snr_tot(delta_req_db, delta_eff_db):
    """Total gain: -delta_req + delta_eff (dB)."""
    return -delta_req_db + delta_eff_db
