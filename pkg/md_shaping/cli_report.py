"""
Batch command line: metrics, required SNR, gap and NLI sweeps, summary table.

Every sweep writes a CSV whose first line is ``# schema_version=<n>``
followed by a header row with ``REPORT_COLUMNS``. Rows are written in plan
order whatever the order in which they were computed, so identical plans
with identical seeds produce byte-identical files.

Exit codes: 0 success, 1 when some rows failed, 2 for usage or input errors.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

import pandas as pd
from tqdm import tqdm

from .awgn_metrics import GMI, MI, EstimatorConfig, estimate_rates, summarize
from .config import load_config
from .constellation import (
    RESERVED_FORMATS,
    Constellation,
    MomentSummary,
    cartesian_square,
    find_corpus_file,
    generate_qam,
    load_constellation,
    moments,
    spectral_efficiency,
)
from .exceptions import ConstellationError, LabelsRequiredError, MdShapingError
from .lattice_vc import VoronoiConstellation, lattice_by_name, load_lattice, vc_enumerate
from .nli_model import (
    ase_power,
    delta_snr_tot,
    get_model,
    load_link,
    optimize_power,
    watt_to_dbm,
)
from .snr_solver import (
    DEFAULT_MAX_ITERATIONS,
    SolveTarget,
    asymptotic_vc_gap,
    make_solver,
    shannon_req_snr,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

STATUS_OK = "ok"
STATUS_MISSING = "skipped:missing-corpus"
STATUS_REFERENCE = "reference"

B2B = "b2b"
GAUSSIAN = "gaussian"
GAUSSIAN_NAME = "Gaussian"
DEFAULT_GAUSSIAN_SE = 6.0
DEFAULT_LINKS = ("multispan_60x80", "singlespan_205")
METRIC_CHOICES = ("mi", "gmi", "both")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

REPORT_COLUMNS = [
    "format",
    "status",
    "dimension",
    "size",
    "spectral_efficiency",
    "rate",
    "link",
    "snr_req_mi_db",
    "snr_req_gmi_db",
    "snr_req_c_db",
    "delta_req_mi_db",
    "delta_req_gmi_db",
    "phi",
    "launch_power_dbm",
    "snr_eff_db",
    "delta_eff_db",
    "delta_tot_mi_db",
    "delta_tot_gmi_db",
    "samples",
    "seed",
    "std_error_mi",
    "std_error_gmi",
    "message",
]
INTEGER_COLUMNS = ("dimension", "size", "samples", "seed")

CHANNEL_COLUMNS = [
    "format",
    "link",
    "channel",
    "launch_power_dbm",
    "p_ase_dbm",
    "p_nli_dbm",
    "snr_eff_db",
]

TABLE_COLUMNS = [
    "format",
    "spectral_efficiency",
    "snr_req_mi_db",
    "snr_req_gmi_db",
    "snr_req_c_db",
    "link",
    "snr_eff_db",
    "delta_tot_mi_db",
    "delta_tot_gmi_db",
]


@dataclass
class ReportRow:
    """One format (and link) of a sweep.

    Deltas are in dB; ``delta_tot_*`` is always ``-delta_req_* + delta_eff``
    of the same row. Standard errors are of the normalized rate.
    """

    format: str
    status: str = STATUS_OK
    dimension: Optional[int] = None
    size: Optional[int] = None
    spectral_efficiency: Optional[float] = None
    rate: Optional[float] = None
    link: str = ""
    snr_req_mi_db: Optional[float] = None
    snr_req_gmi_db: Optional[float] = None
    snr_req_c_db: Optional[float] = None
    delta_req_mi_db: Optional[float] = None
    delta_req_gmi_db: Optional[float] = None
    phi: Optional[float] = None
    launch_power_dbm: Optional[float] = None
    snr_eff_db: Optional[float] = None
    delta_eff_db: Optional[float] = None
    delta_tot_mi_db: Optional[float] = None
    delta_tot_gmi_db: Optional[float] = None
    samples: Optional[int] = None
    seed: Optional[int] = None
    std_error_mi: Optional[float] = None
    std_error_gmi: Optional[float] = None
    message: str = ""

    @property
    def failed(self):
        return self.status.startswith("error")

    def fill_delta_tot(self):
        if self.delta_eff_db is None:
            return
        if self.delta_req_mi_db is not None:
            self.delta_tot_mi_db = delta_snr_tot(self.delta_req_mi_db, self.delta_eff_db)
        if self.delta_req_gmi_db is not None:
            self.delta_tot_gmi_db = delta_snr_tot(self.delta_req_gmi_db, self.delta_eff_db)

    def mark_error(self, kind, message):
        self.status = f"error:{kind}"
        self.message = "; ".join(m for m in (self.message, message) if m)


@dataclass(frozen=True)
class FormatEntry:
    spec: str
    name: str
    constellation: Optional[Constellation] = None
    status: str = STATUS_OK
    se: Optional[float] = None

    @property
    def is_gaussian(self):
        return self.constellation is None and self.status == STATUS_OK


@dataclass(frozen=True)
class SweepPlan:
    """What to evaluate and where to write it.

    ``samples`` is the total Monte-Carlo budget per metric evaluation;
    ``metric`` is ``mi``, ``gmi`` or ``both`` (GMI only for labeled
    formats).
    """

    constellations: Tuple[str, ...]
    metric: str = "both"
    rate: float = 0.8
    links: Tuple[str, ...] = DEFAULT_LINKS
    out: Optional[Path] = None
    seed: int = 20240601
    samples: int = 1_000_000
    include_b2b: bool = True
    solve: bool = True
    per_channel: bool = False
    nli_model: Optional[str] = None
    max_workers: int = 1
    batch_threshold: int = 3
    config: Dict = field(default_factory=load_config, compare=False, repr=False)

    def __post_init__(self):
        if not self.constellations:
            raise ValueError("sweep plan needs at least one constellation")
        if self.metric not in METRIC_CHOICES:
            raise ValueError(f"metric must be one of {METRIC_CHOICES}, got {self.metric!r}")
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"rate must lie in (0, 1), got {self.rate}")
        if self.samples < 1:
            raise ValueError(f"samples must be positive, got {self.samples}")
        if self.out is not None:
            out_dir = Path(self.out).parent if Path(self.out).suffix else Path(self.out)
            out_dir.mkdir(parents=True, exist_ok=True)

    @property
    def metrics(self):
        return (MI, GMI) if self.metric == "both" else (self.metric.upper(),)


def _int_field(text, what):
    try:
        return int(text)
    except ValueError:
        raise ConstellationError(f"{what} must be an integer, got {text!r}") from None


def resolve_format(spec, root=None):
    """Turn a generator spec, file path or corpus name into a FormatEntry.

    Generator specs: ``qam:<b>``, ``pm-qam:<b>``, ``vc:<lattice>:<bits>``
    (lattice name such as ``e8`` or a generator-matrix file), ``gaussian``
    and ``gaussian:<m>``. Reserved corpus names whose file is absent are
    returned with status ``skipped:missing-corpus``.
    """
    text = spec.strip()
    key = text.lower()
    if key == GAUSSIAN or key.startswith(GAUSSIAN + ":"):
        se = float(text.split(":", 1)[1]) if ":" in text else None
        return FormatEntry(spec, GAUSSIAN_NAME, se=se)
    if key.startswith("pm-qam:"):
        c = cartesian_square(generate_qam(_int_field(text[7:], "bits per 2D")))
        return FormatEntry(spec, c.name, c)
    if key.startswith("qam:"):
        c = generate_qam(_int_field(text[4:], "bits per 2D"))
        return FormatEntry(spec, c.name, c)
    if key.startswith("vc:"):
        lattice_spec, _, bits = text[3:].rpartition(":")
        if not lattice_spec:
            raise ConstellationError(f"expected vc:<lattice>:<bits>, got {spec!r}")
        if Path(lattice_spec).is_file():
            base = load_lattice(lattice_spec)
        else:
            base = lattice_by_name(lattice_spec)
        vc = VoronoiConstellation.build(base, _int_field(bits, "VC bits"))
        c = vc_enumerate(vc)
        return FormatEntry(spec, c.name, c)

    path = Path(text)
    if path.is_file():
        c = load_constellation(path)
        return FormatEntry(spec, c.name or path.stem, c)
    found = find_corpus_file(text, root)
    if found is not None:
        c = load_constellation(found)
        return FormatEntry(spec, text, c)
    if text in RESERVED_FORMATS:
        logger.info("Corpus format %s not present; row skipped", text)
        return FormatEntry(spec, text, status=STATUS_MISSING)
    raise ConstellationError(
        f"unknown constellation {spec!r}: not a generator spec, file or corpus name"
    )


def resolve_plan(plan, root=None):
    """Resolve every spec; a bare ``gaussian`` becomes one row per SE present."""
    entries = [resolve_format(spec, root) for spec in plan.constellations]
    present = sorted(
        {spectral_efficiency(e.constellation) for e in entries if e.constellation is not None}
    )
    resolved = []
    for entry in entries:
        if entry.is_gaussian and entry.se is None:
            for se in present or [DEFAULT_GAUSSIAN_SE]:
                resolved.append(FormatEntry(entry.spec, GAUSSIAN_NAME, se=se))
        else:
            resolved.append(entry)
    return resolved


def _estimator_config(config, size, samples, seed):
    section = config.get("estimator", {})
    return EstimatorConfig.for_total(
        size,
        samples,
        seed=seed,
        antithetic=section.get("antithetic", True),
        n_jobs=section.get("n_jobs", 1),
        block_elements=section.get("block_elements", 1 << 22),
        factorize=section.get("factorize", True),
    )


def _solve_format(c, settings):
    """Required SNR per metric; failures are returned as (kind, message)."""
    solver = make_solver(settings["cache_dir"])
    cfg = EstimatorConfig(**settings["estimator"])
    out = {}
    for kind in settings["metrics"]:
        if kind == GMI and not c.is_labeled and settings["skip_unlabeled_gmi"]:
            continue
        target = SolveTarget(kind, settings["rate"], settings["tolerance_db"])
        try:
            out[kind] = solver(
                c, target, cfg, settings["bracket_db"], settings["max_iterations"]
            )
        except MdShapingError as e:
            out[kind] = (type(e).__name__, str(e))
    return out


def _solve_all(entries, plan):
    solver_cfg = plan.config.get("solver", {})
    jobs = {}
    for index, entry in enumerate(entries):
        if entry.constellation is None:
            continue
        c = entry.constellation
        jobs[index] = (
            c,
            {
                "cache_dir": plan.config.get("output", {}).get("cache_dir"),
                "estimator": asdict(_estimator_config(plan.config, c.size, plan.samples, plan.seed)),
                "metrics": plan.metrics,
                "skip_unlabeled_gmi": plan.metric == "both",
                "rate": plan.rate,
                "tolerance_db": solver_cfg.get("tolerance_db", 0.02),
                "bracket_db": tuple(solver_cfg.get("bracket_db", (-10.0, 30.0))),
                "max_iterations": int(solver_cfg.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
            },
        )

    results = {}
    if len(jobs) > plan.batch_threshold and plan.max_workers > 1:
        with ProcessPoolExecutor(max_workers=plan.max_workers) as executor:
            future_to_index = {
                executor.submit(_solve_format, c, settings): index
                for index, (c, settings) in jobs.items()
            }
            with tqdm(total=len(future_to_index), desc="Solving (parallel)") as pbar:
                for future in as_completed(future_to_index):
                    index = future_to_index[future]
                    try:
                        results[index] = future.result()
                    except Exception as e:
                        results[index] = {"_failed": (type(e).__name__, str(e))}
                    pbar.update(1)
    else:
        for index, (c, settings) in tqdm(
            jobs.items(), desc="Solving", disable=len(jobs) < 2
        ):
            results[index] = _solve_format(c, settings)
    return results


def _format_row(entry, plan):
    row = ReportRow(format=entry.name, status=entry.status, rate=plan.rate, seed=plan.seed)
    c = entry.constellation
    if c is not None:
        row.dimension, row.size = c.dimension, c.size
        row.spectral_efficiency = spectral_efficiency(c)
    elif entry.is_gaussian:
        row.spectral_efficiency = entry.se
    if row.spectral_efficiency is not None:
        row.snr_req_c_db = shannon_req_snr(row.spectral_efficiency, plan.rate)
    return row


def _apply_solves(row, solved):
    if "_failed" in solved:
        row.mark_error(*solved["_failed"])
        return
    for kind, outcome in solved.items():
        suffix = kind.lower()
        if isinstance(outcome, tuple):
            row.mark_error(outcome[0], outcome[1])
            continue
        setattr(row, f"snr_req_{suffix}_db", outcome.snr_req_db)
        setattr(row, f"delta_req_{suffix}_db", outcome.snr_req_db - row.snr_req_c_db)
        setattr(row, f"std_error_{suffix}", outcome.std_error_rate)
        row.samples = outcome.samples


def _gaussian_solves(row):
    row.snr_req_mi_db = row.snr_req_gmi_db = row.snr_req_c_db
    row.delta_req_mi_db = row.delta_req_gmi_db = 0.0
    row.phi = 0.0


def cmd_metrics(c, snr_db, cfg=None, metric="both"):
    """MI, GMI and their normalized values for one format at one SNR."""
    if metric not in METRIC_CHOICES:
        raise ValueError(f"metric must be one of {METRIC_CHOICES}, got {metric!r}")
    if metric == "gmi" and not c.is_labeled:
        raise LabelsRequiredError()
    want_gmi = metric == "gmi" or (metric == "both" and c.is_labeled)
    estimates = estimate_rates(c, snr_db, cfg, gmi=want_gmi)
    if metric == "gmi":
        estimates.pop(MI)
    return summarize(estimates, c)


def solve_plan(plan, root=None):
    """Resolved entries and their required-SNR solves, keyed by entry index."""
    entries = resolve_plan(plan, root)
    return entries, (_solve_all(entries, plan) if plan.solve else {})


def cmd_gap_sweep(plan, root=None, prepared=None):
    """One row per format with the gap to capacity at the target rate.

    Asymptotic Voronoi-constellation gaps for the shaping gains configured
    under ``shaping_gains`` are appended as reference rows. ``prepared`` is
    the output of ``solve_plan`` when the caller already has it.
    """
    entries, solved = prepared or solve_plan(plan, root)
    rows = []
    for index, entry in enumerate(entries):
        row = _format_row(entry, plan)
        if entry.is_gaussian:
            _gaussian_solves(row)
        elif index in solved:
            _apply_solves(row, solved[index])
        rows.append(row)
    for lattice, gain_db in sorted(plan.config.get("shaping_gains", {}).items()):
        gap = asymptotic_vc_gap(float(gain_db))
        rows.append(
            ReportRow(
                format=f"VC-{lattice}-asymptotic",
                status=STATUS_REFERENCE,
                rate=plan.rate,
                delta_req_mi_db=gap,
                delta_req_gmi_db=gap,
                message=f"shaping gain {float(gain_db):g} dB",
            )
        )
    return rows


def cmd_nli_sweep(plan, root=None, prepared=None):
    """Rows per format and link (plus back-to-back), and per-channel rows.

    ``delta_eff`` is measured against the Gaussian reference on the same
    link; back-to-back rows have no NLI, so ``delta_eff = 0``.
    """
    entries, solved = prepared or solve_plan(plan, root)
    model = get_model(plan.nli_model, plan.config)

    links = []
    for name in plan.links:
        link = load_link(name)
        coeffs = model.coefficients(link)
        reference = optimize_power(link, coeffs, MomentSummary.gaussian(), plan.per_channel)
        logger.info(
            "%s: Gaussian SNR_eff %.3f dB at %.2f dBm",
            name,
            reference.center_snr_eff_db,
            reference.center_launch_power_dbm,
        )
        links.append((Path(name).stem, link, coeffs, reference))

    rows, channel_rows = [], []
    for index, entry in enumerate(entries):
        base = _format_row(entry, plan)
        if entry.is_gaussian:
            _gaussian_solves(base)
        elif index in solved:
            _apply_solves(base, solved[index])
        if entry.constellation is not None:
            base.phi = moments(entry.constellation).excess_kurtosis

        if plan.include_b2b:
            b2b = ReportRow(**asdict(base))
            b2b.link = B2B
            b2b.delta_eff_db = 0.0
            b2b.fill_delta_tot()
            rows.append(b2b)

        for link_name, link, coeffs, reference in links:
            row = ReportRow(**asdict(base))
            row.link = link_name
            if row.status != STATUS_OK and not row.failed:
                rows.append(row)
                continue
            try:
                result = optimize_power(link, coeffs, row.phi or 0.0, plan.per_channel)
            except MdShapingError as e:
                row.mark_error(type(e).__name__, str(e))
                rows.append(row)
                continue
            row.launch_power_dbm = result.center_launch_power_dbm
            row.snr_eff_db = result.center_snr_eff_db
            row.delta_eff_db = result.center_snr_eff_db - reference.center_snr_eff_db
            row.fill_delta_tot()
            rows.append(row)
            p_ase_dbm = float(watt_to_dbm(ase_power(link)))
            for channel in range(link.channel_count):
                channel_rows.append(
                    {
                        "format": entry.name,
                        "link": link_name,
                        "channel": channel + 1,
                        "launch_power_dbm": float(result.launch_power_dbm[channel]),
                        "p_ase_dbm": p_ase_dbm,
                        "p_nli_dbm": float(watt_to_dbm(result.p_nli_w[channel])),
                        "snr_eff_db": float(result.snr_eff_db[channel]),
                    }
                )
    return rows, channel_rows


def _link_by_se(config):
    mapping = config.get("report", {}).get("link_by_se", {})
    return {int(float(k)): str(v) for k, v in mapping.items()}


def build_table(nli_frame, config=None):
    """Summary table: one row per format, SNR_eff from the link of its SE group."""
    config = config or load_config()
    preferred = _link_by_se(config)
    frame = nli_frame[nli_frame["status"] == STATUS_OK]
    frame = frame[frame["link"] != B2B]
    out = []
    for name in dict.fromkeys(frame["format"]):
        for se, group in frame[frame["format"] == name].groupby("spectral_efficiency", sort=False):
            want = preferred.get(int(round(se)))
            match = group[group["link"] == want]
            pick = (match if not match.empty else group).iloc[0]
            out.append({col: pick.get(col) for col in TABLE_COLUMNS})
    return pd.DataFrame(out, columns=TABLE_COLUMNS)


def recompute_table(frame, rate=0.8):
    """Total gains from tabulated values.

    Needs columns ``format``, ``spectral_efficiency``, ``snr_req_db``,
    ``snr_eff_db`` and ``snr_eff_ref_db`` (the Gaussian SNR_eff on the same
    link); an optional ``rate`` column overrides ``rate`` per row.
    """
    required = ["format", "spectral_efficiency", "snr_req_db", "snr_eff_db", "snr_eff_ref_db"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValueError(f"table is missing column(s): {', '.join(missing)}")
    out = frame.copy()
    rates = out["rate"] if "rate" in out.columns else pd.Series(rate, index=out.index)
    out["snr_req_c_db"] = [
        shannon_req_snr(m, r) for m, r in zip(out["spectral_efficiency"], rates)
    ]
    out["delta_req_db"] = out["snr_req_db"] - out["snr_req_c_db"]
    out["delta_eff_db"] = out["snr_eff_db"] - out["snr_eff_ref_db"]
    out["delta_tot_db"] = [
        delta_snr_tot(r, e) for r, e in zip(out["delta_req_db"], out["delta_eff_db"])
    ]
    return out


def _frame(rows, columns):
    records = [asdict(r) if isinstance(r, ReportRow) else dict(r) for r in rows]
    frame = pd.DataFrame(records, columns=columns)
    for name in INTEGER_COLUMNS:
        if name in frame.columns:
            frame[name] = frame[name].astype("Int64")
    return frame


def write_csv(rows, path, columns=REPORT_COLUMNS, float_format="%.6f", as_json=False):
    """Write rows with the schema header; optionally a JSON mirror next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = rows if isinstance(rows, pd.DataFrame) else _frame(rows, columns)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# schema_version={SCHEMA_VERSION}\n")
        frame.to_csv(f, index=False, float_format=float_format)
    if as_json:
        records = frame.astype(object).where(pd.notna(frame), None).to_dict(orient="records")
        with open(path.with_suffix(".json"), "w", encoding="utf-8") as f:
            json.dump({"schema_version": SCHEMA_VERSION, "rows": records}, f, indent=2)
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def read_csv(path):
    """Read a CSV written by ``write_csv`` (schema header checked)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    if not first.startswith("# schema_version="):
        raise ValueError(f"{path}: missing schema header")
    version = int(first.split("=", 1)[1])
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: schema version {version}, expected {SCHEMA_VERSION}")
    return pd.read_csv(path, skiprows=1, keep_default_na=True)


def _exit_code(rows):
    return EXIT_PARTIAL if any(r.failed for r in rows) else EXIT_OK


def _print_rows(rows):
    for r in rows:
        parts = [f"{r.format:<24}", f"{r.status:<24}"]
        if r.link:
            parts.append(f"{r.link:<18}")
        for label, value in (
            ("dReq(MI)", r.delta_req_mi_db),
            ("dReq(GMI)", r.delta_req_gmi_db),
            ("SNReff", r.snr_eff_db),
            ("dTot(MI)", r.delta_tot_mi_db),
        ):
            if value is not None:
                parts.append(f"{label}={value:.3f}")
        print("  ".join(parts))


def _plan_from_args(args, config, default_out):
    processing = config.get("processing", {})
    return SweepPlan(
        constellations=tuple(args.constellation or ()),
        metric=args.metric,
        rate=args.rate if args.rate is not None else config["solver"]["normalized_rate"],
        links=tuple(args.link or DEFAULT_LINKS) if hasattr(args, "link") else DEFAULT_LINKS,
        out=Path(args.out) if args.out else default_out,
        seed=_seed(args, config),
        samples=args.samples,
        include_b2b=not getattr(args, "no_b2b", False),
        solve=not getattr(args, "no_solve", False),
        per_channel=getattr(args, "per_channel", False)
        or config.get("nli", {}).get("per_channel_optimum", False),
        nli_model=getattr(args, "nli_model", None),
        max_workers=args.max_workers or processing.get("max_workers", 1),
        batch_threshold=processing.get("batch_threshold", 3),
        config=config,
    )


def _seed(args, config):
    return args.seed if args.seed is not None else config["estimator"]["seed"]


def _single_format(spec):
    entry = resolve_format(spec)
    if entry.constellation is None:
        if entry.status == STATUS_MISSING:
            raise FileNotFoundError(f"corpus format {spec!r} not found")
        raise ConstellationError(f"{spec!r} is not a concrete constellation")
    return entry.constellation


def _run_metrics(args, config):
    c = _single_format(args.constellation[0])
    samples = args.samples
    cfg = _estimator_config(config, c.size, samples, _seed(args, config))
    result = cmd_metrics(c, args.snr, cfg, args.metric)
    if args.json:
        print(json.dumps(result, sort_keys=True))
        return EXIT_OK
    print(f"{result['name']}: N={result['N']} M={result['M']} m={result['m']:g} bit/4D")
    print(f"SNR: {result['snr_db']:.3f} dB ({result['samples']} samples)")
    if result["mi"] is not None:
        print(f"MI:   {result['mi']:.5f} bit/4D  (NMI {result['nmi']:.5f})")
    if result["gmi"] is not None:
        print(f"GMI:  {result['gmi']:.5f} bit/4D  (NGMI {result['ngmi']:.5f})")
    return EXIT_OK


def _run_reqsnr(args, config):
    c = _single_format(args.constellation[0])
    rate = args.rate if args.rate is not None else config["solver"]["normalized_rate"]
    cfg = _estimator_config(config, c.size, args.samples, _seed(args, config))
    kinds = (MI, GMI) if args.metric == "both" else (args.metric.upper(),)
    solver = make_solver(config["output"].get("cache_dir"))
    report = {"name": c.name, "m": spectral_efficiency(c), "rate": rate}
    report["snr_req_c_db"] = shannon_req_snr(report["m"], rate)
    for kind in kinds:
        if kind == GMI and not c.is_labeled:
            if args.metric == "gmi":
                raise LabelsRequiredError()
            continue
        target = SolveTarget(kind, rate, config["solver"]["tolerance_db"])
        result = solver(
            c,
            target,
            cfg,
            tuple(config["solver"]["bracket_db"]),
            int(config["solver"].get("max_iterations", DEFAULT_MAX_ITERATIONS)),
        )
        report[f"snr_req_{kind.lower()}_db"] = result.snr_req_db
        report[f"delta_req_{kind.lower()}_db"] = result.snr_req_db - report["snr_req_c_db"]
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        for key, value in report.items():
            print(f"{key}: {value:.4f}" if isinstance(value, float) else f"{key}: {value}")
    return EXIT_OK


def _run_gap(args, config):
    results_dir = Path(config["output"]["results_dir"])
    plan = _plan_from_args(args, config, results_dir / "gap.csv")
    rows = cmd_gap_sweep(plan)
    write_csv(rows, plan.out, float_format=config["output"]["float_format"], as_json=args.json)
    _print_rows(rows)
    print(f"\nResults saved to: {plan.out}")
    return _exit_code(rows)


def _run_nli(args, config):
    results_dir = Path(config["output"]["results_dir"])
    plan = _plan_from_args(args, config, results_dir / "nli.csv")
    rows, channel_rows = cmd_nli_sweep(plan)
    fmt = config["output"]["float_format"]
    out = Path(plan.out)
    write_csv(rows, out, float_format=fmt, as_json=args.json)
    channels = out.with_name(f"{out.stem}_channels.csv")
    write_csv(channel_rows, channels, columns=CHANNEL_COLUMNS, float_format=fmt, as_json=args.json)
    _print_rows(rows)
    print(f"\nResults saved to: {out} and {channels}")
    return _exit_code(rows)


def _run_sweep(args, config):
    """Gap sweep, NLI sweep and summary table into one directory."""
    out_dir = Path(args.out) if args.out else Path(config["output"]["results_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    fmt = config["output"]["float_format"]
    plan = replace(_plan_from_args(args, config, out_dir / "nli.csv"), out=out_dir / "nli.csv")

    prepared = solve_plan(plan)
    gap_rows = cmd_gap_sweep(plan, prepared=prepared)
    write_csv(gap_rows, out_dir / "gap.csv", float_format=fmt, as_json=args.json)
    rows, channel_rows = cmd_nli_sweep(plan, prepared=prepared)
    write_csv(rows, out_dir / "nli.csv", float_format=fmt, as_json=args.json)
    write_csv(
        channel_rows,
        out_dir / "nli_channels.csv",
        columns=CHANNEL_COLUMNS,
        float_format=fmt,
        as_json=args.json,
    )
    table = build_table(_frame(rows, REPORT_COLUMNS), config)
    write_csv(table, out_dir / "table.csv", float_format=fmt, as_json=args.json)
    _print_rows(rows)
    print(f"\nResults saved to: {out_dir}")
    return max(_exit_code(gap_rows), _exit_code(rows))


def _run_report(args, config):
    fmt = config["output"]["float_format"]
    if args.table:
        frame = pd.read_csv(args.table, comment="#")
        rate = args.rate if args.rate is not None else config["solver"]["normalized_rate"]
        table = recompute_table(frame, rate)
        out = Path(args.out) if args.out else Path(args.table).with_name("table_recomputed.csv")
    else:
        source = Path(args.source)
        if source.is_dir():
            source = source / "nli.csv"
        table = build_table(read_csv(source), config)
        out = Path(args.out) if args.out else source.with_name("table.csv")
    write_csv(table, out, float_format=fmt, as_json=args.json)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    print(f"\nTable saved to: {out}")
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--config", "-c", type=str, help="Path to configuration file")
    parser.add_argument(
        "--verbose", "-v", action="count", default=0, help="More logging (-vv for debug)"
    )
    parser.add_argument("--seed", type=int, default=None, help="Monte-Carlo seed (u64)")
    parser.add_argument(
        "--samples",
        type=int,
        default=1_000_000,
        help="Monte-Carlo samples per metric evaluation",
    )
    parser.add_argument("--out", "-o", type=str, help="Output file (directory for sweep)")
    parser.add_argument("--json", action="store_true", help="Machine-readable output")


def _add_formats(parser, required=True):
    parser.add_argument(
        "--constellation",
        "-C",
        action="extend",
        nargs="+",
        required=required,
        help="File, corpus name or generator spec (qam:<b>, pm-qam:<b>, "
        "vc:<lattice>:<bits>, gaussian)",
    )
    parser.add_argument("--metric", choices=METRIC_CHOICES, default="both")
    parser.add_argument(
        "--gmi", dest="metric", action="store_const", const="gmi", help="Same as --metric gmi"
    )
    parser.add_argument("--rate", type=float, default=None, help="Target normalized rate")


def _add_nli(parser):
    parser.add_argument(
        "--link",
        "-l",
        action="append",
        help="Link preset name or file (repeatable; default: both presets)",
    )
    parser.add_argument("--per-channel", action="store_true", help="Optimize power per channel")
    parser.add_argument("--nli-model", choices=("gn-kurtosis", "closed-form"), default=None)
    parser.add_argument("--no-b2b", action="store_true", help="Omit back-to-back rows")
    parser.add_argument("--no-solve", action="store_true", help="Skip required-SNR solves")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="md-shaping",
        description="Multidimensional modulation: AWGN gaps, Voronoi constellations "
        "and NLI-aware effective SNR",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  md-shaping metrics -C qam:3 --snr 7.5
  md-shaping reqsnr -C pm-qam:3 --metric gmi --rate 0.8
  md-shaping gap -C qam:3 pm-qam:3 C4-64 gaussian --out results/gap.csv
  md-shaping nli -C qam:3 qam:5 gaussian --link multispan_60x80
  md-shaping sweep -C qam:3 qam:5 4D-64PRS gaussian --out results/
  md-shaping report --table values.csv
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="MI/GMI/NMI/NGMI at one SNR")
    _add_common(p)
    _add_formats(p)
    p.add_argument("--snr", type=float, required=True, help="SNR per 2D slot in dB")

    p = sub.add_parser("reqsnr", help="Required SNR at a target normalized rate")
    _add_common(p)
    _add_formats(p)

    p = sub.add_parser("gap", help="Gap to AWGN capacity for a set of formats")
    _add_common(p)
    _add_formats(p)
    p.add_argument("--max-workers", "-w", type=int, default=None)

    for name, text in (
        ("nli", "Effective SNR over WDM links"),
        ("sweep", "Gap sweep, NLI sweep and summary table"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_formats(p)
        _add_nli(p)
        p.add_argument("--max-workers", "-w", type=int, default=None)

    p = sub.add_parser("report", help="Summary table from a sweep or tabulated values")
    _add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--from", dest="source", help="nli.csv or a sweep directory")
    group.add_argument("--table", help="CSV of SNR_req/SNR_eff values to recompute")
    p.add_argument("--rate", type=float, default=None)
    return parser


def _configure_logging(config, verbosity):
    section = config.get("logging", {})
    level = section.get("level", "WARNING")
    if verbosity == 1:
        level = "INFO"
    elif verbosity >= 2:
        level = "DEBUG"
    logging.basicConfig(level=level, format=section.get("format"), force=True)


COMMANDS = {
    "metrics": _run_metrics,
    "reqsnr": _run_reqsnr,
    "gap": _run_gap,
    "nli": _run_nli,
    "sweep": _run_sweep,
    "report": _run_report,
}


def main(argv=None):
    """Command-line entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    config = load_config(args.config)
    _configure_logging(config, args.verbose)
    if getattr(args, "samples", 1) < 1:
        print("Error: --samples must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, config)
    except (MdShapingError, OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
