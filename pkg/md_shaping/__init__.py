"""
Multidimensional modulation toolkit for coded optical transmission.

AWGN mutual-information metrics and required-SNR gaps for M-ary
N-dimensional formats, Voronoi lattice constellations, and a
modulation-dependent NLI model giving effective SNR over WDM links.
"""

__version__ = "1.0.0"

from .awgn_metrics import (
    GMI,
    MI,
    EstimatorConfig,
    MetricEstimate,
    binary_input_mi,
    estimate_rates,
    gmi_awgn,
    mi_awgn,
    ngmi,
    nmi,
)
from .cli_report import ReportRow, SweepPlan, cmd_gap_sweep, cmd_metrics, cmd_nli_sweep, main
from .config import load_config
from .constellation import (
    Constellation,
    MomentSummary,
    cartesian_square,
    generate_qam,
    list_corpus,
    load_constellation,
    moments,
    normalize,
    spectral_efficiency,
    store_constellation,
)
from .exceptions import (
    ConstellationError,
    ConstellationParseError,
    EnumerationTooLargeError,
    LabelsRequiredError,
    LatticeError,
    LinkConfigError,
    MdShapingError,
    MetricError,
    ModelValidityError,
    NliIntegrationError,
    SolverError,
    UnreachableTargetError,
)
from .lattice_vc import (
    Lattice,
    VoronoiConstellation,
    bw16,
    dn,
    e8,
    generic_lattice,
    load_lattice,
    nearest_point,
    vc_decode,
    vc_encode,
    vc_enumerate,
    zn,
)
from .nli_model import (
    ClosedFormGnModel,
    GnKurtosisModel,
    LinkSpec,
    NliCoefficients,
    NliResult,
    ase_power,
    delta_snr_tot,
    load_link,
    nli_coefficients,
    optimize_power,
    snr_eff,
)
from .snr_solver import (
    SnrSolveResult,
    SolveTarget,
    asymptotic_vc_gap,
    delta_snr_req,
    required_snr,
    shannon_req_snr,
)
