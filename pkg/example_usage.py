#!/usr/bin/env python3
"""
Example usage of md-shaping

This script demonstrates the programmatic API: AWGN metrics, required SNR,
Voronoi constellations and the NLI-aware effective SNR.
"""

from md_shaping import (
    ClosedFormGnModel,
    EstimatorConfig,
    SolveTarget,
    VoronoiConstellation,
    asymptotic_vc_gap,
    cartesian_square,
    delta_snr_req,
    delta_snr_tot,
    e8,
    estimate_rates,
    generate_qam,
    load_link,
    moments,
    ngmi,
    nmi,
    optimize_power,
    required_snr,
    shannon_req_snr,
    spectral_efficiency,
    vc_decode,
    vc_encode,
    vc_enumerate,
)
from md_shaping.constellation import MomentSummary

SAMPLES = 200_000


def example_metrics():
    """Example: MI/GMI of uniform QAM at one SNR."""
    print("=== AWGN METRICS EXAMPLE ===")

    for c in (generate_qam(3), cartesian_square(generate_qam(2))):
        cfg = EstimatorConfig.for_total(c.size, SAMPLES, seed=1)
        rates = estimate_rates(c, 7.5, cfg)
        print(
            f"  {c.name:<10} m={spectral_efficiency(c):g}  "
            f"NMI={nmi(rates['MI'], c):.4f}  NGMI={ngmi(rates['GMI'], c):.4f}"
        )


def example_required_snr():
    """Example: required SNR and gap to capacity."""
    print("\n=== REQUIRED SNR EXAMPLE ===")

    c = generate_qam(3)
    m = spectral_efficiency(c)
    cfg = EstimatorConfig.for_total(c.size, SAMPLES, seed=1)
    result = required_snr(c, SolveTarget("MI", 0.8), cfg)
    gap = delta_snr_req(result.snr_req_db, m, 0.8)

    print(f"  Shannon limit at m={m:g}: {shannon_req_snr(m, 0.8):.3f} dB")
    print(f"  {c.name} needs {result.snr_req_db:.3f} dB (gap {gap:.3f} dB)")
    print(f"  Asymptotic gap of a 0.65 dB shaping lattice: {asymptotic_vc_gap(0.65):.2f} dB")
    return result


def example_voronoi():
    """Example: E8 Voronoi constellation."""
    print("\n=== VORONOI CONSTELLATION EXAMPLE ===")

    vc = VoronoiConstellation.build(e8(), 8)
    x = vc_encode(vc, 42)
    print(f"  {vc.name}: {vc.size} points in {vc.dimension}D")
    print(f"  index 42 -> {x} -> {vc_decode(vc, x)}")

    c = vc_enumerate(vc)
    cfg = EstimatorConfig.for_total(c.size, SAMPLES, seed=1)
    rates = estimate_rates(c, 5.0, cfg, gmi=False)
    print(f"  MI at 5 dB: {rates['MI'].value:.4f} of {spectral_efficiency(c):g} bit/4D")


def example_effective_snr(snr_req=None):
    """Example: effective SNR over the multi-span preset."""
    print("\n=== EFFECTIVE SNR EXAMPLE ===")

    link = load_link("multispan_60x80")
    coeffs = ClosedFormGnModel().coefficients(link)
    reference = optimize_power(link, coeffs, MomentSummary.gaussian())
    print(
        f"  Gaussian: {reference.center_snr_eff_db:.3f} dB "
        f"at {reference.center_launch_power_dbm:.2f} dBm"
    )

    c = generate_qam(3)
    result = optimize_power(link, coeffs, moments(c))
    delta_eff = result.center_snr_eff_db - reference.center_snr_eff_db
    print(f"  {c.name}: {result.center_snr_eff_db:.3f} dB (delta {delta_eff:+.3f} dB)")

    if snr_req is not None:
        delta_req = delta_snr_req(snr_req.snr_req_db, spectral_efficiency(c), 0.8)
        print(f"  Total gain over Gaussian: {delta_snr_tot(delta_req, delta_eff):+.3f} dB")


def main():
    """Run all examples."""
    print("md-shaping - Example Usage")
    print("=" * 50)

    example_metrics()
    result = example_required_snr()
    example_voronoi()
    example_effective_snr(result)

    print("\nExample complete!")


if __name__ == "__main__":
    main()
