"""
Performance benchmarks for md-shaping
"""

import os
import time
import json
import numpy as np
from pathlib import Path
import sys

# Add the parent directory to path to import the module
sys.path.insert(0, str(Path(__file__).parent.parent))

from md_shaping import (
    ClosedFormGnModel,
    EstimatorConfig,
    GnKurtosisModel,
    SolveTarget,
    VoronoiConstellation,
    cartesian_square,
    e8,
    generate_qam,
    load_link,
    mi_awgn,
    gmi_awgn,
    required_snr,
    vc_decode,
    vc_encode,
)


class BenchmarkRunner:
    """Performance benchmark runner"""

    def __init__(self, total_samples=200_000):
        self.results = {}
        self.total_samples = total_samples

    def _timed(self, fn, *args, **kwargs):
        start_time = time.perf_counter()
        value = fn(*args, **kwargs)
        return value, time.perf_counter() - start_time

    def benchmark_estimator(self):
        """Benchmark MI/GMI estimation throughput"""
        print(f"Benchmarking MI/GMI estimation with {self.total_samples} samples...")
        self.results["estimator"] = {}
        for c in (generate_qam(4), cartesian_square(generate_qam(3))):
            cfg = EstimatorConfig.for_total(c.size, self.total_samples, seed=1)
            mi, mi_time = self._timed(mi_awgn, c, 10.0, cfg)
            _, gmi_time = self._timed(gmi_awgn, c, 10.0, cfg)
            self.results["estimator"][c.name] = {
                "points": c.size,
                "samples": mi.samples,
                "mi_time": mi_time,
                "gmi_time": gmi_time,
                "samples_per_second": mi.samples / mi_time,
            }
            print(f"  {c.name:<10} MI {mi_time:.2f}s  GMI {gmi_time:.2f}s")

    def benchmark_solver(self):
        """Benchmark a required-SNR solve"""
        print("Benchmarking required-SNR bisection...")
        c = generate_qam(3)
        cfg = EstimatorConfig.for_total(c.size, self.total_samples, seed=1)
        result, total_time = self._timed(required_snr, c, SolveTarget("MI", 0.8), cfg)
        self.results["solver"] = {
            "format": c.name,
            "snr_req_db": result.snr_req_db,
            "iterations": result.iterations,
            "total_time": total_time,
        }
        print(f"  {c.name}: {result.snr_req_db:.3f} dB in {total_time:.2f}s")

    def benchmark_vc_coding(self, n_points=100_000):
        """Benchmark E8 Voronoi-constellation encoding and decoding"""
        print(f"Benchmarking VC-E8 coding of {n_points} points...")
        vc = VoronoiConstellation.build(e8(), 32)
        rng = np.random.default_rng(3)
        indices = rng.integers(0, vc.size, size=n_points)
        x, encode_time = self._timed(vc_encode, vc, indices)
        y = x + rng.normal(scale=0.1 * vc.coding_scale, size=x.shape)
        decoded, decode_time = self._timed(vc_decode, vc, y)
        self.results["vc_coding"] = {
            "points": n_points,
            "encode_time": encode_time,
            "decode_time": decode_time,
            "index_errors": int(np.count_nonzero(decoded != indices)),
        }
        print(f"  encode {n_points / encode_time:.0f}/s, decode {n_points / decode_time:.0f}/s")

    def benchmark_nli(self):
        """Benchmark NLI coefficient computation on both presets"""
        print("Benchmarking NLI coefficients...")
        self.results["nli"] = {}
        for name in ("multispan_60x80", "singlespan_205"):
            link = load_link(name)
            _, numerical = self._timed(GnKurtosisModel().span_terms, link)
            _, closed = self._timed(ClosedFormGnModel().span_terms, link)
            self.results["nli"][name] = {"gn_kurtosis_time": numerical, "closed_form_time": closed}
            print(f"  {name}: numerical {numerical:.2f}s, closed form {closed:.4f}s")

    def run_all_benchmarks(self):
        """Run all benchmarks"""
        print("=" * 60)
        print("MD-SHAPING PERFORMANCE BENCHMARKS")
        print("=" * 60)

        self.benchmark_estimator()
        self.benchmark_solver()
        self.benchmark_vc_coding()
        self.benchmark_nli()

        print("\n" + "=" * 60)
        print("BENCHMARK SUMMARY")
        print("=" * 60)
        for section, values in self.results.items():
            print(f"{section}: {json.dumps(values, default=float)}")

    def save_results(self, filename="benchmark-results.json"):
        """Save benchmark results to JSON file"""
        with open(filename, "w") as f:
            json.dump(self.results, f, indent=2, default=float)
        print(f"\nBenchmark results saved to: {filename}")


def main():
    """Run benchmarks"""
    # Smaller budget for CI
    total_samples = 50_000 if os.environ.get("CI") else 200_000

    benchmark = BenchmarkRunner(total_samples)
    benchmark.run_all_benchmarks()
    benchmark.save_results()


if __name__ == "__main__":
    main()
