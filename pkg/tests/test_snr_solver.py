"""
Unit tests for the required-SNR solver and gap arithmetic
"""

import math
import unittest
import tempfile
import shutil
import numpy as np
import sys
from pathlib import Path
from scipy.optimize import brentq

# Add the parent directory to path to import the module
sys.path.insert(0, str(Path(__file__).parent.parent))

from md_shaping import (
    Constellation,
    EstimatorConfig,
    LabelsRequiredError,
    SolveTarget,
    SolverError,
    UnreachableTargetError,
    asymptotic_vc_gap,
    delta_snr_req,
    generate_qam,
    required_snr,
    shannon_req_snr,
)
from md_shaping.awgn_metrics import binary_input_mi
from md_shaping.snr_solver import make_solver


def qpsk_oracle_snr_db(normalized_rate):
    """SNR where Gray QPSK reaches the rate, from the binary-input integral."""
    return brentq(
        lambda snr_db: binary_input_mi(10 ** (snr_db / 10)) - normalized_rate, -10.0, 30.0
    )


class TestShannonReference(unittest.TestCase):
    """Test the capacity reference"""

    def test_table_values(self):
        self.assertAlmostEqual(shannon_req_snr(6, 0.8), 6.312, delta=0.001)
        self.assertAlmostEqual(shannon_req_snr(10, 0.8), 11.761, delta=0.001)

    def test_zero_db_point(self):
        self.assertAlmostEqual(shannon_req_snr(2.5, 0.8), 0.0, places=12)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            shannon_req_snr(0, 0.8)
        with self.assertRaises(ValueError):
            shannon_req_snr(6, 1.5)


class TestGaps(unittest.TestCase):
    """Test gap arithmetic"""

    def test_delta_snr_req_examples(self):
        self.assertAlmostEqual(delta_snr_req(7.502, 6, 0.8), 1.190, places=3)
        self.assertAlmostEqual(delta_snr_req(13.091, 10, 0.8), 1.330, places=3)

    def test_gaussian_reference_has_no_gap(self):
        self.assertEqual(delta_snr_req(shannon_req_snr(8, 0.8), 8, 0.8), 0.0)

    def test_asymptotic_vc_gap(self):
        self.assertAlmostEqual(asymptotic_vc_gap(0.0), 1.53)
        self.assertAlmostEqual(asymptotic_vc_gap(1.53), 0.0)
        self.assertAlmostEqual(asymptotic_vc_gap(0.65), 0.88)

    def test_asymptotic_vc_gap_limit(self):
        with self.assertRaisesRegex(ValueError, "ultimate shaping gain"):
            asymptotic_vc_gap(1.6)
        with self.assertRaises(ValueError):
            asymptotic_vc_gap(-0.1)


class TestSolveTarget(unittest.TestCase):
    """Test target validation"""

    def test_defaults(self):
        target = SolveTarget()
        self.assertEqual((target.metric, target.normalized_rate, target.tolerance_db), ("MI", 0.8, 0.02))

    def test_metric_case_insensitive(self):
        self.assertEqual(SolveTarget("gmi").metric, "GMI")

    def test_invalid(self):
        for kwargs in ({"normalized_rate": 1.0}, {"normalized_rate": 0.0}, {"tolerance_db": 0.0}, {"metric": "BER"}):
            with self.assertRaises(ValueError, msg=str(kwargs)):
                SolveTarget(**kwargs)


class TestRequiredSnr(unittest.TestCase):
    """Test bisection against the quadrature oracle"""

    def setUp(self):
        """Set up test fixtures"""
        self.qpsk = generate_qam(2)
        self.cfg = EstimatorConfig(samples_per_point=20000, seed=11)

    def test_qpsk_matches_oracle(self):
        result = required_snr(self.qpsk, SolveTarget("MI", 0.8), self.cfg)
        self.assertAlmostEqual(result.snr_req_db, qpsk_oracle_snr_db(0.8), delta=0.05)

    def test_termination_invariants(self):
        target = SolveTarget("MI", 0.8, tolerance_db=0.02)
        result = required_snr(self.qpsk, target, self.cfg)
        self.assertLessEqual(result.bracket_hi - result.bracket_lo, 0.02)
        self.assertLessEqual(result.bracket_lo, result.snr_req_db)
        self.assertLessEqual(result.snr_req_db, result.bracket_hi)
        self.assertAlmostEqual(result.achieved_rate, 0.8, delta=3 * result.std_error_rate + 1e-9)
        self.assertEqual(result.metric, "MI")
        self.assertEqual(result.normalized_rate, 0.8)

    def test_deterministic(self):
        a = required_snr(self.qpsk, SolveTarget(), self.cfg)
        b = required_snr(self.qpsk, SolveTarget(), self.cfg)
        self.assertEqual(a, b)

    def test_high_rate_target_is_reachable(self):
        result = required_snr(self.qpsk, SolveTarget("MI", 0.999), self.cfg)
        self.assertTrue(math.isfinite(result.snr_req_db))
        self.assertGreater(result.snr_req_db, 9.0)
        self.assertLess(result.snr_req_db, 13.0)

    def test_gmi_requires_at_least_mi_snr(self):
        qam16 = generate_qam(4)
        cfg = EstimatorConfig(samples_per_point=4000, seed=3)
        mi = required_snr(qam16, SolveTarget("MI"), cfg)
        gmi = required_snr(qam16, SolveTarget("GMI"), cfg)
        self.assertGreaterEqual(gmi.snr_req_db, mi.snr_req_db - 0.02)

    def test_gap_is_non_negative(self):
        qam16 = generate_qam(4)
        result = required_snr(qam16, SolveTarget("MI"), EstimatorConfig(samples_per_point=4000, seed=3))
        self.assertGreaterEqual(delta_snr_req(result.snr_req_db, 8.0, 0.8), -0.1)

    def test_unreachable_target(self):
        with self.assertRaisesRegex(UnreachableTargetError, "target rate unreachable"):
            required_snr(generate_qam(4), SolveTarget(), self.cfg, bracket=(-10.0, 0.0))

    def test_target_met_at_lower_edge(self):
        with self.assertRaises(SolverError):
            required_snr(self.qpsk, SolveTarget(), self.cfg, bracket=(20.0, 30.0))

    def test_gmi_requires_labels(self):
        unlabeled = Constellation(points=self.qpsk.points)
        with self.assertRaises(LabelsRequiredError):
            required_snr(unlabeled, SolveTarget("GMI"), self.cfg)

    def test_monotone_in_rate(self):
        qam16 = generate_qam(4)
        cfg = EstimatorConfig(samples_per_point=4000, seed=3)
        snrs = [
            required_snr(qam16, SolveTarget("MI", rate), cfg).snr_req_db for rate in (0.7, 0.8, 0.9)
        ]
        self.assertLess(snrs[0], snrs[1])
        self.assertLess(snrs[1], snrs[2])

    def test_iteration_limit(self):
        with self.assertRaisesRegex(SolverError, "did not converge in 2 steps"):
            required_snr(self.qpsk, SolveTarget(), self.cfg, max_iterations=2)
        result = required_snr(self.qpsk, SolveTarget(), self.cfg, max_iterations=12)
        self.assertLessEqual(result.bracket_hi - result.bracket_lo, 0.02)

    def test_rejects_non_positive_iteration_limit(self):
        with self.assertRaises(ValueError):
            required_snr(self.qpsk, SolveTarget(), self.cfg, max_iterations=0)


class TestSolveCache(unittest.TestCase):
    """Test joblib-backed memoization of solves"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir)

    def test_cached_solver_matches_direct(self):
        qpsk = generate_qam(2)
        cfg = EstimatorConfig(samples_per_point=4000, seed=5)
        solve = make_solver(self.temp_dir)
        first = solve(qpsk, SolveTarget(), cfg)
        second = solve(qpsk, SolveTarget(), cfg)
        direct = required_snr(qpsk, SolveTarget(), cfg)
        self.assertEqual(first.snr_req_db, second.snr_req_db)
        self.assertEqual(first.snr_req_db, direct.snr_req_db)
        self.assertTrue(any(Path(self.temp_dir).rglob("*")))

    def test_without_cache_dir(self):
        self.assertIs(make_solver(None), required_snr)


if __name__ == "__main__":
    unittest.main()
