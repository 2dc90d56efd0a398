"""
Unit tests for the Monte-Carlo MI/GMI estimator
"""

import math
import unittest
import numpy as np
import sys
from pathlib import Path

from scipy.special import logsumexp

# Add the parent directory to path to import the module
sys.path.insert(0, str(Path(__file__).parent.parent))

from md_shaping import (
    Constellation,
    EstimatorConfig,
    LabelsRequiredError,
    MetricError,
    cartesian_square,
    estimate_rates,
    generate_qam,
    gmi_awgn,
    mi_awgn,
    ngmi,
    nmi,
    normalize,
    spectral_efficiency,
)
from md_shaping.awgn_metrics import (
    GMI,
    MI,
    _block_rng,
    _evaluate_block,
    _product_factors,
    antipodal_mi_reference,
    binary_input_mi,
    qpsk_mi_reference,
    summarize,
)


class TestEstimatorConfig(unittest.TestCase):
    """Test estimator settings validation"""

    def test_rejects_zero_samples(self):
        with self.assertRaises(MetricError):
            EstimatorConfig(samples_per_point=0)

    def test_rejects_negative_seed(self):
        with self.assertRaises(MetricError):
            EstimatorConfig(seed=-1)

    def test_for_total(self):
        cfg = EstimatorConfig.for_total(64, 1_000_000, seed=3)
        self.assertEqual(cfg.samples_per_point, 15625)
        self.assertEqual(cfg.seed, 3)

    def test_from_config_overrides(self):
        config = {"estimator": {"samples_per_point": 100, "seed": 9, "n_jobs": 2}}
        cfg = EstimatorConfig.from_config(config, seed=4)
        self.assertEqual((cfg.samples_per_point, cfg.seed, cfg.n_jobs), (100, 4, 2))


class TestBinaryInputOracle(unittest.TestCase):
    """Test the quadrature reference"""

    def test_limits(self):
        self.assertAlmostEqual(binary_input_mi(1e4), 1.0, places=9)
        self.assertLess(binary_input_mi(1e-4), 1e-3)
        self.assertEqual(binary_input_mi(0.0), 0.0)

    def test_monotone(self):
        values = [binary_input_mi(10 ** (db / 10)) for db in np.arange(-10, 15, 1.0)]
        self.assertTrue(all(b > a for a, b in zip(values, values[1:])))


class TestMutualInformation(unittest.TestCase):
    """Test MI estimates"""

    def setUp(self):
        """Set up test fixtures"""
        self.cfg = EstimatorConfig(samples_per_point=4000, seed=7)
        self.qpsk = generate_qam(2)
        self.qam16 = generate_qam(4)

    def test_noise_free_limit(self):
        for c in (self.qpsk, self.qam16, generate_qam(3), cartesian_square(self.qpsk)):
            e = mi_awgn(c, 60.0, self.cfg)
            self.assertAlmostEqual(e.value, spectral_efficiency(c), delta=0.01, msg=c.name)

    def test_noise_dominated_limit(self):
        e = mi_awgn(self.qam16, -40.0, self.cfg)
        self.assertLess(e.value, 0.05)
        self.assertGreaterEqual(e.value, -3 * e.std_error)

    def test_antipodal_oracle(self):
        c = Constellation(points=[[1.0, 0.0], [-1.0, 0.0]], name="antipodal")
        for snr_db in (-3.0, 0.0, 3.0):
            e = mi_awgn(c, snr_db, EstimatorConfig(samples_per_point=40000, seed=1))
            self.assertAlmostEqual(
                e.value, antipodal_mi_reference(snr_db), delta=4 * e.std_error + 1e-6
            )

    def test_qpsk_oracle(self):
        for snr_db in (0.0, 4.0):
            e = mi_awgn(self.qpsk, snr_db, EstimatorConfig(samples_per_point=20000, seed=2))
            self.assertAlmostEqual(e.value, qpsk_mi_reference(snr_db), delta=4 * e.std_error + 1e-6)

    def test_8qam_reaches_target_rate_at_published_snr(self):
        c = generate_qam(3)
        e = mi_awgn(c, 7.502, EstimatorConfig.for_total(c.size, 200_000, seed=4))
        self.assertAlmostEqual(e.value, 0.8 * 6.0, delta=0.04)

    def test_metadata(self):
        e = mi_awgn(self.qam16, 10.0, self.cfg)
        self.assertEqual(e.kind, MI)
        self.assertEqual(e.samples, 4000 * 16)
        self.assertEqual(e.snr_db, 10.0)
        self.assertEqual(e.spectral_efficiency, 8.0)
        self.assertGreater(e.std_error, 0.0)

    def test_deterministic(self):
        a = mi_awgn(self.qam16, 8.0, self.cfg)
        b = mi_awgn(self.qam16, 8.0, self.cfg)
        self.assertEqual(a, b)

    def test_independent_of_worker_count(self):
        cfg = EstimatorConfig(samples_per_point=2000, seed=5, block_elements=16 * 16 * 2 * 2 * 100)
        serial = mi_awgn(self.qam16, 6.0, cfg)
        parallel = mi_awgn(self.qam16, 6.0, EstimatorConfig(
            samples_per_point=2000, seed=5, block_elements=cfg.block_elements, n_jobs=2
        ))
        self.assertEqual(serial.value, parallel.value)
        self.assertEqual(serial.std_error, parallel.std_error)

    def test_std_error_scaling(self):
        small = mi_awgn(self.qam16, 8.0, EstimatorConfig(samples_per_point=2000, seed=1))
        large = mi_awgn(self.qam16, 8.0, EstimatorConfig(samples_per_point=8000, seed=1))
        ratio = small.std_error / large.std_error
        self.assertGreater(ratio, 2.0 * 0.75)
        self.assertLess(ratio, 2.0 * 1.25)

    def test_monotone_in_snr(self):
        values = [mi_awgn(self.qam16, snr, self.cfg) for snr in np.arange(0.0, 15.0, 0.5)]
        for a, b in zip(values, values[1:]):
            self.assertGreaterEqual(b.value, a.value - 3 * max(a.std_error, b.std_error))

    def test_bounded_by_spectral_efficiency(self):
        for snr in (5.0, 15.0, 25.0):
            e = mi_awgn(self.qam16, snr, self.cfg)
            self.assertLessEqual(e.value, 8.0 + 3 * e.std_error)

    def test_rotation_invariance(self):
        angle = np.pi / 7
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        rotated = Constellation(points=self.qam16.points @ rotation.T, name="16QAM-rotated")
        cfg = EstimatorConfig(samples_per_point=8000, seed=12)
        a = mi_awgn(self.qam16, 9.0, cfg)
        b = mi_awgn(rotated, 9.0, cfg)
        self.assertAlmostEqual(a.value, b.value, delta=4 * math.hypot(a.std_error, b.std_error))

    def test_cartesian_square_doubles_per_symbol_rate(self):
        c = generate_qam(3)
        square = cartesian_square(c)
        for snr_db in (4.0, 10.0):
            two_d = mi_awgn(c, snr_db, EstimatorConfig(samples_per_point=16000, seed=3))
            four_d = mi_awgn(
                square, snr_db, EstimatorConfig(samples_per_point=250, seed=3, factorize=False)
            )
            # bit/4D: two 2D symbols per 4D symbol either way
            self.assertAlmostEqual(
                four_d.value,
                two_d.value,
                delta=4 * math.hypot(two_d.std_error, four_d.std_error),
                msg=f"{snr_db} dB",
            )

    def test_factorized_estimate_agrees_with_joint(self):
        square = cartesian_square(self.qpsk)
        joint_cfg = EstimatorConfig(samples_per_point=2000, seed=8, factorize=False)
        joint = estimate_rates(square, 3.0, joint_cfg)
        split = estimate_rates(square, 3.0, EstimatorConfig(samples_per_point=2000, seed=8))
        for kind in (MI, GMI):
            self.assertAlmostEqual(
                split[kind].value,
                joint[kind].value,
                delta=4 * math.hypot(split[kind].std_error, joint[kind].std_error),
                msg=kind,
            )
        self.assertEqual(split[MI].samples, joint[MI].samples)

    def test_rejects_unnormalized(self):
        raw = Constellation(points=self.qpsk.points * 2)
        with self.assertRaisesRegex(MetricError, "not normalized"):
            mi_awgn(raw, 5.0, self.cfg)

    def test_rejects_non_finite_snr(self):
        with self.assertRaises(MetricError):
            mi_awgn(self.qpsk, float("inf"), self.cfg)


class TestGeneralizedMutualInformation(unittest.TestCase):
    """Test GMI estimates and label effects"""

    def setUp(self):
        """Set up test fixtures"""
        self.cfg = EstimatorConfig(samples_per_point=4000, seed=7)
        self.qam16 = generate_qam(4)

    def test_gray_qpsk_gmi_equals_mi(self):
        rates = estimate_rates(generate_qam(2), 5.0, self.cfg)
        self.assertAlmostEqual(
            rates[GMI].value, rates[MI].value, delta=3 * rates[MI].std_error + 1e-9
        )

    def test_noise_free_limit(self):
        for c in (generate_qam(2), self.qam16, cartesian_square(generate_qam(3))):
            e = gmi_awgn(c, 60.0, self.cfg)
            self.assertAlmostEqual(e.value, spectral_efficiency(c), delta=0.01, msg=c.name)

    def test_gmi_not_above_mi(self):
        rates = estimate_rates(self.qam16, 8.0, self.cfg)
        self.assertLessEqual(rates[GMI].value, rates[MI].value + 3 * rates[MI].std_error)

    def test_requires_labels(self):
        unlabeled = Constellation(points=self.qam16.points)
        with self.assertRaisesRegex(LabelsRequiredError, "GMI requires labels"):
            gmi_awgn(unlabeled, 5.0, self.cfg)

    def test_label_permutation(self):
        rng = np.random.default_rng(2024)
        shuffled = Constellation(
            points=self.qam16.points,
            labels=[self.qam16.labels[i] for i in rng.permutation(16)],
            name="16QAM-random",
        )
        gray = estimate_rates(self.qam16, 10.0, self.cfg)
        other = estimate_rates(shuffled, 10.0, self.cfg)
        self.assertEqual(gray[MI].value, other[MI].value)
        self.assertGreater(gray[GMI].value, other[GMI].value)

    def test_ngmi_not_above_nmi_over_snr_grid(self):
        cfg = EstimatorConfig(samples_per_point=1000, seed=21)
        for c in (generate_qam(3), self.qam16, cartesian_square(generate_qam(2))):
            for snr_db in np.arange(-2.0, 22.0, 4.0):
                rates = estimate_rates(c, float(snr_db), cfg)
                error = math.hypot(rates[MI].std_error, rates[GMI].std_error)
                slack = 3 * error / spectral_efficiency(c)
                self.assertLessEqual(
                    ngmi(rates[GMI], c), nmi(rates[MI], c) + slack, msg=f"{c.name} {snr_db} dB"
                )

    def test_block_matches_direct_log_sum_exp(self):
        c = self.qam16
        snr_lin = 10 ** 0.8
        count = 50
        mi_sum, _, gmi_sum, _ = _evaluate_block(c.points, c.label_bits, snr_lin, 5, 0, count, False)

        z = _block_rng(5, 0).standard_normal((16, count, 2)) * math.sqrt(0.5 / snr_lin)
        y = c.points[:, None, :] + z
        d = -snr_lin * np.sum((y[:, :, None, :] - c.points[None, None, :, :]) ** 2, axis=3)
        own = -snr_lin * np.sum(z**2, axis=2)
        expected_mi = np.sum(4.0 - (logsumexp(d, axis=2) - own) / np.log(2), axis=1)
        expected_gmi = np.zeros(16)
        for k in range(4):
            ones = c.label_bits[:, k] == 1
            llr = logsumexp(d[:, :, ones], axis=2) - logsumexp(d[:, :, ~ones], axis=2)
            llr = np.clip(llr, -50.0, 50.0)
            sign = 1.0 - 2.0 * c.label_bits[:, k]
            expected_gmi += np.sum(1.0 - np.logaddexp(0.0, sign[:, None] * llr) / np.log(2), axis=1)
        np.testing.assert_allclose(mi_sum, expected_mi, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(gmi_sum, expected_gmi, rtol=1e-9, atol=1e-9)


class TestProductFactors(unittest.TestCase):
    """Test detection of Cartesian-product formats"""

    def test_cartesian_square_splits(self):
        base = generate_qam(3)
        factors = _product_factors(cartesian_square(base), True)
        self.assertIsNotNone(factors)
        for points, bits in factors:
            self.assertEqual(points.shape, (8, 2))
            self.assertEqual(bits.shape, (8, 3))
            by_point = {tuple(p): "".join(map(str, b)) for p, b in zip(points, bits)}
            for p, label in zip(base.points, base.labels):
                self.assertEqual(by_point[tuple(p)], label)

    def test_mixed_labels_do_not_split(self):
        square = cartesian_square(generate_qam(2))
        swapped = list(square.labels)
        swapped[0], swapped[1] = swapped[1], swapped[0]
        relabeled = Constellation(points=square.points, labels=swapped)
        self.assertIsNone(_product_factors(relabeled, True))
        self.assertIsNotNone(_product_factors(relabeled, False))

    def test_non_products_do_not_split(self):
        rng = np.random.default_rng(4)
        cloud = normalize(Constellation(points=rng.standard_normal((16, 4))))
        self.assertIsNone(_product_factors(cloud, False))
        self.assertIsNone(_product_factors(generate_qam(4), False))


class TestNormalizedMetrics(unittest.TestCase):
    """Test NMI/NGMI"""

    def setUp(self):
        """Set up test fixtures"""
        self.cfg = EstimatorConfig(samples_per_point=2000, seed=7)
        self.qam16 = generate_qam(4)

    def test_noise_free_normalized_rates(self):
        rates = estimate_rates(self.qam16, 60.0, self.cfg)
        self.assertAlmostEqual(nmi(rates[MI], self.qam16), 1.0, delta=0.002)
        self.assertAlmostEqual(ngmi(rates[GMI], self.qam16), 1.0, delta=0.002)

    def test_mismatched_estimate(self):
        e = mi_awgn(generate_qam(2), 5.0, self.cfg)
        with self.assertRaises(MetricError):
            nmi(e, self.qam16)

    def test_wrong_kind(self):
        e = mi_awgn(self.qam16, 5.0, self.cfg)
        with self.assertRaises(MetricError):
            ngmi(e, self.qam16)

    def test_summary(self):
        rates = estimate_rates(self.qam16, 12.0, self.cfg)
        summary = summarize(rates, self.qam16)
        self.assertEqual(summary["M"], 16)
        self.assertEqual(summary["m"], 8.0)
        self.assertAlmostEqual(summary["nmi"], rates[MI].value / 8.0, places=12)
        self.assertAlmostEqual(summary["ngmi"], rates[GMI].value / 8.0, places=12)

    def test_scaled_copy_is_same_format(self):
        renamed = normalize(Constellation(points=self.qam16.points * 4, labels=self.qam16.labels))
        e = mi_awgn(renamed, 9.0, self.cfg)
        self.assertAlmostEqual(nmi(e, renamed), e.value / 8.0, places=12)


if __name__ == "__main__":
    unittest.main()
