import numpy as np
import pytest

from pathospeech.errors import DataError
from pathospeech.explain import (
    _find_clusters,
    gmm_phone_difference,
    lasso_coefficients,
)
from pathospeech.gmm import GmmModel
from pathospeech.lasso import LassoModel

N_PHONES = 39


def ppg_model(means, weights=None, kind="ppg"):
    means = np.asarray(means, dtype=np.float64)
    m = means.shape[0]
    if weights is None:
        weights = np.full(m, 1.0 / m)
    return GmmModel(
        weights=np.asarray(weights),
        means=means,
        variances=np.full(means.shape, 0.01),
        feature_kind=kind,
    )


def random_ppg_model(rng, m=4):
    weights = rng.uniform(0.2, 1.0, m)
    weights /= weights.sum()
    return ppg_model(rng.uniform(0.0, 0.2, (m, N_PHONES)), weights)


class TestPhoneDifference:
    def test_identical_models_all_zero(self):
        rng = np.random.default_rng(0)
        model = random_ppg_model(rng)
        report = gmm_phone_difference(model, model)
        assert all(e.p == 0.0 for e in report.entries)
        assert report.included == ()

    def test_planted_shift_recovered(self):
        rng = np.random.default_rng(1)
        healthy_means = rng.uniform(0.0, 0.1, (3, N_PHONES))
        patho_means = healthy_means.copy()
        # Raise /t/ (phone 17) in the healthy model by 0.02 everywhere.
        healthy_means = healthy_means.copy()
        healthy_means[:, 17] += 0.02
        healthy = ppg_model(healthy_means, weights=[0.5, 0.3, 0.2])
        patho = ppg_model(patho_means, weights=[0.4, 0.35, 0.25])
        labels = [f"ph{i}" for i in range(N_PHONES)]
        labels[17] = "t"
        report = gmm_phone_difference(patho, healthy, phone_labels=labels)
        t_entry = next(e for e in report.entries if e.phone == "t")
        assert t_entry.p == pytest.approx(-0.02, abs=1e-12)
        assert t_entry.included
        assert t_entry.p < 0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        patho = random_ppg_model(rng)
        healthy = random_ppg_model(rng)
        report = gmm_phone_difference(patho, healthy, cutoff=0.0)

        order_p = sorted(range(patho.m), key=lambda j: -patho.weights[j])
        order_h = sorted(range(healthy.m), key=lambda j: -healthy.weights[j])
        by_phone = {e.phone: e.p for e in report.entries}
        for k in range(N_PHONES):
            diffs = [
                patho.means[order_p[j], k] - healthy.means[order_h[j], k]
                for j in range(patho.m)
            ]
            expected = sum(diffs) / len(diffs)
            assert abs(by_phone[f"phone_{k:02d}"] - expected) < 1e-12

    def test_antisymmetry_exact(self):
        rng = np.random.default_rng(3)
        a = random_ppg_model(rng)
        b = random_ppg_model(rng)
        forward = {e.phone: e.p for e in gmm_phone_difference(a, b).entries}
        backward = {e.phone: e.p for e in gmm_phone_difference(b, a).entries}
        for phone, p in forward.items():
            assert backward[phone] == -p

    def test_cutoff_monotone(self):
        rng = np.random.default_rng(4)
        a = random_ppg_model(rng)
        b = random_ppg_model(rng)
        included = [
            {e.phone for e in gmm_phone_difference(a, b, cutoff=c).included}
            for c in (0.001, 0.005, 0.01)
        ]
        assert included[2] <= included[1] <= included[0]

    def test_sorted_by_magnitude(self):
        rng = np.random.default_rng(5)
        report = gmm_phone_difference(random_ppg_model(rng), random_ppg_model(rng))
        mags = [abs(e.p) for e in report.entries]
        assert mags == sorted(mags, reverse=True)

    def test_m_mismatch(self):
        rng = np.random.default_rng(6)
        with pytest.raises(DataError, match="component counts"):
            gmm_phone_difference(
                random_ppg_model(rng, m=3), random_ppg_model(rng, m=4)
            )

    def test_kind_mismatch(self):
        rng = np.random.default_rng(7)
        a = random_ppg_model(rng)
        b = ppg_model(rng.uniform(0, 0.2, (4, N_PHONES)), kind="mfcc")
        with pytest.raises(DataError):
            gmm_phone_difference(a, b)

    def test_non_ppg_rejected(self):
        rng = np.random.default_rng(8)
        a = ppg_model(rng.uniform(0, 1, (2, N_PHONES)), kind="mfcc")
        with pytest.raises(DataError, match="ppg"):
            gmm_phone_difference(a, a)

    def test_reports_render(self):
        rng = np.random.default_rng(9)
        report = gmm_phone_difference(random_ppg_model(rng), random_ppg_model(rng))
        assert "phone" in report.to_text()
        assert '"cutoff"' in report.to_json()


def ltas_model(weights, nfft=512):
    d = len(weights)
    return LassoModel(
        weights=np.asarray(weights, dtype=np.float64),
        intercept=0.5,
        alpha=0.01,
        feature_mean=np.zeros(d),
        feature_scale=np.ones(d),
        feature_kind="ltas",
    )


class TestCoefficients:
    def test_all_zero_no_clusters(self):
        model = ltas_model(np.zeros(514))
        report = lasso_coefficients(model, nfft=512, sample_rate=16000)
        assert report.clusters == ()

    def test_toy_cluster_rule(self):
        clusters = _find_clusters(
            np.array([0.0, 1.0, 2.0, 0.0, -1.0]), 0, "mean", 31.25
        )
        assert len(clusters) == 1
        assert (clusters[0].start_index, clusters[0].end_index) == (1, 2)
        assert clusters[0].sign == 1

    def test_full_report_cluster(self):
        # nfft=8 -> 5 bins per half; plant the toy pattern in the mean half.
        weights = np.zeros(10)
        weights[1], weights[2], weights[4] = 1.0, 2.0, -1.0
        report = lasso_coefficients(ltas_model(weights, nfft=8), 8, 16000)
        assert len(report.clusters) == 1
        cluster = report.clusters[0]
        assert (cluster.start_index, cluster.end_index, cluster.sign) == (1, 2, 1)
        assert cluster.freq_lo_hz == pytest.approx(1 * 16000 / 8)
        assert cluster.freq_hi_hz == pytest.approx(2 * 16000 / 8)

    def test_bin_96_is_3khz(self):
        weights = np.zeros(514)
        weights[96] = 1.0
        report = lasso_coefficients(ltas_model(weights), 512, 16000)
        entry = report.entries[96]
        assert entry.freq_hz == pytest.approx(3000.0)
        assert entry.half == "mean"

    def test_std_half_offset(self):
        report = lasso_coefficients(ltas_model(np.zeros(514)), 512, 16000)
        for e in report.entries:
            if e.index < 257:
                assert e.half == "mean"
                assert e.freq_hz == pytest.approx(e.index * 16000 / 512)
            else:
                assert e.half == "std"
                assert e.freq_hz == pytest.approx((e.index - 257) * 16000 / 512)

    def test_unstandardized_weights(self):
        weights = np.zeros(514)
        weights[10] = 2.0
        model = LassoModel(
            weights=weights, intercept=0.0, alpha=0.01,
            feature_mean=np.zeros(514), feature_scale=np.full(514, 4.0),
            feature_kind="ltas",
        )
        report = lasso_coefficients(model, 512, 16000)
        assert report.entries[10].weight == pytest.approx(0.5)

    def test_clusters_cover_only_nonzero_and_disjoint(self):
        rng = np.random.default_rng(10)
        weights = rng.choice([0.0, 1.0, -1.0], size=514, p=[0.7, 0.15, 0.15])
        report = lasso_coefficients(ltas_model(weights), 512, 16000)
        spans = []
        for c in report.clusters:
            for i in range(c.start_index, c.end_index + 1):
                assert report.entries[i].weight != 0.0
                assert np.sign(report.entries[i].weight) == c.sign
            spans.append((c.start_index, c.end_index))
        spans.sort()
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 < s2

    def test_halves_do_not_merge(self):
        # Nonzero run crossing the mean/std boundary must split.
        weights = np.zeros(10)
        weights[3], weights[4], weights[5], weights[6] = 1.0, 1.0, 1.0, 1.0
        report = lasso_coefficients(ltas_model(weights, nfft=8), 8, 16000)
        assert len(report.clusters) == 2
        assert {c.half for c in report.clusters} == {"mean", "std"}

    def test_non_ltas_rejected(self):
        model = LassoModel(
            weights=np.zeros(514), intercept=0.0, alpha=0.01,
            feature_mean=np.zeros(514), feature_scale=np.ones(514),
            feature_kind="mfcc",
        )
        with pytest.raises(DataError, match="ltas"):
            lasso_coefficients(model, 512, 16000)

    def test_dim_mismatch(self):
        with pytest.raises(DataError, match="needs"):
            lasso_coefficients(ltas_model(np.zeros(10)), 512, 16000)

    def test_renders(self):
        weights = np.zeros(514)
        weights[5] = 1.0
        report = lasso_coefficients(ltas_model(weights), 512, 16000)
        assert "clusters" in report.to_text()
        assert report.to_csv().startswith("index,half,bin,freq_hz,weight")
        assert '"nfft": 512' in report.to_json()
