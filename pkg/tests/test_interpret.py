import math

import numpy as np
import pytest

from redreflex.classifier.head import init_head
from redreflex.core import RgbImage
from redreflex.errors import DataError, DegenerateMapError, InsufficientDataError
from redreflex.imaging import PropertyVector
from redreflex.interpret import (
    AttentionMap,
    FeedbackRule,
    boundary_distance_report,
    fit_feedback_rules,
    generate_feedback,
    occlusion_map,
    radial_focus,
    radial_report,
    verdict_feedback,
)
from redreflex.tsne import conditional_affinities, tsne_embed


def map_with_peak(px, py, size=224):
    h = np.zeros((size, size))
    h[py, px] = 1.0
    return AttentionMap(heatmap=h)


class TestRadialFocus:
    def test_center_zero(self):
        assert radial_focus(map_with_peak(112, 112)).r_norm == 0.0

    def test_corner_one(self):
        assert radial_focus(map_with_peak(0, 0)).r_norm == 1.0

    def test_midpoint_half(self):
        assert radial_focus(map_with_peak(56, 56)).r_norm == 0.5

    def test_tie_takes_smallest_yx(self):
        h = np.zeros((224, 224))
        h[100, 30] = h[100, 20] = h[50, 200] = 1.0
        focus = radial_focus(AttentionMap(heatmap=h))
        assert focus.peak == (200, 50)  # smallest (y, x) in row-major order

    def test_scale_invariant(self):
        h = np.zeros((64, 64))
        h[10, 40] = 3.0
        a = radial_focus(AttentionMap(heatmap=h)).r_norm
        b = radial_focus(AttentionMap(heatmap=h * 7.5)).r_norm
        assert a == b

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateMapError):
            radial_focus(AttentionMap(heatmap=np.zeros((8, 8))))

    def test_negative_heatmap_rejected(self):
        with pytest.raises(ValueError):
            AttentionMap(heatmap=np.full((4, 4), -1.0))


class Gray16Provider:
    """16x16 block-mean grayscale of the 224 input; feature index = 16*by+bx."""

    name = "gray16"
    dim = 256

    def embed(self, image):
        a = image.array.astype(np.float64).mean(axis=2) / 255.0
        return a.reshape(16, 14, 16, 14).mean(axis=(1, 3)).ravel()


def blob_head(block_idx, gain=40.0):
    head = init_head(Gray16Provider.name, 256, np.zeros(256), np.ones(256),
                     hidden_units=0, seed=0)
    w2 = np.zeros((256, 2))
    w2[block_idx, 1] = gain
    weights = dict(head.weights, w2=w2, b2=np.array([0.0, -10.0]))
    return head.with_weights(weights)


class TestOcclusionMap:
    def test_insensitive_model_uniform_epsilon(self):
        head = init_head(Gray16Provider.name, 256, np.zeros(256), np.ones(256),
                         hidden_units=0, seed=0)
        head = head.with_weights({"w2": np.zeros((256, 2)), "b2": np.zeros(2)})
        img = RgbImage(np.full((224, 224, 3), 80, dtype=np.uint8))
        amap = occlusion_map(head, {"gray16": Gray16Provider()}, img)
        assert amap.heatmap.min() > 0.0
        assert amap.heatmap.max() == amap.heatmap.min()

    def test_blob_localized(self):
        by, bx = 4, 11
        arr = np.zeros((224, 224, 3), dtype=np.uint8)
        arr[by * 14:(by + 1) * 14, bx * 14:(bx + 1) * 14] = 255
        img = RgbImage(arr)
        head = blob_head(16 * by + bx)
        amap = occlusion_map(head, {"gray16": Gray16Provider()}, img)
        peak = radial_focus(amap).peak
        blob_center = (bx * 14 + 7, by * 14 + 7)
        assert math.hypot(peak[0] - blob_center[0], peak[1] - blob_center[1]) <= 16

    def test_disjoint_tiling_grid(self):
        head = init_head(Gray16Provider.name, 256, np.zeros(256), np.ones(256),
                         hidden_units=0, seed=0)
        img = RgbImage(np.full((224, 224, 3), 60, dtype=np.uint8))
        amap = occlusion_map(head, {"gray16": Gray16Provider()}, img,
                             patch=16, stride=16)
        assert amap.grid_shape == (14, 14)  # ceil(224/16)^2 source cells
        assert amap.heatmap.shape == (224, 224)

    def test_invariant_under_logit_shift(self):
        by, bx = 7, 3
        arr = np.zeros((224, 224, 3), dtype=np.uint8)
        arr[by * 14:(by + 1) * 14, bx * 14:(bx + 1) * 14] = 255
        img = RgbImage(arr)
        head = blob_head(16 * by + bx)
        shifted = head.with_weights(dict(head.weights,
                                         b2=head.weights["b2"] + 17.5))
        providers = {"gray16": Gray16Provider()}
        a = occlusion_map(head, providers, img).heatmap
        b = occlusion_map(shifted, providers, img).heatmap
        assert np.allclose(a, b, atol=1e-12)

    def test_region_centroid_method(self):
        h = np.zeros((224, 224))
        h[100:105, 50:55] = 1.0  # flat plateau: centroid at its middle
        focus = radial_focus(AttentionMap(heatmap=h), method="region_centroid")
        assert focus.peak == (52, 102)
        with pytest.raises(ValueError):
            radial_focus(AttentionMap(heatmap=h), method="maximum")


class TestRadialReport:
    def test_identical_maps_zero_d(self):
        maps = [map_with_peak(50, 60, size=64) for _ in range(12)]
        labels = ["normal"] * 6 + ["abnormal"] * 6
        correct = [True] * 12
        with pytest.warns(UserWarning):
            report = radial_report(maps, labels, correct)
        for ks in report.ks_tests.values():
            assert ks.statistic == 0.0

    def test_single_group_histogram_only(self):
        maps = [map_with_peak(10 + i, 20, size=64) for i in range(5)]
        with pytest.warns(UserWarning):
            report = radial_report(maps, ["normal"] * 5, [True] * 5)
        assert list(report.groups) == [("normal", True)]
        assert report.groups[("normal", True)].histogram.sum() == 5
        assert report.ks_tests == {}

    def test_separated_groups_significant(self):
        rng = np.random.default_rng(0)
        maps, labels = [], []
        for _ in range(40):
            maps.append(map_with_peak(112 + int(rng.integers(-6, 7)),
                                      112 + int(rng.integers(-6, 7))))
            labels.append("normal")
        for _ in range(40):
            angle = rng.uniform(0, 2 * np.pi)
            maps.append(map_with_peak(112 + int(70 * np.cos(angle)),
                                      112 + int(70 * np.sin(angle))))
            labels.append("abnormal")
        report = radial_report(maps, labels, [True] * 80)
        key = (("abnormal", True), ("normal", True))
        assert report.ks_tests[key].p_value < 0.001


class TestTsne:
    def test_two_points_symmetric(self):
        result = tsne_embed(np.array([[0.0, 0.0], [1.0, 1.0]]), perplexity=1.0,
                            iterations=50, seed=0)
        y = result.coords
        assert np.allclose(y[0], -y[1], atol=1e-9)  # centered every iteration
        assert np.linalg.norm(y[0] - y[1]) > 0

    def test_argument_errors(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        with pytest.raises(ValueError):
            tsne_embed(x, perplexity=10.0)
        with pytest.raises(ValueError):
            tsne_embed(x, perplexity=0.5)
        bad = x.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            tsne_embed(bad, perplexity=3.0)
        with pytest.raises(ValueError):
            tsne_embed(x[:1], perplexity=0.9)

    def test_perplexity_constraint_satisfied(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(60, 8))
        _, entropies = conditional_affinities(x, perplexity=12.0)
        assert np.all(np.abs(entropies - math.log2(12.0)) <= 1e-5)

    def test_cluster_preservation_one_nn(self):
        rng = np.random.default_rng(2)
        x = np.concatenate([rng.normal(-4, 1, size=(50, 16)),
                            rng.normal(4, 1, size=(50, 16))])
        labels = np.array([0] * 50 + [1] * 50)
        result = tsne_embed(x, perplexity=30.0, iterations=1000, seed=0)
        y = result.coords
        d2 = ((y[:, None, :] - y[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        agreement = (labels[d2.argmin(axis=1)] == labels).mean()
        assert agreement >= 0.95

    def test_kl_trace_improves_after_exaggeration(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, 6))
        result = tsne_embed(x, perplexity=10.0, iterations=400, seed=1)
        assert result.kl_trace[-1] <= result.kl_trace[299]

    def test_centered_and_deterministic(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(25, 5))
        a = tsne_embed(x, perplexity=8.0, iterations=120, seed=9)
        b = tsne_embed(x, perplexity=8.0, iterations=120, seed=9)
        assert np.array_equal(a.coords, b.coords)
        assert np.all(np.abs(a.coords.mean(axis=0)) < 1e-6)


class TestBoundaryDistance:
    def test_separated_clusters_on_correct_sides(self):
        rng = np.random.default_rng(0)
        normal = rng.normal((-5, 0), 0.5, size=(30, 2))
        abnormal = rng.normal((5, 0), 0.5, size=(30, 2))
        emb = np.concatenate([normal, abnormal])
        labels = ["normal"] * 30 + ["abnormal"] * 30
        report = boundary_distance_report(emb, labels, [True] * 60)
        assert np.all(report.signed_distances[:30] < 0)
        assert np.all(report.signed_distances[30:] > 0)

    def test_label_swap_negates_distances(self):
        rng = np.random.default_rng(1)
        emb = rng.normal(size=(40, 2))
        labels = np.array(["normal"] * 20 + ["abnormal"] * 20)
        correct = rng.random(40) < 0.8
        a = boundary_distance_report(emb, labels, correct)
        swapped = np.where(labels == "normal", "abnormal", "normal")
        b = boundary_distance_report(emb, swapped, correct)
        assert np.allclose(a.signed_distances, -b.signed_distances)
        assert a.median_abs_correct == pytest.approx(b.median_abs_correct)

    def test_noisy_labels_sit_closer_to_boundary(self):
        rng = np.random.default_rng(2)
        emb = np.concatenate([rng.normal(-3, 1.0, size=(60, 2)),
                              rng.normal(3, 1.0, size=(60, 2))])
        labels = ["normal"] * 60 + ["abnormal"] * 60
        # mislabel the points nearest the midline
        correct = np.abs(emb[:, 0]) > 1.0
        report = boundary_distance_report(emb, labels, correct)
        assert report.median_abs_incorrect < report.median_abs_correct

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            boundary_distance_report(np.zeros((4, 2)), ["normal"] * 4, [True] * 4)


def vector_with(contrast=20.0, brightness=100.0, redness=120.0, intensity_ratio=5.0):
    return PropertyVector(contrast=contrast, brightness=brightness, redness=redness,
                          energy=1.0, entropy=4.0, sharpness=10.0, homogeneity=0.8,
                          fourier_energy=1e6, compactness=0.5, lbp=100.0,
                          intensity_ratio=intensity_ratio, image_size=(128, 128))


class TestFitFeedbackRules:
    def make_groups(self, n=60, contrast_gap=0.0, brightness_gap=0.0, seed=0):
        rng = np.random.default_rng(seed)
        confidences, props = [], []
        for i in range(n):
            confident = i < n // 2
            confidences.append(0.9 - 0.02 * rng.random() if confident
                               else 0.6 + 0.02 * rng.random())
            props.append(vector_with(
                contrast=20.0 + (contrast_gap if confident else 0.0) + rng.normal(0, 1),
                brightness=100.0 + (0.0 if confident else brightness_gap) + rng.normal(0, 1),
            ))
        return confidences, props

    def test_contrast_rule_emitted(self):
        confidences, props = self.make_groups(contrast_gap=15.0)
        rules = fit_feedback_rules(confidences, props)
        by_name = {r.property_name: r for r in rules}
        assert "contrast" in by_name
        rule = by_name["contrast"]
        assert rule.direction == "higher_is_confident"
        confident_vals = [p.contrast for p, c in zip(props, confidences) if c > 0.8]
        assert rule.threshold == pytest.approx(np.percentile(confident_vals, 25))

    def test_identical_distributions_no_rules(self):
        confidences, props = self.make_groups()
        assert fit_feedback_rules(confidences, props) == []

    def test_brightness_direction_always_lower(self):
        # significant difference in either direction keeps the fixed direction
        confidences, props = self.make_groups(brightness_gap=25.0)
        rules = fit_feedback_rules(confidences, props)
        by_name = {r.property_name: r for r in rules}
        assert by_name["brightness"].direction == "lower_is_confident"

    def test_insufficient_data(self):
        confidences, props = self.make_groups(n=10)
        with pytest.raises(InsufficientDataError):
            fit_feedback_rules(confidences, props)

    def test_misaligned_inputs(self):
        confidences, props = self.make_groups()
        with pytest.raises(ValueError):
            fit_feedback_rules(confidences[:-1], props)


class TestGenerateFeedback:
    RULES = [
        FeedbackRule("contrast", "higher_is_confident", 15.0),
        FeedbackRule("brightness", "lower_is_confident", 110.0),
    ]

    def test_confident_no_feedback(self):
        items = generate_feedback(self.RULES, vector_with(contrast=5.0), 0.95)
        assert items == []

    def test_violated_rule_reported(self):
        items = generate_feedback(self.RULES, vector_with(brightness=150.0), 0.6)
        names = {i.property_name for i in items}
        assert "brightness" in names
        item = next(i for i in items if i.property_name == "brightness")
        assert item.measured == 150.0
        assert item.threshold == 110.0
        assert item.suggestion

    def test_compliant_gets_generic_retake(self):
        items = generate_feedback(self.RULES, vector_with(contrast=30.0, brightness=90.0), 0.6)
        assert len(items) == 1
        assert items[0].property_name == "capture"
        assert "darker background" in items[0].suggestion

    def test_monotone_in_confidence(self):
        props = vector_with(brightness=150.0, contrast=5.0)
        last = math.inf
        for conf in (0.5, 0.6, 0.7, 0.79, 0.8, 0.9, 1.0):
            n = len(generate_feedback(self.RULES, props, conf))
            assert n <= last
            last = n

    def test_rule_serialization_roundtrip(self):
        rule = self.RULES[0]
        assert FeedbackRule.from_dict(rule.to_dict()) == rule

    def test_verdict_feedback_has_guidance(self):
        for verdict in ("no_eye", "no_pupil", "no_reflex", "too_big", "too_small",
                        "too_elongated"):
            items = verdict_feedback(verdict)
            assert len(items) == 1 and items[0].suggestion
