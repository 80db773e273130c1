import json
import math
from pathlib import Path

import httpx
import numpy as np
import pytest

from conftest import constant_image
from oracles import hysteresis_oracle
from redreflex.config import GateConfig
from redreflex.core import PupilCrop, RgbImage
from redreflex.errors import DetectorTimeout, PipelineError, RemoteDetectorError
from redreflex.pipeline import (
    ChainedDetector,
    EyeBox,
    FallbackDetector,
    ReflexReport,
    RemoteEyeDetector,
    WhitenessMap,
    crop_pupil,
    crop_window_side,
    detect_reflexes,
    parse_eye_response,
    process_eye,
    select_and_gate,
    whiteness_map,
)
from redreflex.synth import SynthConfig, generate, oracle_check

FIXTURE = Path(__file__).parent / "data" / "vision_response.json"


def disk_image(size, center, radius, fg, bg):
    yy, xx = np.mgrid[0:size, 0:size]
    arr = np.full((size, size, 3), bg, dtype=np.uint8)
    arr[(xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius ** 2] = fg
    return RgbImage(arr)


class TestFallbackDetector:
    def test_dark_disk_on_bright_field(self):
        img = disk_image(200, (100, 100), 40, fg=20, bg=200)
        found = FallbackDetector().detect_pupil(img)
        assert found is not None
        (cx, cy), r = found
        assert math.hypot(cx - 100, cy - 100) <= 2.0
        assert abs(r - 40) / 40 <= 0.10

    def test_all_white_absent(self):
        assert FallbackDetector().detect_pupil(constant_image(64, 64, 255)) is None

    def test_two_disks_largest_wins(self):
        img = disk_image(220, (70, 70), 40, fg=20, bg=200)
        arr = img.array.copy()
        yy, xx = np.mgrid[0:220, 0:220]
        arr[(xx - 170) ** 2 + (yy - 170) ** 2 <= 10 ** 2] = 20
        found = FallbackDetector().detect_pupil(RgbImage(arr))
        (cx, cy), r = found
        assert math.hypot(cx - 70, cy - 70) <= 2.0

    def test_eye_boxes_sorted_left_to_right(self):
        img = disk_image(220, (160, 110), 25, fg=20, bg=200)
        arr = img.array.copy()
        yy, xx = np.mgrid[0:220, 0:220]
        arr[(xx - 60) ** 2 + (yy - 110) ** 2 <= 25 ** 2] = 20
        boxes = FallbackDetector().detect_eyes(RgbImage(arr))
        assert len(boxes) == 2
        assert boxes[0].x < boxes[1].x


class TestCropPupil:
    def test_window_side_arithmetic(self):
        # 2 * 32 * 1.15 = 73.6 -> floor 73 -> rounded up to even 74
        assert crop_window_side(32, 0.15) == 74
        assert crop_window_side(20, 0.15) == 46

    def test_output_always_128(self):
        img = disk_image(200, (100, 100), 32, fg=20, bg=200)
        crop = crop_pupil(img, (100, 100), 32)
        assert crop.image.width == crop.image.height == 128

    def test_center_scale(self):
        img = disk_image(200, (100, 100), 32, fg=20, bg=200)
        crop = crop_pupil(img, (100, 100), 32)
        assert crop.pupil_radius == pytest.approx(32 * 128 / 74, rel=1e-9)
        assert crop.pupil_center[0] == pytest.approx(64, abs=1.0)

    def test_clamped_near_border_still_contains_pupil(self):
        img = disk_image(200, (30, 30), 25, fg=20, bg=200)
        crop = crop_pupil(img, (30, 30), 25)
        cx, cy = crop.pupil_center
        r = crop.pupil_radius
        assert cx - r >= -0.5 and cy - r >= -0.5
        assert cx + r <= 128.5 and cy + r <= 128.5

    def test_degenerate_radius_rejected(self):
        with pytest.raises(PipelineError):
            crop_pupil(constant_image(64, 64, 0), (32, 32), 0.5)


class TestWhiteness:
    def test_min_channel_rule(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[0, 0] = (255, 255, 255)
        arr[0, 1] = (255, 0, 0)
        arr[0, 2] = (100, 100, 100)
        arr[0, 3] = (255, 100, 100)
        crop = PupilCrop("t", RgbImage(arr), (2.0, 2.0), 2.0)
        wm = whiteness_map(crop)
        assert wm.values[0, 0] == 255
        assert wm.values[0, 1] == 0
        assert wm.values[0, 2] == 100
        assert wm.values[0, 3] == 100  # whiteness ignores excess red


def wmap(values, mask=None):
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    return WhitenessMap(values=values, mask=np.asarray(mask, dtype=bool))


class TestDetectReflexes:
    def test_uniform_map_single_component(self):
        yy, xx = np.mgrid[0:9, 0:9]
        mask = (xx - 4) ** 2 + (yy - 4) ** 2 <= 9
        report = detect_reflexes(wmap(np.full((9, 9), 40.0), mask))
        assert len(report.components) == 1
        assert report.components[0].area == int(mask.sum())

    def test_single_hot_pixel(self):
        values = np.full((5, 5), 100.0)
        values[2, 3] = 200.0
        report = detect_reflexes(wmap(values))
        assert len(report.components) == 1
        assert report.components[0].area == 1
        assert report.components[0].centroid == (3.0, 2.0)

    def test_two_bright_blobs(self):
        values = np.full((9, 9), 10.0)
        values[1:3, 1:3] = 200.0
        values[6:8, 6:8] = 200.0
        report = detect_reflexes(wmap(values))
        assert len(report.components) == 2
        assert {c.area for c in report.components} == {4}

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0, 200, (12, 12))
        a = detect_reflexes(wmap(values))
        b = detect_reflexes(wmap(values + 37.5))
        pix = lambda rep: {frozenset(map(tuple, c.pixels)) for c in rep.components}
        assert pix(a) == pix(b)

    def test_elongation_finite_for_line(self):
        values = np.zeros((5, 7))
        values[2, 1:6] = 9.0
        report = detect_reflexes(wmap(values))
        comp = report.components[0]
        assert np.isfinite(comp.elongation)
        assert comp.elongation > 3.0

    @pytest.mark.parametrize("seed", range(10))
    def test_partition_matches_flood_fill_oracle(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.uniform(0, 255, (16, 16))
        mask = rng.random((16, 16)) < 0.8
        mask[8, 8] = True
        report = detect_reflexes(wmap(values, mask))
        got = {frozenset(map(tuple, c.pixels)) for c in report.components}
        want = hysteresis_oracle(values.tolist(), mask.tolist())
        assert got == want


def component_report(*specs):
    """specs: (pixels set) list built from little squares for testing gates."""
    from redreflex.pipeline import _component_stats

    comps = []
    for pix in specs:
        ys = np.array([p[0] for p in pix])
        xs = np.array([p[1] for p in pix])
        comps.append(_component_stats(ys, xs))
    return ReflexReport(components=tuple(comps))


def fake_crop(side=128, radius=40.0):
    return PupilCrop("t", constant_image(side, side, 0), (side / 2, side / 2), radius)


def square_pixels(y0, x0, s):
    return {(y, x) for y in range(y0, y0 + s) for x in range(x0, x0 + s)}


class TestSelectAndGate:
    def test_nearest_centroid_selected(self):
        crop = PupilCrop("t", constant_image(16, 16, 0), (8.0, 8.0), 7.9)
        report = component_report({(2, 2)}, {(10, 10)})
        out = select_and_gate(report, crop, GateConfig(min_area_frac=1e-6))
        sel = out.components[out.selected]
        assert sel.centroid == (10.0, 10.0)  # dist 2.83 beats 8.49

    def test_whole_pupil_too_big(self):
        crop = fake_crop()
        area = int(math.pi * 40 * 40)
        side = int(math.sqrt(area))
        report = component_report(square_pixels(20, 20, side))
        assert select_and_gate(report, crop).verdict == "too_big"

    def test_three_percent_round_usable(self):
        crop = fake_crop()
        pupil_area = math.pi * 40 * 40
        s = int(math.sqrt(0.03 * pupil_area))
        report = component_report(square_pixels(60, 60, s))
        out = select_and_gate(report, crop)
        assert out.verdict == "usable"
        assert out.selected is not None

    def test_tiny_too_small_and_empty_no_reflex(self):
        crop = fake_crop()
        assert select_and_gate(component_report({(64, 64)}), crop).verdict == "too_small"
        assert select_and_gate(ReflexReport(components=()), crop).verdict == "no_reflex"

    def test_elongated_rejected(self):
        crop = fake_crop()
        pix = {(64, x) for x in range(20, 108)} | {(65, x) for x in range(20, 108)}
        assert select_and_gate(component_report(pix), crop).verdict == "too_elongated"

    def test_tie_breaks_deterministic(self):
        crop = PupilCrop("t", constant_image(21, 21, 0), (10.0, 10.0), 10.0)
        report = component_report({(10, 6)}, {(10, 14)})  # equidistant singletons
        a = select_and_gate(report, crop, GateConfig(min_area_frac=1e-6))
        b = select_and_gate(report, crop, GateConfig(min_area_frac=1e-6))
        assert a.selected == b.selected
        sel = a.components[a.selected]
        assert sel.centroid == (6.0, 10.0)  # smaller (y, x) order -> smaller x

    def test_usable_iff_selected(self):
        crop = fake_crop()
        for report in (component_report({(64, 64)}), ReflexReport(components=()),
                       component_report(square_pixels(60, 60, 12))):
            out = select_and_gate(report, crop)
            assert (out.verdict == "usable") == (out.selected is not None)


def mock_remote(handler):
    transport = httpx.MockTransport(handler)
    client = httpx.Client(transport=transport)
    return RemoteEyeDetector(endpoint="https://vision.example/detect",
                             api_key="k", client=client)


class TestRemoteDetector:
    def test_fixture_response_parsed(self):
        fixture = json.loads(FIXTURE.read_text())
        boxes = parse_eye_response(fixture, 400, 300)
        assert boxes == [EyeBox(52, 120, 98, 66), EyeBox(210, 118, 96, 64)]

    def test_detect_eyes_round_trip(self):
        fixture = json.loads(FIXTURE.read_text())
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json=fixture)

        det = mock_remote(handler)
        boxes = det.detect_eyes(constant_image(300, 400, 10))
        assert seen["auth"] == "Bearer k"
        assert [b.x for b in boxes] == [52, 210]

    def test_http_error_wrapped(self):
        det = mock_remote(lambda req: httpx.Response(500))
        with pytest.raises(RemoteDetectorError):
            det.detect_eyes(constant_image(32, 32, 10))

    def test_rate_limit_carries_retry_after(self):
        det = mock_remote(lambda req: httpx.Response(429, headers={"Retry-After": "7"}))
        with pytest.raises(RemoteDetectorError) as exc:
            det.detect_eyes(constant_image(32, 32, 10))
        assert exc.value.retry_after == 7.0

    def test_timeout_maps_to_detector_timeout(self):
        def handler(request):
            raise httpx.ConnectTimeout("slow")

        det = mock_remote(handler)
        with pytest.raises(DetectorTimeout):
            det.detect_eyes(constant_image(32, 32, 10))

    def test_missing_endpoint_rejected(self, monkeypatch):
        monkeypatch.delenv("VISION_ENDPOINT", raising=False)
        with pytest.raises(RemoteDetectorError):
            RemoteEyeDetector()

    def test_chained_falls_back(self):
        failing = mock_remote(lambda req: httpx.Response(503))
        chained = ChainedDetector(failing, FallbackDetector())
        img = disk_image(200, (100, 100), 40, fg=20, bg=200)
        assert chained.detect_pupil(img) is not None
        assert chained.detect_eyes(img)  # fallback produced a box


class TestEndToEndOnSynth:
    def test_clean_images_usable_no_flash_not(self):
        records, _ = generate(SynthConfig(n_subjects=60, abnormal_fraction=0.3,
                                          noise_sigma=2.0, seed=123))
        normal_ok = normal_total = 0
        for rec in records:
            processed = process_eye(rec.record.image)
            result = oracle_check(rec, processed)
            if rec.kind is None:
                normal_total += 1
                normal_ok += result.passed
            elif rec.kind == "absent_reflex":
                assert processed.verdict in ("no_reflex", "too_small")
        assert normal_ok / normal_total >= 0.95
