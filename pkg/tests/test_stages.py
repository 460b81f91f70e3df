import time

import numpy as np
import pytest

from kinepipe.errors import ConfigError, StageError
from kinepipe.kinematics import site_positions
from kinepipe.stages import (
    BoundingBox,
    Camera,
    DetectionSequence,
    Frame,
    GaitParameters,
    NOISELESS,
    NoiseModel,
    PoseEstimator,
    StageInitProfile,
    Detector,
    detect_sequence,
    generate_synthetic_sequence,
    init_stages,
)


@pytest.fixture(scope="module")
def seq(model):
    return generate_synthetic_sequence(7, 12, model=model)


class TestInit:
    def test_monolithic_fetch_delay(self):
        h = init_stages(StageInitProfile("monolithic", simulated_fetch_ms=2000))
        assert h.init_seconds >= 2.0
        assert h.fetch_events == 1

    def test_modular_ignores_fetch(self):
        start = time.perf_counter()
        h = init_stages(StageInitProfile("modular", simulated_fetch_ms=2000))
        assert time.perf_counter() - start < 0.05
        assert h.fetch_events == 0

    def test_monolithic_zero_fetch_is_fast(self):
        assert init_stages(StageInitProfile("monolithic", simulated_fetch_ms=0)).init_seconds < 0.05

    @pytest.mark.parametrize("kwargs", [
        {"mode": "lazy"}, {"simulated_fetch_ms": -1}, {"per_frame_inference_ms": -5},
    ])
    def test_invalid_profile(self, kwargs):
        with pytest.raises(ConfigError):
            StageInitProfile(**kwargs)

    def test_uninitialized_stages_refuse(self, seq):
        with pytest.raises(StageError):
            Detector().detect(seq.frames[0])
        box = BoundingBox(0, 10, 10, 100, 100)
        with pytest.raises(StageError):
            PoseEstimator(NOISELESS, "x").estimate_pose(seq.frames[0], box)


class TestDetect:
    def test_bbox_covers_projection_with_margin(self, seq):
        h = init_stages(StageInitProfile())
        frame = seq.frames[4]
        (box,) = h.detector.detect(frame)
        # recompute the projected extent directly
        cam = frame.camera
        pts = frame.sites - np.array(cam.position)
        u = cam.width / 2 + cam.focal_px * pts[:, 0] / pts[:, 1]
        v = cam.height / 2 - cam.focal_px * pts[:, 2] / pts[:, 1]
        w, hgt = u.max() - u.min(), v.max() - v.min()
        assert box.x == pytest.approx(u.min() - 0.05 * w, rel=1e-12)
        assert box.y == pytest.approx(v.min() - 0.05 * hgt, rel=1e-12)
        assert box.w == pytest.approx(1.10 * w, rel=1e-12)
        assert box.h == pytest.approx(1.10 * hgt, rel=1e-12)
        assert box.score == 1.0
        assert box.frame_index == 4

    def test_empty_frame(self):
        h = init_stages(StageInitProfile())
        assert h.detector.detect(Frame(0, 0, None)) == []

    def test_deterministic(self, seq):
        h = init_stages(StageInitProfile())
        assert h.detector.detect(seq.frames[2]) == h.detector.detect(seq.frames[2])

    def test_bbox_clipped_to_image(self):
        h = init_stages(StageInitProfile())
        sites = np.array([[-10.0, 0.0, 1.0], [0.0, 0.0, 1.5]])
        (box,) = h.detector.detect(Frame(0, 0, sites))
        assert box.inside(1920, 1080) and box.x == 0.0

    @pytest.mark.parametrize("kwargs", [{"w": 0}, {"h": -1}, {"score": 1.5}])
    def test_invalid_bbox(self, kwargs):
        args = dict(frame_index=0, x=0, y=0, w=1, h=1, score=1.0)
        args.update(kwargs)
        with pytest.raises(ValueError):
            BoundingBox(**args)


class TestEstimate:
    def test_noiseless_is_ground_truth(self, seq):
        h = init_stages(StageInitProfile(), NOISELESS)
        frame = seq.frames[1]
        kp, conf = h.estimator.estimate_pose(frame, h.detector.detect(frame)[0])
        np.testing.assert_array_equal(kp, frame.sites)
        assert np.all(conf == 1.0)

    def test_noise_rms(self, model):
        s = generate_synthetic_sequence(11, 40, model=model)
        det = detect_sequence(s, noise=NoiseModel(0.02))
        gt = np.array([f.sites for f in s.frames])
        rms = np.sqrt(np.mean(np.sum((det.keypoints3d - gt) ** 2, axis=-1)))
        assert rms == pytest.approx(0.02 * np.sqrt(3), rel=0.05)

    def test_source_tags_are_independent(self, seq):
        gt = np.array([f.sites for f in seq.frames])
        a = detect_sequence(seq, source_tag="alpha").keypoints3d - gt
        b = detect_sequence(seq, source_tag="beta").keypoints3d - gt
        assert a.size >= 1000
        assert abs(np.corrcoef(a.ravel(), b.ravel())[0, 1]) < 0.1

    def test_bbox_outside_frame(self, seq):
        h = init_stages(StageInitProfile())
        with pytest.raises(StageError):
            h.estimator.estimate_pose(seq.frames[0], BoundingBox(0, 1900, 10, 100, 100))

    def test_rigid_offset_is_per_sequence(self, seq):
        noise = NoiseModel(0.0, 0.01)
        det = detect_sequence(seq, noise=noise, source_tag="x")
        gt = np.array([f.sites for f in seq.frames])
        shift = det.keypoints3d - gt
        np.testing.assert_allclose(shift, np.broadcast_to(shift[0, 0], shift.shape), atol=1e-15)
        assert np.linalg.norm(shift[0, 0]) > 0

    def test_init_modes_give_identical_detections(self, seq):
        a = detect_sequence(seq, StageInitProfile("monolithic", 0))
        b = detect_sequence(seq, StageInitProfile("modular"))
        assert a.keypoints3d.tobytes() == b.keypoints3d.tobytes()
        assert a.bboxes == b.bboxes

    def test_negative_noise(self):
        with pytest.raises(ConfigError):
            NoiseModel(-0.1)


class TestSyntheticSequence:
    def test_zero_amplitude_is_neutral(self, model):
        s = generate_synthetic_sequence(1, 10, GaitParameters(amplitude=0.0), model)
        assert np.all(s.ground_truth.values == model.neutral_pose())

    def test_deterministic(self, model):
        a = generate_synthetic_sequence(4, 30, model=model)
        b = generate_synthetic_sequence(4, 30, model=model)
        assert a.ground_truth.values.tobytes() == b.ground_truth.values.tobytes()

    def test_smooth_by_construction(self, model):
        s = generate_synthetic_sequence(2, 195, model=model)
        assert np.abs(np.diff(s.ground_truth.values, axis=0)).max() < 0.1

    def test_frames_carry_fk(self, model, seq):
        np.testing.assert_array_equal(seq.frames[3].sites, site_positions(model, seq.ground_truth.values[3]))

    @pytest.mark.parametrize("kwargs", [{"amplitude": -1.0}, {"frequency": -0.1}])
    def test_invalid_gait(self, kwargs):
        with pytest.raises(ConfigError):
            GaitParameters(**kwargs)

    def test_zero_frames(self, model):
        with pytest.raises(ConfigError):
            generate_synthetic_sequence(1, 0, model=model)


def test_detection_sequence_validation():
    with pytest.raises(ValueError):
        DetectionSequence(np.zeros((2, 3, 3)), np.zeros((2, 4)), [], "x")
    with pytest.raises(ValueError):
        DetectionSequence(np.zeros((2, 3, 3)), np.full((2, 3), 1.5), [], "x")
    with pytest.raises(ValueError):
        DetectionSequence(np.zeros((2, 3)), np.zeros((2, 3)), [], "x")


def test_camera_projects_center():
    cam = Camera()
    uv = cam.project(np.array([[0.0, 0.0, 1.0]]))
    np.testing.assert_allclose(uv, [[960.0, 540.0]])
