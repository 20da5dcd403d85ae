"""Safety supervision unit tests: baseline mixture, corridor, reversal."""

import numpy as np
import pytest

from oracles import TEST_MIXTURES, gmr_quadrature
from rehabkit.motion import Pose
from rehabkit.safety import (BufferEntry, CalibrationError, ForceSample,
                             GmrModel, MODE_FORWARD, MODE_HOLD,
                             MODE_REVERSING, acquire_baseline, corridor_check,
                             fit_gmm, gmm_responsibilities, gmr_predict,
                             init_safety, safety_step)

QID = np.array([1.0, 0.0, 0.0, 0.0])


def blob_samples(n=120, seed=0, center=(0.5, 5.0), spread=(0.2, 0.8)):
    rng = np.random.default_rng(seed)
    ph = np.clip(rng.normal(center[0], spread[0], n), 0.02, 1.0)
    fo = np.abs(rng.normal(center[1], spread[1], n))
    return [ForceSample(float(p), float(f)) for p, f in zip(ph, fo)]


def entry(x, snapshot=None):
    return BufferEntry(phase=1.0, pose=Pose([x, 0.0, 0.0], QID),
                       snapshot=snapshot)


class _FakeTrace:
    def __init__(self, phase, fx, fy, fz):
        self._d = dict(phase=np.asarray(phase, dtype=float),
                       force_x=np.asarray(fx, dtype=float),
                       force_y=np.asarray(fy, dtype=float),
                       force_z=np.asarray(fz, dtype=float))

    def column(self, name):
        return self._d[name]


class TestSamplesAndBaseline:
    def test_sample_validation(self):
        with pytest.raises(ValueError):
            ForceSample(0.0, 1.0)
        with pytest.raises(ValueError):
            ForceSample(1.2, 1.0)
        with pytest.raises(ValueError):
            ForceSample(0.5, -1.0)
        with pytest.raises(ValueError):
            ForceSample(0.5, np.nan)

    def test_baseline_pools_magnitudes(self):
        tr = _FakeTrace([1.0, 0.6, 0.2], [3.0, 0.0, 1.0],
                        [4.0, 2.0, 0.0], [0.0, 0.0, 0.0])
        samples = acquire_baseline("passive", [tr, tr])
        assert len(samples) == 6
        assert samples[0].force_n == pytest.approx(5.0)
        assert samples[0].phase == 1.0

    def test_baseline_mode_validation(self):
        with pytest.raises(ValueError):
            acquire_baseline("frenetic", [])

    def test_baseline_needs_rollouts(self):
        with pytest.raises(CalibrationError):
            acquire_baseline("passive", [])


class TestMixtureFit:
    def test_single_component_is_sample_moments(self):
        samples = blob_samples(n=150, seed=1)
        x = np.array([[s.phase, s.force_n] for s in samples])
        model = fit_gmm(samples, n_components=1, seed=0)
        assert model.weights[0] == 1.0
        assert np.allclose(model.means[0], x.mean(axis=0), atol=1e-12)
        assert np.allclose(model.covariances[0], np.cov(x.T, bias=True),
                           atol=1e-10)

    def test_fit_deterministic_for_seed(self):
        samples = blob_samples(n=200, seed=2)
        a = fit_gmm(samples, n_components=3, seed=7)
        b = fit_gmm(samples, n_components=3, seed=7)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.covariances, b.covariances)

    def test_needs_enough_samples(self):
        with pytest.raises(CalibrationError):
            fit_gmm(blob_samples(n=40), n_components=5)
        with pytest.raises(ValueError):
            fit_gmm(blob_samples(n=40), n_components=0)

    def test_degenerate_component_pruned_with_warning(self):
        rng = np.random.default_rng(0)
        n = 10050
        ph = np.clip(rng.normal(0.5, 0.08, n), 0.05, 0.95)
        fo = np.abs(rng.normal(5.0, 0.4, n))
        samples = [ForceSample(float(p), float(f)) for p, f in zip(ph, fo)]
        samples.append(ForceSample(0.99, 90.0))
        with pytest.warns(RuntimeWarning, match="pruned"):
            model = fit_gmm(samples, n_components=2, seed=3)
        assert model.n_components == 1

    def test_responsibilities_normalized(self):
        samples = blob_samples(n=120, seed=4)
        model = fit_gmm(samples, n_components=2, seed=0)
        resp = gmm_responsibilities(model, samples)
        assert resp.shape == (120, model.n_components)
        assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-12)


class TestModelValidation:
    def test_asymmetric_covariance_rejected(self):
        cov = np.array([[[0.1, 0.02], [0.03, 0.5]]])
        with pytest.raises(ValueError):
            GmrModel(np.array([1.0]), np.array([[0.5, 5.0]]), cov)

    def test_floor_eigenvalue_rejected(self):
        cov = np.array([[[1e-10, 0.0], [0.0, 1.0]]])
        with pytest.raises(ValueError):
            GmrModel(np.array([1.0]), np.array([[0.5, 5.0]]), cov)

    def test_weights_must_sum_to_one(self):
        cov = np.array([[[0.1, 0.0], [0.0, 1.0]]] * 2)
        means = np.array([[0.3, 4.0], [0.7, 8.0]])
        with pytest.raises(ValueError):
            GmrModel(np.array([0.6, 0.6]), means, cov)
        with pytest.raises(ValueError):
            GmrModel(np.array([1.2, -0.2]), means, cov)


class TestConditional:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_quadrature(self, k):
        w, mu, cov = TEST_MIXTURES[k]
        model = GmrModel(w, mu, cov)
        for phase in np.linspace(0.05, 1.0, 20):
            mean, sigma = gmr_predict(model, float(phase), sigma_floor_n=0.0)
            m_ref, s_ref = gmr_quadrature(w, mu, cov, float(phase))
            assert abs(mean - m_ref) <= 1e-6 * max(1.0, abs(m_ref))
            assert abs(sigma - s_ref) <= 1e-6 * s_ref

    def test_single_component_is_linear_regression(self):
        w, mu, cov = TEST_MIXTURES[1]
        model = GmrModel(w, mu, cov)
        c = cov[0]
        for phase in (0.1, 0.5, 0.9):
            mean, sigma = gmr_predict(model, phase, sigma_floor_n=0.0)
            assert mean == pytest.approx(
                mu[0, 1] + c[0, 1] / c[0, 0] * (phase - mu[0, 0]), rel=1e-12)
            assert sigma == pytest.approx(
                np.sqrt(c[1, 1] - c[0, 1] ** 2 / c[0, 0]), rel=1e-12)

    def test_sigma_floor(self):
        cov = np.array([[[0.04, 0.0], [0.0, 1e-6]]])
        model = GmrModel(np.array([1.0]), np.array([[0.5, 5.0]]), cov)
        _, floored = gmr_predict(model, 0.5)
        assert floored == 0.05
        _, raw = gmr_predict(model, 0.5, sigma_floor_n=0.0)
        assert raw == pytest.approx(1e-3, rel=1e-9)

    def test_phase_validation(self):
        w, mu, cov = TEST_MIXTURES[1]
        model = GmrModel(w, mu, cov)
        with pytest.raises(ValueError):
            gmr_predict(model, 0.0)
        with pytest.raises(ValueError):
            gmr_predict(model, 1.0001)


class TestCorridor:
    def test_boundary_inclusive(self):
        assert corridor_check(4.5, 2.0, 0.5, n_sigma=5.0)
        assert corridor_check(-0.5, 2.0, 0.5, n_sigma=5.0)
        assert not corridor_check(4.5 + 1e-9, 2.0, 0.5, n_sigma=5.0)
        assert not corridor_check(-0.5 - 1e-9, 2.0, 0.5, n_sigma=5.0)


class TestMachine:
    def test_init_validation(self):
        with pytest.raises(ValueError):
            init_safety(n_sigma=0.0)
        with pytest.raises(ValueError):
            init_safety(dwell_ticks=0)
        with pytest.raises(ValueError):
            init_safety(reverse_speed_mps=0.0)

    def test_forward_appends(self):
        st = init_safety()
        e0, e1 = entry(0.0), entry(0.001)
        st, d = safety_step(st, True, e0, 0.01)
        assert d.kind == MODE_FORWARD
        assert st.buffer == (e0,) and st.cursor == 0
        st, d = safety_step(st, True, e1, 0.01)
        assert st.buffer == (e0, e1) and st.cursor == 1

    def test_forward_requires_entry(self):
        with pytest.raises(ValueError):
            safety_step(init_safety(), True, None, 0.01)

    def test_dt_validation(self):
        with pytest.raises(ValueError):
            safety_step(init_safety(), True, entry(0.0), 0.0)

    def test_violation_reverses_to_last_recorded_pose(self):
        st = init_safety()
        entries = [entry(k * 0.001) for k in range(4)]
        for e in entries:
            st, _ = safety_step(st, True, e, 0.01)
        st, d = safety_step(st, False, None, 0.01)
        assert st.mode == MODE_REVERSING
        assert d.kind == "REVERSE_TO"
        assert d.pose is entries[3].pose

    def test_budget_walk_carries_debt(self):
        st = init_safety(reverse_speed_mps=0.0025)
        entries = [entry(k * 0.001) for k in range(6)]
        for e in entries:
            st, _ = safety_step(st, True, e, 1.0)
        st, d = safety_step(st, False, None, 1.0)
        assert st.cursor == 5
        # budget 0.0025 crosses two 1 mm gaps, 0.5 mm debt remains
        st, d = safety_step(st, False, None, 1.0)
        assert st.cursor == 3
        assert st.reverse_debt_m == pytest.approx(0.0005)
        assert d.pose is entries[3].pose
        # 0.0005 + 0.0025 crosses the remaining three gaps exactly
        st, d = safety_step(st, False, None, 1.0)
        assert st.mode == MODE_HOLD
        assert d.kind == "HOLD"
        assert d.pose is entries[0].pose

    def test_reversal_poses_are_buffer_elements(self):
        st = init_safety(reverse_speed_mps=0.0017)
        entries = [entry(k * 0.001) for k in range(10)]
        for e in entries:
            st, _ = safety_step(st, True, e, 1.0)
        buffer_positions = [e.pose.position for e in entries]
        st, d = safety_step(st, False, None, 1.0)
        while d.kind == "REVERSE_TO":
            assert any(np.array_equal(d.pose.position, p)
                       for p in buffer_positions)
            st, d = safety_step(st, False, None, 1.0)
        assert d.kind == "HOLD"

    def test_dwell_resume_hands_back_snapshot(self):
        marker = object()
        st = init_safety(dwell_ticks=5, reverse_speed_mps=1e-6)
        entries = [entry(k * 0.001, snapshot=None) for k in range(5)]
        entries.append(entry(0.005, snapshot=marker))
        for e in entries:
            st, _ = safety_step(st, True, e, 0.01)
        st, d = safety_step(st, False, None, 0.01)
        assert st.mode == MODE_REVERSING and st.cursor == 5
        # a broken dwell resets the count
        st, _ = safety_step(st, True, None, 0.01)
        st, _ = safety_step(st, False, None, 0.01)
        assert st.dwell_count == 0
        for k in range(5):
            st, d = safety_step(st, True, None, 0.01)
        assert st.mode == MODE_FORWARD
        assert d.kind == MODE_FORWARD
        assert d.resume_snapshot is marker
        assert d.pose is entries[5].pose
        assert len(st.buffer) == 6

    def test_resume_truncates_rewound_suffix(self):
        st = init_safety(dwell_ticks=3, reverse_speed_mps=0.002)
        entries = [entry(k * 0.001) for k in range(8)]
        for e in entries:
            st, _ = safety_step(st, True, e, 1.0)
        st, _ = safety_step(st, False, None, 1.0)  # cursor 7
        st, _ = safety_step(st, False, None, 1.0)  # cursor 5
        for _ in range(3):
            st, d = safety_step(st, True, None, 1.0)
        assert st.mode == MODE_FORWARD
        # rewound past entries are discarded, resume point kept
        assert len(st.buffer) == st.cursor + 1
        assert st.buffer[-1].pose is d.pose

    def test_hold_then_resume_from_start(self):
        st = init_safety(dwell_ticks=4, reverse_speed_mps=10.0)
        entries = [entry(k * 0.001) for k in range(3)]
        for e in entries:
            st, _ = safety_step(st, True, e, 1.0)
        st, d = safety_step(st, False, None, 1.0)
        st, d = safety_step(st, False, None, 1.0)
        assert st.mode == MODE_HOLD
        assert d.pose is entries[0].pose
        for _ in range(4):
            st, d = safety_step(st, True, None, 1.0)
        assert st.mode == MODE_FORWARD
        assert d.pose is entries[0].pose
        assert st.buffer == (entries[0],)

    def test_violation_before_motion_parks(self):
        st = init_safety(dwell_ticks=2)
        st, d = safety_step(st, False, None, 0.01)
        assert st.mode == MODE_HOLD
        assert d.kind == "HOLD" and d.pose is None
        st, d = safety_step(st, True, None, 0.01)
        st, d = safety_step(st, True, None, 0.01)
        assert st.mode == MODE_FORWARD
        assert d.resume_snapshot is None
