import numpy as np
import pytest

from sonoloc.errors import NoDetectionError, UnderdeterminedError
from sonoloc.positioning import (NodeLayout, SyncModel, TdoaSet,
                                 apply_sync_error, corner_layout, detect_toa,
                                 form_tdoa, matched_filter, solve_position)
from sonoloc.signal_chain import ChirpSpec, generate_chirp

C = 343.0


def exact_toas(source, layout, c=C, emission_time=0.0):
    d = np.linalg.norm(layout.mic_positions - np.asarray(source), axis=1)
    return {i: emission_time + float(di) / c for i, di in enumerate(d)}


@pytest.fixture(scope="module")
def room_corners():
    return corner_layout((8.0, 4.0, 2.4), inset=0.2)


class TestMatchedFilter:
    def test_delayed_template_peaks_at_delay(self):
        template = generate_chirp(ChirpSpec(), 192000.0)
        received = np.zeros(4000)
        received[1000:1000 + len(template)] = template
        corr = matched_filter(received, template)
        assert np.argmax(corr) == 1000

    def test_scale_invariant_argmax(self):
        template = generate_chirp(ChirpSpec(), 192000.0)
        received = np.zeros(4000)
        received[700:700 + len(template)] = template
        base = np.argmax(matched_filter(received, template))
        for k in (1e-6, 0.1, 250.0):
            assert np.argmax(matched_filter(k * received, template)) == base

    def test_pulse_compression_gain_at_0db_snr(self):
        # 960-sample chirp buried in white noise at 0 dB per-sample SNR
        template = generate_chirp(ChirpSpec(), 192000.0)
        sig_rms = np.sqrt(np.mean(template**2))
        delay = 1500
        successes = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            received = rng.normal(0.0, sig_rms, size=4000)
            received[delay:delay + len(template)] += template
            corr = matched_filter(received, template)
            successes += int(abs(np.argmax(corr) - delay) <= 1)
        assert successes >= 99

    def test_contract_errors(self):
        with pytest.raises(ValueError):
            matched_filter(np.array([]), np.ones(4))
        with pytest.raises(ValueError):
            matched_filter(np.ones(4), np.zeros(4))


class TestDetectToa:
    def test_single_peak_position(self):
        corr = np.zeros(4000)
        corr[1920] = 1.0
        assert detect_toa(corr, 192000.0) == pytest.approx(0.010, abs=1e-12)

    def test_earliest_qualifying_peak_wins(self):
        corr = np.zeros(2000)
        corr[500] = 1.0
        corr[800] = 0.8
        assert detect_toa(corr, 192000.0, min_peak_ratio=0.5) == \
            pytest.approx(500 / 192000.0, abs=1e-15)

    def test_weak_early_peak_skipped(self):
        corr = np.zeros(2000)
        corr[300] = 0.3
        corr[900] = 1.0
        assert detect_toa(corr, 192000.0, min_peak_ratio=0.5) == \
            pytest.approx(900 / 192000.0, abs=1e-15)

    def test_all_zero_correlation(self):
        with pytest.raises(NoDetectionError):
            detect_toa(np.zeros(100), 192000.0)

    def test_result_on_sample_grid(self):
        corr = np.zeros(100)
        corr[37] = 1.0
        toa = detect_toa(corr, 48000.0)
        assert toa * 48000.0 == pytest.approx(round(toa * 48000.0), abs=1e-9)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            detect_toa(np.ones(10), 0.0)
        with pytest.raises(ValueError):
            detect_toa(np.ones(10), 48000.0, min_peak_ratio=0.0)


class TestFormTdoa:
    def test_equal_toas_give_zero(self, room_corners):
        toas = {i: 0.025 for i in range(8)}
        tdoas = form_tdoa(toas, room_corners)
        assert all(v == 0.0 for v in tdoas.delays.values())

    def test_range_difference(self, room_corners):
        # mics at 1 m and 3 m from the source: tdoa = 2 m / c = 5.831 ms
        toas = {i: 0.0 for i in range(8)}
        toas[0] = 1.0 / C
        toas[1] = 3.0 / C
        tdoas = form_tdoa(toas, room_corners)
        assert tdoas.delays[1] == pytest.approx(0.0058309037900874635,
                                                rel=1e-12)

    def test_missing_mic_drops_one_pair(self, room_corners):
        toas = exact_toas((2.0, 1.0, 1.0), room_corners)
        full = form_tdoa(toas, room_corners)
        del toas[5]
        partial = form_tdoa(toas, room_corners)
        assert len(partial) == len(full) - 1
        assert 5 not in partial.delays

    def test_missing_reference_rejected(self, room_corners):
        toas = exact_toas((2.0, 1.0, 1.0), room_corners)
        del toas[room_corners.reference_index]
        with pytest.raises(ValueError):
            form_tdoa(toas, room_corners)

    def test_underdetermined(self, room_corners):
        toas = {0: 0.01, 1: 0.012, 2: 0.009}
        with pytest.raises(UnderdeterminedError):
            form_tdoa(toas, room_corners)

    def test_reference_entry_rejected_in_tdoaset(self):
        with pytest.raises(ValueError):
            TdoaSet(reference_index=0, delays={0: 0.0, 1: 1e-3})

    def test_geometric_bound_validation(self, room_corners):
        tdoas = TdoaSet(reference_index=0, delays={1: 1.0, 2: 0.0, 3: 0.0})
        with pytest.raises(ValueError):
            tdoas.validate_against(room_corners)


class TestApplySyncError:
    def test_identity_without_error(self):
        toas = {0: 0.01, 1: 0.02, 2: 0.015}
        out = apply_sync_error(toas, SyncModel(jitter_std=0.0), seed=0)
        assert out == toas

    def test_jitter_sigma_in_range_units(self):
        # 1 us of clock jitter is 0.343 mm of range noise
        model = SyncModel(jitter_std=1e-6)
        toas = {i: 0.0 for i in range(20000)}
        out = apply_sync_error(toas, model, seed=17)
        deltas = np.array([out[i] for i in range(20000)])
        assert C * np.std(deltas) == pytest.approx(0.343e-3, rel=0.05)

    def test_common_mode_bias_cancels(self, room_corners):
        toas = exact_toas((3.0, 2.0, 1.3), room_corners)
        baseline = form_tdoa(dict(toas), room_corners)
        biased = apply_sync_error(toas, SyncModel(jitter_std=0.0,
                                                  bias_per_node=4.2e-3), seed=0)
        shifted = form_tdoa(biased, room_corners)
        for i in baseline.delays:
            assert shifted.delays[i] == baseline.delays[i]

    def test_deterministic_per_seed(self):
        toas = {i: 0.01 * i for i in range(5)}
        a = apply_sync_error(toas, SyncModel(jitter_std=1e-6), seed=5)
        b = apply_sync_error(toas, SyncModel(jitter_std=1e-6), seed=5)
        assert a == b


class TestSolvePosition:
    def test_exact_recovery_from_corners(self, room_corners):
        source = np.array([2.0, 1.0, 1.0])
        tdoas = form_tdoa(exact_toas(source, room_corners), room_corners)
        est = solve_position(tdoas, room_corners, C)
        assert est.converged
        assert np.linalg.norm(est.point - source) <= 1e-6

    def test_residual_zero_at_truth(self, room_corners):
        source = np.array([4.4, 2.2, 1.5])
        tdoas = form_tdoa(exact_toas(source, room_corners), room_corners)
        est = solve_position(tdoas, room_corners, C, initial=source)
        assert est.residual_rms <= 1e-12

    def test_symmetric_centroid_fixed_point(self, room_corners):
        centroid = room_corners.mic_positions.mean(axis=0)
        tdoas = TdoaSet(reference_index=0,
                        delays={i: 0.0 for i in range(1, 8)})
        est = solve_position(tdoas, room_corners, C, initial=centroid)
        assert np.linalg.norm(est.point - centroid) <= 1e-9

    def test_translation_equivariance(self, room_corners):
        shift = np.array([1.3, -0.7, 0.4])
        source = np.array([2.5, 1.5, 1.0])
        moved = NodeLayout(mic_positions=room_corners.mic_positions + shift,
                           reference_index=0)
        est_a = solve_position(form_tdoa(exact_toas(source, room_corners),
                                         room_corners), room_corners, C)
        est_b = solve_position(form_tdoa(exact_toas(source + shift, moved),
                                         moved), moved, C)
        assert np.linalg.norm((est_b.point - shift) - est_a.point) <= 1e-6

    def test_quantized_tdoas_give_mm_scale_error(self, room_corners):
        # tdoa quantization at 192 kHz leaves errors of a few times c/fs
        fs = 192000.0
        rng = np.random.default_rng(23)
        errors = []
        for _ in range(50):
            source = np.array([rng.uniform(1, 7), rng.uniform(1, 3),
                               rng.uniform(0.5, 1.9)])
            toas = exact_toas(source, room_corners)
            toas = {i: round(t * fs) / fs for i, t in toas.items()}
            est = solve_position(form_tdoa(toas, room_corners), room_corners, C)
            errors.append(np.linalg.norm(est.point - source))
        median = float(np.median(errors))
        assert median <= 5 * C / fs

    def test_monotonic_jitter_degradation(self, room_corners):
        medians = []
        for jitter in (0.0, 1e-6, 1e-5, 1e-4):
            rng = np.random.default_rng(31)
            errors = []
            for trial in range(200):
                source = np.array([rng.uniform(1, 7), rng.uniform(1, 3),
                                   rng.uniform(0.5, 1.9)])
                toas = exact_toas(source, room_corners)
                toas = apply_sync_error(toas, SyncModel(jitter_std=jitter),
                                        seed=1000 + trial)
                est = solve_position(form_tdoa(toas, room_corners),
                                     room_corners, C)
                errors.append(np.linalg.norm(est.point - source))
            medians.append(float(np.median(errors)))
        assert all(b >= a for a, b in zip(medians, medians[1:])), medians

    def test_underdetermined(self, room_corners):
        tdoas = TdoaSet(reference_index=0, delays={1: 1e-4, 2: 2e-4})
        with pytest.raises(UnderdeterminedError):
            solve_position(tdoas, room_corners, C)

    def test_search_box_flag(self, room_corners):
        source = np.array([2.0, 1.0, 1.0])
        tdoas = form_tdoa(exact_toas(source, room_corners), room_corners)
        est = solve_position(tdoas, room_corners, C,
                             search_box=((0, 0, 0), (1, 1, 1)))
        assert not est.within_bounds


class TestNodeLayout:
    def test_requires_four_mics(self):
        with pytest.raises(ValueError):
            NodeLayout(mic_positions=np.zeros((3, 3)))

    def test_near_coplanar_warns(self):
        flat = np.array([[0, 0, 1.0], [8, 0, 1.0], [0, 4, 1.0], [8, 4, 1.0],
                         [4, 2, 1.005]])
        with pytest.warns(UserWarning, match="coplanar"):
            NodeLayout(mic_positions=flat)

    def test_corner_layout_inside_room(self):
        layout = corner_layout((8.0, 4.0, 2.4), inset=0.2)
        assert len(layout) == 8
        assert layout.mic_positions.min() == pytest.approx(0.2)
