"""Room simulation against closed-form geometry.

The mirror enumeration is cross-checked by unfolding first-order
reflections by hand, convolution against a direct O(N*M) loop, and the
SNR contract by re-measuring the rendered components.
"""

from pathlib import Path

import numpy as np
import pytest

from mcse.dsp import TimeSignal
from mcse.simkit import (
    ARRAY_RADIUS,
    SINC_HALF_WIDTH,
    SPEED_OF_SOUND,
    DatasetConfig,
    RoomImpulseResponse,
    SceneSpec,
    build_dataset,
    candidate_positions,
    mix,
    read_manifest,
    simulate_rir,
    synth_noise,
    synth_speech,
)

rng = np.random.default_rng(31)


def sinc_pulse_oracle(tau, amp, length):
    """Windowed-sinc pulse, written independently of the simulator."""
    out = np.zeros(length)
    n = np.arange(length)
    t = n - tau
    inside = np.abs(t) <= SINC_HALF_WIDTH
    out[inside] = amp * np.sinc(t[inside]) * (
        0.5 + 0.5 * np.cos(np.pi * t[inside] / SINC_HALF_WIDTH)
    )
    return out


def onset_sample(h: np.ndarray, fraction: float = 0.1) -> int:
    """First sample where cumulative energy crosses a fraction of the total."""
    e = np.cumsum(h ** 2)
    return int(np.searchsorted(e, fraction * e[-1]))


class TestSceneSpec:
    def test_mic_layout(self):
        scene = SceneSpec()
        mics = scene.mic_positions()
        assert mics.shape == (8, 3)
        left, right = mics[:4], mics[4:]
        for cluster, offset in ((left, -0.1), (right, 0.1)):
            center = cluster.mean(axis=0)
            np.testing.assert_allclose(center, [3.0 + offset, 2.5, 1.3], atol=1e-12)
            d = np.linalg.norm(cluster - center, axis=1)
            np.testing.assert_allclose(d, ARRAY_RADIUS, rtol=1e-12)

    def test_absorption_forms(self):
        assert SceneSpec(absorption=0.5).absorption == (0.5,) * 6
        per_wall = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
        assert SceneSpec(absorption=per_wall).absorption == per_wall
        with pytest.raises(ValueError):
            SceneSpec(absorption=1.5)
        with pytest.raises(ValueError):
            SceneSpec(absorption=(0.1, 0.2))

    def test_positions_must_be_inside(self):
        with pytest.raises(ValueError):
            SceneSpec(source_position=(7.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            SceneSpec(noise_position=(1.0, 1.0, -0.5))

    def test_hash_tracks_content(self):
        a = SceneSpec()
        b = SceneSpec(snr_db=6.0)
        assert a.scene_hash() == SceneSpec().scene_hash()
        assert a.scene_hash() != b.scene_hash()


class TestCandidateGrid:
    def test_count_and_bounds(self):
        grid = candidate_positions()
        assert grid.shape == (252, 3)
        assert np.all(grid[:, 2] == 1.3)
        assert grid[:, 0].min() >= 0.6 and grid[:, 0].max() <= 5.4
        assert grid[:, 1].min() >= 0.6 and grid[:, 1].max() <= 4.4
        # all points distinct
        assert len({tuple(p) for p in grid}) == 252


class TestRir:
    def test_anechoic_single_pulse(self):
        """Full absorption leaves only the direct path: one windowed sinc
        at distance/c with spherical-spreading amplitude."""
        scene = SceneSpec(absorption=1.0)
        rir = simulate_rir(scene)
        mics = scene.mic_positions()
        fs = scene.sample_rate
        for p in range(8):
            r = np.linalg.norm(np.asarray(scene.source_position) - mics[p])
            want = sinc_pulse_oracle(r / SPEED_OF_SOUND * fs, 1.0 / (4 * np.pi * r),
                                     rir.taps.shape[1])
            np.testing.assert_allclose(rir.taps[p], want, atol=1e-12)

    def test_first_order_matches_hand_unfolding(self):
        """Order 1: the direct path plus six wall mirrors, enumerated here
        without the generic image machinery."""
        room = (4.0, 3.0, 2.5)
        src = np.array([1.0, 1.2, 1.1])
        alpha = 0.4
        beta = np.sqrt(1.0 - alpha)
        scene = SceneSpec(room=room, absorption=alpha, source_position=tuple(src),
                          noise_position=(2.0, 2.0, 1.0), max_image_order=1,
                          array_center=(2.0, 1.5, 1.2))
        rir = simulate_rir(scene)
        mics = scene.mic_positions()
        fs = scene.sample_rate

        images = [(src, 1.0)]
        for axis, dim in enumerate(room):
            lo = src.copy()
            lo[axis] = -src[axis]
            hi = src.copy()
            hi[axis] = 2 * dim - src[axis]
            images.append((lo, beta))
            images.append((hi, beta))

        for p in range(8):
            want = np.zeros(rir.taps.shape[1])
            for pos, refl in images:
                r = np.linalg.norm(pos - mics[p])
                want += sinc_pulse_oracle(
                    r / SPEED_OF_SOUND * fs, refl / (4 * np.pi * r), want.shape[0]
                )
            np.testing.assert_allclose(rir.taps[p], want, atol=1e-12)

    def test_direct_path_onset(self):
        # cumulative-energy onset lands within a sample of distance/c
        scene = SceneSpec(absorption=0.7, max_image_order=3)
        rir = simulate_rir(scene)
        mics = scene.mic_positions()
        for p in range(8):
            r = np.linalg.norm(np.asarray(scene.source_position) - mics[p])
            expect = r / SPEED_OF_SOUND * scene.sample_rate
            got = onset_sample(rir.taps[p])
            assert abs(got - expect) <= 1.0, f"mic {p}: onset {got} vs {expect:.2f}"

    def test_inter_mic_delays_match_geometry(self):
        scene = SceneSpec(absorption=1.0)
        rir = simulate_rir(scene)
        mics = scene.mic_positions()
        src = np.asarray(scene.source_position)
        fs = scene.sample_rate
        # anechoic pulses: locate each peak by quadratic interpolation
        for p in range(1, 8):
            want = (np.linalg.norm(src - mics[p]) - np.linalg.norm(src - mics[0])) \
                / SPEED_OF_SOUND * fs
            k0, kp = np.argmax(np.abs(rir.taps[0])), np.argmax(np.abs(rir.taps[p]))
            assert abs((kp - k0) - want) <= 1.0

    def test_more_absorption_less_tail(self):
        def tail_energy(alpha):
            scene = SceneSpec(absorption=alpha, max_image_order=4)
            rir = simulate_rir(scene)
            onset = onset_sample(rir.taps[0])
            cut = onset + 2 * SINC_HALF_WIDTH
            return float(np.sum(rir.taps[0, cut:] ** 2))

        e_live, e_mid, e_dead = tail_energy(0.1), tail_energy(0.5), tail_energy(0.9)
        assert e_live > e_mid > e_dead

    def test_higher_order_adds_energy(self):
        scene1 = SceneSpec(absorption=0.3, max_image_order=1)
        scene4 = SceneSpec(absorption=0.3, max_image_order=4)
        e1 = float(np.sum(simulate_rir(scene1).taps ** 2))
        e4 = float(np.sum(simulate_rir(scene4).taps ** 2))
        assert e4 > e1

    def test_noise_emitter_uses_noise_position(self):
        scene = SceneSpec(absorption=1.0)
        rs = simulate_rir(scene, "source")
        rn = simulate_rir(scene, "noise")
        mics = scene.mic_positions()
        r = np.linalg.norm(np.asarray(scene.noise_position) - mics[0])
        expect = r / SPEED_OF_SOUND * scene.sample_rate
        assert abs(np.argmax(np.abs(rn.taps[0])) - expect) <= 1.0
        assert rs.taps.shape[0] == rn.taps.shape[0] == 8

    def test_unknown_emitter_raises(self):
        with pytest.raises(ValueError):
            simulate_rir(SceneSpec(), "wall")


class TestMix:
    def unit_rirs(self, channels=3):
        taps = np.zeros((channels, 8))
        taps[:, 0] = 1.0
        return RoomImpulseResponse(taps, 16000)

    def test_unit_rir_identity(self):
        s = TimeSignal(rng.standard_normal((1, 500)), 16000)
        n = TimeSignal(rng.standard_normal((1, 500)), 16000)
        mixture, revclean, dry = mix(s, n, self.unit_rirs(), self.unit_rirs(), np.inf)
        np.testing.assert_allclose(revclean.samples, np.repeat(s.samples, 3, axis=0), atol=1e-12)
        np.testing.assert_allclose(mixture.samples, revclean.samples, atol=1e-12)
        np.testing.assert_allclose(dry.samples, s.samples)

    def test_snr_remeasured_from_components(self):
        scene = SceneSpec(max_image_order=2)
        rs = simulate_rir(scene, "source")
        rn = simulate_rir(scene, "noise")
        s = synth_speech(np.random.default_rng(1), 8000)
        n = synth_noise(np.random.default_rng(2), 8000)
        for target in (-5.0, 0.0, 5.0, 20.0):
            mixture, revclean, _ = mix(s, n, rs, rn, target)
            noise_part = mixture.samples[0] - revclean.samples[0]
            got = 10.0 * np.log10(
                np.sum(revclean.samples[0] ** 2) / np.sum(noise_part ** 2)
            )
            assert abs(got - target) < 0.1, f"target {target}, measured {got:.3f}"

    def test_convolution_matches_direct_loop(self):
        scene = SceneSpec(max_image_order=1)
        rir = simulate_rir(scene, "source")
        x = rng.standard_normal(400)
        s = TimeSignal(x[None, :], 16000)
        n = TimeSignal(rng.standard_normal((1, 400)), 16000)
        mixture, revclean, _ = mix(s, n, rir, rir, np.inf)

        h = rir.taps[2]
        want = np.zeros(400)
        for i in range(400):
            lo = max(0, i - len(h) + 1)
            want[i] = np.dot(x[lo : i + 1], h[i - lo :: -1][: i + 1 - lo])
        np.testing.assert_allclose(revclean.samples[2], want, atol=1e-6)

    def test_output_length_is_dry_length(self):
        s = TimeSignal(rng.standard_normal((1, 300)), 16000)
        n = TimeSignal(rng.standard_normal((1, 400)), 16000)
        mixture, revclean, dry = mix(s, n, self.unit_rirs(), self.unit_rirs(), 5.0)
        assert mixture.length == revclean.length == dry.length == 300

    def test_noise_shorter_than_speech_raises(self):
        s = TimeSignal(rng.standard_normal((1, 400)), 16000)
        n = TimeSignal(rng.standard_normal((1, 300)), 16000)
        with pytest.raises(ValueError):
            mix(s, n, self.unit_rirs(), self.unit_rirs(), 5.0)

    def test_silent_speech_raises(self):
        s = TimeSignal(np.zeros((1, 300)), 16000)
        n = TimeSignal(rng.standard_normal((1, 300)), 16000)
        with pytest.raises(ValueError):
            mix(s, n, self.unit_rirs(), self.unit_rirs(), 5.0)


class TestSyntheticSources:
    def test_speech_has_harmonic_envelope(self):
        s = synth_speech(np.random.default_rng(0), 16000)
        assert s.samples.shape == (1, 16000)
        assert np.max(np.abs(s.samples)) <= 0.31

    def test_noise_bounded(self):
        n = synth_noise(np.random.default_rng(0), 16000)
        assert n.samples.shape == (1, 16000)
        assert np.max(np.abs(n.samples)) <= 0.31


class TestDataset:
    def test_deterministic_rebuild(self, tmp_path):
        cfg_a = DatasetConfig(out_dir=tmp_path / "a", num_utterances=2, seconds=0.3,
                              seed=9, max_image_order=1)
        cfg_b = DatasetConfig(out_dir=tmp_path / "b", num_utterances=2, seconds=0.3,
                              seed=9, max_image_order=1)
        ma, mb = build_dataset(cfg_a), build_dataset(cfg_b)
        assert ma.read_text() == mb.read_text()
        for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_changes_content(self, tmp_path):
        m1 = build_dataset(DatasetConfig(out_dir=tmp_path / "s1", num_utterances=1,
                                         seconds=0.3, seed=1, max_image_order=1))
        m2 = build_dataset(DatasetConfig(out_dir=tmp_path / "s2", num_utterances=1,
                                         seconds=0.3, seed=2, max_image_order=1))
        assert m1.read_text() != m2.read_text()

    def test_utterances_independent_of_count(self, tmp_path):
        """Entry k is a function of (seed, k), not of how many entries exist."""
        build_dataset(DatasetConfig(out_dir=tmp_path / "n2", num_utterances=2,
                                    seconds=0.3, seed=4, max_image_order=1))
        build_dataset(DatasetConfig(out_dir=tmp_path / "n4", num_utterances=4,
                                    seconds=0.3, seed=4, max_image_order=1))
        for name in ("utt0000_mix.wav", "utt0001_mix.wav", "utt0001_dry.wav"):
            assert (tmp_path / "n2" / name).read_bytes() == (tmp_path / "n4" / name).read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        manifest = build_dataset(DatasetConfig(out_dir=tmp_path, num_utterances=2,
                                               seconds=0.3, seed=0, max_image_order=1))
        entries = read_manifest(manifest)
        assert len(entries) == 2
        assert entries[0].uid == "utt0000"
        assert entries[0].mix_path.exists()
        assert entries[0].dry_path.exists()
        assert 0.0 <= entries[0].snr_db <= 10.0
        assert len(entries[0].source_position) == 3

    def test_source_and_noise_positions_differ(self, tmp_path):
        manifest = build_dataset(DatasetConfig(out_dir=tmp_path, num_utterances=3,
                                               seconds=0.3, seed=5, max_image_order=1))
        for e in read_manifest(manifest):
            assert e.source_position != e.noise_position

    def test_wav_channel_counts(self, tmp_path):
        from mcse.wavio import read_wav

        manifest = build_dataset(DatasetConfig(out_dir=tmp_path, num_utterances=1,
                                               seconds=0.3, seed=0, max_image_order=1))
        e = read_manifest(manifest)[0]
        assert read_wav(e.mix_path).channels == 8
        assert read_wav(e.revclean_path).channels == 8
        assert read_wav(e.dry_path).channels == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DatasetConfig(num_utterances=0)
        with pytest.raises(ValueError):
            DatasetConfig(snr_db_min=5.0, snr_db_max=0.0)
