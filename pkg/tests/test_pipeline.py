"""
Tests for the frame-sequential chain and the full-file pipeline.
"""

import numpy as np
import pytest

from multisource_separator.config import Config, FrameConfig, PostfilterConfig
from multisource_separator.core.metrics import STAGE_NAMES, segsnr
from multisource_separator.core.pipeline import (
    PipelineState,
    SeparationPipeline,
    padding,
    process_frame,
    run,
)
from multisource_separator.core.stft import SpectralFrame, analyze_array
from multisource_separator.exceptions import ConfigError, NumericalError


def _eight_channel_noise(rng, samples=16000):
    return 0.1 * rng.standard_normal((8, samples))


class TestProcessFrame:
    """Tests for the per-frame entry point."""

    def test_zero_frame(self, two_source_scene):
        """Silence in, silence out, finite diagnostics."""
        state = PipelineState.create(two_source_scene)
        out = process_frame(state, SpectralFrame(0, np.zeros((8, 513), dtype=complex)))

        assert out.frame.bins.shape == (2, 513)
        np.testing.assert_array_equal(out.frame.bins, 0.0)
        assert np.all(np.isfinite(out.diagnostics.mean_gain))
        assert state.frame_count == 1

    def test_wrong_channel_count(self, two_source_scene):
        state = PipelineState.create(two_source_scene)
        with pytest.raises(ValueError):
            process_frame(state, SpectralFrame(0, np.zeros((4, 513), dtype=complex)))

    def test_causal(self, two_source_scene, rng):
        """Output frames never depend on later input frames."""
        x = _eight_channel_noise(rng)
        y = x.copy()
        y[:, 8000:] = rng.standard_normal((8, 8000))
        cfg = FrameConfig()
        changed = 8000 // cfg.hop - 1  # first frame touching the change

        a = PipelineState.create(two_source_scene)
        b = PipelineState.create(two_source_scene)
        for l, (fa, fb) in enumerate(zip(analyze_array(x, cfg), analyze_array(y, cfg))):
            out_a = process_frame(a, SpectralFrame(l, fa))
            out_b = process_frame(b, SpectralFrame(l, fb))
            if l < changed:
                np.testing.assert_array_equal(out_a.frame.bins, out_b.frame.bins)

    def test_never_amplifies(self, two_source_scene, rng):
        """The post-filter only attenuates the LSS output."""
        state = PipelineState.create(two_source_scene)
        for l, frame in enumerate(analyze_array(_eight_channel_noise(rng), FrameConfig())):
            out = process_frame(state, SpectralFrame(l, frame))
            assert np.all(np.abs(out.frame.bins) <= np.abs(out.lss.bins) + 1e-12)

    def test_rate_mismatch(self, two_source_scene):
        config = Config.from_dict({"frame": {"sample_rate": 8000}})
        with pytest.raises(ConfigError):
            PipelineState.create(two_source_scene, config)


class TestPadding:
    """Tests for padding()."""

    @pytest.mark.parametrize("samples", [1, 511, 512, 1024, 16000, 16001])
    def test_whole_frames(self, samples):
        """Padded length is a whole number of hops with a full frame of context."""
        cfg = FrameConfig()
        front, back = padding(samples, cfg)
        total = front + samples + back
        assert front == cfg.frame_len - cfg.hop
        assert total % cfg.hop == 0
        assert back >= front


class TestSeparationPipeline:
    """Tests for the full-file driver."""

    def test_output_shape(self, two_source_scene, rng):
        result = run(_eight_channel_noise(rng, 10000), two_source_scene)

        assert result.outputs.shape == (2, 10000)
        assert result.report is None
        assert result.lss_output is None
        assert result.frames > 0

    def test_silence(self, two_source_scene):
        """All-zero input gives all-zero output."""
        result = run(np.zeros((8, 8000)), two_source_scene, diagnostics=True)
        np.testing.assert_array_equal(result.outputs, 0.0)
        np.testing.assert_array_equal(result.lss_output, 0.0)

    def test_single_sample(self, two_source_scene):
        """One sample still runs and comes back finite."""
        result = run(np.full((8, 1), 0.1), two_source_scene)
        assert result.outputs.shape == (2, 1)
        assert np.all(np.isfinite(result.outputs))

    def test_empty(self, two_source_scene):
        result = run(np.zeros((8, 0)), two_source_scene)
        assert result.outputs.shape == (2, 0)
        assert result.warnings

    def test_single_mic_lss_is_input(self, single_mic_scene, rng):
        """With one mic and one source the LSS tap reproduces the input, aligned."""
        x = rng.standard_normal((1, 5000))
        result = run(x, single_mic_scene, diagnostics=True)
        np.testing.assert_allclose(result.lss_output, x, atol=1e-9)

    def test_eta_zero_is_single_channel(self, two_source_scene, rng):
        """With eta = 0 the proposed filter is bit-identical to the baseline tap."""
        result = run(
            _eight_channel_noise(rng),
            two_source_scene,
            PostfilterConfig(eta=0.0),
            diagnostics=True,
        )
        np.testing.assert_array_equal(result.outputs, result.single_channel_output)

    def test_single_source(self, single_mic_scene, rng):
        """M = 1 has no leakage, so both post-filters agree for any eta."""
        result = run(rng.standard_normal((1, 8000)), single_mic_scene, diagnostics=True)
        np.testing.assert_array_equal(result.outputs, result.single_channel_output)
        np.testing.assert_array_equal(result.diagnostics["leakage_noise"], 0.0)

    def test_deterministic(self, two_source_scene, rng):
        x = _eight_channel_noise(rng)
        np.testing.assert_array_equal(run(x, two_source_scene).outputs, run(x, two_source_scene).outputs)

    def test_diagnostic_taps(self, two_source_scene, rng):
        result = run(_eight_channel_noise(rng), two_source_scene, diagnostics=True)

        assert set(result.diagnostics) == {
            "mean_gain", "stationary_noise", "leakage_noise", "speech_presence"
        }
        assert result.diagnostics["mean_gain"].shape == (result.frames, 2)
        assert result.mic_average.shape == (16000,)
        assert result.regularized_bins >= 1

    def test_noise_gain_reported(self, two_source_scene, rng):
        """The worst white-noise gain of W is carried on the result; a low limit adds a warning."""
        from multisource_separator.core.lss import build_separation_matrix

        expected = build_separation_matrix(two_source_scene, FrameConfig()).max_noise_gain_db()
        quiet = run(_eight_channel_noise(rng), two_source_scene)
        assert quiet.max_noise_gain_db == pytest.approx(expected)
        assert not any("White-noise gain" in w for w in quiet.warnings)

        config = Config()
        config.separation.noise_gain_limit_db = expected - 1.0
        noisy = run(_eight_channel_noise(rng), two_source_scene, config=config)
        assert any("White-noise gain" in w for w in noisy.warnings)

    def test_channel_mismatch(self, two_source_scene):
        with pytest.raises(ConfigError):
            run(np.zeros((4, 1000)), two_source_scene)

    def test_non_finite_input(self, two_source_scene):
        x = np.zeros((8, 2000))
        x[3, 100] = np.nan
        with pytest.raises(NumericalError):
            run(x, two_source_scene)

    def test_reference_shape(self, two_source_scene):
        with pytest.raises(ConfigError):
            run(np.zeros((8, 2000)), two_source_scene, references=np.zeros((3, 2000)))

    def test_report_with_references(self, two_source_scene, rng):
        x = _eight_channel_noise(rng)
        refs = rng.standard_normal((2, 16000))
        result = run(x, two_source_scene, references=refs)

        assert [s.name for s in result.report.stages] == list(STAGE_NAMES)
        assert result.report.sources == ["source 1", "source 2"]
        assert result.report.config["postfilter"]["eta"] == 0.1

    def test_short_input_skips_metrics(self, two_source_scene, rng):
        result = run(np.zeros((8, 300)), two_source_scene, references=np.zeros((2, 300)))
        assert result.report is None
        assert any("metrics skipped" in w for w in result.warnings)

    def test_progress(self, two_source_scene, rng):
        calls = []
        pipeline = SeparationPipeline(
            two_source_scene, progress_callback=lambda msg, pct: calls.append((msg, pct))
        )
        pipeline.run(_eight_channel_noise(rng))
        assert calls[0][1] == 0
        assert calls[-1] == ("Completed!", 100)


@pytest.fixture(scope="module")
def end_to_end_report(three_source_mix):
    """Metrics of all four stages on the rendered 3-source scene."""
    mix = three_source_mix
    result = run(mix.mixture, mix.scene, references=mix.references, mic_references=mix.mic_references)
    return result.report


def _per_source(report, metric):
    """(stages, sources) array of one metric, stages in STAGE_NAMES order."""
    return np.array([
        [getattr(s, metric) for s in report.stage(name).per_source] for name in STAGE_NAMES
    ])


@pytest.mark.slow
class TestEndToEnd:
    """Stage ordering on the rendered 3-source scene, source by source."""

    def test_lsd_decreases(self, end_to_end_report):
        """mic > LSS > single-channel > proposed in LSD for every source."""
        lsd = _per_source(end_to_end_report, "lsd_db")
        assert lsd.shape == (4, 3)
        assert np.all(np.diff(lsd, axis=0) < 0)

    def test_segsnr_increases(self, end_to_end_report):
        """mic < LSS < single-channel < proposed in SegSNR for every source."""
        snr = _per_source(end_to_end_report, "segsnr_db")
        assert np.all(np.diff(snr, axis=0) > 0)

    def test_proposed_lsd_margin(self, end_to_end_report):
        """The leakage term takes at least 1.5 dB LSD off the single-channel filter per source."""
        lsd = _per_source(end_to_end_report, "lsd_db")
        assert np.all(lsd[3] <= lsd[2] - 1.5)


@pytest.mark.slow
class TestLinearSeparationGain:
    """Linear separation alone on a matched two-source scene."""

    def test_beats_best_microphone(self):
        """Each LSS output is at least 3 dB above the best single microphone in SegSNR."""
        from multisource_separator.scene.mixer import SceneSpec, mix

        low = {"f0": 110.0, "formants": [600.0, 1200.0, 2500.0], "syllable_s": [0.2, 0.4]}
        high = {"f0": 210.0, "formants": [700.0, 1900.0, 2900.0], "syllable_s": [0.2, 0.4]}
        spec = SceneSpec.from_dict({
            "sample_rate": 16000,
            "array": "cube",
            "sources": [
                {"azimuth": 30.0, "elevation": 10.0, "surrogate": low},
                {"azimuth": 200.0, "elevation": -15.0, "surrogate": high},
            ],
            "noise": {"type": "white"},
            "duration": 3.0,
            "seed": 7,
            "target_input_segsnr_db": -5.0,
        })
        scene = mix(spec)
        result = run(scene.mixture, scene.scene, diagnostics=True)

        for m in range(2):
            best_mic = max(segsnr(scene.stems[m, n], scene.mixture[n]) for n in range(scene.mixture.shape[0]))
            assert segsnr(scene.references[m], result.lss_output[m]) >= best_mic + 3.0
        assert result.max_noise_gain_db < 20.0
        assert not any("White-noise gain" in w for w in result.warnings)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
