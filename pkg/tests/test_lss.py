"""
Tests for the linear separation stage.
"""

import logging

import numpy as np
import pytest

from multisource_separator.config import FrameConfig, SeparationConfig
from multisource_separator.core.lss import (
    ArrayScene,
    build_separation_matrix,
    mixing_matrices,
    noise_gain_bins,
    pseudo_inverse,
    separate,
    separate_bins,
    steering_matrix,
)
from multisource_separator.core.stft import SpectralFrame
from multisource_separator.scene.geometry import cube_array, direction_from_angles


def _random_scene(rng, num_mics, num_sources):
    directions = rng.standard_normal((num_sources, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return ArrayScene(
        mic_positions=rng.uniform(-0.15, 0.15, size=(num_mics, 3)),
        source_directions=directions,
    )


class TestArrayScene:
    """Tests for ArrayScene validation and delays."""

    def test_default_labels(self, two_source_scene):
        """Unnamed sources are labelled source 1..M."""
        assert two_source_scene.labels == ["source 1", "source 2"]

    def test_more_sources_than_mics(self):
        """M > N cannot be separated."""
        with pytest.raises(ValueError):
            ArrayScene(mic_positions=np.zeros((1, 3)), source_directions=np.eye(3)[:2])

    def test_non_unit_direction(self):
        """Directions must be unit vectors."""
        with pytest.raises(ValueError):
            ArrayScene(mic_positions=np.eye(3), source_directions=[[2.0, 0.0, 0.0]])

    def test_delays_relative_to_centroid(self, two_source_scene):
        """Delays sum to zero over the microphones."""
        tau = two_source_scene.delays()
        assert tau.shape == (8, 2)
        np.testing.assert_allclose(tau.sum(axis=0), 0.0, atol=1e-15)

    def test_mic_facing_source_hears_first(self):
        """A mic displaced toward the source has a negative delay."""
        scene = ArrayScene(
            mic_positions=[[0.1, 0.0, 0.0], [-0.1, 0.0, 0.0]],
            source_directions=[[1.0, 0.0, 0.0]],
        )
        tau = scene.delays()[:, 0]
        assert tau[0] == pytest.approx(-0.1 / 343.0)
        assert tau[1] == pytest.approx(0.1 / 343.0)


class TestSteering:
    """Tests for steering and mixing matrices."""

    def test_unit_modulus(self, two_source_scene):
        """Steering entries have unit magnitude."""
        A = steering_matrix(two_source_scene, 1000.0)
        np.testing.assert_allclose(np.abs(A), 1.0)

    def test_out_of_band(self, two_source_scene):
        """Frequencies above Nyquist are rejected."""
        with pytest.raises(ValueError):
            steering_matrix(two_source_scene, 9000.0)

    def test_mixing_matches_steering(self, two_source_scene, frame_cfg):
        """The per-bin stack equals steering_matrix() at the bin frequencies."""
        mixing = mixing_matrices(two_source_scene, frame_cfg)
        k = 100
        np.testing.assert_allclose(
            mixing[k], steering_matrix(two_source_scene, mixing.frequencies[k]), rtol=1e-12
        )


class TestPseudoInverse:
    """Tests for pseudo_inverse()."""

    def test_matches_normal_equations(self, rng):
        """Agrees with (A^H A)^-1 A^H on a well-conditioned matrix."""
        A = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        W, regularized, cond = pseudo_inverse(A)

        AhA = A.conj().T @ A
        expected = np.linalg.solve(AhA, A.conj().T)
        assert not regularized
        assert cond == pytest.approx(np.linalg.cond(AhA), rel=1e-8)
        np.testing.assert_allclose(W, expected, rtol=1e-10, atol=1e-12)

    def test_singular_falls_back_to_ridge(self):
        """Identical columns trigger the regularized solution."""
        A = np.ones((4, 2), dtype=complex)
        W, regularized, cond = pseudo_inverse(A)

        assert regularized
        assert not np.isfinite(cond) or cond > 1e12
        assert np.all(np.isfinite(W))

    def test_wide_matrix_rejected(self):
        """M > N is rejected."""
        with pytest.raises(ValueError):
            pseudo_inverse(np.ones((2, 3)))

    def test_vector_rejected(self):
        """A 1-D input is not a matrix."""
        with pytest.raises(ValueError):
            pseudo_inverse(np.ones(3))


class TestSeparationMatrix:
    """Tests for build_separation_matrix()."""

    @pytest.mark.parametrize("num_mics,num_sources", [(2, 1), (2, 2), (4, 3), (8, 2), (8, 8), (6, 4)])
    def test_distortionless(self, num_mics, num_sources):
        """W(k) A(k) = I wherever the exact pseudo-inverse was used."""
        rng = np.random.default_rng(num_mics * 10 + num_sources)
        scene = _random_scene(rng, num_mics, num_sources)
        cfg = FrameConfig()
        W = build_separation_matrix(scene, cfg)
        A = mixing_matrices(scene, cfg).matrices

        product = np.einsum("kmn,knj->kmj", W.matrices, A)
        exact = ~W.regularized
        assert exact.any()
        np.testing.assert_allclose(
            product[exact], np.broadcast_to(np.eye(num_sources), product[exact].shape), atol=1e-8
        )

    def test_dc_is_regularized(self, two_source_scene, frame_cfg):
        """At DC every steering vector is all ones, so M >= 2 is singular there."""
        W = build_separation_matrix(two_source_scene, frame_cfg)
        assert W.regularized[0]
        assert W.matrices.shape == (frame_cfg.num_bins, 2, 8)

    def test_single_source_has_no_regularization(self, single_mic_scene, frame_cfg):
        """One mic and one source: W = 1 in every bin."""
        W = build_separation_matrix(single_mic_scene, frame_cfg)
        assert not W.regularized.any()
        np.testing.assert_allclose(W.matrices, 1.0)

    def test_delay_and_sum_noise_gain(self, two_source_scene, frame_cfg):
        """Delay-and-sum passes white noise at 1/N in every bin."""
        W = build_separation_matrix(
            two_source_scene, frame_cfg, SeparationConfig(method="delay_and_sum")
        )
        np.testing.assert_allclose(W.white_noise_gain(), 1.0 / 8.0, rtol=1e-12)

    def test_pseudo_inverse_noise_gain_bound(self, two_source_scene, frame_cfg):
        """A distortionless row has |w_m|^2 >= 1/N."""
        W = build_separation_matrix(two_source_scene, frame_cfg)
        gain = W.white_noise_gain()
        assert gain.shape == (frame_cfg.num_bins, 2)
        assert np.all(gain[~W.regularized] >= 1.0 / 8.0 * (1.0 - 1e-9))

    def test_noise_gain_of_skewed_geometry(self, two_source_scene, frame_cfg):
        """Sources off the cube's symmetry planes keep the noise gain under 20 dB."""
        W = build_separation_matrix(two_source_scene, frame_cfg)
        assert W.max_noise_gain_db() < 20.0
        assert not noise_gain_bins(W, 20.0).any()

    def test_noise_gain_of_mirrored_geometry(self, frame_cfg, caplog):
        """Mirror-image horizontal sources on a cube hit grating lobes, and a warning says so."""
        scene = ArrayScene(
            mic_positions=cube_array(),
            source_directions=np.stack([direction_from_angles(30.0), direction_from_angles(150.0)]),
        )
        with caplog.at_level(logging.WARNING, logger="multisource_separator.core.lss"):
            W = build_separation_matrix(scene, frame_cfg)
        assert W.max_noise_gain_db() > 30.0
        assert noise_gain_bins(W, 20.0).any()
        assert "White-noise gain" in caplog.text

    def test_delay_and_sum_unit_response(self, two_source_scene, frame_cfg):
        """The delay-and-sum weights pass each target direction with unit gain."""
        W = build_separation_matrix(
            two_source_scene, frame_cfg, SeparationConfig(method="delay_and_sum")
        )
        A = mixing_matrices(two_source_scene, frame_cfg).matrices
        diagonal = np.einsum("kmn,knm->km", W.matrices, A)
        np.testing.assert_allclose(diagonal, 1.0, atol=1e-12)


class TestSeparate:
    """Tests for applying W to spectra."""

    def test_recovers_sources(self, two_source_scene, frame_cfg, rng):
        """Mixing with A and separating with W returns the source spectra."""
        W = build_separation_matrix(two_source_scene, frame_cfg)
        A = mixing_matrices(two_source_scene, frame_cfg).matrices
        sources = rng.standard_normal((2, frame_cfg.num_bins)) + 1j * rng.standard_normal((2, frame_cfg.num_bins))
        mics = np.einsum("knm,mk->nk", A, sources)

        separated = separate_bins(mics, W)
        exact = ~W.regularized
        np.testing.assert_allclose(separated[:, exact], sources[:, exact], atol=1e-8)

    def test_frame_sequence(self, single_mic_scene, frame_cfg, rng):
        """separate() keeps frame indices and applies W to every frame."""
        W = build_separation_matrix(single_mic_scene, frame_cfg)
        frames = [
            SpectralFrame(l, rng.standard_normal((1, frame_cfg.num_bins)) + 0j) for l in range(3)
        ]
        out = separate(frames, W)

        assert [f.index for f in out] == [0, 1, 2]
        for before, after in zip(frames, out):
            np.testing.assert_allclose(after.bins, before.bins)

    def test_linear(self, two_source_scene, frame_cfg, rng):
        """separate_bins(a Z1 + b Z2) = a separate_bins(Z1) + b separate_bins(Z2)."""
        W = build_separation_matrix(two_source_scene, frame_cfg)
        shape = (3, 8, frame_cfg.num_bins)
        Z1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        Z2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        a, b = 0.7 - 1.2j, -2.5 + 0.3j
        np.testing.assert_allclose(
            separate_bins(a * Z1 + b * Z2, W),
            a * separate_bins(Z1, W) + b * separate_bins(Z2, W),
            rtol=1e-10,
            atol=1e-10,
        )

    def test_shape_mismatch(self, two_source_scene, frame_cfg):
        """Spectra with the wrong channel count are rejected."""
        W = build_separation_matrix(two_source_scene, frame_cfg)
        with pytest.raises(ValueError):
            separate_bins(np.zeros((3, frame_cfg.num_bins), dtype=complex), W)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
