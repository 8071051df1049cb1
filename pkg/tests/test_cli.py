"""
Tests for the leakfilter command line.
"""

import json

import pytest

from multisource_separator.main import EXIT_IO, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def mixed(tmp_path_factory, three_source_scene_data):
    """A rendered 1 s, 3-source scene: (scene file, mix directory)."""
    root = tmp_path_factory.mktemp("cli")
    scene = root / "scene.json"
    scene.write_text(json.dumps(three_source_scene_data))
    out = root / "mix"
    assert main(["-q", "mix", str(scene), "-o", str(out)]) == EXIT_OK
    return scene, out


def _separate(mixed, out, *flags):
    scene, mix_dir = mixed
    return main([
        "-q", "separate", str(mix_dir / "mixture.wav"), str(scene), "-o", str(out), *flags
    ])


class TestMix:
    """Tests for the mix verb."""

    def test_outputs(self, mixed):
        """mixture.wav, per-source references and the run records are written."""
        from multisource_separator.utils.audio_io import read_wav

        _, out = mixed
        mixture, rate = read_wav(out / "mixture.wav")
        assert rate == 16000
        assert mixture.shape == (8, 16000)
        for sub in ("refs", "mic_refs"):
            assert sorted(p.name for p in (out / sub).iterdir()) == [
                "source_1.wav", "source_2.wav", "source_3.wav"
            ]
        metadata = json.loads((out / "metadata.json").read_text())
        assert metadata["seed"] == 7
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "mix"

    def test_seed_override(self, mixed, tmp_path):
        """--seed replaces the scene seed and is recorded."""
        scene, _ = mixed
        assert main(["-q", "mix", str(scene), "-o", str(tmp_path), "--seed", "11"]) == EXIT_OK
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 11
        assert manifest["overrides"] == {"seed": 11}

    def test_deterministic(self, mixed, tmp_path):
        """Rendering the same scene twice writes identical files."""
        scene, first = mixed
        assert main(["-q", "mix", str(scene), "-o", str(tmp_path)]) == EXIT_OK
        for name in ("mixture.wav", "refs/source_2.wav", "mic_refs/source_3.wav", "metadata.json"):
            assert (tmp_path / name).read_bytes() == (first / name).read_bytes()

    def test_missing_source_wav(self, tmp_path, capsys):
        """A scene that points at a missing recording fails with the path in the message."""
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps({"sources": [{"azimuth": 0.0, "wav": "talker.wav"}], "duration": 0.5}))
        assert main(["-q", "mix", str(scene), "-o", str(tmp_path / "out")]) == EXIT_IO
        assert "talker.wav" in capsys.readouterr().err

    def test_missing_scene(self, tmp_path):
        assert main(["-q", "mix", str(tmp_path / "none.json"), "-o", str(tmp_path)]) == EXIT_IO


class TestSeparate:
    """Tests for the separate verb."""

    def test_report(self, mixed, tmp_path, capsys):
        """With --refs every stage is scored and the table is printed."""
        from multisource_separator.config import RunManifest

        _, mix_dir = mixed
        code = _separate(
            mixed, tmp_path, "--refs", str(mix_dir / "refs"), "--mic-refs", str(mix_dir / "mic_refs")
        )
        assert code == EXIT_OK

        report = json.loads((tmp_path / "report.json").read_text())
        assert [s["name"] for s in report["stages"]] == [
            "mic_input", "lss_output", "single_channel_postfilter", "proposed_postfilter"
        ]
        assert report["sources"] == ["voice 1", "voice 2", "voice 3"]
        assert report["manifest_hash"] == RunManifest.load(tmp_path / "manifest.json").digest
        assert "Proposed p-f" in capsys.readouterr().out
        for n in (1, 2, 3):
            assert (tmp_path / f"source_{n}.wav").exists()

    def test_no_report_without_refs(self, mixed, tmp_path):
        assert _separate(mixed, tmp_path) == EXIT_OK
        assert not (tmp_path / "report.json").exists()
        assert (tmp_path / "manifest.json").exists()

    def test_eta_zero_matches_baseline_tap(self, mixed, tmp_path):
        """--eta 0 writes the same bytes as the single-channel diagnostic output."""
        assert _separate(mixed, tmp_path, "--eta", "0", "--diagnostics") == EXIT_OK
        diag = tmp_path / "diagnostics"
        assert (tmp_path / "source_1.wav").read_bytes() == (
            diag / "single_channel_postfilter" / "source_1.wav"
        ).read_bytes()
        assert (diag / "lss_output" / "source_3.wav").exists()
        assert (diag / "mic_average.wav").exists()
        frames = json.loads((diag / "frames.json").read_text())
        assert set(frames) == {"mean_gain", "stationary_noise", "leakage_noise", "speech_presence"}

    def test_deterministic(self, mixed, tmp_path):
        """Two runs on the same inputs write identical audio."""
        assert _separate(mixed, tmp_path / "a") == EXIT_OK
        assert _separate(mixed, tmp_path / "b") == EXIT_OK
        for n in (1, 2, 3):
            name = f"source_{n}.wav"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_precedence(self, mixed, tmp_path):
        """Flags beat the config file, which beats the defaults."""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"postfilter": {"eta": 0.2, "alpha": 1.0}}))
        out = tmp_path / "out"
        assert _separate(mixed, out, "--config", str(config), "--eta", "0.05") == EXIT_OK

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["postfilter"]["eta"] == 0.05
        assert manifest["config"]["postfilter"]["alpha"] == 1.0
        assert manifest["config"]["postfilter"]["g_min"] == 0.0
        assert manifest["overrides"] == {"postfilter.eta": 0.05}

    def test_missing_mixture(self, mixed, tmp_path):
        scene, _ = mixed
        code = main(["-q", "separate", str(tmp_path / "none.wav"), str(scene), "-o", str(tmp_path)])
        assert code == EXIT_IO

    def test_missing_reference(self, mixed, tmp_path):
        """A reference directory without every source_<n>.wav is an I/O error."""
        _, mix_dir = mixed
        refs = tmp_path / "refs"
        refs.mkdir()
        (refs / "source_1.wav").write_bytes((mix_dir / "refs" / "source_1.wav").read_bytes())
        assert _separate(mixed, tmp_path / "out", "--refs", str(refs)) == EXIT_IO

    def test_scene_rate_mismatch(self, mixed, tmp_path, three_source_scene_data):
        _, mix_dir = mixed
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps({**three_source_scene_data, "sample_rate": 8000}))
        code = main(["-q", "separate", str(mix_dir / "mixture.wav"), str(scene), "-o", str(tmp_path)])
        assert code == EXIT_IO

    def test_invalid_flag_value(self, mixed, tmp_path):
        """Out-of-range parameters are usage errors."""
        assert _separate(mixed, tmp_path, "--eta", "1.5") == EXIT_USAGE
        assert _separate(mixed, tmp_path, "--hop", "300") == EXIT_USAGE


class TestReport:
    """Tests for the report verb."""

    def _write_report(self, path, num_sources):
        stages = [
            {"name": name, "per_source": [{"lsd_db": 5.0, "segsnr_db": 1.0}] * num_sources}
            for name in ("mic_input", "lss_output", "single_channel_postfilter", "proposed_postfilter")
        ]
        path.write_text(json.dumps({"stages": stages}))
        return path

    def test_three_columns(self, tmp_path, capsys):
        path = self._write_report(tmp_path / "report.json", 3)
        assert main(["report", str(path)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].split()[-1] == "3"
        assert lines[1].count("5.00/1.00") == 3

    def test_several_reports(self, tmp_path, capsys):
        a = self._write_report(tmp_path / "a.json", 2)
        b = self._write_report(tmp_path / "b.json", 2)
        out = tmp_path / "tables.txt"
        assert main(["report", str(a), str(b), "-o", str(out)]) == EXIT_OK
        text = out.read_text()
        assert str(a) in text and str(b) in text
        assert text.count("Proposed p-f") == 2

    def test_no_reports(self):
        assert main(["report"]) == EXIT_USAGE

    def test_malformed(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("[1, 2")
        assert main(["report", str(path)]) == EXIT_USAGE

    def test_missing(self, tmp_path):
        assert main(["report", str(tmp_path / "none.json")]) == EXIT_IO


class TestParser:
    """Tests for argument handling."""

    def test_unknown_verb(self):
        assert main(["unmix"]) == EXIT_USAGE

    def test_missing_verb(self):
        assert main([]) == EXIT_USAGE

    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert "leakfilter" in capsys.readouterr().out


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
