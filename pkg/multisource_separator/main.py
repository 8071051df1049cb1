"""
Main entry point for LeakFilter.

Verbs:
    mix       Render a scene file into a microphone mixture and references
    separate  Separate a mixture and post-filter the sources
    report    Print report.json files as LSD/SegSNR tables

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence
import logging

import numpy as np

from multisource_separator import __version__
from multisource_separator.config import Config, RunManifest, resolve_paths
from multisource_separator.exceptions import (
    AudioIOError,
    ConfigError,
    NumericalError,
    SpecialFunctionDomainError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

# Flag destination -> config key
FLAG_KEYS = {
    "eta": "postfilter.eta",
    "alpha": "postfilter.alpha",
    "gmin": "postfilter.g_min",
    "frame_len": "frame.frame_len",
    "hop": "frame.hop",
    "method": "separation.method",
}


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors raised instead of exiting with status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="leakfilter",
        description="Multi-source separation with a leakage-aware post-filter.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    p_mix = commands.add_parser("mix", help="Render a synthetic scene")
    p_mix.add_argument("scene", help="Scene JSON file")
    p_mix.add_argument("-o", "--output-dir", default="mix_out", help="Output directory")
    p_mix.add_argument("--seed", type=int, default=None, help="Override the scene seed")
    p_mix.add_argument("--wav-format", choices=["float", "pcm16"], default="float",
                       help="Sample format of the written WAV files")
    p_mix.set_defaults(func=cmd_mix)

    p_sep = commands.add_parser("separate", help="Separate and post-filter a mixture")
    p_sep.add_argument("mixture", help="N-channel mixture WAV")
    p_sep.add_argument("scene", help="Scene JSON file (array geometry and source directions)")
    p_sep.add_argument("-o", "--output-dir", default="separated", help="Output directory")
    p_sep.add_argument("--config", default=None, help="JSON config file")
    p_sep.add_argument("--eta", type=float, default=None, help="Leakage factor (power scale)")
    p_sep.add_argument("--alpha", type=float, default=None, help="Amplitude exponent")
    p_sep.add_argument("--gmin", type=float, default=None, help="Gain floor under speech absence")
    p_sep.add_argument("--frame-len", type=int, default=None, help="Frame length in samples")
    p_sep.add_argument("--hop", type=int, default=None, help="Hop size in samples")
    p_sep.add_argument("--method", choices=["pseudo_inverse", "delay_and_sum"], default=None,
                       help="Linear separator")
    p_sep.add_argument("--refs", default=None,
                       help="Directory of clean references source_<n>.wav; enables report.json")
    p_sep.add_argument("--mic-refs", default=None,
                       help="Directory of mic-averaged references for the mic-input stage")
    p_sep.add_argument("--diagnostics", action="store_true",
                       help="Also write the LSS and single-channel post-filter outputs")
    p_sep.add_argument("--wav-format", choices=["float", "pcm16"], default="float",
                       help="Sample format of the written WAV files")
    p_sep.set_defaults(func=cmd_separate)

    p_rep = commands.add_parser("report", help="Print report.json files as tables")
    p_rep.add_argument("reports", nargs="*", help="report.json files")
    p_rep.add_argument("-o", "--output", default=None, help="Also write the tables to this file")
    p_rep.set_defaults(func=cmd_report)
    return parser


def _wav_exporter(wav_format: str):
    from multisource_separator.export.wav_exporter import WavExporter, WavExportOptions
    return WavExporter(WavExportOptions(subtype="PCM_16" if wav_format == "pcm16" else "FLOAT"))


def _read_references(directory: str, count: int, length: int, rate: int) -> np.ndarray:
    """Stack directory/source_<n>.wav for n = 1..count."""
    from multisource_separator.utils.audio_io import read_mono

    rows = []
    for m in range(count):
        path = Path(directory) / f"source_{m + 1}.wav"
        signal, _ = read_mono(path, rate)
        if signal.size != length:
            raise AudioIOError(f"{path}: {signal.size} samples, the mixture has {length}")
        rows.append(signal)
    return np.stack(rows)


def cmd_mix(args: argparse.Namespace) -> int:
    """Render a scene file to mixture.wav, refs/ and mic_refs/."""
    from multisource_separator.scene.geometry import read_scene_file
    from multisource_separator.scene.mixer import SceneSpec, mix

    scene_path = Path(args.scene)
    data = read_scene_file(scene_path)
    if args.seed is not None:
        data["seed"] = args.seed
    spec = SceneSpec.from_dict(data, base_dir=scene_path.parent)
    result = mix(spec)

    output_dir = Path(args.output_dir)
    exporter = _wav_exporter(args.wav_format)
    exporter.export(result.mixture, result.sample_rate, output_dir / "mixture.wav")
    exporter.export_sources(result.references, result.sample_rate, output_dir / "refs")
    exporter.export_sources(result.mic_references, result.sample_rate, output_dir / "mic_refs")
    with open(output_dir / "metadata.json", "w") as f:
        json.dump(result.metadata, f, indent=2, sort_keys=True)

    (scene_file,) = resolve_paths([scene_path])
    manifest = RunManifest(
        command="mix",
        inputs={"scene": scene_file},
        output_dir=str(output_dir.resolve()),
        config={"scene": data},
        overrides={"seed": args.seed} if args.seed is not None else {},
        seed=spec.seed,
        version=__version__,
    )
    path = manifest.save(output_dir)
    logger.info(f"Wrote {output_dir} (manifest {path.name}, sha256 {manifest.digest[:12]})")
    return EXIT_OK


def _flag_overrides(args: argparse.Namespace) -> Dict[str, object]:
    return {
        key: getattr(args, dest)
        for dest, key in FLAG_KEYS.items()
        if getattr(args, dest, None) is not None
    }


def cmd_separate(args: argparse.Namespace) -> int:
    """Separate a mixture; write source_<n>.wav, manifest.json and, with --refs, report.json."""
    from multisource_separator.core.pipeline import SeparationPipeline
    from multisource_separator.export.report_exporter import ReportExporter
    from multisource_separator.scene.geometry import load_scene
    from multisource_separator.utils.audio_io import read_wav

    mixture, rate = read_wav(args.mixture)
    scene = load_scene(args.scene)
    if scene.sample_rate != rate:
        raise AudioIOError(
            f"{args.mixture}: sample rate {rate} Hz does not match the scene ({scene.sample_rate} Hz)"
        )

    overrides = _flag_overrides(args)
    config = Config.load(args.config).with_overrides({**overrides, "frame.sample_rate": rate})

    references = mic_references = None
    if args.refs:
        references = _read_references(args.refs, scene.num_sources, mixture.shape[1], rate)
    if args.mic_refs:
        mic_references = _read_references(args.mic_refs, scene.num_sources, mixture.shape[1], rate)

    output_dir = Path(args.output_dir)
    mixture_file, scene_file, config_file, refs_dir, mic_refs_dir = resolve_paths(
        [args.mixture, args.scene, args.config, args.refs, args.mic_refs]
    )
    manifest = RunManifest(
        command="separate",
        inputs={
            "mixture": mixture_file,
            "scene": scene_file,
            "config": config_file,
            "refs": refs_dir,
            "mic_refs": mic_refs_dir,
        },
        output_dir=str(output_dir.resolve()),
        config=config.to_dict(),
        overrides=overrides,
        diagnostics=args.diagnostics,
        version=__version__,
    )

    pipeline = SeparationPipeline(scene, config, diagnostics=args.diagnostics)
    result = pipeline.run(mixture, references, mic_references)
    for warning in result.warnings:
        logger.warning(warning)

    exporter = _wav_exporter(args.wav_format)
    exporter.export_sources(result.outputs, rate, output_dir)
    if args.diagnostics:
        diag_dir = output_dir / "diagnostics"
        exporter.export_sources(result.lss_output, rate, diag_dir / "lss_output")
        exporter.export_sources(result.single_channel_output, rate, diag_dir / "single_channel_postfilter")
        exporter.export(result.mic_average, rate, diag_dir / "mic_average.wav")
        with open(diag_dir / "frames.json", "w") as f:
            json.dump({name: values.tolist() for name, values in result.diagnostics.items()}, f)

    path = manifest.save(output_dir)
    if result.report is not None:
        result.report.manifest_hash = manifest.digest
        reporter = ReportExporter()
        reporter.export_json(result.report, output_dir / "report.json")
        print(reporter.format_table(result.report))
    logger.info(f"Wrote {output_dir} (manifest {path.name}, sha256 {manifest.digest[:12]})")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """Print one table per report.json."""
    from multisource_separator.export.report_exporter import ReportExporter

    if not args.reports:
        raise ConfigError("report: at least one report.json is required")
    reporter = ReportExporter()
    reports = [reporter.load(path) for path in args.reports]
    titles = list(args.reports) if len(reports) > 1 else []
    text = reporter.format_tables(reports, titles)
    print(text)
    if args.output:
        Path(args.output).write_text(text + "\n")
    return EXIT_OK


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line.

    Args:
        argv: Arguments without the program name; sys.argv[1:] when None

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        print(f"leakfilter: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    _configure_logging(args)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"leakfilter: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError, SpecialFunctionDomainError) as e:
        print(f"leakfilter: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AudioIOError, OSError) as e:
        print(f"leakfilter: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"leakfilter: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
