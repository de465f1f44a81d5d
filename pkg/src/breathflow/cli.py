"""Command line entry point: ``breathflow run | synth | eval | defaults``.

Exit codes: 0 success, 2 usage, 3 input validation, 4 insufficient signal.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import dsp
from .config import SENSORS, PipelineConfig
from .evaluate import process_reference, read_br_csv, read_reference_csv, score, write_report
from .imagery import ImageryError, frames_duration, load_frame_sequence, load_mask_sequence
from .motion import write_angle_csv
from .optflow import FlowParams
from .peaks import InsufficientPeaksError, write_br_csv, write_peaks_csv
from .pipeline import run_pipeline
from .synth import SynthScenario, generate, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SIGNAL = 0, 2, 3, 4

log = logging.getLogger("breathflow")


class InputError(Exception):
    pass


# --- config flags ------------------------------------------------------------

_SKIP = {"flow", "fps", "sensor"}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline overrides")
    fields = [f for f in dataclasses.fields(PipelineConfig) if f.name not in _SKIP]
    fields += list(dataclasses.fields(FlowParams))
    for f in fields:
        names = [f"--{f.name.replace('_', '-')}"]
        if "_" in f.name:
            names.append(f"--{f.name}")
        kind = f.type if isinstance(f.type, str) else f.type.__name__
        if kind == "bool":
            group.add_argument(*names, dest=f.name, default=None,
                               action=argparse.BooleanOptionalAction)
        else:
            group.add_argument(*names, dest=f.name, default=None,
                               type=int if kind == "int" else float)


def _resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    changes = {}
    names = [f.name for f in dataclasses.fields(PipelineConfig) if f.name not in _SKIP]
    names += [f.name for f in dataclasses.fields(FlowParams)]
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "fps", None) is not None:
        changes["fps"] = args.fps
    if getattr(args, "sensor", None) is not None:
        changes["sensor"] = args.sensor
    return cfg.replace(**changes) if changes else cfg


def _score(video, reference, cfg: PipelineConfig):
    report = score(video, reference)
    if report.duration_s < cfg.br_window_s:
        log.warning("series overlap %.1f s is shorter than the %g s averaging window",
                    report.duration_s, cfg.br_window_s)
    return report


# --- subcommands -------------------------------------------------------------

def cmd_run(args, parser) -> int:
    if args.masks is None and not args.fallback_seg:
        parser.error("run: supply --masks DIR or --fallback-seg")
    if args.masks is not None and args.fallback_seg:
        parser.error("run: --masks and --fallback-seg are mutually exclusive")
    cfg = _resolve_config(args)
    if cfg.fps is None:
        parser.error("run: frame rate unknown; pass --fps or set fps in --config")

    frames = load_frame_sequence(args.frames, cfg.fps)
    duration = frames_duration(frames)
    if duration < cfg.br_window_s:
        raise InputError(
            f"recording shorter than averaging window: {duration:.2f} s < {cfg.br_window_s:g} s")
    masks = None
    if args.masks is not None:
        masks = load_mask_sequence(args.masks, frames[0].width, frames[0].height, len(frames))
    log.info("loaded %d frames (%dx%d, %.2f s)", len(frames), frames[0].width,
             frames[0].height, duration)

    result = run_pipeline(frames, masks, cfg, workers=args.workers)
    st = result.stages
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    write_angle_csv(out / "angle.csv", result.samples, cfg.fps)
    dsp.write_signal_csv(out / "normalized.csv", st.normalized)
    write_peaks_csv(out / "peaks.csv", st.peaks, st.peak_times, st.normalized.samples[st.peaks])
    write_br_csv(out / "br.csv", st.br)
    if args.dump_stages:
        dsp.write_signal_csv(out / "smoothed.csv", st.smoothed)
        dsp.write_signal_csv(out / "filtered.csv", st.filtered)
        t = st.filtered.times
        dsp.write_signal_csv(out / "envelope_upper.csv", st.filtered, st.envelope.upper(t))
        dsp.write_signal_csv(out / "envelope_lower.csv", st.filtered, st.envelope.lower(t))

    if args.ref:
        trace = read_reference_csv(args.ref, cfg.sensor)
        report = _score(st.br, process_reference(trace, cfg), cfg)
        write_report(out / "report.json", report)
        sys.stdout.write(report.to_json())
    log.info("%d peaks, mean BR %.2f rpm", len(st.peaks), float(st.br.br.mean()))
    return EXIT_OK


def cmd_synth(args, parser) -> int:
    scenario = SynthScenario.load(args.scenario)
    ds = generate(scenario)
    write_dataset(ds, args.out)
    log.info("wrote %d frames to %s", len(ds.frames), args.out)
    return EXIT_OK


def cmd_eval(args, parser) -> int:
    cfg = _resolve_config(args)
    video = read_br_csv(args.video)
    trace = read_reference_csv(args.ref, cfg.sensor)
    report = _score(video, process_reference(trace, cfg), cfg)
    if args.out:
        write_report(args.out, report)
    sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_defaults(args, parser) -> int:
    cfg = PipelineConfig()
    if args.out:
        cfg.save(args.out)
    else:
        sys.stdout.write(json.dumps(cfg.to_dict(), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="breathflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="estimate breath rate from a frame sequence")
    r.add_argument("--frames", required=True, help="PGM directory or BSR1 raw stream")
    r.add_argument("--masks", help="directory with one mask PGM per frame")
    r.add_argument("--fallback-seg", action="store_true",
                   help="derive masks from frame differences instead of --masks")
    r.add_argument("--fps", type=float)
    r.add_argument("--config", help="PipelineConfig JSON")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--ref", help="reference CSV to score against")
    r.add_argument("--sensor", choices=SENSORS)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--dump-stages", action="store_true",
                   help="also write smoothed/filtered/envelope CSVs")
    _add_config_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--scenario", required=True, help="scenario JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score a BR CSV against a reference CSV")
    e.add_argument("--video", required=True, help="time_s,br_rpm CSV")
    e.add_argument("--ref", required=True)
    e.add_argument("--out", help="report JSON path")
    e.add_argument("--sensor", choices=SENSORS)
    e.add_argument("--config")
    e.add_argument("--fps", type=float)
    _add_config_flags(e)
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("defaults", help="write the default configuration")
    d.add_argument("--out", help="JSON path (stdout if omitted)")
    d.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args, parser)
    except InsufficientPeaksError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIGNAL
    except (InputError, ImageryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
