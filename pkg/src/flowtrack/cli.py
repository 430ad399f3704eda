"""Command line entry point: ``flowtrack {track,eval,synth,ablate}``.

Exit status: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import io as fio
from .metrics import EvaluationError, evaluate, format_kv, format_table
from .synth import SCENARIOS, ablation_ladder, format_ablation, generate, make_scenario, run_ablation
from .tracker import SequenceError, TrackerConfig, run_sequence

log = logging.getLogger("flowtrack")

DATA_ERRORS = (OSError, fio.FormatError, EvaluationError, SequenceError, ValueError)


class UsageError(Exception):
    pass


def _add_tracker_flags(p):
    p.add_argument("--config", help="tracker config file (key = value lines)")
    p.add_argument("--motion-mode", choices=("none", "flow", "flow-fast"))
    p.add_argument("--association", choices=("greedy", "hungarian"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker on detection files")
    p.add_argument("--detections", nargs="+", required=True)
    p.add_argument("--format", choices=("mot", "visdrone"), default="mot")
    p.add_argument("--output", required=True, help="result file, or a directory for several sequences")
    p.add_argument("--flow-dir", nargs="+", help="directory of %%06d.flo files, one per sequence")
    p.add_argument("--embeddings", nargs="+", help="embedding CSV, one per sequence")
    p.add_argument("--jobs", type=int, default=1)
    _add_tracker_flags(p)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--format", choices=("mot", "visdrone"), default="mot", help="ground-truth format")
    p.add_argument("--metrics", default="clear,idf1,ap", help="comma list of clear, idf1, ap")
    p.add_argument("--report", help="write key=value metrics here")

    p = sub.add_parser("synth", help="write a synthetic sequence bundle")
    p.add_argument("--scenario", choices=SCENARIOS, default="static")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("ablate", help="run the component ladder on a scenario")
    p.add_argument("--scenario", choices=SCENARIOS, default="pan")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", help="existing bundle to load, or where to write the generated one")
    p.add_argument("--config", help="base tracker config")
    p.add_argument("--report", help="write key=value metrics per row here")
    return parser


def _tracker_config(args) -> TrackerConfig:
    cfg = fio.read_config(args.config) if args.config else TrackerConfig()
    if args.motion_mode:
        cfg = cfg.with_motion(fio.motion_mode_from_flag(args.motion_mode))
    if args.association:
        cfg = replace(cfg, association=args.association)
    return cfg


def _per_sequence(values, n, flag):
    if values is None:
        return [None] * n
    if len(values) != n:
        raise UsageError(f"{flag} needs one value per --detections file ({n})")
    return values


def _output_paths(args):
    dets = [Path(d) for d in args.detections]
    if len(dets) == 1:
        return [Path(args.output)]
    names = [f"{d.parent.name}_{d.stem}.txt" if d.parent.name else f"{d.stem}.txt" for d in dets]
    if len(set(names)) != len(names):
        raise UsageError("detection files map to clashing output names")
    return [Path(args.output) / n for n in names]


def _track_one(det_path, out_path, flow_dir, emb_path, fmt, cfg):
    t0 = time.perf_counter()
    content = fio.read_tracks_file(det_path, fmt)
    dets = content.detections()
    table = None
    if emb_path:
        table = fio.read_embeddings(emb_path)
        dets = fio.attach_embeddings(dets, table)
    flows = fio.flo_provider(flow_dir) if flow_dir else None
    n_frames = max(dets, default=0)
    info_path = Path(det_path).parent / fio.SEQINFO_FILE
    if info_path.exists():
        n_frames = max(n_frames, fio.read_seqinfo(info_path).frames)
    t1 = time.perf_counter()
    tracklets = run_sequence(dets, flows, table, cfg, n_frames=n_frames)
    t2 = time.perf_counter()
    fio.write_results(tracklets, out_path)
    t3 = time.perf_counter()
    loop, total = t2 - t1, t3 - t0
    return (f"{det_path}: {n_frames} frames, {len(tracklets)} tracks; "
            f"tracker loop {loop:.3f}s ({n_frames / loop if loop > 0 else 0.0:.1f} FPS), "
            f"inclusive {total:.3f}s ({n_frames / total if total > 0 else 0.0:.1f} FPS)")


def cmd_track(args) -> int:
    n = len(args.detections)
    flow_dirs = _per_sequence(args.flow_dir, n, "--flow-dir")
    embs = _per_sequence(args.embeddings, n, "--embeddings")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.motion_mode in ("flow", "flow-fast") and args.flow_dir is None:
        raise UsageError(f"--flow-dir is required with --motion-mode {args.motion_mode}")
    cfg = _tracker_config(args)
    if cfg.motion_mode != "none" and args.flow_dir is None:
        raise UsageError(f"--flow-dir is required with motion mode {cfg.motion_mode}")
    outs = _output_paths(args)
    if n > 1:
        Path(args.output).mkdir(parents=True, exist_ok=True)

    jobs = list(zip(args.detections, outs, flow_dirs, embs))
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_track_one, d, o, f, e, args.format, cfg) for d, o, f, e in jobs]
        for fut in futures:
            print(fut.result())
    return 0


def cmd_eval(args) -> int:
    metrics = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    alias = {"mota": "clear", "motp": "clear", "clear": "clear", "idf1": "idf1", "ap": "ap"}
    bad = [m for m in metrics if m not in alias]
    if bad or not metrics:
        raise UsageError(f"unknown metrics {bad}; use clear, idf1, ap")
    metrics = sorted({alias[m] for m in metrics})

    gt_content = fio.read_tracks_file(args.gt, args.format)
    res_content = fio.read_mot_csv(args.results)
    gt = gt_content.trajectories()
    if not gt:
        raise EvaluationError(f"{args.gt}: ground truth is empty")
    n_frames = max(max(t.boxes) for t in gt)
    info_path = Path(args.gt).parent / fio.SEQINFO_FILE
    if info_path.exists():
        n_frames = max(n_frames, fio.read_seqinfo(info_path).frames)
    res_last = max((r.frame for r in res_content.rows), default=0)
    if res_last > n_frames:
        raise EvaluationError(f"results reach frame {res_last} but the ground truth has {n_frames} frames")

    report = evaluate(gt, res_content.trajectories(), gt_content.ignore, metrics)
    print(format_table([(Path(args.results).name, report)]))
    if args.report:
        with fio.atomic_write(args.report) as fh:
            fh.write(format_kv(report))
    return 0


def _scenario(args):
    try:
        return make_scenario(args.scenario, seed=args.seed, frames=args.frames, objects=args.objects)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _replace_dir(tmp: Path, target: Path):
    if target.exists():
        if any(target.iterdir()) and not (target / fio.SEQINFO_FILE).exists():
            raise OSError(f"{target} exists and is not a sequence bundle; refusing to overwrite")
        shutil.rmtree(target)
    tmp.rename(target)


def cmd_synth(args) -> int:
    spec = _scenario(args)
    seq = generate(spec)
    target = Path(args.out_dir)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        seq.write(tmp)
        _replace_dir(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    n_det = sum(len(v) for v in seq.detections.values())
    print(f"wrote {args.scenario} scenario to {target}: {spec.frames} frames, "
          f"{len(seq.gt)} objects, {n_det} detections")
    return 0


def cmd_ablate(args) -> int:
    base = fio.read_config(args.config) if args.config else TrackerConfig()
    ladder = ablation_ladder(base)
    if args.out_dir and (Path(args.out_dir) / fio.SEQINFO_FILE).exists():
        bundle = fio.load_bundle(args.out_dir)
        if bundle.gt is None:
            raise EvaluationError(f"{args.out_dir}: bundle has no ground truth")
        source = bundle
    else:
        source = generate(_scenario(args))
        if args.out_dir:
            target = Path(args.out_dir)
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
            try:
                source.write(tmp)
                _replace_dir(tmp, target)
            except BaseException:
                shutil.rmtree(tmp, ignore_errors=True)
                raise
    rows = run_ablation(source, ladder)
    print(format_ablation(rows))
    if args.report:
        with fio.atomic_write(args.report) as fh:
            for name, rep in rows:
                fh.write(f"[{name}]\n")
                fh.write(format_kv(rep))
    return 0


COMMANDS = {"track": cmd_track, "eval": cmd_eval, "synth": cmd_synth, "ablate": cmd_ablate}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"flowtrack {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"flowtrack {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
