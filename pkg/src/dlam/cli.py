"""Command-line front end: ``dlam decompose | track | eval | replay``.

Every successful command leaves a ``manifest.txt`` (flat ``key=value``)
recording the canonical argument vector with all defaults filled in.
``dlam replay <manifest>`` re-parses that vector and reproduces the
outputs bitwise.

Exit codes: 0 success, 2 bad arguments or configuration, 3 I/O or input
data errors, 4 numerical failures.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .batch import decompose
from .errors import ArgumentError, ConfigError, DlamError, FormatError, FrameReadError, \
    InputError, NumericalError
from .linalg import matrix_norm
from .metrics import confusion, write_report
from .model import ALM_SOLVERS, DlamConfig, ObservationMatrix, read_dlm, stack_frames, \
    validate, write_dlm
from .online import grasta_init, grasta_update, orpca_init, orpca_step, sample_omega
from .pipeline import DEFAULT_THETA, foreground_mask, list_images, load_frames, read_mask, \
    write_mask

log = logging.getLogger("dlam")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

BATCH_SOLVERS = {"ealm": "ealm", "ialm": "ialm", "spcp": "spcp_asalm", "godec": "godec",
                 "ssgodec": "ssgodec", "drmf": "drmf"}
MANIFEST = "manifest.txt"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _frame_shape(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"frame shape must look like HxW, got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("frame shape must be positive")
    return h, w


def _theta(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"theta must lie in (0, 1], got {text}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser():
    p = _Parser(prog="dlam", description="Low-rank plus sparse background subtraction.")
    p.add_argument("--version", action="version", version=f"dlam {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def io_flags(sp):
        sp.add_argument("--input", required=True, help="frame directory or .dlm matrix")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--pattern", default="*", help="filename glob inside the frame directory")
        sp.add_argument("--frame-shape", type=_frame_shape, default=None,
                        help="HxW, required when --input is a .dlm file")
        sp.add_argument("--theta", type=_theta, default=DEFAULT_THETA,
                        help="foreground threshold on |S| (default %(default)s)")
        sp.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("decompose", help="batch decomposition of a frame sequence")
    d.add_argument("--solver", required=True, choices=sorted(BATCH_SOLVERS))
    io_flags(d)
    d.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="sparsity weight (default 1/sqrt(max(m, n)))")
    d.add_argument("--rank", type=int, default=None, help="rank bound (godec, ssgodec, drmf)")
    d.add_argument("--card", type=int, default=None, help="outlier budget (godec, drmf)")
    d.add_argument("--tau", type=float, default=None, help="soft threshold (ssgodec)")
    d.add_argument("--delta", type=float, default=None, help="noise ball radius (spcp)")
    d.add_argument("--tol", type=float, default=None)
    d.add_argument("--max-iter", type=_positive_int, default=500)
    d.add_argument("--brp", action="store_true", help="bilateral random projections for the rank step")
    d.add_argument("--power-iters", type=int, default=2)
    d.add_argument("--window", type=_positive_int, default=None,
                   help="process frames in chunks of N (default: all at once)")

    t = sub.add_parser("track", help="online subspace tracking, one frame at a time")
    t.add_argument("--solver", required=True, choices=["grasta", "orpca"])
    io_flags(t)
    t.add_argument("--dim", type=_positive_int, required=True, help="subspace dimension")
    t.add_argument("--subsample", type=float, default=0.3,
                   help="fraction of pixels observed per frame (grasta, default %(default)s)")
    t.add_argument("--step", type=float, default=0.3, help="initial geodesic step (grasta)")
    t.add_argument("--step-decay", type=float, default=100.0,
                   help="frames over which the step halves (grasta)")
    t.add_argument("--rho", type=float, default=1.8, help="initial ADMM penalty (grasta)")
    t.add_argument("--admm-iter", type=_positive_int, default=60, help="ADMM sweeps (grasta)")
    t.add_argument("--lambda1", type=float, default=None, help="ridge weight (orpca, default 1/sqrt(n))")
    t.add_argument("--lambda2", type=float, default=None, help="l1 weight (orpca, default 1/sqrt(n))")

    e = sub.add_parser("eval", help="score masks against ground truth")
    e.add_argument("--masks", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--report", required=True, help="CSV file to write")
    e.add_argument("--video", default=None, help="video name in the report (default: truth dir name)")

    r = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    r.add_argument("manifest")
    r.add_argument("--out", default=None,
                   help="new output directory (report path for eval); default: the recorded one")
    return p


# canonical argument vectors ------------------------------------------------

def _abs(path):
    return os.path.abspath(path)


def _flag_list(pairs):
    argv = []
    for flag, value in pairs:
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif isinstance(value, tuple):
            argv += [flag, "x".join(str(v) for v in value)]
        else:
            argv += [flag, repr(value) if isinstance(value, float) else str(value)]
    return argv


def canonical_argv(args):
    """Argument vector that re-creates ``args`` exactly, defaults included."""
    common = [("--input", _abs(args.input) if hasattr(args, "input") else None)]
    if args.command == "decompose":
        return ["decompose"] + _flag_list([
            ("--solver", args.solver), *common, ("--out", _abs(args.out)),
            ("--pattern", args.pattern), ("--frame-shape", args.frame_shape),
            ("--theta", args.theta), ("--seed", args.seed), ("--lambda", args.lam),
            ("--rank", args.rank), ("--card", args.card), ("--tau", args.tau),
            ("--delta", args.delta), ("--tol", args.tol), ("--max-iter", args.max_iter),
            ("--brp", args.brp), ("--power-iters", args.power_iters), ("--window", args.window)])
    if args.command == "track":
        return ["track"] + _flag_list([
            ("--solver", args.solver), *common, ("--out", _abs(args.out)),
            ("--pattern", args.pattern), ("--frame-shape", args.frame_shape),
            ("--theta", args.theta), ("--seed", args.seed), ("--dim", args.dim),
            ("--subsample", args.subsample), ("--step", args.step),
            ("--step-decay", args.step_decay), ("--rho", args.rho),
            ("--admm-iter", args.admm_iter), ("--lambda1", args.lambda1),
            ("--lambda2", args.lambda2)])
    if args.command == "eval":
        return ["eval"] + _flag_list([
            ("--masks", _abs(args.masks)), ("--truth", _abs(args.truth)),
            ("--report", _abs(args.report)), ("--video", args.video)])
    raise ValueError(args.command)


def write_manifest(path, args, extra, wall_time):
    lines = [("command", args.command), ("argv", json.dumps(canonical_argv(args))),
             ("version", __version__)]
    lines += list(extra.items())
    lines.append(("wall_time", f"{wall_time:.6f}"))
    with open(path, "w") as fh:
        for key, value in lines:
            fh.write(f"{key}={value}\n")


def read_manifest(path):
    entries = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{n}: expected key=value")
            key, value = line.split("=", 1)
            entries[key] = value
    if "argv" not in entries:
        raise FormatError(f"{path}: manifest has no argv entry")
    return entries


# input ---------------------------------------------------------------------

def load_input(args):
    """Observation matrix plus one name stem per frame."""
    if os.path.isfile(args.input) and args.input.lower().endswith(".dlm"):
        if args.frame_shape is None:
            raise ArgumentError("--frame-shape is required when --input is a .dlm file")
        obs = ObservationMatrix(read_dlm(args.input), frame_shape=args.frame_shape)
        return obs, [f"frame_{j:04d}" for j in range(obs.n)]
    if not os.path.exists(args.input):
        raise FrameReadError(f"input not found: {args.input}")
    paths = list_images(args.input, args.pattern)
    frames = load_frames(args.input, args.pattern)
    stems = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    obs = stack_frames(frames)
    if args.frame_shape is not None and tuple(args.frame_shape) != obs.frame_shape:
        raise ArgumentError(f"--frame-shape {args.frame_shape} does not match frames {obs.frame_shape}")
    return obs, stems


def _flatten(prefix, mapping):
    return {f"{prefix}.{k}": v for k, v in mapping.items()}


# commands ------------------------------------------------------------------

def cmd_decompose(args):
    start = time.perf_counter()
    obs, stems = load_input(args)
    base = DlamConfig(solver=BATCH_SOLVERS[args.solver], kind=3 if args.solver == "spcp" else 2,
                      lam=args.lam, rank_bound=args.rank, cardinality=args.card,
                      soft_tau=args.tau, delta=args.delta, tol=args.tol,
                      max_iter=args.max_iter, seed=args.seed, brp=args.brp,
                      power_iters=args.power_iters)
    window = args.window or obs.n
    spans = [(j, min(j + window, obs.n)) for j in range(0, obs.n, window)]
    # validate every chunk before any solver runs
    resolved = []
    for a, b in spans:
        v = validate(base, obs.data[:, a:b])
        if not v.ok:
            raise ConfigError("; ".join(v.diagnostics))
        cfg = v.config
        if cfg.solver in ALM_SOLVERS and cfg.mu0 is None:
            # same value the solver would pick; resolved here so the manifest shows it
            norm2 = matrix_norm(obs.data[:, a:b], "spectral")
            if norm2 > 0:
                cfg.mu0 = 1.25 / norm2
        resolved.append(cfg)

    parts = {"L": [], "S": [], "E": []}
    trace_rows = []
    for w, ((a, b), cfg) in enumerate(zip(spans, resolved)):
        log.info("window %d: frames %d..%d", w, a, b - 1)
        result = decompose(obs.data[:, a:b], cfg)
        parts["L"].append(result.low_rank)
        parts["S"].append(result.sparse if result.sparse is not None
                          else np.zeros_like(result.low_rank))
        if result.noise is not None:
            parts["E"].append(result.noise)
        for i, rec in enumerate(result.trace.records, 1):
            trace_rows.append((w, i, rec.objective, rec.residual, rec.rank, rec.cardinality,
                               result.trace.termination))

    os.makedirs(os.path.join(args.out, "masks"), exist_ok=True)
    outputs = {}
    for name, blocks in parts.items():
        if blocks:
            path = os.path.join(args.out, f"{name}.dlm")
            write_dlm(path, np.hstack(blocks))
            outputs[name] = path
    S = np.hstack(parts["S"])
    for j, stem in enumerate(stems):
        write_mask(foreground_mask(S[:, j], obs.frame_shape, args.theta),
                   os.path.join(args.out, "masks", f"{stem}.pgm"))
    with open(os.path.join(args.out, "trace.csv"), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["window", "iteration", "objective", "residual", "rank", "cardinality",
                      "termination"])
        for row in trace_rows:
            out.writerow([row[0], row[1], repr(row[2]), repr(row[3]), row[4], row[5], row[6]])

    extra = {"seed": args.seed, "input": _abs(args.input), "output": _abs(args.out),
             "frames": obs.n, "frame_shape": "x".join(map(str, obs.frame_shape)),
             "theta": args.theta, "windows": len(spans), "window_size": window}
    extra.update(_flatten("config", resolved[0].as_dict()))
    for w, cfg in enumerate(resolved[1:], 1):
        # later chunks may resolve size-dependent defaults differently
        for key, value in cfg.as_dict().items():
            if value != getattr(resolved[0], key):
                extra[f"window.{w}.{key}"] = value
    extra["outputs"] = ",".join(sorted(outputs)) + ",masks,trace.csv"
    write_manifest(os.path.join(args.out, MANIFEST), args, extra, time.perf_counter() - start)
    return EXIT_OK


def cmd_track(args):
    start = time.perf_counter()
    obs, stems = load_input(args)
    n = obs.m
    if args.dim > n:
        raise ArgumentError(f"--dim {args.dim} exceeds the pixel count {n}")
    if args.solver == "grasta" and not (args.dim / n <= args.subsample <= 1.0):
        raise ArgumentError(f"--subsample must lie in [d/n, 1] = [{args.dim / n:.6g}, 1], "
                            f"got {args.subsample}")
    os.makedirs(os.path.join(args.out, "masks"), exist_ok=True)
    rows = []
    if args.solver == "grasta":
        state = grasta_init(n, args.dim, seed=args.seed, step0=args.step,
                            step_decay=args.step_decay, rho=args.rho,
                            admm_max_iter=args.admm_iter)
        settings = {"step0": args.step, "step_decay": args.step_decay, "rho": args.rho,
                    "admm_max_iter": args.admm_iter, "subsample": args.subsample}
    else:
        state = orpca_init(n, args.dim, args.lambda1, args.lambda2, seed=args.seed)
        settings = {"lambda1": state.lambda1, "lambda2": state.lambda2}

    for j, stem in enumerate(stems):
        a = obs.data[:, j]
        if args.solver == "grasta":
            # omega drawn from a generator keyed by (seed, frame index)
            omega = None if args.subsample >= 1.0 else \
                sample_omega(n, args.subsample, np.random.default_rng((args.seed, j)))
            state, s = grasta_update(state, a, omega)
            rows.append((j, stem, state.step_size))
        else:
            state, _, s = orpca_step(state, a)
            rows.append((j, stem, state.last_cost))
        write_mask(foreground_mask(s, obs.frame_shape, args.theta),
                   os.path.join(args.out, "masks", f"{stem}.pgm"))

    basis = state.U if args.solver == "grasta" else state.L
    write_dlm(os.path.join(args.out, "basis.dlm"), basis)
    with open(os.path.join(args.out, "trace.csv"), "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["frame", "name", "next_step" if args.solver == "grasta" else "cost"])
        for j, stem, value in rows:
            out.writerow([j, stem, repr(float(value))])

    extra = {"seed": args.seed, "input": _abs(args.input), "output": _abs(args.out),
             "frames": obs.n, "frame_shape": "x".join(map(str, obs.frame_shape)),
             "theta": args.theta, "solver": args.solver, "dim": args.dim}
    extra.update(_flatten("config", settings))
    extra["outputs"] = "basis.dlm,masks,trace.csv"
    write_manifest(os.path.join(args.out, MANIFEST), args, extra, time.perf_counter() - start)
    return EXIT_OK


def _images_by_stem(directory):
    found = {}
    for path in list_images(directory):
        found.setdefault(os.path.splitext(os.path.basename(path))[0], path)
    return found


def _video_dirs(masks, truth, default_name):
    """``(name, mask_dir, truth_dir)`` triples.

    A truth directory without images but with subdirectories holds one
    video per subdirectory, matched to the same-named mask subdirectory.
    """
    if not os.path.isdir(truth):
        raise FrameReadError(f"not a directory: {truth}")
    if not os.path.isdir(masks):
        raise FrameReadError(f"not a directory: {masks}")
    if list_images(truth):
        return [(default_name, masks, truth)]
    subdirs = sorted(d for d in os.listdir(truth) if os.path.isdir(os.path.join(truth, d)))
    return [(d, os.path.join(masks, d), os.path.join(truth, d)) for d in subdirs]


def cmd_eval(args):
    start = time.perf_counter()
    name = args.video or os.path.basename(os.path.normpath(args.truth))
    videos = {}
    for video, mask_dir, truth_dir in _video_dirs(args.masks, args.truth, name):
        truth_files = _images_by_stem(truth_dir)
        mask_files = _images_by_stem(mask_dir) if os.path.isdir(mask_dir) else {}
        missing = sorted(set(truth_files) - set(mask_files))
        if missing:
            raise ArgumentError(f"{video}: no mask for truth frames: {', '.join(missing)}")
        counts = []
        for stem in sorted(truth_files):
            truth = read_mask(truth_files[stem])
            mask = read_mask(mask_files[stem])
            if mask.shape != truth.shape:
                raise InputError(f"{video}/{stem}: mask shape {mask.shape} != truth shape {truth.shape}")
            counts.append(confusion(mask, truth))
        videos[video] = counts
    if not any(videos.values()):
        raise ArgumentError("no mask/truth pairs found (empty filename intersection)")
    report_dir = os.path.dirname(os.path.abspath(args.report))
    os.makedirs(report_dir, exist_ok=True)
    overall = write_report(args.report, videos)
    extra = {"masks": _abs(args.masks), "truth": _abs(args.truth), "report": _abs(args.report),
             "videos": ",".join(sorted(videos)),
             "frames": sum(len(c) for c in videos.values()),
             "aggregate": "micro", "macro_f_measure": f"{overall.macro_f_measure:.6f}"}
    stem = os.path.splitext(os.path.abspath(args.report))[0]
    write_manifest(f"{stem}.{MANIFEST}", args, extra, time.perf_counter() - start)
    return EXIT_OK


def cmd_replay(args):
    entries = read_manifest(args.manifest)
    try:
        argv = json.loads(entries["argv"])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{args.manifest}: argv is not valid JSON ({exc})")
    if args.out is not None:
        flag = "--report" if argv and argv[0] == "eval" else "--out"
        if flag not in argv:
            raise FormatError(f"{args.manifest}: recorded argv has no {flag}")
        argv[argv.index(flag) + 1] = os.path.abspath(args.out)
    return run(argv)


COMMANDS = {"decompose": cmd_decompose, "track": cmd_track, "eval": cmd_eval,
            "replay": cmd_replay}


def run(argv):
    """Parse and dispatch; raises on failure (see :func:`main`)."""
    args = build_parser().parse_args(argv)
    if args.command == "replay" and args.manifest is None:
        raise UsageError("replay needs a manifest")
    return COMMANDS[args.command](args)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ARGS
    except (ArgumentError, ConfigError) as exc:
        print(f"dlam: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except NumericalError as exc:
        print(f"dlam: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DlamError, OSError) as exc:
        print(f"dlam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
