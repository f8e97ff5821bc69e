"""Command-line interface: ``mweica {mix,unmix,index,bench}``.

Exit codes: 0 success, 2 input or validation failure, 3 algorithmic failure.
Each command writes into ``--out`` through a staging directory, so either
every output appears or none does, and always leaves a ``meta.txt`` of
``key=value`` lines recording the resolved options, seeds and input digests.
"""

import argparse
import hashlib
import os
import shutil
import sys
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AlgorithmError, DimensionMismatch, InputError, MweicaError, NearDegenerateSpectrum
from .evaluation import match_sources, rank_methods
from .ica import DEFAULT_N_WEIGHTS, MweicaOptions, fastica_baseline, mweica, weica
from .independence import independence_index
from .io_harness import (
    SignalBundle,
    load_csv,
    load_image_gray,
    load_wav,
    mix,
    random_mixing_matrix,
    save_csv,
    save_image_gray,
    save_wav,
    synth_sources,
    to_unit_range,
    SOURCE_KINDS,
)
from .joint_diag import DEFAULT_MAX_SWEEPS, DEFAULT_TOL

METHODS = ("mweica", "weica", "fastica")
FASTICA_TOL = 1e-4
FASTICA_MAX_ITER = 200
WAV_PEAK = 0.99

_LOADERS = {".csv": ("csv", load_csv), ".wav": ("wav", load_wav), ".pgm": ("image", load_image_gray)}


# -- plumbing ----------------------------------------------------------------

class Staging:
    """Collect outputs in a hidden directory and move them into place on success."""

    def __init__(self, out):
        self.out = Path(out)

    def __enter__(self):
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create output directory {self.out}: {exc}") from exc
        if not os.access(self.out, os.W_OK):
            raise InputError(f"output directory {self.out} is not writable")
        self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        return self

    def path(self, name):
        return self.dir / name

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for f in sorted(self.dir.iterdir()):
                os.replace(f, self.out / f.name)
        shutil.rmtree(self.dir, ignore_errors=True)
        return False


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_meta(path, items):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in items.items():
            fh.write(f"{key}={_fmt(value)}\n")


def read_meta(path):
    """Parse a ``meta.txt`` file into a dict of strings."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.rstrip("\n").partition("=")
            out[key] = value
    return out


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def load_inputs(paths):
    """Load one or more files of a single medium and stack their columns."""
    kinds, bundles = set(), []
    for p in paths:
        suffix = Path(p).suffix.lower()
        if suffix not in _LOADERS:
            raise InputError(f"{p}: unsupported file type {suffix!r} (use .csv, .wav or .pgm)")
        kind, loader = _LOADERS[suffix]
        kinds.add(kind)
        bundles.append(loader(p))
    if len(kinds) > 1:
        raise InputError("all inputs must share one medium")
    kind = kinds.pop()
    lengths = {b.data.shape[0] for b in bundles}
    if len(lengths) > 1:
        raise DimensionMismatch(f"mismatched input lengths: {sorted(lengths)}")
    rate = shape = None
    if kind == "wav":
        rates = {b.sample_rate for b in bundles}
        if len(rates) > 1:
            raise InputError(f"mismatched sample rates: {sorted(rates)}")
        rate = rates.pop()
    if kind == "image":
        shapes = {b.image_shape for b in bundles}
        if len(shapes) > 1:
            raise DimensionMismatch(f"mismatched image sizes: {sorted(shapes)}")
        shape = shapes.pop()
    data = np.hstack([b.data for b in bundles])
    return SignalBundle(data, kind, sample_rate=rate, image_shape=shape)


def _input_meta(paths):
    meta = {"inputs": [str(p) for p in paths]}
    for i, p in enumerate(paths):
        meta[f"input_sha256_{i}"] = _digest(p)
    return meta


def write_signals(stage, prefix, data, like, references=None, orient=True):
    """Write columns of ``data`` in the medium of ``like``; return file names and scales."""
    files, scales = [], []
    if like.kind == "image":
        for i in range(data.shape[1]):
            ref = None if references is None else references[:, i]
            col = to_unit_range(data[:, i], reference=ref) if orient else _minmax(data[:, i])
            name = f"{prefix}_{i}.pgm"
            save_image_gray(SignalBundle(col, "image", image_shape=like.image_shape), stage.path(name))
            files.append(name)
    elif like.kind == "wav":
        for i in range(data.shape[1]):
            peak = np.max(np.abs(data[:, i]))
            scale = WAV_PEAK / peak if peak > 0 else 1.0
            name = f"{prefix}_{i}.wav"
            save_wav(data[:, i] * scale, stage.path(name), rate=like.sample_rate)
            files.append(name)
            scales.append(scale)
    else:
        name = f"{prefix}.csv"
        save_csv(data, stage.path(name), names=[f"{prefix}_{i}" for i in range(data.shape[1])])
        files.append(name)
    return files, scales


def _minmax(col):
    span = np.ptp(col)
    return np.zeros_like(col) if span == 0 else (col - col.min()) / span


# -- commands ----------------------------------------------------------------

def cmd_mix(args):
    with Staging(args.out) as stage:
        bundle = load_inputs(args.inputs)
        S = bundle.data
        d = S.shape[1]
        if d < 2:
            raise InputError("mixing needs at least two source columns")
        spec = random_mixing_matrix(d, args.seed, condition_bound=args.condition_bound)
        X = mix(S, spec)
        files, scales = write_signals(stage, "mixed", X, bundle, orient=False)
        save_csv(spec.A, stage.path("A.csv"))
        meta = {"command": "mix", "version": __version__, "seed": args.seed,
                "condition_bound": args.condition_bound, "condition": spec.condition,
                "medium": bundle.kind, "samples": S.shape[0], "dimension": d}
        meta.update(_input_meta(args.inputs))
        meta["outputs"] = files + ["A.csv"]
        if bundle.kind == "image":
            meta["rescale_min"] = X.min(axis=0)
            meta["rescale_max"] = X.max(axis=0)
        if scales:
            meta["wav_scale"] = scales
        write_meta(stage.path("meta.txt"), meta)
    return 0


def run_method(method, X, seed, n_weights=None, tol=None, max_sweeps=DEFAULT_MAX_SWEEPS, n_jobs=1):
    """Dispatch to an unmixing method; returns the result and its resolved options."""
    if method == "mweica":
        n = n_weights if n_weights is not None else min(DEFAULT_N_WEIGHTS, X.shape[0])
        tol = DEFAULT_TOL if tol is None else tol
        opts = MweicaOptions(n_weights=n, seed=seed, tol=tol, max_sweeps=max_sweeps, n_jobs=n_jobs)
        resolved = {"n_weights": n, "tol": tol, "max_sweeps": max_sweeps}
        return mweica(X, opts), resolved
    if method == "weica":
        return weica(X, seed=seed), {}
    if method == "fastica":
        tol = FASTICA_TOL if tol is None else tol
        result = fastica_baseline(X, seed=seed, tol=tol, max_iter=FASTICA_MAX_ITER)
        return result, {"tol": tol, "max_iter": FASTICA_MAX_ITER}
    raise InputError(f"unknown method {method!r}")


def cmd_unmix(args):
    with Staging(args.out) as stage:
        bundle = load_inputs(args.inputs)
        X = bundle.data
        reference = None
        if args.reference:
            reference = load_inputs(args.reference).data
            if reference.shape != X.shape:
                raise DimensionMismatch(f"reference shape {reference.shape} differs from input {X.shape}")
        result, resolved = run_method(args.method, X, args.seed, args.n_weights, args.tol,
                                      args.max_sweeps, args.jobs)
        diag = result.diagnostics
        meta = {"command": "unmix", "version": __version__, "method": args.method, "seed": args.seed}
        meta.update(resolved)
        meta.update(_input_meta(args.inputs))
        meta.update({"medium": bundle.kind, "samples": X.shape[0], "dimension": X.shape[1],
                     "residual": result.residual, "converged": diag.get("converged"),
                     "near_degenerate": diag.get("near_degenerate", False)})
        for key in ("sweeps", "iterations", "n_used", "separation"):
            if key in diag:
                meta[key] = diag[key]
        if result.weight_points is not None:
            meta["weight_points"] = result.weight_points
            meta["rejected_points"] = diag.get("rejected", [])

        ordered_refs = None
        if reference is not None:
            report = match_sources(result.sources, reference)
            meta["reference"] = [str(p) for p in args.reference]
            meta["matched_reference"] = report.permutation
            meta["matched_abs_congruence"] = report.mean_abs_congruence
            ordered_refs = reference[:, report.permutation]

        save_csv(result.W, stage.path("W.csv"))
        files, scales = write_signals(stage, "source", result.sources, bundle, references=ordered_refs)
        meta["outputs"] = ["W.csv"] + files
        if scales:
            meta["wav_scale"] = scales
        write_meta(stage.path("meta.txt"), meta)
    return 0


def cmd_index(args):
    with Staging(args.out) as stage:
        X = load_inputs(args.inputs).data
        n = args.n_weights if args.n_weights is not None else min(DEFAULT_N_WEIGHTS, X.shape[0])
        report = independence_index(X, n=n, seed=args.seed)
        print(f"index={report.index!r}")
        with open(stage.path("index.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("point,row,diag_error\n")
            for i, (row, de) in enumerate(zip(report.weight_points, report.per_point)):
                fh.write(f"{i},{int(row)},{float(de)!r}\n")
        meta = {"command": "index", "version": __version__, "seed": args.seed, "n_weights": n,
                "index": report.index, "n_used": report.n_used}
        meta.update(_input_meta(args.inputs))
        meta["outputs"] = ["index.csv"]
        write_meta(stage.path("meta.txt"), meta)
    return 0


def _trial_seeds(seed, k, trial):
    ss = np.random.SeedSequence([seed, k, trial])
    src, mixing, method = ss.generate_state(3)
    return int(src), int(mixing), int(method)


def bench_trial(trial, k, args, methods):
    """One seeded mix -> unmix -> score round; returns per-method rows."""
    src_seed, mix_seed, method_seed = _trial_seeds(args.seed, k, trial)
    t0 = time.perf_counter()
    S = synth_sources(args.source_kind, k, args.dim, src_seed).data
    spec = random_mixing_matrix(args.dim, mix_seed, condition_bound=args.condition_bound)
    X = mix(S, spec)
    mix_s = time.perf_counter() - t0
    rows = []
    for method in methods:
        t1 = time.perf_counter()
        result, _ = run_method(method, X, method_seed, args.n_weights, args.tol, args.max_sweeps)
        t2 = time.perf_counter()
        report = match_sources(result.sources, S, W=result.W, A=spec.A)
        t3 = time.perf_counter()
        rows.append({"k": k, "trial": trial, "method": method,
                     "tucker": report.mean_abs_congruence, "amari": report.amari,
                     "converged": bool(result.diagnostics.get("converged", True)),
                     "mix_seconds": mix_s, "unmix_seconds": t2 - t1, "score_seconds": t3 - t2})
    return rows


def cmd_bench(args):
    methods = _split(args.method, METHODS)
    sizes = [int(float(s)) for s in _split(args.samples)]
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    if args.dim < 2:
        raise InputError("--dim must be at least 2")
    if any(k < args.dim + 1 for k in sizes):
        raise InputError("every sample size must exceed the dimension")

    jobs = [(t, k) for k in sizes for t in range(args.trials)]
    with Staging(args.out) as stage:
        if args.jobs > 1:
            with ThreadPoolExecutor(args.jobs) as ex:
                results = list(ex.map(lambda job: bench_trial(job[0], job[1], args, methods), jobs))
        else:
            results = [bench_trial(t, k, args, methods) for t, k in jobs]
        rows = [r for trial_rows in results for r in trial_rows]

        with open(stage.path("scores.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("k,trial,method,tucker,amari,converged\n")
            for r in rows:
                fh.write(f"{r['k']},{r['trial']},{r['method']},{r['tucker']!r},{r['amari']!r},"
                         f"{_fmt(r['converged'])}\n")
        with open(stage.path("ranks.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("k,method,q1,median,q3,mean_rank\n")
            for k in sizes:
                scores = {m: [r["tucker"] for r in rows if r["k"] == k and r["method"] == m]
                          for m in methods}
                _, summary = rank_methods(scores)
                for m in methods:
                    s = summary[m]
                    fh.write(f"{k},{m},{s['q1']!r},{s['median']!r},{s['q3']!r},{s['mean']!r}\n")
        outputs = ["scores.csv", "ranks.csv"]
        if args.timing:
            with open(stage.path("timing.csv"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write("k,trial,method,mix_seconds,unmix_seconds,score_seconds\n")
                for r in rows:
                    fh.write(f"{r['k']},{r['trial']},{r['method']},{r['mix_seconds']!r},"
                             f"{r['unmix_seconds']!r},{r['score_seconds']!r}\n")
            outputs.append("timing.csv")
        meta = {"command": "bench", "version": __version__, "seed": args.seed,
                "methods": methods, "trials": args.trials, "samples": sizes, "dim": args.dim,
                "source_kind": args.source_kind, "condition_bound": args.condition_bound,
                "n_weights": args.n_weights if args.n_weights is not None else "auto",
                "tol": args.tol if args.tol is not None else "auto",
                "max_sweeps": args.max_sweeps, "jobs": args.jobs, "timing": args.timing,
                "outputs": outputs}
        write_meta(stage.path("meta.txt"), meta)
    return 0


def _split(values, allowed=None):
    items = []
    for v in values:
        items.extend(x.strip() for x in v.split(",") if x.strip())
    if allowed is not None:
        bad = [x for x in items if x not in allowed]
        if bad:
            raise InputError(f"unknown method(s) {bad}; choose from {allowed}")
    return items


# -- argument parsing --------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="mweica", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, inputs=True):
        if inputs:
            p.add_argument("inputs", nargs="+", help=".csv, .wav or .pgm files of one medium")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")

    def solver(p):
        p.add_argument("--n-weights", type=int, default=None,
                       help=f"number of weight centers (default min({DEFAULT_N_WEIGHTS}, k))")
        p.add_argument("--tol", type=float, default=None,
                       help=f"stopping tolerance (default {DEFAULT_TOL} for mweica, {FASTICA_TOL} for fastica)")
        p.add_argument("--max-sweeps", type=int, default=DEFAULT_MAX_SWEEPS)

    p = sub.add_parser("mix", help="mix sources with a seeded random matrix")
    common(p)
    p.add_argument("--condition-bound", type=float, default=20.0)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("unmix", help="recover independent sources")
    common(p)
    solver(p)
    p.add_argument("--method", choices=METHODS, default="mweica")
    p.add_argument("--reference", nargs="+", default=None,
                   help="true sources, used to score the result and orient images")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("index", help="dependence index of the input coordinates")
    common(p)
    p.add_argument("--n-weights", type=int, default=None)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("bench", help="seeded mix/unmix/score trials on synthetic sources")
    common(p, inputs=False)
    solver(p)
    p.add_argument("--method", action="append", default=None,
                   help="method or comma list (default: all)")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--samples", action="append", default=None,
                   help="sample size(s) k, comma list allowed (default 10000)")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--source-kind", choices=SOURCE_KINDS, default="uniform")
    p.add_argument("--condition-bound", type=float, default=20.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="also write wall-clock times (timing.csv, not reproducible)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    # near-degeneracy is reported in meta.txt instead
    warnings.simplefilter("ignore", NearDegenerateSpectrum)
    if args.command == "bench":
        args.method = args.method or [",".join(METHODS)]
        args.samples = args.samples or ["10000"]
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"mweica {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except AlgorithmError as exc:
        print(f"mweica {args.command}: algorithm failure: {exc}", file=sys.stderr)
        return 3
    except MweicaError as exc:
        print(f"mweica {args.command}: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
