"""Command line front end.

Subcommands wrap the library operations one-to-one; `run` executes a whole
pipeline described by a config file. Every command is deterministic given
its inputs and seed: CSV outputs byte-reproduce on a rerun, and each output
directory gets a `provenance` file recording the config digest, the seed and
the package version. Exit codes: 1 bad configuration, 2 numeric failure,
3 I/O failure. The env var IMAGING_LAB_THREADS caps worker threads.
"""

import argparse
import hashlib
import os
import sys
import time

import numpy as np

from . import __version__, analysis, experiments
from .config import (
    ConfigError,
    load_pattern,
    pattern_from_section,
    read_config,
)
from .grid import (
    append_metrics_csv,
    compute_metrics,
    load_image,
    make_disk_pair,
    make_shepp_logan,
    save_image,
    save_pgm,
)
from .manifold import (
    LatentBox,
    generate,
    make_dataset,
    sample_latent,
    save_dataset,
)
from .recon import SolverConfig, TrainConfig, l1_solve, oracle_fit, tv_solve
from .sampling import CtInterior, asharp_a
from .util import sha256_of_file, spawn_rngs


class NumericError(RuntimeError):
    """Solver divergence or non-finite results (exit code 2)."""


def _floats(text):
    return tuple(float(tok) for tok in str(text).replace(",", " ").split())


def _ints(text):
    return tuple(int(tok) for tok in str(text).replace(",", " ").split())


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _settings_digest(settings):
    """Hash of the resolved knobs, so commands without a config file still
    get a stable provenance record. Output paths stay out of the digest."""
    blob = "\n".join(f"{k} = {settings[k]}" for k in sorted(settings))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


def _provenance(out_dir, digest, seed):
    os.makedirs(out_dir, exist_ok=True)
    text = (f"config_sha256 = {digest}\n"
            f"seed = {'none' if seed is None else seed}\n"
            f"version = {__version__}\n")
    with open(os.path.join(out_dir, "provenance"), "w", encoding="ascii",
              newline="\n") as f:
        f.write(text)


def _checked_pattern(path):
    if not os.path.exists(path):
        raise ConfigError(f"pattern file not found: {path}")
    return load_pattern(path)


def _pattern_side(pattern, override=None):
    if override:
        return int(override)
    side = pattern.image_side or getattr(pattern.scheme, "size", 0)
    if not side:
        raise ConfigError("image side is neither in the pattern nor given "
                          "with --side")
    return int(side)


def _load_box(path):
    if path is None:
        return LatentBox.default()
    sections = read_config(path)
    if "box" not in sections:
        raise ConfigError(f"{path} has no [box] section")
    return _box_from_section(sections["box"])


def _box_from_section(sec):
    try:
        lower = np.array(_floats(sec["lower"]))
        upper = np.array(_floats(sec["upper"]))
    except KeyError as e:
        raise ConfigError(f"box section missing key {e}") from e
    try:
        return LatentBox(lower, upper)
    except ValueError as e:
        raise ConfigError(f"bad box bounds: {e}") from e


def _finite(image, what):
    if not np.all(np.isfinite(image.values)):
        raise NumericError(f"{what} produced non-finite values")
    return image


# --- run pipelines ---------------------------------------------------------------


def _run_pattern(sections, config_path):
    """Inline [pattern] section, or a pattern_file reference in [run]."""
    sec = sections.get("run", {})
    if "pattern_file" in sec:
        path = sec["pattern_file"]
        if not os.path.isabs(path):
            base = os.path.dirname(os.path.abspath(config_path))
            path = os.path.join(base, path)
        return _checked_pattern(path)
    if "pattern" in sections:
        return pattern_from_section(sections["pattern"])
    raise ConfigError("config needs a [pattern] section or a pattern_file "
                      "key under [run]")


def _experiment_config(sections, pattern, out_dir):
    ds = sections.get("dataset", {})
    solver = sections.get("solver", {})
    train = sections.get("train", {})
    box = _box_from_section(sections["box"]) if "box" in sections \
        else LatentBox.default()
    try:
        side = _pattern_side(pattern, ds.get("side"))
        kwargs = dict(
            pattern=pattern, side=side, box=box, out_dir=out_dir,
            n_train=int(ds.get("n_train", 800)),
            n_test=int(ds.get("n_test", 100)),
            train_seed=int(ds.get("train_seed", 101)),
            test_seed=int(ds.get("test_seed", 202)),
            eval_count=int(ds.get("eval_count", 0)),
            pca_k=int(solver.get("pca_k", 100)),
            train_cfg=TrainConfig(
                learning_rate=float(train.get("learning_rate", 0.001)),
                batch_size=int(train.get("batch_size", 16)),
                epochs=int(train.get("epochs", 1000)),
                seed=int(train.get("seed", 0)),
            ),
            arch=_ints(train.get("arch", "192,96")),
            members=int(train.get("members", 3)),
        )
        if "lams" in solver:
            kwargs["lams"] = _floats(solver["lams"])
        return experiments.ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _variant_pgms(rep, out_dir):
    for i, im in enumerate(rep.outputs):
        save_pgm(os.path.join(out_dir, f"variant_{i}.pgm"), im)


def _pipe_method_lineup(sections, config_path, out_dir):
    pattern = _run_pattern(sections, config_path)
    experiments.method_lineup(_experiment_config(sections, pattern, out_dir))


def _pipe_curve_projection(sections, config_path, out_dir):
    pattern = _run_pattern(sections, config_path)
    cfg = _experiment_config(sections, pattern, out_dir)
    curve = sections.get("curve", {})
    n_span = int(curve.get("n_span", 36))
    latent = _floats(curve["latent"]) if "latent" in curve \
        else experiments.CURVE_LATENT
    experiments.curve_projection(cfg, n_span=n_span, latent=latent)


def _pipe_uncertainty(sections, config_path, out_dir):
    pattern = _run_pattern(sections, config_path)
    sec = sections.get("uncertainty", {})
    row = int(sec["anomaly_row"]) if "anomaly_row" in sec else None
    rep, _ = experiments.uncertainty_demo(pattern, out_dir, anomaly_row=row)
    _variant_pgms(rep, out_dir)


def _pipe_eta(sections, config_path, out_dir):
    pattern = _run_pattern(sections, config_path)
    sec = sections.get("eta", {})
    box = _box_from_section(sections["box"]) if "box" in sections \
        else LatentBox.default()
    experiments.eta_curve(
        box, pattern,
        etas=_ints(sec.get("etas", "1,8,32")),
        n_train=int(sec.get("n_train", 6000)),
        n_test=int(sec.get("n_test", 200)),
        seed=int(sec.get("seed", 0)),
        out_dir=out_dir,
        hidden=int(sec.get("hidden", 192)),
        steps=int(sec.get("steps", 12000)),
        batch_size=int(sec.get("batch_size", 64)),
        learning_rate=float(sec.get("learning_rate", 0.001)),
    )


def _pipe_interior(sections, config_path, out_dir):
    pattern = _run_pattern(sections, config_path)
    if not isinstance(pattern.scheme, CtInterior):
        raise ConfigError("the interior pipeline needs scheme = interior")
    sec = sections.get("interior", {})
    experiments.interior_scan(
        n=int(sec.get("phantom_side", 256)),
        n_angles=pattern.scheme.radon_cfg.n_angles,
        roi_center=pattern.scheme.roi_center,
        roi_radius=pattern.scheme.roi_radius,
        n_chords=int(sec.get("n_chords", 10)),
        out_dir=out_dir,
    )


_PIPELINES = {
    "method_lineup": _pipe_method_lineup,
    "curve_projection": _pipe_curve_projection,
    "uncertainty": _pipe_uncertainty,
    "eta": _pipe_eta,
    "interior": _pipe_interior,
}


def run(config_path) -> int:
    """Execute the pipeline named by a config file; returns the exit code."""
    sections = read_config(config_path)
    if "run" not in sections:
        raise ConfigError(f"{config_path} has no [run] section")
    sec = sections["run"]
    pipeline = sec.get("pipeline", "")
    if pipeline not in _PIPELINES:
        known = ", ".join(sorted(_PIPELINES))
        raise ConfigError(f"unknown pipeline {pipeline!r} (expected one of "
                          f"{known})")
    out_dir = sec.get("out_dir", "")
    if not out_dir:
        raise ConfigError("run section needs out_dir")
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    _PIPELINES[pipeline](sections, config_path, out_dir)
    _provenance(out_dir, sha256_of_file(config_path), sec.get("seed"))
    _progress(f"pipeline {pipeline} done ({time.time() - t0:.0f}s)")
    return 0


# --- subcommands -----------------------------------------------------------------


def _cmd_run(args):
    return run(args.config)


def _cmd_phantom(args):
    if args.kind == "shepp-logan":
        img = make_shepp_logan(args.n)
    else:
        if args.latent is None:
            raise ConfigError("--kind disks needs --latent with seven "
                              "comma separated values")
        h = _floats(args.latent)
        if len(h) != 7:
            raise ConfigError(f"--latent needs 7 values, got {len(h)}")
        img = make_disk_pair(np.array(h), args.n)
    save_image(args.out, img)
    if args.pgm:
        save_pgm(args.pgm, img)
    digest = _settings_digest(
        {"command": "phantom", "kind": args.kind, "n": args.n,
         "latent": args.latent or ""})
    _provenance(os.path.dirname(os.path.abspath(args.out)), digest, None)
    return 0


def _cmd_dataset(args):
    pattern = _checked_pattern(args.pattern)
    side = _pattern_side(pattern, args.side)
    box = _load_box(args.box)
    t0 = time.time()
    ds = make_dataset(box, args.n, pattern, args.seed, side)
    save_dataset(args.out, ds)
    digest = _settings_digest(
        {"command": "dataset", "n": args.n, "side": side,
         "pattern_sha256": sha256_of_file(args.pattern)})
    _provenance(args.out, digest, args.seed)
    _progress(f"{ds.count} samples written ({time.time() - t0:.0f}s)")
    return 0


def _cmd_reconstruct(args):
    pattern = _checked_pattern(args.pattern)
    truth = load_image(args.truth)
    x = asharp_a(truth, pattern)
    xr = type(x)(np.real(x.values))
    cfg = SolverConfig(lam=args.lam, max_iters=args.iters)
    t0 = time.time()
    note = ""
    if args.method == "zero_fill":
        rec = xr
    elif args.method == "tv":
        res = tv_solve(xr, pattern, cfg)
        rec, note = res.image, f"converged = {res.converged}"
    elif args.method in ("l1_haar", "l1_db4"):
        res = l1_solve(xr, pattern, args.method.split("_")[1], cfg)
        rec, note = res.image, f"converged = {res.converged}"
    else:
        if args.seed is None:
            raise ConfigError("--method oracle needs --seed")
        fit = oracle_fit(x, pattern, _load_box(args.box), seed=args.seed)
        rec, note = fit.image, f"objective = {fit.objective:.3e}"
    _finite(rec, args.method)
    elapsed = time.time() - t0
    os.makedirs(args.out, exist_ok=True)
    save_image(os.path.join(args.out, "recon.img"), rec)
    save_pgm(os.path.join(args.out, "recon.pgm"), rec)
    metrics = compute_metrics(rec, truth)
    append_metrics_csv(os.path.join(args.out, "metrics.csv"), args.method,
                       metrics)
    digest = _settings_digest(
        {"command": "reconstruct", "method": args.method, "lam": args.lam,
         "iters": args.iters,
         "pattern_sha256": sha256_of_file(args.pattern),
         "truth_sha256": sha256_of_file(args.truth)})
    _provenance(args.out, digest, args.seed)
    _progress(f"{args.method}: mse = {metrics.mse:.4e}, "
              f"psnr = {metrics.psnr:.2f} dB ({elapsed:.0f}s){' ' + note if note else ''}")
    return 0


def _task_rip(args, pattern, box, out_dir):
    side = _pattern_side(pattern, args.side)
    est = analysis.estimate_rip(
        pattern, lambda rng: generate(sample_latent(box, rng), side),
        n_pairs=args.pairs, seed=args.seed)
    experiments._write_rows(
        os.path.join(out_dir, "rip.csv"), ("quantity", "value"),
        [("c_lower", est.c_lower), ("min_ratio", est.min_ratio),
         ("max_ratio", est.max_ratio), ("n_pairs", str(est.n_pairs))])
    a, b = est.witness
    save_pgm(os.path.join(out_dir, "witness_a.pgm"), a)
    save_pgm(os.path.join(out_dir, "witness_b.pgm"), b)
    save_pgm(os.path.join(out_dir, "witness_diff.pgm"),
             type(a)(a.values - b.values))


def _task_injectivity(args, pattern, box, out_dir):
    side = _pattern_side(pattern, args.side)
    rngs = spawn_rngs(args.seed, args.samples)
    images = [generate(sample_latent(box, rng), side) for rng in rngs]
    rep = analysis.check_injectivity(pattern, images)
    experiments._write_rows(
        os.path.join(out_dir, "injectivity.csv"), ("quantity", "value"),
        [("n_samples", str(rep.n_samples)), ("n_pairs", str(rep.n_pairs)),
         ("tol", rep.tol), ("n_violations", str(len(rep.violations))),
         ("max_isometry_dev", rep.max_isometry_dev),
         ("injective", str(rep.injective).lower())])


def _task_nonlinearity(args, pattern, box, out_dir):
    side = _pattern_side(pattern, args.side)
    ds = make_dataset(box, args.n, pattern, args.seed, side)
    rep = analysis.test_nonlinearity(ds)
    experiments._write_rows(
        os.path.join(out_dir, "nonlinearity.csv"), ("quantity", "value"),
        [("n_train", str(rep.n_train)), ("n_test", str(rep.n_test)),
         ("affine_train_mse", rep.affine_train_mse),
         ("affine_test_mse", rep.affine_test_mse),
         ("oracle_mse", rep.oracle_mse), ("ratio", rep.ratio),
         ("gain", rep.gain), ("verdict", rep.verdict), ("note", rep.note)])


def _task_uncertainty(args, pattern, box, out_dir):
    rep, _ = experiments.uncertainty_demo(pattern, out_dir,
                                          anomaly_row=args.anomaly_row)
    _variant_pgms(rep, out_dir)


def _task_interior(args, pattern, box, out_dir):
    if not isinstance(pattern.scheme, CtInterior):
        raise ConfigError("task interior needs a pattern with "
                          "scheme = interior")
    experiments.interior_scan(
        n=args.phantom_n, n_angles=pattern.scheme.radon_cfg.n_angles,
        roi_center=pattern.scheme.roi_center,
        roi_radius=pattern.scheme.roi_radius,
        n_chords=args.chords, out_dir=out_dir)
    save_pgm(os.path.join(out_dir, "phantom.pgm"),
             make_shepp_logan(args.phantom_n))


def _task_eta(args, pattern, box, out_dir):
    experiments.eta_curve(
        box, pattern, etas=_ints(args.etas), n_train=args.n_train,
        n_test=args.n_test, seed=args.seed, out_dir=out_dir,
        hidden=args.hidden, steps=args.steps)


_TASKS = {
    "rip": _task_rip,
    "injectivity": _task_injectivity,
    "nonlinearity": _task_nonlinearity,
    "uncertainty": _task_uncertainty,
    "interior": _task_interior,
    "eta": _task_eta,
}
_SEEDED_TASKS = ("rip", "injectivity", "nonlinearity", "eta")


def _cmd_analyze(args):
    if args.task in _SEEDED_TASKS and args.seed is None:
        raise ConfigError(f"--seed is required for task {args.task}")
    pattern = _checked_pattern(args.pattern)
    box = _load_box(args.box)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    _TASKS[args.task](args, pattern, box, args.out)
    digest = _settings_digest(
        {"command": "analyze", "task": args.task,
         "pattern_sha256": sha256_of_file(args.pattern)})
    _provenance(args.out, digest, args.seed)
    _progress(f"task {args.task} done ({time.time() - t0:.0f}s)")
    return 0


def _cmd_metrics(args):
    ref = load_image(args.ref)
    test = load_image(args.test)
    m = compute_metrics(test, ref)
    print(f"mse = {m.mse:.6e}")
    print(f"psnr = {m.psnr:.4f}")
    if args.csv:
        append_metrics_csv(args.csv, args.name or os.path.basename(args.test),
                           m)
    return 0


# --- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage problems are configuration errors, exit code 1."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    p = _Parser(prog="imaging-lab",
                description="Subsampled MRI/CT reconstruction experiments "
                            "on a synthetic solution manifold.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("run", help="execute a pipeline config")
    q.add_argument("config", help="config file with a [run] section")
    q.set_defaults(func=_cmd_run)

    q = sub.add_parser("phantom", help="render a test image")
    q.add_argument("--kind", choices=("shepp-logan", "disks"), required=True)
    q.add_argument("--n", type=int, required=True, help="image side")
    q.add_argument("--out", required=True, help="output .img path")
    q.add_argument("--latent", help="seven comma separated values (disks)")
    q.add_argument("--pgm", help="also write a preview here")
    q.set_defaults(func=_cmd_phantom)

    q = sub.add_parser("dataset", help="synthesize a paired dataset")
    q.add_argument("--n", type=int, required=True, help="sample count")
    q.add_argument("--pattern", required=True, help="pattern config file")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out", required=True, help="output directory")
    q.add_argument("--side", type=int, help="image side override")
    q.add_argument("--box", help="config file with a [box] section")
    q.set_defaults(func=_cmd_dataset)

    q = sub.add_parser("reconstruct", help="reconstruct one image")
    q.add_argument("--truth", required=True, help="ground-truth .img file")
    q.add_argument("--pattern", required=True, help="pattern config file")
    q.add_argument("--method", required=True,
                   choices=("zero_fill", "tv", "l1_haar", "l1_db4", "oracle"))
    q.add_argument("--out", required=True, help="output directory")
    q.add_argument("--lam", type=float, default=0.1)
    q.add_argument("--iters", type=int, default=300)
    q.add_argument("--seed", type=int, help="required for --method oracle")
    q.add_argument("--box", help="config file with a [box] section")
    q.set_defaults(func=_cmd_reconstruct)

    q = sub.add_parser("analyze", help="run one analysis task")
    q.add_argument("--task", choices=sorted(_TASKS), required=True)
    q.add_argument("--pattern", required=True, help="pattern config file")
    q.add_argument("--out", required=True, help="output directory")
    q.add_argument("--seed", type=int)
    q.add_argument("--side", type=int, help="image side override")
    q.add_argument("--box", help="config file with a [box] section")
    q.add_argument("--pairs", type=int, default=100, help="rip pair count")
    q.add_argument("--samples", type=int, default=20,
                   help="injectivity sample count")
    q.add_argument("--n", type=int, default=800,
                   help="nonlinearity dataset size")
    q.add_argument("--anomaly-row", type=int, help="uncertainty band row")
    q.add_argument("--phantom-n", type=int, default=256,
                   help="interior phantom side")
    q.add_argument("--chords", type=int, default=10,
                   help="interior chord count")
    q.add_argument("--etas", default="1,8,32", help="patch widths")
    q.add_argument("--n-train", type=int, default=6000)
    q.add_argument("--n-test", type=int, default=200)
    q.add_argument("--hidden", type=int, default=192)
    q.add_argument("--steps", type=int, default=12000)
    q.set_defaults(func=_cmd_analyze)

    q = sub.add_parser("metrics", help="compare two .img files")
    q.add_argument("--ref", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--csv", help="append a row here")
    q.add_argument("--name", help="row label (default: test file name)")
    q.set_defaults(func=_cmd_metrics)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
