"""``gswgan`` command line: train, sweep, eval-w1, plot, mnist-prep.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime or numeric
error (including a degraded sweep).
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .config import load_train_config
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the base seed")
    parser.add_argument("--threads", type=int, default=default,
                        help="worker processes for sweeps (default: cores - 1)")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--data-dir", default=default, help="MNIST directory (default $GSWGAN_DATA_DIR)")
    parser.add_argument("--long", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="allow MNIST training and sweeps")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gswgan", description="Lipschitz-constrained WGAN experiments with exact W1 evaluation.")
    _common(p, False)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train one model from a JSON config")
    t.add_argument("config")
    _common(t, True)

    s = sub.add_parser("sweep", help="run a seed-averaged sweep from a JSON sweep file")
    s.add_argument("sweep")
    _common(s, True)

    e = sub.add_parser("eval-w1", help="W1 between two point sets")
    e.add_argument("--a", required=True, help="CSV of points, or a generator checkpoint JSON")
    e.add_argument("--b", required=True, help="CSV of points")
    mode = e.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="exact W1 (default)")
    mode.add_argument("--sliced", action="store_true", help="sliced W1")
    e.add_argument("--samples", type=int, default=None,
                   help="points drawn from a checkpoint, or a subsample size for CSVs")
    e.add_argument("--projections", type=int, default=64)
    _common(e, True)

    pl = sub.add_parser("plot", help="write one SVG per axis for the sweeps under a directory")
    pl.add_argument("sweep_dir")
    _common(pl, True)

    m = sub.add_parser("mnist-prep", help="check MNIST IDX files and fit the evaluation PCA")
    m.add_argument("--images", required=True)
    m.add_argument("--labels", required=True)
    m.add_argument("--pca-dim", type=int, default=50)
    m.add_argument("--holdout", type=int, default=10000)
    _common(m, True)
    return p


def read_points(path) -> np.ndarray:
    """Numeric CSV, one point per row; a non-numeric first row is a header."""
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                if i == 0 and not rows:
                    continue
                raise ConfigError(f"{path}: non-numeric value on line {i + 1}") from None
    if not rows:
        raise ConfigError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows have different lengths")
    return np.array(rows)


def _points_from(path, samples, seed):
    from .data import gaussian_noise
    from .networks import MlpParams, sample
    from .rng import make_rng

    if str(path).endswith(".json"):
        with open(path) as fh:
            g = MlpParams.from_dict(json.load(fh))
        n = samples or 2000
        z = gaussian_noise(n, g.spec.input_dim, make_rng(seed or 0, "eval")).values
        return sample(g, z)
    pts = read_points(path)
    if samples is not None and samples < pts.shape[0]:
        pick = make_rng(seed or 0, "eval").choice(pts.shape[0], size=samples, replace=False)
        pts = pts[np.sort(pick)]
    return pts


def _require_long(dataset, args):
    if dataset == "mnist" and not args.long:
        raise ConfigError("dataset: mnist runs are long; pass --long to enable them")


def cmd_train(args) -> int:
    from .training import train_from_config

    cfg = load_train_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    _require_long(cfg.dataset, args)
    out = args.out or os.path.join("runs", f"{cfg.dataset}_seed{cfg.seed}")

    def progress(rec):
        w1 = "" if math.isnan(rec.exact_w1) else f" exact_w1={rec.exact_w1:.6f}"
        print(f"iter {rec.iteration:7d} critic_loss={rec.critic_loss:.6f} gen_loss={rec.gen_loss:.6f} "
              f"sliced_w1={rec.sliced_w1:.6f}{w1}", flush=True)

    res = train_from_config(cfg, data_dir=args.data_dir, out_dir=out, progress=progress)
    print(f"final exact W1 {res.final.value!r}; outputs in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import load_sweep_specs, run_sweep

    specs = load_sweep_specs(args.sweep)
    for spec in specs:
        _require_long(spec.base.dataset, args)
        if args.seed is not None:
            spec.base.seed = args.seed
        if args.out and not os.path.isabs(spec.out_dir):
            spec.out_dir = os.path.join(args.out, spec.out_dir)
    degraded = False
    for spec in specs:
        def progress(r, spec=spec):
            print(f"{spec.axis}={r.value} seed={r.seed} {r.status} w1={r.w1!r}"
                  + (f" ({r.error})" if r.error else ""), flush=True)

        res = run_sweep(spec, data_dir=args.data_dir, workers=args.threads, progress=progress)
        for s in res.stats():
            print(f"{spec.label or spec.out_dir}: {s['axis']}={s['value']} mean_w1={s['mean_w1']!r} "
                  f"stderr={s['stderr']!r} ok={s['n_ok']} failed={s['n_failed']}")
        degraded |= res.degraded
    if degraded:
        print("sweep degraded: at least half the runs failed for some value", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_eval_w1(args) -> int:
    from .ot import exact_w1, sliced_w1
    from .rng import make_rng

    a = _points_from(args.a, args.samples, args.seed)
    b = _points_from(args.b, args.samples, args.seed)
    if args.sliced:
        if a.shape[0] != b.shape[0]:
            raise ConfigError("sliced W1 needs equal point counts (use --samples)")
        value = sliced_w1(a, b, args.projections, make_rng(args.seed or 0, "eval"))
    else:
        value = exact_w1(a, b)
    print(repr(value))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .experiments import plot_directory

    for path in plot_directory(args.sweep_dir):
        print(path)
    return EXIT_OK


def cmd_mnist_prep(args) -> int:
    from .data import mnist_load, pca_fit

    images = mnist_load(args.images, args.labels).values
    if images.shape[0] <= args.holdout:
        raise ConfigError(f"holdout: {args.holdout} leaves no training rows out of {images.shape[0]}")
    model = pca_fit(images[:images.shape[0] - args.holdout], args.pca_dim)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "mnist_pca.npz")
    model.save(path)
    kept = model.explained_variance.sum()
    print(f"{images.shape[0]} images of dim {images.shape[1]}; PCA({args.pca_dim}) on "
          f"{images.shape[0] - args.holdout} rows keeps variance {kept:.4f}; wrote {path}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "eval-w1": cmd_eval_w1, "plot": cmd_plot,
            "mnist-prep": cmd_mnist_prep}


def main(argv=None) -> int:
    from .errors import GswganError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG
    if args.threads is not None and args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GswganError, ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
