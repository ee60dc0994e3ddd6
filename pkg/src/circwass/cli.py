"""``circwass`` command line: dist, label, fuzz, bench and train-toy.

Exit status is 0 on success, 1 for bad input, 2 when a fuzz run finds a
solver outside its tolerance and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import fuzz as fuzz_mod
from .errors import NumericalError, ValidationError
from .ground_metric import GroundMetricSpec, MetricKind, ground_matrix
from .histogram import load_histogram
from .labels import Family, SmoothingSpec, conservative_label
from .oracle import lp_exact, sinkhorn_approx
from .solvers import QuantilePrecision, dispatch_loss
from .toy import NoiseSpec, gen_synthetic, history_to_csv, parse_loss, train_toy

log = logging.getLogger("circwass")

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which we reserve for violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _metric(args) -> GroundMetricSpec:
    kind = MetricKind(args.metric)
    if kind is MetricKind.POWER:
        return GroundMetricSpec.power(args.rho)
    if kind is MetricKind.HUBER:
        return GroundMetricSpec.huber(args.tau)
    return GroundMetricSpec(kind)


def _add_metric_flags(p):
    p.add_argument("--metric", choices=[k.value for k in MetricKind], default="linear")
    p.add_argument("--rho", type=float, default=2.0, help="exponent for --metric power")
    p.add_argument("--tau", type=float, default=1.0, help="threshold for --metric huber")


def cmd_dist(args) -> int:
    s = load_histogram(args.source, normalize=args.normalize)
    t = load_histogram(args.target, normalize=args.normalize)
    spec = _metric(args).with_bins(s.n_bins)
    t0 = time.perf_counter()
    res = dispatch_loss(s.values, t.values, spec, QuantilePrecision(args.precision))
    micros = (time.perf_counter() - t0) * 1e6
    report = {"value": res.value, "solver": res.solver_tag, "alpha_star": res.alpha_star,
              "metric": spec.label, "n_bins": s.n_bins, "micros": micros}
    D = ground_matrix(spec, s.n_bins)
    if args.oracle:
        ref = lp_exact(s.values, t.values, D)[0].value
        report.update(oracle=ref, gap=abs(res.value - ref))
    if args.sinkhorn:
        approx = sinkhorn_approx(s.values, t.values, D)
        report.update(sinkhorn=approx.value, sinkhorn_converged=approx.info["converged"])
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_OK


def cmd_label(args) -> int:
    spec = SmoothingSpec(family=Family(args.family), K=args.K, p=args.p, lam=args.lam,
                         sigma2=args.sigma2, xi=args.xi, eta=args.eta)
    label = conservative_label(args.j, args.N, spec)
    fmt = args.format
    if args.out and args.out.lower().endswith(".csv"):
        fmt = "csv"
    if fmt == "csv":
        # (bin, value) table; load_histogram reads the last column back
        text = "bin,value\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(label.values.tolist()))
    else:
        text = label.histogram.to_json() + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_fuzz(args) -> int:
    solvers = fuzz_mod.SOLVERS if args.solver == "all" else tuple(args.solver.split(","))
    report = fuzz_mod.run_fuzz(args.cases, args.max_n, solvers, args.seed, args.precision, args.workers)
    _emit(json.dumps(report, indent=2), args.out)
    if not report["ok"]:
        log.error("%d case(s) outside tolerance", len(report["violations"]))
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_bench(args) -> int:
    solvers = bench_mod.BENCH_SOLVERS if args.solver == "all" else tuple(
        "linear_circular" if s == "linear" else "convex_circular" if s == "convex"
        else "sinkhorn_approx" if s == "sinkhorn" else "lp_exact" if s == "lp" else s
        for s in args.solver.split(","))
    sizes = tuple(int(n) for n in args.sizes.split(","))
    rows = bench_mod.run_bench(solvers, sizes, args.reps, args.warmup, args.seed, _metric(args),
                               None if args.all_sizes else bench_mod.QUADRATIC_LIMIT)
    _emit(bench_mod.rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    losses = args.compare.split(",") if args.compare else [args.loss]
    noise = NoiseSpec(args.noise_K, args.noise_p, args.outlier_rate)
    chunks, summary = [], {}
    first = True
    for seed in range(args.seed, args.seed + args.seeds):
        data = gen_synthetic(args.N, args.samples, noise, seed=seed)
        ev = gen_synthetic(args.N, args.eval_samples, NoiseSpec(), seed=seed + 10_000)
        for name in losses:
            loss = parse_loss(name, xi=args.xi, eta=args.eta)
            res = train_toy(data, loss, epochs=args.epochs, lr=args.lr, adaptive=args.adaptive, seed=seed,
                            batch_size=args.batch_size or None, optimizer=args.optimizer, eval_data=ev,
                            rounds=args.rounds)
            if args.adaptive:
                for rec in res.history:
                    log.info("%s seed %d epoch %d blend weight %.4g", name, seed, rec.epoch, rec.blend_weight)
            chunks.append(history_to_csv(res.history, {"loss": name, "seed": seed}, header=first))
            first = False
            summary.setdefault(name, []).append(res.history[-1].eval_maad)
    _emit("".join(chunks), args.out)
    table = {name: {"mean_maad": float(np.mean(v)), "per_seed": v} for name, v in summary.items()}
    text = json.dumps(table, indent=2)
    if args.summary:
        Path(args.summary).write_text(text)
    width = max(len(n) for n in table)
    for name, row in table.items():
        print(f"{name:<{width}}  mean MAAD {row['mean_maad']:.3f} deg", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="circwass", description="Exact Wasserstein losses for circular histograms.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dist", help="transport cost between two histogram files")
    p.add_argument("source")
    p.add_argument("target")
    _add_metric_flags(p)
    p.add_argument("--oracle", action="store_true", help="also solve the LP and report the gap")
    p.add_argument("--sinkhorn", action="store_true", help="also report the entropic approximation")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--precision", type=int, default=10**8, help="grid resolution M for convex costs")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("label", help="write a conservative target label")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--family", choices=[f.value for f in Family], default="binomial")
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--out", help="file to write; a .csv suffix gives a (bin, value) table")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("fuzz", help="compare closed-form solvers with the LP on random inputs")
    p.add_argument("--cases", type=int, default=500)
    p.add_argument("--max-n", type=int, default=16)
    p.add_argument("--solver", default="all", help="all or a comma list of " + ",".join(fuzz_mod.SOLVERS))
    p.add_argument("--precision", type=int, default=10**6)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("bench", help="time solvers across bin counts, CSV output")
    p.add_argument("--solver", default="all", help="all or a comma list of linear,convex,sinkhorn,lp")
    p.add_argument("--sizes", default=",".join(map(str, bench_mod.DEFAULT_SIZES)))
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--all-sizes", action="store_true",
                   help=f"also run sinkhorn and lp above N={bench_mod.QUADRATIC_LIMIT}")
    _add_metric_flags(p)
    p.set_defaults(metric="power")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-toy", help="train the toy classifier on synthetic circular data")
    p.add_argument("--loss", default="wass-power2-binomial",
                   help="ce[-family] or wass-<metric>[-family], e.g. wass-huber2-poisson")
    p.add_argument("--compare", help="comma list of losses to run on the same data and seeds")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--N", type=int, default=36)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--eval-samples", type=int, default=2000)
    p.add_argument("--noise-K", type=int, default=10)
    p.add_argument("--noise-p", type=float, default=0.5)
    p.add_argument("--outlier-rate", type=float, default=0.05)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=128, help="0 for full batch")
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--rounds", type=int, default=10, help="epochs over which the blend weight goes 10 -> 0")
    p.add_argument("--out", help="history CSV (stdout if omitted)")
    p.add_argument("--summary", help="write the per-loss MAAD summary as JSON")
    p.set_defaults(func=cmd_train_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or getattr(args, "adaptive", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
