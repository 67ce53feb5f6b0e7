"""``slstm`` command line: train, param-table, grad-check, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence,
4 check failure.
"""

import argparse
import os
import statistics
import sys
import time


from . import gradcheck, mnist, snapshot
from .cells import Variant, param_count
from .errors import MnistDataError, NumericOverflowError
from .numkit import Activation
from .trainer import NUM_CLASSES, RmspropState, TrainConfig, fit, init_model, train_epoch

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3
EXIT_CHECK_FAILED = 4

VARIANT_CHOICES = [v.value.lower() for v in Variant]
ACTIVATION_CHOICES = ["tanh", "sigmoid", "relu"]
DEFAULT_BENCH_TRAIN_N = 2000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _run_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--variant", choices=VARIANT_CHOICES, default="lstm")
    p.add_argument("--activation", choices=ACTIVATION_CHOICES, default="tanh")
    p.add_argument("--eta", type=_nonneg_float, default=1e-3, help="RMSprop learning rate")
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--batch", type=_positive_int, default=32)
    p.add_argument("--hidden", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-n", type=_nonneg_int, default=0, help="stratified training subset, 0 = all")
    p.add_argument("--test-n", type=_nonneg_int, default=0, help="stratified test subset, 0 = all")
    p.add_argument("--data-dir", default=None, help="MNIST IDX directory (fallback: $SLSTM_DATA_DIR)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--threads", type=_positive_int, default=1)
    return p


def build_parser():
    parser = _Parser(prog="slstm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # separate parent instances: set_defaults on one subcommand must not leak into another
    tr = sub.add_parser("train", parents=[_run_flags()], help="train one variant and write a metrics CSV")
    tr.add_argument("--no-clobber", action="store_true", help="refuse to overwrite an existing CSV")
    tr.add_argument("--record-time", action="store_true",
                    help="fill the CSV seconds column (makes the file run-dependent)")
    tr.add_argument("--save", default=None, help="write a parameter snapshot here after training")

    pt = sub.add_parser("param-table", help="print parameter counts for all variants")
    pt.add_argument("--input-dim", type=_positive_int, default=28)
    pt.add_argument("--hidden", type=_positive_int, default=100)
    pt.add_argument("--output-dim", type=_positive_int, default=NUM_CLASSES)

    gc = sub.add_parser("grad-check", help="analytic vs finite-difference gradient sweep")
    gc.add_argument("--instances", type=_positive_int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--activation", choices=ACTIVATION_CHOICES, action="append", default=None)
    gc.add_argument("--variant", choices=VARIANT_CHOICES, action="append", default=None)
    gc.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    be = sub.add_parser("bench", parents=[_run_flags()], help="time one epoch per variant")
    be.add_argument("--repeats", type=_positive_int, default=3)
    be.set_defaults(train_n=DEFAULT_BENCH_TRAIN_N, epochs=1)
    return parser


def _data_dir(args):
    path = args.data_dir or os.environ.get("SLSTM_DATA_DIR")
    if not path:
        raise MnistDataError("no data directory: pass --data-dir or set SLSTM_DATA_DIR")
    return path


def load_data(args):
    path = _data_dir(args)
    try:
        train = mnist.load_split(path, train=True)
        test = mnist.load_split(path, train=False)
    except FileNotFoundError as exc:
        raise MnistDataError(str(exc)) from exc
    if args.train_n:
        train = mnist.subsample(train, args.train_n, args.seed)
    if args.test_n:
        test = mnist.subsample(test, args.test_n, args.seed)
    return train, test


def _config(args, **overrides):
    kw = dict(variant=args.variant, activation=args.activation, learning_rate=args.eta,
              batch_size=args.batch, epochs=args.epochs, seed=args.seed,
              hidden_dim=args.hidden, threads=args.threads)
    kw.update(overrides)
    return TrainConfig(**kw)


def csv_name(variant, activation, eta):
    return f"{variant}_{activation}_{eta:g}.csv"


def run_train(args, out=None):
    out = out or sys.stdout
    path = os.path.join(args.out_dir, csv_name(args.variant, args.activation, args.eta))
    if args.no_clobber and os.path.exists(path):
        raise UsageError(f"{path} exists and --no-clobber was given")
    os.makedirs(args.out_dir, exist_ok=True)
    train, test = load_data(args)
    cfg = _config(args)
    print(f"# {cfg.variant.value} {args.activation} eta={args.eta:g} train={len(train)} "
          f"test={len(test)} params={param_count(cfg.variant, 28, cfg.hidden_dim, NUM_CLASSES)}",
          file=out)

    def report(r):
        print(f"epoch {r.epoch:3d}  train_loss {r.train_loss:.4f}  train_acc {r.train_acc:.4f}  "
              f"test_loss {r.test_loss:.4f}  test_acc {r.test_acc:.4f}  {r.wall_seconds:.1f}s",
              file=out, flush=True)

    model, log = fit(train, test, cfg, on_epoch=report)
    log.write_csv(path, include_time=args.record_time)
    if args.save:
        snapshot.save(args.save, model.cell, model.head)
    print(f"final test accuracy {log.records[-1].test_acc:.4f}", file=out)
    print(f"best test accuracy {log.best_test_accuracy():.4f}", file=out)
    drops = log.accuracy_drops(0.05)
    if drops:
        print("accuracy drop > 5 points below running max at epoch(s) "
              + ", ".join(map(str, drops)), file=out)
    print(f"wrote {path}", file=out)
    return log


def param_table(input_dim=28, hidden=100, output_dim=NUM_CLASSES):
    return [(v.value, param_count(v, input_dim, hidden, output_dim)) for v in Variant]


def run_param_table(args, out=None):
    out = out or sys.stdout
    for name, count in param_table(args.input_dim, args.hidden, args.output_dim):
        print(f"{name} {count}", file=out)


def run_grad_check(args, out=None):
    out = out or sys.stdout
    acts = [Activation.parse(a) for a in (args.activation or ACTIVATION_CHOICES)]
    variants = [Variant.parse(v) for v in (args.variant or VARIANT_CHOICES)]
    results = gradcheck.sweep(acts, variants, args.instances, args.seed, args.inject_fault)
    print(f"{'variant':<7} {'activation':<9} {'worst_rel_err':>13}  {'n':>3} {'skipped':>7}  status",
          file=out)
    for r in results:
        print(f"{r.variant.value:<7} {r.activation.value:<9} {r.worst:>13.3e}  {r.instances:>3} "
              f"{r.skipped:>7}  {'ok' if r.passed else 'FAIL'}", file=out)
    failed = [r for r in results if not r.passed]
    print(f"tolerance {gradcheck.TOLERANCE:g}: "
          + ("all passed" if not failed else f"{len(failed)} cell(s) failed"), file=out)
    return results


def time_epoch(variant, train, args):
    cfg = _config(args, variant=variant, epochs=1)
    model = init_model(variant, cfg.activation, train.sequences.shape[2], cfg.hidden_dim,
                       NUM_CLASSES, cfg.seed)
    opt = RmspropState(model.arrays(), cfg.rho, cfg.eps)
    t0 = time.perf_counter()
    train_epoch(model, train, cfg, opt, epoch=1)
    return time.perf_counter() - t0


def run_bench(args, out=None):
    out = out or sys.stdout
    train, _ = load_data(args)
    # interleave variants across repeats so drift in machine load hits all equally
    samples = {v: [] for v in Variant}
    for _ in range(args.repeats):
        for v in Variant:
            samples[v].append(time_epoch(v, train, args))
    medians = {v: statistics.median(s) for v, s in samples.items()}
    base = medians[Variant.LSTM]
    print(f"# one epoch, {len(train)} sequences, median of {args.repeats}", file=out)
    for v in Variant:
        ratio = medians[v] / base
        note = "  (slower than 1.2x LSTM)" if v is not Variant.LSTM and ratio > 1.2 else ""
        print(f"{v.value:<6} {medians[v]:8.3f}s  {ratio:5.2f}x{note}", file=out)
    ordering = sorted(Variant, key=lambda v: medians[v])
    print("ordering: " + " < ".join(v.value for v in ordering), file=out)
    ok = medians[Variant.LSTM3] < medians[Variant.LSTM]
    print("LSTM3 faster than LSTM: " + ("yes" if ok else "NO"), file=out)
    return medians, ok


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        if args.command == "train":
            run_train(args)
        elif args.command == "param-table":
            run_param_table(args)
        elif args.command == "grad-check":
            results = run_grad_check(args)
            if not all(r.passed for r in results):
                return EXIT_CHECK_FAILED
        elif args.command == "bench":
            _, ok = run_bench(args)
            if not ok:
                return EXIT_CHECK_FAILED
    except UsageError as exc:
        print(f"slstm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MnistDataError, snapshot.SnapshotError) as exc:
        print(f"slstm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericOverflowError as exc:
        print(f"slstm: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"slstm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
