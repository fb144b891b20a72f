"""Command-line entry point: ``armpg {train,sweep,verify,bernoulli-demo}``.

Exit codes: 0 success, 1 failed verification or run, 2 usage / config error.
Progress goes to stderr; results go to files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bernoulli, verify
from .envs import ENV_IDS
from .estimators import ESTIMATORS
from .harness import (
    ADVANTAGE_METHODS, BATCH_SIZES, SWEEP_ITERATIONS, ConfigError, TrainConfig, TrainingDiverged,
    default_output_root, final_window_return, parse_config_text, sweep, train,
)
from .kernels import BACKEND
from .sampling import RngStream

log = logging.getLogger("armpg")

# flag -> TrainConfig field
TRAIN_FLAGS = {
    "env": dict(choices=ENV_IDS),
    "horizon": dict(type=int),
    "estimator": dict(choices=ESTIMATORS),
    "advantage": dict(choices=ADVANTAGE_METHODS),
    "batch_size": dict(type=int),
    "total_steps": dict(type=int),
    "policy_lr": dict(type=float),
    "critic_lr": dict(type=float),
    "gamma": dict(type=float),
    "lam": dict(type=float),
    "seed": dict(type=int),
    "clip": dict(type=float),
    "critic_epochs": dict(type=int),
    "critic_minibatch": dict(type=int),
    "critic_first": dict(choices=("true", "false")),
    "hidden": dict(type=str),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_train_flags(p):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    for name, kw in TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)
    p.add_argument("--out", type=Path, help="output directory")


def build_parser():
    parser = _Parser(prog="armpg", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    quiet = argparse.ArgumentParser(add_help=False)
    quiet.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("train", parents=[quiet], help="train one policy")
    _add_train_flags(p)

    p = sub.add_parser("sweep", parents=[quiet], help="batch-size, learning-rate or seed sweeps")
    _add_train_flags(p)
    p.add_argument("--axis", choices=("batch", "lr", "seeds"), required=True)
    p.add_argument("--sizes", type=_int_list, default=list(BATCH_SIZES))
    p.add_argument("--seeds", type=_int_list, default=list(range(5)))
    p.add_argument("--estimators", default=None, help="comma-separated, default: the config's estimator")
    p.add_argument("--iterations", type=int, default=SWEEP_ITERATIONS, help="iterations per batch-size run")
    p.add_argument("--lr-draws", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("verify", parents=[quiet], help="run the oracle and identity suites")
    p.add_argument("--out", type=Path, help="directory for the CSV reports")
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    p.add_argument("--suite", action="append", choices=tuple(verify.SUITES), help="run only these suites")

    p = sub.add_parser("bernoulli-demo", parents=[quiet], help="ARM vs REINFORCE on a random binary objective")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    return parser


def _resolve_config(args) -> TrainConfig:
    values = {}
    if args.config is not None:
        try:
            values.update(parse_config_text(args.config.read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for name in TRAIN_FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    if args.out is not None:
        values["out_dir"] = str(args.out)
    return TrainConfig.from_mapping(values)


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir) if cfg.out_dir else default_output_root() / f"{cfg.env}-{cfg.estimator}-s{cfg.seed}"
    log.info("training %s/%s seed %d for %d iterations (kernels: %s) -> %s",
             cfg.env, cfg.estimator, cfg.seed, cfg.iterations, BACKEND, out)
    try:
        res = train(dataclasses.replace(cfg, out_dir=str(out)), progress=True)
    except TrainingDiverged as exc:
        log.error("run aborted: %s", exc)
        return 1
    log.info("done: final 10-iteration mean return %.2f", final_window_return(res.metrics, 10))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir) if cfg.out_dir else default_output_root() / f"sweep-{args.axis}"
    cfg = dataclasses.replace(cfg, out_dir=None)
    names = [e.strip() for e in args.estimators.split(",")] if args.estimators else None
    for n in names or []:
        if n not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {', '.join(ESTIMATORS)}; got {n!r}")
    kw = {"seeds": args.seeds}
    if args.axis == "batch":
        kw.update(sizes=args.sizes, iterations=args.iterations)
    elif args.axis == "lr":
        kw.update(lr_draws=args.lr_draws)
    rows = sweep(cfg, args.axis, out, estimators=names, jobs=args.jobs, **kw)
    failed = [r for r in rows if r["status"] != "ok"]
    log.info("sweep finished: %d runs, %d failed -> %s", len(rows), len(failed), out)
    return 0


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _cmd_verify(args) -> int:
    results = verify.run_all(args.suite, quick=args.quick)
    width = max(len(r.name) for r in results)
    print(f"{'suite':<{width}}  result  seconds  detail")
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:7.2f}  {r.detail}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_csv(args.out / "summary.csv", ("suite", "passed", "seconds", "detail"),
                   [(r.name, r.passed, r.seconds, r.detail) for r in results])
        for r in results:
            if r.rows:
                _write_csv(args.out / f"{r.name}.csv", r.header, r.rows)
    return 0 if all(r.passed for r in results) else 1


def _cmd_bernoulli(args) -> int:
    if not 1 <= args.dim <= bernoulli.MAX_ORACLE_DIM or args.samples < 2:
        raise ConfigError(f"dim must be in [1, {bernoulli.MAX_ORACLE_DIM}] and samples >= 2")
    rng = RngStream(args.seed, 0)
    f = bernoulli.BinaryObjective(args.dim, table=rng.uniform(-1.0, 1.0, size=2**args.dim))
    phis = rng.uniform(-2.0, 2.0, size=args.dim)
    exact = bernoulli.exact_grad_bruteforce(phis, f)
    rows = []
    for k, name in enumerate(("arm", "reinforce")):
        probe = bernoulli.variance_probe(phis, f, name, args.samples, RngStream(args.seed, 1 + k))
        for i in range(args.dim):
            rows.append((0, name, i, exact[i], probe.mean[i], probe.stderr[i], probe.var[i]))
    header = ("instance", "estimator", "component", "oracle", "mean", "stderr", "variance")
    print(f"{'est':<10} {'comp':>4} {'oracle':>10} {'mean':>10} {'stderr':>9} {'variance':>10}")
    for r in rows:
        print(f"{r[1]:<10} {r[2]:>4} {r[3]:>10.5f} {r[4]:>10.5f} {r[5]:>9.2e} {r[6]:>10.3e}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_csv(args.out / "bernoulli.csv", header, rows)
    return 0


COMMANDS = {"train": _cmd_train, "sweep": _cmd_sweep, "verify": _cmd_verify, "bernoulli-demo": _cmd_bernoulli}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(message)s")
    started = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"armpg: config error: {exc}", file=sys.stderr)
        return 2
    log.debug("elapsed %.1fs", time.perf_counter() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
