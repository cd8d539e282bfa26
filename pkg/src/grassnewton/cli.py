"""Command line entry point: ``grassnewton run | compare | props``."""

import argparse
import logging
import sys

from .errors import ConfigError
from .harness import compare, format_summary, load_config, run_experiment
from .solvers import CONVERGED

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _overrides(args):
    return dict(seed=args.seed, retraction=args.retraction, hessian=args.hessian)


def _cmd_run(args):
    cfg = load_config(args.config).with_overrides(**_overrides(args))
    log, result = run_experiment(cfg, out_dir=args.out_dir)
    f = log.final
    print(f"{cfg.solver} on {cfg.model} ({cfg.n_g}x{cfg.n}): {log.status} after {f.n} iterations, "
          f"E = {f.energy:.16e}, |grad_G E|_F = {f.grad_norm:.3e}")
    return EXIT_OK if log.status == CONVERGED else EXIT_FAILED


def _cmd_compare(args):
    cfgs = [load_config(p).with_overrides(**_overrides(args)) for p in args.configs]
    summary = compare(cfgs, out_dir=args.out_dir, workers=args.workers)
    print(format_summary(summary))
    return EXIT_OK if all(s.status == CONVERGED for s in summary) else EXIT_FAILED


def _cmd_props(args):
    from . import props
    results = props.run_all(echo=print)
    passed = sum(c.passed for c in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="grassnewton", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log solver events")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, help="override the initial-guess seed")
        sp.add_argument("--out-dir", help="directory for CSV convergence logs")
        sp.add_argument("--retraction", help="qr | pd | wy | ga-pade2 | ga-pade3 | geodesic")
        sp.add_argument("--hessian", choices=("exact", "approx"), help="Hessian mode")

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("config")
    common(r)
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="run several solvers on one problem")
    c.add_argument("configs", nargs="+")
    c.add_argument("--workers", type=int, default=1, help="concurrent runs")
    common(c)
    c.set_defaults(func=_cmd_compare)

    s = sub.add_parser("props", help="run the acceptance property suite")
    s.set_defaults(func=_cmd_props)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
