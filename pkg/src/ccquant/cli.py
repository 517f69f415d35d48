"""Command-line entry point.

Every failure prints exactly one line to stderr of the form
``ccquant: error: <kind>: <message>`` and exits non-zero: 2 for usage
errors (bad flags, invalid values, missing input files), 1 for anything that
fails after work has started.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import data as datamod
from .harness.files import load_domain, load_network, save_domain, save_genome, save_network
from .harness.floatnet import FloatNetwork, TrainingFailed, float_accuracy, train_float_reference
from .harness.initial import quantize_network, switch_perturb
from .harness.pipeline import (
    ALGORITHMS,
    OUTPUT_ENV,
    ExperimentConfig,
    default_output_dir,
    load_config,
    optimize,
    parse_topology,
    run_experiment,
    save_config,
)
from .optimizers import read_curve
from .qnet import QuantNetwork, apply_genome, fitness

PROG = "ccquant"


class UsageError(Exception):
    pass


class _NoDefaults:
    def __getattr__(self, name):
        return None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_search_flags(p, with_defaults=True):
    # without defaults, unset flags leave a loaded config file untouched
    d = ExperimentConfig() if with_defaults else _NoDefaults()
    p.add_argument("--algo", choices=ALGORITHMS, default=d.algo)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--budget", type=int, default=d.budget, help="maximum fitness evaluations")
    p.add_argument("--threshold", type=float, default=d.threshold, help="stop once accuracy exceeds this")
    p.add_argument("--beta-lo", type=float, default=d.beta_lo)
    p.add_argument("--beta-hi", type=float, default=d.beta_hi)
    p.add_argument("--sigma", type=float, default=d.sigma)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--gens", type=int, default=d.gens, help="generations per cycle")
    p.add_argument("--pop", type=int, default=d.pop, help="population size")
    p.add_argument("--elite", type=int, default=d.elite, help="individuals used to update the model")
    p.add_argument("--ga-crossover", type=float, default=d.ga_crossover)
    p.add_argument("--ga-tournament", type=int, default=d.ga_tournament)
    p.add_argument("--ga-mutation", type=float, default=d.ga_mutation, help="default 1/n")
    p.add_argument("--jobs", type=int, default=d.jobs, help="parallel fitness evaluators")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Gradient-free training of quantized networks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    d = ExperimentConfig()

    p = sub.add_parser("train-float", help="train a float reference network")
    p.add_argument("--data", required=True, help="dataset file or generator spec")
    p.add_argument("--topology", default=d.topology)
    p.add_argument("--epochs", type=int, default=d.float_epochs)
    p.add_argument("--lr", type=float, default=d.float_lr)
    p.add_argument("--batch", type=int, default=d.float_batch)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True)

    p = sub.add_parser("quantize", help="quantize a float network")
    p.add_argument("--net", required=True)
    p.add_argument("--bits", type=int, default=d.bits)
    p.add_argument("--activation-bits", type=int, default=None, help="default: same as --bits")
    p.add_argument("--out", required=True)

    p = sub.add_parser("switch", help="perturb a fraction of codes and emit the binary search domain")
    p.add_argument("--net", required=True)
    p.add_argument("--s", type=float, default=d.switch, help="fraction of parameters to perturb")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True)
    p.add_argument("--domain-out", required=True)

    p = sub.add_parser("optimize", help="search the domain for a better quantized network")
    p.add_argument("--net", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", default=None, help=f"default: ${OUTPUT_ENV} or ./runs")
    _add_search_flags(p)

    p = sub.add_parser("eval", help="accuracy of a network on a dataset")
    p.add_argument("--net", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("report", help="summary table and curve data for run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--curve-out", default=None, help="write combined curve CSV here instead of stdout")

    p = sub.add_parser("run", help="full pipeline from a config file and/or flags")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--topology", default=None)
    p.add_argument("--bits", type=int, default=None)
    p.add_argument("--switch", type=float, default=None)
    p.add_argument("--float-epochs", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    _add_search_flags(p, with_defaults=False)
    return parser


def _search_config(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    for key in ("algo", "seed", "budget", "threshold", "beta_lo", "beta_hi", "sigma", "alpha", "gens",
                "pop", "elite", "ga_crossover", "ga_tournament", "ga_mutation", "jobs"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _require_file(path):
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")


def _check_data_arg(spec):
    if Path(spec).is_file():
        return
    try:
        datamod.parse_spec(spec)
    except ValueError as exc:
        raise UsageError(f"--data {spec!r} is neither a file nor a valid generator spec ({exc})") from None


def _load_kind(path, kind):
    net = load_network(path)
    if not isinstance(net, kind):
        raise UsageError(f"{path} does not hold a {'float' if kind is FloatNetwork else 'quantized'} network")
    return net


def cmd_train_float(args):
    _check_data_arg(args.data)
    try:
        layers = parse_topology(args.topology)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.epochs < 0 or args.lr <= 0 or args.batch < 1:
        raise UsageError("epochs must be >= 0, lr > 0 and batch >= 1")
    train = datamod.load_dataset(args.data)
    fnet = train_float_reference(layers, train, args.epochs, args.lr, args.seed, args.batch)
    save_network(fnet, args.out)
    print(f"train_accuracy {float_accuracy(fnet, train):.6f}")


def cmd_quantize(args):
    _require_file(args.net)
    if args.bits < 1 or (args.activation_bits is not None and args.activation_bits < 1):
        raise UsageError("bit widths must be >= 1")
    fnet = _load_kind(args.net, FloatNetwork)
    qnet = quantize_network(fnet, args.bits, args.activation_bits)
    save_network(qnet, args.out)
    print(f"params {qnet.n_params} levels {','.join(str(len(cb)) for cb in qnet.codebooks)}")


def cmd_switch(args):
    _require_file(args.net)
    if not 0.0 <= args.s <= 1.0:
        raise UsageError("--s must be in [0, 1]")
    qnet = _load_kind(args.net, QuantNetwork)
    perturbed, domain = switch_perturb(qnet, args.s, args.seed)
    save_network(perturbed, args.out)
    save_domain(domain, args.domain_out)
    print(f"perturbed {int((perturbed.codes != qnet.codes).sum())} of {qnet.n_params}")


def cmd_optimize(args):
    cfg = _search_config(args)
    if args.out_dir is None:
        cfg.out_dir = default_output_dir()
    _require_file(args.net)
    _require_file(args.domain)
    _check_data_arg(args.data)
    net = _load_kind(args.net, QuantNetwork)
    domain = load_domain(args.domain)
    train = datamod.load_dataset(args.data)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in cfg.to_dict().items() if k not in ("topology", "data", "bits", "activation_bits",
                                                                "switch", "float_epochs", "float_lr",
                                                                "float_batch")}
    echo.update(net=str(args.net), domain=str(args.domain), data=str(args.data))
    print(json.dumps(echo, sort_keys=True))
    (out / "config.json").write_text(json.dumps(echo, indent=1, sort_keys=True) + "\n")

    best, record = optimize(net, domain, train, cfg)
    final = apply_genome(domain, best, net)
    record.write_curve(out / "curve.csv")
    save_network(final, out / "final.qnet")
    save_network(final, out / "final.qnetb")
    save_genome(best, out / "best_genome.txt")
    summary = {
        "algo": cfg.algo,
        "seed": cfg.seed,
        "initial_train_accuracy": fitness(net, train),
        "final_train_accuracy": fitness(final, train),
        "fitness_evals": record.evals_used,
        "truncated": record.truncated,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(f"final_train_accuracy {summary['final_train_accuracy']:.6f} evals {record.evals_used}")


def cmd_eval(args):
    _require_file(args.net)
    _check_data_arg(args.data)
    net = load_network(args.net)
    data = datamod.load_dataset(args.data)
    acc = fitness(net, data) if isinstance(net, QuantNetwork) else float_accuracy(net, data)
    print(f"accuracy {acc:.6f}")


def cmd_report(args):
    rows, curves = [], []
    for run in args.runs:
        d = Path(run)
        if not (d / "summary.json").is_file() or not (d / "curve.csv").is_file():
            raise UsageError(f"{run} is not a run directory (needs summary.json and curve.csv)")
        s = json.loads((d / "summary.json").read_text())
        rows.append((run, s))
        for r in read_curve(d / "curve.csv"):
            curves.append({"run": run, **r})
    keys = ["algo", "seed", "initial_train_accuracy", "final_train_accuracy", "final_test_accuracy",
            "fitness_evals"]
    print("run\t" + "\t".join(keys))
    for run, s in rows:
        cells = []
        for k in keys:
            v = s.get(k, "")
            cells.append(f"{v:.4f}" if isinstance(v, float) else str(v))
        print(f"{run}\t" + "\t".join(cells))
    cols = ["run", "generation", "evals", "best_fitness", "pop_best_fitness", "cycle", "beta"]
    lines = [",".join(cols)] + [",".join(str(c[k]) for k in cols) for c in curves]
    if args.curve_out:
        Path(args.curve_out).write_text("\n".join(lines) + "\n")
    else:
        print()
        print("\n".join(lines))


def cmd_run(args):
    base = ExperimentConfig()
    if args.config:
        _require_file(args.config)
        try:
            base = load_config(args.config)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"bad config file {args.config}: {exc}") from None
    for key in ("data", "topology", "bits", "switch", "float_epochs"):
        v = getattr(args, key)
        if v is not None:
            setattr(base, key, v)
    if args.bits is not None:
        base.activation_bits = args.bits
    cfg = _search_config(args, base)
    _check_data_arg(cfg.data)
    summary = run_experiment(cfg)
    for k, v in summary.items():
        print(f"{k} {v}")


COMMANDS = {
    "train-float": cmd_train_float,
    "quantize": cmd_quantize,
    "switch": cmd_switch,
    "optimize": cmd_optimize,
    "eval": cmd_eval,
    "report": cmd_report,
    "run": cmd_run,
}


def _fail(kind, message, code):
    first = str(message).strip().splitlines()[0] if str(message).strip() else kind
    print(f"{PROG}: error: {kind}: {first}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except datamod.DatasetParseError as exc:
        return _fail("parse", exc, 1)
    except TrainingFailed as exc:
        return _fail("training-failed", exc, 1)
    except OSError as exc:
        return _fail("io", exc, 1)
    except ValueError as exc:
        return _fail("invalid-argument", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
