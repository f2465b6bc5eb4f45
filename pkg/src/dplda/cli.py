"""Command-line front end: ``synth``, ``fit``, ``eval`` and ``sweep``.

Exit codes: 0 success, 2 bad arguments or input files, 3 pipeline failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .corpus import (drop_short, generate_synthetic, load_bow, load_model, random_model,
                     save_bow, save_model)
from .evaluation import (best_splits, dp_loglik, format_split, load_sweep_spec,
                         recovery_error, sweep, sweep_data)
from .exceptions import PipelineError
from .pipeline import BUDGET_SLOTS, ConfigId, fit, split_budget
from .privacy import PrivacyParams

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE = 0, 2, 3

log = logging.getLogger("dplda")

_EDGE_SLOTS = ("e3", "e4", "e6", "e7", "e8", "e9")


class UsageError(ValueError):
    pass


def _build_parser():
    parser = argparse.ArgumentParser(prog="dplda", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a synthetic corpus from a random LDA model")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--alpha0", type=float, required=True)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--doc-len", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concentration", type=float, default=0.1,
                   help="Dirichlet parameter of the topic-word columns")
    p.add_argument("--out", required=True, help="corpus output (sparse bag-of-words)")
    p.add_argument("--out-model", help="ground-truth model output (default: OUT.model)")

    p = sub.add_parser("fit", help="fit a model, optionally under differential privacy")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha0", type=float, required=True)
    p.add_argument("--config", default="none", choices=["none", "1", "2", "3", "4"])
    for slot in _EDGE_SLOTS:
        p.add_argument(f"--eps-{slot}", type=float)
        p.add_argument(f"--delta-{slot}", type=float)
    p.add_argument("--eps1", type=float, help="epsilon for the sigma_k lower bound")
    p.add_argument("--delta1", type=float)
    p.add_argument("--eps1p", type=float, help="epsilon for the eigen-gap lower bound")
    p.add_argument("--delta1p", type=float)
    p.add_argument("--eps", type=float,
                   help="composite epsilon, split evenly over slots not set explicitly")
    p.add_argument("--delta", type=float,
                   help="composite delta when --eps is used, else the per-slot default")
    p.add_argument("--allow-large-epsilon", action="store_true",
                   help="permit per-slot epsilon > 1 in the Gaussian mechanism")
    p.add_argument("--drop-short", action="store_true",
                   help="drop documents with fewer than 3 tokens instead of failing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-ledger")
    p.add_argument("--out-diagnostics")

    p = sub.add_parser("eval", help="score a model against a truth model or a corpus")
    p.add_argument("--model", required=True)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--truth")
    target.add_argument("--corpus")
    p.add_argument("--dp-eps", type=float, default=1.0)
    p.add_argument("--dp-delta", type=float, default=1e-5)
    p.add_argument("--allow-large-epsilon", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="run an epsilon-grid sweep from a key=value spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    return parser


def _budget_from_args(args, config):
    slots = BUDGET_SLOTS[config]
    explicit = {}
    for slot in slots:
        if slot == "sigma_k":
            eps, delta = args.eps1, args.delta1
        elif slot == "gamma_s":
            eps, delta = args.eps1p, args.delta1p
        else:
            eps, delta = getattr(args, f"eps_{slot}"), getattr(args, f"delta_{slot}")
        explicit[slot] = (eps, delta)
    if args.eps is not None:
        if args.delta is None:
            raise UsageError("--eps needs --delta")
        even = split_budget(config, args.eps, args.delta)
        return {s: (e if e is not None else even[s][0], d if d is not None else even[s][1])
                for s, (e, d) in explicit.items()}
    budget = {}
    for slot, (eps, delta) in explicit.items():
        delta = delta if delta is not None else args.delta
        if eps is None or delta is None:
            flag = {"sigma_k": "--eps1/--delta1", "gamma_s": "--eps1p/--delta1p"}.get(
                slot, f"--eps-{slot}/--delta-{slot}")
            raise UsageError(f"config {config} needs {flag} (or --eps and --delta)")
        budget[slot] = (eps, delta)
    return budget


def _cmd_synth(args):
    model = random_model(args.k, args.d, args.alpha0, seed=args.seed,
                         concentration=args.concentration)
    corpus = generate_synthetic(model, args.docs, args.doc_len, seed=args.seed + 1)
    save_bow(corpus, args.out)
    save_model(model, args.out_model or f"{args.out}.model")
    print(f"wrote {corpus.n_docs} documents over {corpus.vocab_size} words to {args.out}")


def _cmd_fit(args):
    config = ConfigId.parse(args.config)
    corpus = load_bow(args.input)
    if args.drop_short:
        corpus, dropped = drop_short(corpus)
        if dropped:
            print(f"dropped {dropped} short documents", file=sys.stderr)
    budget = _budget_from_args(args, config) if config is not ConfigId.NONPRIVATE else None
    report = fit(corpus, args.k, args.alpha0, config, budget, seed=args.seed,
                 allow_large_epsilon=args.allow_large_epsilon)
    save_model(report.model, args.out_model)
    if args.out_ledger:
        Path(args.out_ledger).write_text(report.ledger.to_csv())
    if args.out_diagnostics:
        Path(args.out_diagnostics).write_text(report.diagnostics_text())
    eps, delta = report.ledger.totals
    print(f"config={config} epsilon={eps} delta={delta}")


def _cmd_eval(args):
    model = load_model(args.model)
    if args.truth:
        per_topic, mean = recovery_error(model, load_model(args.truth))
        print(f"mean_error={mean!r}")
        print("per_topic=" + ",".join(repr(float(e)) for e in per_topic))
        return
    params = PrivacyParams(args.dp_eps, args.dp_delta, args.allow_large_epsilon)
    value, charge = dp_loglik(load_bow(args.corpus), model, params, seed=args.seed)
    print(f"dp_loglik={value!r}")
    print(f"charged epsilon={charge.epsilon} delta={charge.delta}")


def _cmd_sweep(args):
    spec = load_sweep_spec(args.spec)
    data = sweep_data(spec)
    rows = sweep(spec, data=data, out=args.out)
    failed = sum(not r.ok for r in rows)
    print(f"wrote {len(rows)} rows to {args.out} ({failed} failed fits)")
    truth_known = data[1] is not None
    for (config, eps), best in sorted(best_splits(rows, truth_known).items(),
                                      key=lambda kv: (kv[0][0].value, kv[0][1])):
        score = (f"mean_error={best.mean_error:.6g}" if truth_known
                 else f"dp_loglik={best.mean_loglik:.6g}")
        print(f"best config={config} eps={eps:g} split={format_split(best.split)} {score}")


_COMMANDS = {"synth": _cmd_synth, "fit": _cmd_fit, "eval": _cmd_eval, "sweep": _cmd_sweep}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
