"""Command-line front end.

Four commands: price (sub/super hedging with duals), ftap (pricing
consistency certificate, robust variant when the model carries
kernels), verify (the randomized property campaign), and enlarge-dump
(the enlarged space as JSON).  All reports are deterministic JSON:
identical model, seed, and flags produce byte-identical bytes.

Exit codes: 0 success, 2 domain-level no-arbitrage failure, 3
enumeration cap breached, 4 schema or usage error, 5 property
violation (an internal cross-check failed, i.e. a bug).
"""
from __future__ import annotations

import argparse
import json
import sys

from .campaign import run_campaign
from .enlarged import enlarge
from .errors import CapExceededError, ModelFormatError, PropertyViolation, SnaFailure
from .hedging import detect_arbitrage, subhedge, superhedge
from .market import MarketModel, load_model
from .measures import dual_subhedge, dual_superhedge, ftap_certificate
from .rationals import ZERO, rat, rat_str
from .robust import (
    build_robust,
    enlarge_robust,
    robust_ftap,
    robust_subhedge,
    robust_superhedge_full,
)
from .strategies import DEFAULT_ENUM_CAP

EXIT_OK = 0
EXIT_SNA = 2
EXIT_CAP = 3
EXIT_SCHEMA = 4
EXIT_PROPERTY = 5


class _Parser(argparse.ArgumentParser):
    # usage problems are schema errors, not domain outcomes
    def error(self, message):
        self.exit(EXIT_SCHEMA, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="amhedge", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True, help="model JSON file")
            p.add_argument("--gamma-override", action="append", default=[],
                           metavar="K=P/Q", help="replace bid K of the shorted asks")
        p.add_argument("--cap", type=int, default=DEFAULT_ENUM_CAP,
                       help="stopping-time enumeration cap")
        p.add_argument("--clock-weights", choices=["uniform", "skewed"],
                       default="uniform", help="reference clock profile")
        p.add_argument("--seed", type=int, default=0, help="echoed into the report")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--pretty", action="store_true",
                       help="indent the JSON and add a text summary on stderr")

    p_price = sub.add_parser("price", help="sub/super hedging price with its dual")
    p_price.add_argument("--side", choices=["sub", "super"], required=True)
    common(p_price)

    p_ftap = sub.add_parser("ftap", help="strict no-arbitrage certificate")
    common(p_ftap)

    p_verify = sub.add_parser("verify", help="randomized property campaign")
    p_verify.add_argument("--models", type=int, default=50,
                          help="size of the main corpus")
    common(p_verify, model=False)

    p_dump = sub.add_parser("enlarge-dump", help="emit the enlarged space as JSON")
    p_dump.add_argument("--side", choices=["sub", "super"], default="sub",
                        help="sub: n = N, super: n = N + 1")
    common(p_dump)
    return parser


# -- plumbing -------------------------------------------------------------------


def _load(args) -> MarketModel:
    try:
        with open(args.model, "rb") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file: {exc}") from exc
    model = load_model(text)
    if args.gamma_override:
        gammas = [c for _, c in model.americans_short]
        for item in args.gamma_override:
            try:
                key, _, value = item.partition("=")
                k = int(key)
                gammas[k] = rat(value)
            except (ValueError, IndexError) as exc:
                raise ModelFormatError(f"bad --gamma-override {item!r}: {exc}") from exc
        model = model.with_prices(gammas=gammas)
    return model


def _config(args) -> dict:
    doc = {
        "command": args.command,
        "cap": args.cap,
        "clock_weights": args.clock_weights,
        "seed": args.seed,
    }
    if hasattr(args, "model"):
        doc["model"] = args.model
        doc["gamma_overrides"] = list(args.gamma_override)
    if hasattr(args, "side"):
        doc["side"] = args.side
    if hasattr(args, "models"):
        doc["corpus"] = args.models
    return doc


def _emit(doc: dict, args) -> None:
    if args.pretty:
        body = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    else:
        body = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)


def _say(args, message: str) -> None:
    if args.pretty:
        print(message, file=sys.stderr)


# -- commands -------------------------------------------------------------------


def cmd_price(args) -> int:
    model = _load(args)
    if args.cap <= 0:
        raise ModelFormatError("--cap must be positive")
    n = model.N if args.side == "sub" else model.N + 1
    doc = _config(args)
    doc["n"] = n
    if model.kernels:
        rm = build_robust(model)
        renl = enlarge_robust(rm, n, args.clock_weights)
        if args.side == "sub":
            report = robust_subhedge(renl, cap=args.cap)
        else:
            report = robust_superhedge_full(renl, cap=args.cap)
        doc["quasi_sure"] = True
        doc["supported_paths"] = len(renl.supported_paths)
        doc["report"] = report.to_json(renl.enl)
        doc["price"] = rat_str(report.price)
        doc["gap"] = rat_str(report.gap)
    else:
        enl = enlarge(model, n, args.clock_weights)
        if args.side == "sub":
            report = subhedge(enl)
            dual = dual_subhedge(enl, cap=args.cap)
        else:
            report = superhedge(enl)
            dual = dual_superhedge(enl, cap=args.cap)
        if report.price != dual.value:
            raise PropertyViolation(
                f"{args.side}-hedge duality gap: "
                f"{rat_str(report.price)} vs {rat_str(dual.value)}")
        report.gap = ZERO
        report.dual_ref = dual.to_json(enl)
        doc["quasi_sure"] = False
        doc["report"] = report.to_json(enl)
        doc["price"] = rat_str(report.price)
        doc["gap"] = rat_str(ZERO)
    _emit(doc, args)
    _say(args, f"{args.side}-hedging price {doc['price']} (duality gap {doc['gap']})")
    return EXIT_OK


def cmd_ftap(args) -> int:
    model = _load(args)
    if args.cap <= 0:
        raise ModelFormatError("--cap must be positive")
    enl = enlarge(model, model.N, args.clock_weights)
    holds, cert = ftap_certificate(enl, cap=args.cap)
    doc = _config(args)
    doc["n"] = model.N
    doc["classical"] = {
        "holds": holds,
        "epsilon": rat_str(cert.slack) if cert.slack is not None else None,
        "certificate": cert.to_json(enl),
        "enodes": len(enl.enodes),
        "paths": enl.num_paths,
    }
    if not holds:
        arb = detect_arbitrage(enl)
        doc["classical"]["arbitrage"] = arb.to_json(enl)
    verdict = holds
    if model.kernels:
        rm = build_robust(model)
        renl = enlarge_robust(rm, model.N, args.clock_weights)
        rf = robust_ftap(renl, cap=args.cap)
        doc["robust"] = {
            "holds": rf.holds,
            "epsilon": rat_str(rf.epsilon) if rf.epsilon is not None else None,
            "selectors": rm.num_selectors(),
            "supported_paths": len(renl.supported_paths),
        }
        verdict = rf.holds
    _emit(doc, args)
    which = "robust" if model.kernels else "classical"
    eps = doc.get("robust", doc["classical"])["epsilon"]
    _say(args, f"{which} strict no-arbitrage "
               f"{'holds' if verdict else 'fails'} (slack {eps})")
    return EXIT_OK if verdict else EXIT_SNA


def cmd_verify(args) -> int:
    if args.cap <= 0 or args.models <= 0:
        raise ModelFormatError("--cap and --models must be positive")
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.pretty else None
    report = run_campaign(args.seed, models=args.models, cap=args.cap,
                          progress=progress)
    doc = _config(args)
    doc["campaign"] = report
    _emit(doc, args)
    counts = ", ".join(f"{k}={v}" for k, v in sorted(report["counts"].items()))
    _say(args, f"campaign ok: {counts}; strict chain gaps {report['strict_chain_gaps']}")
    return EXIT_OK


def cmd_enlarge_dump(args) -> int:
    model = _load(args)
    n = model.N if args.side == "sub" else model.N + 1
    enl = enlarge(model, n, args.clock_weights)
    doc = _config(args)
    doc["n"] = n
    doc["horizon"] = enl.horizon
    doc["enodes"] = [
        {
            "label": node.label,
            "base": node.base,
            "time": node.time,
            "status": ["*" if s is None else s for s in node.status],
        }
        for node in enl.enodes
    ]
    doc["children"] = {
        enl.enode(v).label: [enl.enode(c).label for c in kids]
        for v, kids in sorted(enl.children.items())
    }
    doc["roots"] = [enl.enode(r).label for r in enl.roots]
    doc["paths"] = [
        {
            "label": ep.label,
            "base_leaf": model.tree.paths[ep.base_index][-1],
            "clocks": list(ep.clocks),
            "nodes": [enl.enode(v).label for v in ep.node_seq],
            "weight": rat_str(enl.weight(i)),
        }
        for i, ep in enumerate(enl.epaths)
    ]
    doc["clock_dist"] = {
        ",".join(map(str, tup)): rat_str(w) for tup, w in sorted(enl.clock_dist.items())
    }
    _emit(doc, args)
    _say(args, f"enlarged space: n={n}, {len(enl.enodes)} nodes, {enl.num_paths} paths")
    return EXIT_OK


_COMMANDS = {
    "price": cmd_price,
    "ftap": cmd_ftap,
    "verify": cmd_verify,
    "enlarge-dump": cmd_enlarge_dump,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ModelFormatError as exc:
        print(f"amhedge: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except CapExceededError as exc:
        print(f"amhedge: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except SnaFailure as exc:
        print(f"amhedge: no-arbitrage failure: {exc}", file=sys.stderr)
        return EXIT_SNA
    except PropertyViolation as exc:
        print(f"amhedge: property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
