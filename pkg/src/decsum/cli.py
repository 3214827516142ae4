"""Command-line interface: ``decsum <command> ...``.

Exit codes: 0 success, 2 extraction failure, 3 validation or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bench import sketch_stream, sweep, to_csv
from .core import (DomainError, StreamFormatError, StreamParams, accumulate, exact_sum,
                   parse_function, read_stream, validate_stream, write_stream)
from .estimate import build_s, estimate, median_estimate, universal_ok
from .hashing import substream_rng
from .sigma import SigmaSizeError, sigma_exact, sigma_fast
from .sketch import ExtractionFailed, load_sketch
from .workloads import GENERATORS, generate

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 2, 3


class ValidationError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int
    fn: str | None = None
    eps: float | None = None
    n: int | None = None
    m: int | None = None
    M: int | None = None
    model: str | None = None
    paths: dict[str, str] = field(default_factory=dict)


def resolve_seed(arg: int | None) -> int:
    env = os.environ.get("DECSUM_SEED")
    if env is not None:
        return int(env)
    if arg is not None:
        return arg
    return secrets.randbits(63)


def _model(text: str) -> str:
    return {"t": "turnstile", "turnstile": "turnstile", "i": "insertion",
            "insert": "insertion", "insertion": "insertion"}[text]


def _emit_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _derived_seeds(root: int, purpose: str, count: int) -> list[int]:
    return substream_rng(root, purpose).integers(0, 2**63 - 1, size=count).tolist()


# commands --------------------------------------------------------------------

def cmd_gen(args, cfg: RunConfig) -> int:
    g = parse_function(args.fn) if args.fn else None
    rng = substream_rng(cfg.seed, f"gen:{args.generator}")
    updates = generate(args.generator, rng, args.n, args.m, cfg.model, k=args.k, alpha=args.alpha,
                       g=g, eps=args.eps or 0.2, cancel=args.cancel)
    if args.out:
        write_stream(args.out, updates, n=args.n, m=args.m, model=cfg.model, M=args.M)
    else:
        for d, delta in updates:
            print(d if cfg.model == "insertion" else f"{d} {delta}")
    return EXIT_OK


def cmd_sigma(args, cfg: RunConfig) -> int:
    g = parse_function(args.fn)
    if args.m < args.n and not args.allow_m_below_n:
        raise ValidationError(f"m={args.m} < n={args.n}; pass --allow-m-below-n")
    res = (sigma_exact if args.exact else sigma_fast)(g, args.eps, args.m, args.n)
    _emit_json({"sigma": res.sigma, "witness_y": res.witness_y, "mode": res.mode})
    return EXIT_OK


def _load_stream(path: str, model: str | None, n: int | None, m: int | None, M: int | None):
    sf = read_stream(path)
    model = model or sf.model
    n = n or (int(sf.header["n"]) if "n" in sf.header else None)
    m = m or (int(sf.header["m"]) if "m" in sf.header else None)
    M = M or (int(sf.header["M"]) if "M" in sf.header else None)
    if n is None:
        raise ValidationError("n is neither given nor present in the stream header")
    if m is not None:
        params = StreamParams(n=n, m=m, M=M, model=model, allow_m_below_n=True)
        problems = validate_stream(sf.updates, params)
        if problems:
            raise ValidationError("; ".join(v.message for v in problems[:5]))
    return sf, model, n, m


def cmd_sketch_build(args, cfg: RunConfig) -> int:
    sf, model, n, m = _load_stream(args.input, cfg.model, args.n, args.m, args.M)
    meta = {}
    if args.s is not None:
        s = args.s
    elif args.fn and args.eps and m:
        s = build_s(parse_function(args.fn), args.eps, m, n)
    else:
        raise ValidationError("give -s, or --fn, --eps and m to size the sketch")
    if args.fn and args.eps and m:
        meta = {"fn": args.fn, "eps": args.eps, "m": m}
    sk = sketch_stream(model, n, min(s, n), cfg.seed, sf.updates, meta=meta)
    Path(args.out).write_bytes(sk.to_bytes())
    _emit_json({"model": model, "n": n, "s": sk.s, "levels": sk.ell + 1, "seed": cfg.seed,
                "counters": sk.counters, "out": args.out})
    return EXIT_OK


def cmd_sketch_merge(args, cfg: RunConfig) -> int:
    a = load_sketch(Path(args.a).read_bytes())
    b = load_sketch(Path(args.b).read_bytes())
    try:
        merged = a.merge(b)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    Path(args.out).write_bytes(merged.to_bytes())
    return EXIT_OK


def cmd_sketch_extract(args, cfg: RunConfig) -> int:
    sk = load_sketch(Path(args.sketch).read_bytes())
    sample = sk.extract()
    _emit_json(sample.to_json())
    return EXIT_OK


def cmd_estimate(args, cfg: RunConfig) -> int:
    g = parse_function(args.fn)
    if args.sketch:
        sk = load_sketch(Path(args.sketch).read_bytes())
        meta = sk.meta
        universal = None
        if meta.get("fn") and meta.get("eps") and args.eps:
            universal = universal_ok(g, args.eps, parse_function(meta["fn"]), meta["eps"],
                                     meta["m"], sk.n)
        report = estimate(sk.extract(), g, eps=args.eps, s=sk.s, universal=universal)
        _emit_json(_report_json(report))
        return EXIT_OK
    if not args.input:
        raise ValidationError("estimate needs --sketch or --in")
    sf, model, n, m = _load_stream(args.input, cfg.model, args.n, args.m, args.M)
    if m is None or args.eps is None:
        raise ValidationError("streaming estimate needs -m (or a header) and --eps")
    s = build_s(g, args.eps, m, n)
    reports, failures = [], 0
    for seed in _derived_seeds(cfg.seed, "estimate-reps", args.reps):
        try:
            sample = sketch_stream(model, n, s, seed, sf.updates).extract()
        except ExtractionFailed:
            failures += 1
            continue
        reports.append(estimate(sample, g, eps=args.eps, s=s, universal=True))
    if not reports:
        raise ExtractionFailed(f"all {args.reps} repetitions failed")
    out = _report_json(median_estimate(reports))
    out["reps"], out["failed_reps"] = args.reps, failures
    _emit_json(out)
    return EXIT_OK


def _report_json(report) -> dict:
    return {"value": report.value, "q": report.q, "sample_size": report.sample_size,
            "universal": report.universal, "fn": report.fn, "eps": report.eps, "s": report.s}


def cmd_exact(args, cfg: RunConfig) -> int:
    sf = read_stream(args.input)
    g = parse_function(args.fn)
    fv = accumulate(sf.updates)
    _emit_json({"value": exact_sum(fv, g), "support": len(fv), "l1": fv.l1, "fn": str(g)})
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    seeds = _derived_seeds(cfg.seed, "bench-seeds", args.seeds)
    rows = sweep([_model(x) for x in args.models], args.generators, args.p, args.eps,
                 args.m, args.n, seeds, s=args.s, k=args.k, workers=args.workers)
    text = to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decsum", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, model=True):
        sp.add_argument("--seed", type=int, default=None,
                        help="root seed (DECSUM_SEED overrides; random if unset)")
        if model:
            sp.add_argument("--model", type=_model, default=None,
                            help="t|turnstile or i|insertion")

    g = sub.add_parser("gen", help="generate a stream file")
    common(g)
    g.add_argument("--generator", choices=GENERATORS, required=True)
    g.add_argument("-n", type=int, required=True)
    g.add_argument("-m", type=int, required=True)
    g.add_argument("-M", type=int, default=None)
    g.add_argument("--k", type=int, default=None, help="distinct items (uniform-support, cancel-heavy)")
    g.add_argument("--alpha", type=float, default=1.1, help="zipf exponent")
    g.add_argument("--fn", default=None, help="function for sigma-boundary")
    g.add_argument("--eps", type=float, default=None)
    g.add_argument("--cancel", type=float, default=0.5, help="cancelled fraction (cancel-heavy)")
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gen)

    sg = sub.add_parser("sigma", help="compute sigma(eps, g, m, n)")
    sg.add_argument("--fn", required=True)
    sg.add_argument("--eps", type=float, required=True)
    sg.add_argument("-m", type=int, required=True)
    sg.add_argument("-n", type=int, required=True)
    sg.add_argument("--exact", action="store_true")
    sg.add_argument("--allow-m-below-n", action="store_true")
    sg.set_defaults(func=cmd_sigma, seed=None, model=None)

    sk = sub.add_parser("sketch", help="build, merge or extract sketches")
    sks = sk.add_subparsers(dest="action", required=True)
    b = sks.add_parser("build")
    common(b)
    b.add_argument("-n", type=int, default=None)
    b.add_argument("-s", type=int, default=None)
    b.add_argument("-m", type=int, default=None)
    b.add_argument("-M", type=int, default=None)
    b.add_argument("--fn", default=None)
    b.add_argument("--eps", type=float, default=None)
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_sketch_build)
    mg = sks.add_parser("merge")
    mg.add_argument("a")
    mg.add_argument("b")
    mg.add_argument("--out", required=True)
    mg.set_defaults(func=cmd_sketch_merge, seed=None, model=None)
    ex = sks.add_parser("extract")
    ex.add_argument("sketch")
    ex.set_defaults(func=cmd_sketch_extract, seed=None, model=None)

    e = sub.add_parser("estimate", help="estimate g(f) from a sketch or a stream")
    common(e)
    e.add_argument("--sketch", default=None)
    e.add_argument("--in", dest="input", default=None)
    e.add_argument("--fn", required=True)
    e.add_argument("--eps", type=float, default=None)
    e.add_argument("-n", type=int, default=None)
    e.add_argument("-m", type=int, default=None)
    e.add_argument("-M", type=int, default=None)
    e.add_argument("--reps", type=int, default=1)
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("exact", help="exact g(f) of a stream file")
    x.add_argument("--in", dest="input", required=True)
    x.add_argument("--fn", required=True)
    x.set_defaults(func=cmd_exact, seed=None, model=None)

    bn = sub.add_parser("bench", help="sweep parameters and write CSV")
    common(bn, model=False)
    bn.add_argument("--models", nargs="+", default=["t"])
    bn.add_argument("--generators", nargs="+", default=["uniform-support"], choices=GENERATORS)
    bn.add_argument("--p", nargs="+", type=float, default=[-1.0])
    bn.add_argument("--eps", nargs="+", type=float, default=[0.2])
    bn.add_argument("-m", nargs="+", type=int, default=[4096])
    bn.add_argument("-n", nargs="+", type=int, default=[1024])
    bn.add_argument("--seeds", type=int, default=2)
    bn.add_argument("-s", type=int, default=None, help="override the sketch size parameter")
    bn.add_argument("--k", type=int, default=None)
    bn.add_argument("--workers", type=int, default=1)
    bn.add_argument("--out", default=None)
    bn.set_defaults(func=cmd_bench, model=None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    seed = resolve_seed(getattr(args, "seed", None))
    cfg = RunConfig(args.command, seed, getattr(args, "fn", None), getattr(args, "eps", None),
                    getattr(args, "n", None), getattr(args, "m", None), getattr(args, "M", None),
                    getattr(args, "model", None))
    if args.command in ("gen", "bench") or getattr(args, "action", None) == "build" \
            or (args.command == "estimate" and args.input):
        print(f"seed={seed}", file=sys.stderr)
    if args.command == "gen" and cfg.model is None:
        cfg.model = "turnstile"
    try:
        return args.func(args, cfg)
    except ExtractionFailed as exc:
        print(f"extraction failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValidationError, StreamFormatError, DomainError, SigmaSizeError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
