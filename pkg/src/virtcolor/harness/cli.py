"""``virtcolor`` command line: run, verify, acd, lb, gen, calibrate."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .. import lowerbound as lb
from ..acd import check_acd, compute_acd
from ..embedding import Embedding
from .config import ConfigError, RunConfig
from .generators import KINDS, generate_instance
from .pipeline import RunMetrics, make_context, run_pipeline, verify_run


def _value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def _kv(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = _value(v)
    return out


def _config(args) -> RunConfig:
    data = RunConfig.load(args.config).to_dict() if args.config else {}
    if getattr(args, "kind", None):
        data["kind"] = args.kind
    if getattr(args, "param", None):
        data["instance"] = {**data.get("instance", {}), **_kv(args.param)}
    if getattr(args, "set", None):
        data["overrides"] = {**data.get("overrides", {}), **_kv(args.set)}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.bandwidth is not None:
        data["bandwidth"] = args.bandwidth
    if args.forced_phase:
        data["forced_phase"] = True
    if getattr(args, "emit_transcript", None):
        data["emit_transcript"] = args.emit_transcript
    return RunConfig.from_dict(data)


def _emit(doc, out: str | None) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, sort_keys=True, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _embedding(args, cfg: RunConfig | None) -> Embedding:
    if getattr(args, "embedding", None):
        return Embedding.load(args.embedding)
    if cfg is None:
        raise ConfigError("need --embedding or an instance description")
    return generate_instance(cfg.kind, cfg.instance, cfg.seed, cfg.bandwidth)


# -------------------------------------------------------------- subcommands


def cmd_run(args) -> int:
    cfg = _config(args)
    emb = Embedding.load(args.embedding) if args.embedding else None
    m = run_pipeline(cfg, emb)
    _emit(m.to_json(), args.out)
    if m.error:
        print(f"abort in phase {m.error['phase']} (seed {m.error['seed']}): {m.error['message']}",
              file=sys.stderr)
    return 0 if m.passed else 1


def cmd_verify(args) -> int:
    m = RunMetrics.load(args.metrics)
    cfg = None
    if not args.embedding:
        cfg = RunConfig.load(args.config) if args.config else RunConfig(
            seed=m.seed, kind=m.kind, instance=m.instance, forced_phase=m.forced_phase,
            bandwidth=m.bandwidth)
    emb = _embedding(args, cfg)
    colors = None
    if args.coloring:
        colors = [int(t) for t in Path(args.coloring).read_text().split()]
    code, problems = verify_run(m, emb, colors, args.transcript)
    for p in problems:
        print(p, file=sys.stderr)
    print("verify: ok" if code == 0 else f"verify: {len(problems)} problem(s)")
    return code


def cmd_acd(args) -> int:
    cfg = _config(args)
    emb = _embedding(args, cfg)
    ctx = make_context(emb, cfg.params(), cfg.seed)
    res = compute_acd(ctx)
    doc = res.to_json()
    v = check_acd(emb.H, res, inacc_margin=ctx.params.inacc_margin)
    doc["audit"] = {"ok": v.ok, "failures": v.failures, "ratios": v.ratios}
    doc["rounds"] = int(ctx.engine.round)
    _emit(doc, args.out)
    return 0 if v.ok else 1


def _frac(x: Fraction) -> dict:
    return {"exact": f"{x.numerator}/{x.denominator}", "value": float(x)}


def cmd_lb(args) -> int:
    doc: dict = {"matchings": len(lb.enumerate_matchings()),
                 "pair_frequency": sorted(set(lb.pair_frequency().values())),
                 "error_floor": _frac(lb.ERROR_FLOOR)}
    ok = True
    if args.strategy:
        s = lb.read_strategy(args.strategy)
        e = lb.eval_strategy(s)
        doc["strategy"] = {"name": s.name, "error": _frac(e), "proper_on_own": s.proper_on_own()}
        ok &= e >= lb.ERROR_FLOOR
    if args.suite:
        errs = [lb.eval_strategy(s) for s in lb.strategy_suite(args.seed or 0)]
        doc["suite"] = {"strategies": len(errs), "min_error": _frac(min(errs)),
                        "all_above_floor": all(e >= lb.ERROR_FLOOR for e in errs)}
        ok &= doc["suite"]["all_above_floor"]
    if args.search:
        s, e = lb.local_search(args.seed or 0, steps=args.search)
        doc["search"] = {"steps": args.search, "best_error": _frac(e)}
        if args.write_strategy:
            lb.write_strategy(s, args.write_strategy)
    if args.rounds:
        runs = []
        for k in args.rounds:
            r = lb.lb_round_experiment(k, args.bandwidth, args.seed or 0)
            runs.append(vars(r))
            ok &= r.proper and r.max_color <= 3
        doc["rounds"] = runs
    if args.gadgets:
        inst = lb.build_lb_graphs(args.gadgets, np.zeros(args.gadgets, int), np.zeros(args.gadgets, int),
                                  args.bandwidth)
        doc["graph"] = {"k": args.gadgets, "vertices": inst.emb.H.n, "edges": inst.emb.H.num_edges,
                        "two_regular": lb.is_two_regular(inst.emb.H),
                        "central_trees": inst.central_tree_count(),
                        "network_measure": list(inst.emb.measure("network"))}
    _emit(doc, args.out)
    return 0 if ok else 1


def cmd_gen(args) -> int:
    cfg = _config(args)
    emb = generate_instance(cfg.kind, cfg.instance, cfg.seed, cfg.bandwidth)
    _emit(json.dumps(emb.to_json(), sort_keys=True), args.out)
    return 0


def cmd_calibrate(args) -> int:
    from . import calibrate

    def progress(i, total):
        if i % 20 == 0 or i == total:
            print(f"calibrate: {i}/{total} corpus runs", file=sys.stderr)

    doc = calibrate.calibrate(args.runs, args.fast_runs, progress=progress)
    path = calibrate.write(doc, args.out)
    print(json.dumps(doc["constants"], sort_keys=True))
    print(f"wrote {path}", file=sys.stderr)
    return 0


# ------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser, instance: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bandwidth", type=int, default=None, help="bits per link direction per round")
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--forced-phase", action="store_true", help="desk-scale constants reaching every dense branch")
    p.add_argument("--out", help="write JSON here instead of stdout")
    if instance:
        p.add_argument("--kind", choices=KINDS)
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="instance parameter")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="algorithm parameter override")
        p.add_argument("--embedding", help="embedding JSON file (overrides --kind)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="virtcolor", description="deg+1-coloring of virtual graphs on a simulated network")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the full pipeline and print metrics")
    _common(p)
    p.add_argument("--emit-transcript", metavar="PATH", help="write per-link traffic as NDJSON")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", help="audit a finished run")
    _common(p)
    p.add_argument("metrics", help="metrics JSON written by 'run'")
    p.add_argument("--coloring", help="whitespace-separated colors replacing the recorded ones")
    p.add_argument("--transcript", help="NDJSON transcript to re-sum")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("acd", help="run only the almost-clique decomposition")
    _common(p)
    p.set_defaults(func=cmd_acd)
    p = sub.add_parser("lb", help="lower-bound gadget facts and experiments")
    _common(p, instance=False)
    p.add_argument("--strategy", help="strategy file to evaluate exactly")
    p.add_argument("--suite", action="store_true", help="evaluate the 120-strategy suite")
    p.add_argument("--search", type=int, metavar="STEPS", help="local search for a low-error strategy")
    p.add_argument("--write-strategy", metavar="PATH", help="save the searched strategy")
    p.add_argument("--rounds", type=int, nargs="+", metavar="K", help="run the pipeline on k-gadget graphs")
    p.add_argument("--gadgets", type=int, metavar="K", help="audit the k-gadget embedding")
    p.set_defaults(func=cmd_lb)
    p = sub.add_parser("gen", help="write a generated embedding as JSON")
    _common(p)
    p.set_defaults(func=cmd_gen)
    p = sub.add_parser("calibrate", help="measure and freeze the calibrated constants")
    p.add_argument("--runs", type=int, default=400)
    p.add_argument("--fast-runs", type=int, default=80)
    p.add_argument("--out", help="calibration file (default: $VIRTCOLOR_CALIBRATION or the packaged file)")
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"virtcolor: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
