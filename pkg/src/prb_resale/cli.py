"""Command line: ``prb-resale run|compare|fig3``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, bundled_config_path, parse_config
from .market import MarketClosedError
from .output import write_comparison, write_outputs
from .simulation import Scenario, ScenarioResult, RunMetrics, Scheme, attach_welfare_delta, run_scenario

log = logging.getLogger("prb_resale")

FIG3_DELTA = 1e-7
FIG3_P0 = 1.095


def parse_seeds(text: str) -> list:
    """``"1,2,5"`` or ``"1-5"`` (inclusive), or a mix of both."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if part[0] != "-" else (part, None)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise ValueError("duplicate seeds")
    return seeds


def _load(args):
    path = args.config or bundled_config_path()
    cfg = parse_config(path)
    updates = {}
    for name in ("seed", "slots"):
        v = getattr(args, name, None)
        if v is not None:
            updates[name] = v
    if getattr(args, "scheme", None):
        updates["scheme"] = Scheme(args.scheme)
    try:
        return replace(cfg, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_scenario(cfg, trace_rounds=args.trace_rounds, certify=args.certify)
    baseline = None
    if cfg.scheme is not Scheme.STATIC:
        baseline = run_scenario(cfg.with_scheme(Scheme.STATIC), keep_slots=False)
    attach_welfare_delta(result, baseline)
    write_outputs(result, args.out, "run")
    m = result.metrics
    print(f"{cfg.scheme.value} seed={cfg.seed} slots={cfg.slots}: "
          f"loss {m.loss_amount / 1e9:.3f} Gb ({m.loss_events} events), "
          f"wastage {m.wastage_amount / 1e9:.3f} Gb ({m.wastage_events} events), "
          f"welfare delta {m.welfare_delta:.6g}, nonconverged {m.nonconverged}")
    if args.certify:
        print(f"certified {m.certified}, failed {m.certify_failures}")
    return 0


def _metrics_only(cfg) -> RunMetrics:
    return run_scenario(cfg, keep_slots=False).metrics


def compare_metrics(cfg, seeds, jobs: int = 1) -> dict:
    """Paired runs of all four schemes per seed; welfare deltas against Static."""
    if cfg.gamma is None:
        raise ConfigError("gamma is required because compare includes the future scheme")
    order = [Scheme.FUTURE, Scheme.HEURISTIC, Scheme.STATIC, Scheme.RANDOM]
    jobs_list = [replace(cfg, seed=s, scheme=sch) for s in seeds for sch in order]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            metrics = list(pool.map(_metrics_only, jobs_list))
    else:
        metrics = [_metrics_only(c) for c in jobs_list]
    by_key = {(c.seed, c.scheme): m for c, m in zip(jobs_list, metrics)}
    out = {sch.value: [] for sch in order}
    for s in seeds:
        base = by_key[(s, Scheme.STATIC)].welfare
        for sch in order:
            m = by_key[(s, sch)]
            m.welfare_delta = m.welfare - base
            out[sch.value].append(m)
    return out


def cmd_compare(args) -> int:
    cfg = _load(args)
    seeds = parse_seeds(args.seeds)
    table = compare_metrics(cfg, seeds, args.jobs)
    doc = write_comparison(table, cfg, seeds, args.out)
    print(f"{'scheme':<10} {'loss ev':>9} {'loss Gb':>10} {'waste ev':>9} "
          f"{'waste Gb':>10} {'d welfare':>12}")
    for r in doc["table"]:
        print(f"{r['scheme']:<10} {r['loss_events']:>9.1f} {r['loss_amount_gb']:>10.3f} "
              f"{r['wastage_events']:>9.1f} {r['wastage_amount_gb']:>10.3f} "
              f"{r['welfare_delta']:>12.6g}")
    print("welfare ranking: " + " > ".join(doc["welfare_ranking"]))
    return 0


def run_fig3(cfg) -> ScenarioResult:
    """First slot of a Heuristic run with every bidding round traced."""
    cfg = replace(cfg, scheme=Scheme.HEURISTIC, delta=FIG3_DELTA, p0=FIG3_P0, slots=1,
                  warm_start=False)
    sc = Scenario(cfg)
    metrics = RunMetrics(cfg.scheme.value, cfg.seed, 1, cfg.n_users)
    rows, rounds, auction = sc.step(metrics, trace_rounds=True)
    if auction is None:
        raise MarketClosedError("the first slot has too few buyers or sellers to trade")
    out = ScenarioResult(cfg, metrics, rows, rounds)
    out.auction = auction
    return out


def cmd_fig3(args) -> int:
    cfg = _load(args)
    result = run_fig3(cfg)
    write_outputs(result, args.out, "fig3")
    a = result.auction
    last = result.rounds[-1]
    gap = abs(last.total_demand - last.total_supply) / last.total_supply
    print(f"rounds {a.rounds_used}, converged {a.converged}, final price {a.clearing_price:.6g}, "
          f"demand/supply gap {gap:.3g}")
    return 0 if a.converged else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prb-resale", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-slot warnings")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", type=Path, help="scenario file (default: bundled table1.cfg)")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        if seed:
            sp.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="one scheme, one seed")
    common(run)
    run.add_argument("--scheme", choices=[s.value for s in Scheme])
    run.add_argument("--slots", type=int)
    run.add_argument("--trace-rounds", action="store_true", help="write every bidding round")
    run.add_argument("--certify", action="store_true",
                     help="check each cleared market for profitable unilateral deviations")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="all four schemes over several seeds")
    common(cmp_, seed=False)
    cmp_.add_argument("--seeds", default="1-5", help="e.g. 1,2,3 or 1-5")
    cmp_.add_argument("--slots", type=int)
    cmp_.add_argument("--jobs", type=int, default=1, help="worker processes")
    cmp_.set_defaults(func=cmd_compare)

    fig = sub.add_parser("fig3", help="trace the first slot's price iteration")
    common(fig)
    fig.set_defaults(func=cmd_fig3)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MarketClosedError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
