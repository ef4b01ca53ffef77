"""Command-line entry point: analyze, periodic, floating, sweep, generate.

Exit status is 0 on success, 2 on a configuration or input error and 1 on an
internal failure. The default output directory comes from ``PUSHTRACK_OUT``
(falling back to ``./pushtrack-out``).

Replication ``r`` of a run with base seed ``s`` uses ``replication_seed(s, r)``
for participation sampling and controller randomness, and starts its first
message at ``r * T / 10``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .contacts import (DEFAULT_RANGE, ContactTrace, dataset_stats, derive_contacts, load_contacts,
                       subsample_contacts)
from .controller import ConfigError, WhenStrategy, WhomStrategy
from .engine import CONTENT_SIZE, CONTROL_SIZE, LinkSpec, SimulationError
from .metrics import RunReport, export
from .mobility import Bounds, MobilityTrace, SyntheticConfig, TraceError, dump_trace, generate_synthetic, load_trace, subsample
from .scenarios import FloatingConfig, Mode, PeriodicConfig, replication_seed, run_floating, run_periodic

OUT_ENV = "PUSHTRACK_OUT"
DEFAULT_OUT = "pushtrack-out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- argument groups -----------------------------------------------------------

def _add_trace_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input trace (pick one; default is a synthetic trace)")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--trace", help="waypoint CSV (node_id,time_s,x_m,y_m)")
    src.add_argument("--contacts", help="contact CSV (node_a,node_b,start_s,end_s); no positions available")
    g.add_argument("--participation", type=float, default=1.0, help="fraction of nodes taking part [0,1]")
    g.add_argument("--range", type=float, default=DEFAULT_RANGE, help="contact range in metres")
    g.add_argument("--sample-step", type=float, default=1.0, help="contact sampling step in seconds")
    _add_synthetic_args(p)


def _add_synthetic_args(p: argparse.ArgumentParser) -> None:
    d = SyntheticConfig()
    g = p.add_argument_group("synthetic trace")
    g.add_argument("--area", type=float, nargs=2, default=(d.bounds.width, d.bounds.height),
                   metavar=("W", "H"), help="area size in metres")
    g.add_argument("--arrival-rate", type=float, default=d.arrival_rate, help="node arrivals per second")
    g.add_argument("--mean-transit", type=float, default=d.mean_transit, help="mean time in area (s)")
    g.add_argument("--speed", type=float, nargs=2, default=d.speed_range, metavar=("MIN", "MAX"))
    g.add_argument("--horizon", type=float, default=d.horizon, help="trace length (s)")
    g.add_argument("--initial-nodes", type=int, default=d.initial_nodes)
    g.add_argument("--trace-seed", type=int, default=None, help="generator seed (default: --seed)")


def _add_link_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("links and timers")
    g.add_argument("--adhoc-rate", type=float, default=1e6, help="bytes/s")
    g.add_argument("--down-rate", type=float, default=1e5, help="infrastructure downlink bytes/s")
    g.add_argument("--up-rate", type=float, default=1e4, help="infrastructure uplink bytes/s")
    g.add_argument("--size", type=int, default=CONTENT_SIZE, help="content size in bytes")
    g.add_argument("--control-size", type=int, default=CONTROL_SIZE, help="control message size in bytes")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--replications", type=int, default=1)
    g.add_argument("--workers", type=int, default=1, help="parallel processes")
    g.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    g.add_argument("--format", choices=("json", "csv-bundle", "both"), default="json")


def _add_periodic_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("periodic flooding")
    g.add_argument("--period", type=float, default=60.0, help="message lifetime T (s)")
    g.add_argument("--delta-t", type=float, default=20.0, help="decision interval (s)")
    g.add_argument("--first-decision", type=float, default=1.0, help="first decision after creation (s)")
    g.add_argument("--report-interval", type=float, default=60.0, help="GPS/neighbor report timer (s)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pushtrack", description="Offload content dissemination onto ad hoc contacts.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="connectivity statistics of a trace")
    _add_trace_args(a)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--exact", action="store_true", help="integrate between breakpoints instead of sampling")
    a.add_argument("--whom", choices=[w.value for w in WhomStrategy], default=None,
                   help="check that a strategy is usable with this input")
    a.add_argument("--out", default=None)

    pr = sub.add_parser("periodic", help="periodic flooding with one strategy pair")
    _add_trace_args(pr)
    _add_link_args(pr)
    _add_periodic_args(pr)
    _add_run_args(pr)
    pr.add_argument("--when", choices=[w.value for w in WhenStrategy], default=WhenStrategy.LINEAR.value)
    pr.add_argument("--whom", choices=[w.value for w in WhomStrategy] + ["oracle", "infra-only"],
                    default=WhomStrategy.RANDOM.value)

    fl = sub.add_parser("floating", help="floating data with delay tolerance U")
    _add_trace_args(fl)
    _add_link_args(fl)
    _add_run_args(fl)
    fl.add_argument("--tolerance", type=float, default=60.0, help="user delay tolerance U (s)")
    fl.add_argument("--mode", choices=("pnt", "no-feedback", "infra-only"), default="pnt")

    sw = sub.add_parser("sweep", help="every when x whom pair plus infra-only and oracle")
    _add_trace_args(sw)
    _add_link_args(sw)
    _add_periodic_args(sw)
    _add_run_args(sw)

    ge = sub.add_parser("generate", help="write a synthetic waypoint trace")
    _add_synthetic_args(ge)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--output", "-o", default=None, help="CSV path (default <out>/trace.csv)")
    ge.add_argument("--out", default=None)
    return ap


# -- inputs ----------------------------------------------------------------------

@dataclass
class Inputs:
    trace: MobilityTrace | None
    contacts: ContactTrace
    source: str


def _synthetic_config(args) -> SyntheticConfig:
    w, h = args.area
    return SyntheticConfig(bounds=Bounds(0.0, 0.0, float(w), float(h)), arrival_rate=args.arrival_rate,
                           mean_transit=args.mean_transit, speed_range=tuple(args.speed),
                           horizon=args.horizon, initial_nodes=args.initial_nodes)


def _base_trace(args) -> tuple[MobilityTrace | None, ContactTrace | None, str]:
    if args.contacts:
        return None, load_contacts(args.contacts), args.contacts
    if args.trace:
        return load_trace(args.trace), None, args.trace
    seed = args.seed if args.trace_seed is None else args.trace_seed
    return generate_synthetic(_synthetic_config(args), seed), None, f"synthetic(seed={seed})"


def _participating(args, trace, contacts, seed: int) -> Inputs:
    p = args.participation
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"--participation must be in [0, 1], got {p}")
    if trace is not None:
        t = subsample(trace, p, seed) if p < 1.0 else trace
        return Inputs(t, derive_contacts(t, args.range, args.sample_step), "")
    c = subsample_contacts(contacts, p, seed) if p < 1.0 else contacts
    return Inputs(None, c, "")


def _links(args) -> LinkSpec:
    try:
        return LinkSpec(args.adhoc_rate, args.down_rate, args.up_rate)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _out_dir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    return out


# -- outputs ---------------------------------------------------------------------

def _write_json(path: str, obj) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")
    return path


def _write_report(report: RunReport, out: str, stem: str, fmt: str) -> list[str]:
    paths = []
    if fmt in ("json", "both"):
        path = os.path.join(out, stem + ".json")
        export(report, path, "json")
        paths.append(path)
    if fmt in ("csv-bundle", "both"):
        path = os.path.join(out, stem)
        export(report, path, "csv-bundle")
        paths += [os.path.join(path, f) for f in ("messages.csv", "infection_series.csv", "floating_nodes.csv")]
    return paths


def _verify(paths: list[str]) -> None:
    """Every declared output must exist and parse."""
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            if p.endswith(".json"):
                json.load(fh)
            else:
                rows = list(csv.reader(fh))
                if not rows:
                    raise SimulationError(f"{p} is empty")


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return statistics.fmean(xs) if xs else None


def _std(xs):
    xs = [x for x in xs if x is not None]
    return statistics.pstdev(xs) if len(xs) > 1 else (0.0 if xs else None)


def aggregate_periodic(reports: list[RunReport]) -> dict:
    ratios = [r.offload_ratio for r in reports]
    dr = [m.delivery_ratio for r in reports for m in r.messages]
    return {
        "runs": len(reports),
        "offload_ratio_mean": _mean(ratios),
        "offload_ratio_std": _std(ratios),
        "offload_ratios": ratios,
        "infra_load_mean": _mean([r.infra_load for r in reports]),
        "adhoc_load_mean": _mean([r.adhoc_load for r in reports]),
        "control_load_mean": _mean([r.control_load for r in reports]),
        "delivery_ratio_mean": _mean(dr),
        "messages": sum(len(r.messages) for r in reports),
        "missed": sum(m.missed_count for r in reports for m in r.messages),
        "unservable": sum(m.unservable_count for r in reports for m in r.messages),
    }


def aggregate_floating(reports: list[RunReport]) -> dict:
    summaries = [r.floating_summary() for r in reports]
    ratios = [r.offload_ratio for r in reports]
    return {
        "runs": len(reports),
        "offload_ratio_mean": _mean(ratios),
        "offload_ratio_std": _std(ratios),
        "offload_ratios": ratios,
        "delivery_ratio_mean": _mean([s["delivery_ratio"] for s in summaries]),
        "mean_time_to_infection": _mean([s["mean_time_to_infection"] for s in summaries]),
        "entrants": sum(s["entrants"] for s in summaries),
    }


# -- run orchestration -------------------------------------------------------------

_WORKER_INPUTS: dict[int, Inputs] = {}


def _init_worker(inputs: dict[int, Inputs]) -> None:
    global _WORKER_INPUTS
    _WORKER_INPUTS = inputs


def _run_task(task):
    kind, r, cfg, seed, ref = task
    inp = _WORKER_INPUTS[r]
    if kind == "periodic":
        return run_periodic(inp.trace, inp.contacts, cfg, seed, reference_load=ref)
    return run_floating(inp.trace, inp.contacts, cfg, seed, reference_load=ref)


def _execute(tasks: list, inputs: dict[int, Inputs], workers: int) -> list[RunReport]:
    """Run tasks in order; results come back in task order whatever the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        _init_worker(inputs)
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(inputs,)) as ex:
        return list(ex.map(_run_task, tasks, chunksize=1))


def _replication_inputs(args, n: int) -> tuple[dict[int, Inputs], dict[int, int], str]:
    trace, contacts, source = _base_trace(args)
    seeds = {r: replication_seed(args.seed, r) for r in range(n)}
    if trace is not None and args.participation >= 1.0:
        shared = _participating(args, trace, contacts, 0)
        inputs = {r: shared for r in range(n)}
    else:
        inputs = {r: _participating(args, trace, contacts, seeds[r]) for r in range(n)}
    return inputs, seeds, source


def _periodic_cfg(args, links, when: WhenStrategy, whom: str, r: int) -> PeriodicConfig:
    mode = {"oracle": Mode.ORACLE, "infra-only": Mode.INFRA_ONLY}.get(whom, Mode.PUSH_AND_TRACK)
    whom_s = WhomStrategy.RANDOM if mode is not Mode.PUSH_AND_TRACK else WhomStrategy(whom)
    cfg = PeriodicConfig(period=args.period, size=args.size, when=when, whom=whom_s, mode=mode,
                         replication=r, delta_t=args.delta_t, first_decision=args.first_decision,
                         links=links, control_size=args.control_size, report_interval=args.report_interval)
    cfg.validate()
    return cfg


def _check_inputs(inputs: dict[int, Inputs], whoms) -> None:
    no_pos = any(i.trace is None for i in inputs.values())
    for w in whoms:
        if no_pos and w in {s.value for s in WhomStrategy if s.needs_positions}:
            raise ConfigError(f"--whom {w} needs node positions: give --trace or a synthetic trace, not --contacts")


def _references(args, links, inputs, seeds, workers) -> dict[int, float]:
    tasks = [("periodic", r, _periodic_cfg(args, links, WhenStrategy.LINEAR, "infra-only", r), seeds[r], None)
             for r in sorted(inputs)]
    return {t[1]: rep.infra_load for t, rep in zip(tasks, _execute(tasks, inputs, workers))}


def cmd_periodic(args) -> list[str]:
    links = _links(args)
    if args.replications < 1:
        raise ConfigError("--replications must be >= 1")
    cfgs = {r: _periodic_cfg(args, links, WhenStrategy(args.when), args.whom, r) for r in range(args.replications)}
    inputs, seeds, source = _replication_inputs(args, args.replications)
    _check_inputs(inputs, [args.whom])
    out = _out_dir(args)
    refs = {r: None for r in cfgs} if args.whom == "infra-only" else _references(args, links, inputs, seeds, args.workers)
    tasks = [("periodic", r, cfgs[r], seeds[r], refs[r]) for r in sorted(cfgs)]
    reports = _execute(tasks, inputs, args.workers)
    paths = []
    for (_, r, *_), rep in zip(tasks, reports):
        rep.config["source"] = source
        rep.config["participation"] = args.participation
        paths += _write_report(rep, out, f"periodic_r{r}", args.format)
    agg = aggregate_periodic(reports)
    agg["config"] = {"when": args.when, "whom": args.whom, "period": args.period, "seed": args.seed,
                     "participation": args.participation, "source": source}
    paths.append(_write_json(os.path.join(out, "periodic_aggregate.json"), agg))
    print(f"periodic {args.when}/{args.whom} T={args.period:g}: offload ratio "
          f"{_fmt_ratio(agg['offload_ratio_mean'])} over {agg['runs']} run(s), {agg['messages']} messages")
    return paths


def cmd_floating(args) -> list[str]:
    links = _links(args)
    if args.replications < 1:
        raise ConfigError("--replications must be >= 1")
    cfg = FloatingConfig(tolerance=args.tolerance, size=args.size, mode=Mode(args.mode), links=links,
                         control_size=args.control_size)
    cfg.validate()
    inputs, seeds, source = _replication_inputs(args, args.replications)
    out = _out_dir(args)
    refs: dict[int, float | None] = {r: None for r in inputs}
    if cfg.mode is not Mode.INFRA_ONLY:
        ref_cfg = FloatingConfig(args.tolerance, args.size, Mode.INFRA_ONLY, links, args.control_size)
        ref_tasks = [("floating", r, ref_cfg, seeds[r], None) for r in sorted(inputs)]
        refs = {t[1]: rep.infra_load for t, rep in zip(ref_tasks, _execute(ref_tasks, inputs, args.workers))}
    tasks = [("floating", r, cfg, seeds[r], refs[r]) for r in sorted(inputs)]
    reports = _execute(tasks, inputs, args.workers)
    paths = []
    for (_, r, *_), rep in zip(tasks, reports):
        rep.config["source"] = source
        rep.config["participation"] = args.participation
        paths += _write_report(rep, out, f"floating_r{r}", args.format)
    agg = aggregate_floating(reports)
    agg["config"] = {"tolerance": args.tolerance, "mode": args.mode, "seed": args.seed,
                     "participation": args.participation, "source": source}
    paths.append(_write_json(os.path.join(out, "floating_aggregate.json"), agg))
    print(f"floating U={args.tolerance:g} ({args.mode}): offload ratio {_fmt_ratio(agg['offload_ratio_mean'])}, "
          f"delivery ratio {_fmt_ratio(agg['delivery_ratio_mean'])}")
    return paths


def sweep_families() -> list[tuple[str, str]]:
    """(when, whom) for the full grid, then the two references."""
    fams = [(w.value, m.value) for m in WhomStrategy for w in WhenStrategy]
    return fams + [("-", "infra-only"), ("-", "oracle")]


def run_sweep(args, inputs, seeds, links) -> dict[tuple[str, str], list[RunReport]]:
    refs = _references(args, links, inputs, seeds, args.workers)
    tasks, keys = [], []
    for when, whom in sweep_families():
        w = WhenStrategy.LINEAR if when == "-" else WhenStrategy(when)
        for r in sorted(inputs):
            cfg = _periodic_cfg(args, links, w, whom, r)
            tasks.append(("periodic", r, cfg, seeds[r], refs[r]))
            keys.append((when, whom))
    results: dict[tuple[str, str], list[RunReport]] = {}
    for key, rep in zip(keys, _execute(tasks, inputs, args.workers)):
        results.setdefault(key, []).append(rep)
    return results


def cmd_sweep(args) -> list[str]:
    links = _links(args)
    if args.replications < 1:
        raise ConfigError("--replications must be >= 1")
    _periodic_cfg(args, links, WhenStrategy.LINEAR, WhomStrategy.RANDOM.value, 0)
    inputs, seeds, source = _replication_inputs(args, args.replications)
    _check_inputs(inputs, [w.value for w in WhomStrategy])
    out = _out_dir(args)
    results = run_sweep(args, inputs, seeds, links)
    paths = []
    fam_path = os.path.join(out, "sweep_families.csv")
    with open(fam_path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["when", "whom", "runs", "offload_ratio_mean", "offload_ratio_std", "delivery_ratio_mean", "missed"])
        for key in sweep_families():
            agg = aggregate_periodic(results[key])
            wr.writerow([key[0], key[1], agg["runs"], _fmt_num(agg["offload_ratio_mean"]),
                         _fmt_num(agg["offload_ratio_std"]), _fmt_num(agg["delivery_ratio_mean"]), agg["missed"]])
    paths.append(fam_path)
    mat_path = os.path.join(out, "sweep_matrix.csv")
    with open(mat_path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["whom"] + [w.value for w in WhenStrategy])
        for m in WhomStrategy:
            wr.writerow([m.value] + [_fmt_num(aggregate_periodic(results[(w.value, m.value)])["offload_ratio_mean"])
                                     for w in WhenStrategy])
    paths.append(mat_path)
    summary = {"families": len(results), "replications": args.replications, "period": args.period,
               "seed": args.seed, "participation": args.participation, "source": source,
               "offload_ratio_mean": {f"{k[0]}|{k[1]}": aggregate_periodic(v)["offload_ratio_mean"]
                                      for k, v in sorted(results.items())}}
    paths.append(_write_json(os.path.join(out, "sweep_summary.json"), summary))
    print(f"sweep: {len(results)} families x {args.replications} replication(s) -> {mat_path}")
    return paths


def cmd_analyze(args) -> list[str]:
    trace, contacts, source = _base_trace(args)
    if args.whom is not None and trace is None:
        _check_inputs({0: Inputs(None, contacts, source)}, [args.whom])
    inp = _participating(args, trace, contacts, replication_seed(args.seed, 0))
    stats = dataset_stats(inp.contacts, step=None if args.exact else args.sample_step)
    out = _out_dir(args)
    d = stats.to_dict()
    d["source"] = source
    d["participation"] = args.participation
    d["nodes"] = len(inp.contacts.presence)
    d["contacts"] = len(inp.contacts.contacts)
    d["duration"] = inp.contacts.duration
    path = _write_json(os.path.join(out, "stats.json"), d)
    ccdf = os.path.join(out, "contact_ccdf.csv")
    with open(ccdf, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["duration_s", "ccdf"])
        for x, y in stats.contact_duration_ccdf:
            wr.writerow([_fmt_num(x), _fmt_num(y)])
    print(f"nodes {d['nodes']}  avg present {stats.avg_nodes:.6g}  components {stats.avg_components:.6g}  "
          f"singletons {stats.avg_singletons:.6g}  degree {stats.avg_degree:.6g}")
    return [path, ccdf]


def cmd_generate(args) -> list[str]:
    cfg = _synthetic_config(args)
    trace = generate_synthetic(cfg, args.seed)
    path = args.output or os.path.join(_out_dir(args), "trace.csv")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        dump_trace(trace, fh)
    load_trace(path)
    print(f"wrote {len(trace)} nodes to {path}")
    return [path]


def _fmt_num(v) -> str:
    return "" if v is None else f"{v:.6g}"


def _fmt_ratio(v) -> str:
    return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


COMMANDS = {"analyze": cmd_analyze, "periodic": cmd_periodic, "floating": cmd_floating,
            "sweep": cmd_sweep, "generate": cmd_generate}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 2
    try:
        paths = COMMANDS[args.command](args)
        _verify(paths)
    except (ConfigError, TraceError, ValueError) as e:
        print(f"pushtrack {args.command}: configuration error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"pushtrack {args.command}: cannot access {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return 2
    except SimulationError as e:
        print(f"pushtrack {args.command}: simulation failed: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
