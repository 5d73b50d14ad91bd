"""Scenario runner.

    genroute --scenario scenarios/wired_n10.toml --out results/

Runs every seed of a scenario and writes ``runs/seed_<N>.json`` per run and
``summary.csv`` with one row per seed plus a mean row.  Exit status is 0 on
success, 1 if any run failed and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .addressing import (NetworkParams, ParameterError, random_address_matrix, similarity_matrix,
                         to_digit_string)
from .analytics import analytics_report
from .assignment import AssignmentError, assign_network, parse_targets
from .engine import BackgroundLoad, SimConfig, link_failure_experiment, run_convergence, write_trace
from .genes import NodePolicy
from .manet import (AgedOutcome, MobilityModel, StaleAddress, advance_epoch, aged_packet,
                    route_aged, start_epochs)
from .routing import Packet
from .topology import (DEFAULT_BANDWIDTH, Topology, TopologyError, adhoc_radius, generate_adhoc,
                       generate_wired, read_edge_list)

MODES = ("wired_table1", "adhoc_table2", "failure", "manet", "analytics", "csp")

TABLE_COLUMNS = ["seed", "n.s", "n.t", "c.t(ms)", "n.w", "eff", "p.o/link", "g.l", "b", "a.l", "n.g",
                 "n.w.max", "delivered"]


class ConfigError(ValueError):
    pass


# -- scenario ------------------------------------------------------------------

@dataclass
class Scenario:
    mode: str
    seeds: list[int]
    params: NetworkParams
    topology: dict
    simulation: SimConfig
    policies: dict[int, NodePolicy] = field(default_factory=dict)
    mobility: dict = field(default_factory=dict)
    failure: dict = field(default_factory=dict)
    csp: dict = field(default_factory=dict)
    analytics: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


_TOPOLOGY_KEYS = {"generator", "nodes", "degree", "density", "radius", "bandwidth", "path"}
_SIM_KEYS = {"data_packet_bytes", "launch_jitter", "apply_on_pass_through", "queue_cap", "max_events"}
_MOBILITY_KEYS = {"speed_min", "speed_max", "pause", "period", "epochs", "depth", "epoch_age"}


def parse_seeds(value) -> list[int]:
    """A list of integers, a single integer or an inclusive ``"N..M"`` range."""
    if isinstance(value, bool):
        raise ConfigError("seeds: expected integers")
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        if ".." in value:
            lo, _, hi = value.partition("..")
            try:
                lo, hi = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"seeds: cannot parse range {value!r}") from None
            if hi < lo:
                raise ConfigError(f"seeds: empty range {value!r}")
            return list(range(lo, hi + 1))
        try:
            return [int(value)]
        except ValueError:
            raise ConfigError(f"seeds: cannot parse {value!r}") from None
    if isinstance(value, list):
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in value):
            raise ConfigError("seeds: list must contain integers only")
        return list(value)
    raise ConfigError(f"seeds: unsupported value {value!r}")


def _section(doc: dict, name: str, allowed: set | None = None) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}]: expected a table")
    if allowed is not None:
        extra = sorted(set(sec) - allowed)
        if extra:
            raise ConfigError(f"[{name}]: unknown keys {extra}")
    return dict(sec)


def _policies(doc: dict) -> dict[int, NodePolicy]:
    out = {}
    entries = doc.get("policy", [])
    if not isinstance(entries, list):
        raise ConfigError("[[policy]]: expected an array of tables")
    for k, entry in enumerate(entries):
        where = f"policy[{k}]"
        entry = dict(entry)
        nodes = entry.pop("nodes", None)
        if not isinstance(nodes, list) or not nodes:
            raise ConfigError(f"{where}.nodes: expected a non-empty list of node ids")
        bias = {}
        for item in entry.pop("pass_through_bias", []):
            if len(item) != 3:
                raise ConfigError(f"{where}.pass_through_bias: entries are [from, to, bias]")
            bias[(int(item[0]), int(item[1]))] = float(item[2])
        try:
            pol = NodePolicy(pass_through_bias=bias, **entry)
        except TypeError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        except ParameterError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        for n in nodes:
            out[int(n)] = pol
    return out


def parse_scenario(text: str, base_dir: Path | str = ".") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"scenario syntax: {exc}") from None
    known = {"mode", "seeds", "params", "topology", "simulation", "policy", "background",
             "mobility", "failure", "csp", "analytics"}
    extra = sorted(set(doc) - known)
    if extra:
        raise ConfigError(f"unknown top-level keys {extra}")
    mode = doc.get("mode", "wired_table1")
    if mode not in MODES:
        raise ConfigError(f"mode: {mode!r} is not one of {', '.join(MODES)}")
    if "seeds" not in doc:
        raise ConfigError("seeds: missing")
    seeds = parse_seeds(doc["seeds"])
    if not seeds:
        raise ConfigError("seeds: list is empty")
    try:
        params = NetworkParams(**_section(doc, "params"))
    except TypeError as exc:
        raise ConfigError(f"[params]: {exc}") from None
    except ParameterError as exc:
        raise ConfigError(f"[params]: {exc}") from None
    topo = _section(doc, "topology", _TOPOLOGY_KEYS)
    topo.setdefault("generator", "adhoc" if mode in ("adhoc_table2", "manet") else "wired")
    if topo["generator"] not in ("wired", "adhoc", "file"):
        raise ConfigError(f"topology.generator: {topo['generator']!r} is not wired, adhoc or file")
    if topo["generator"] == "file" and "path" not in topo:
        raise ConfigError("topology.path: required for generator = \"file\"")
    if mode != "analytics" and topo["generator"] != "file" and not isinstance(topo.get("nodes"), int):
        raise ConfigError("topology.nodes: expected an integer")
    sim = _section(doc, "simulation", _SIM_KEYS)
    background = []
    for k, load in enumerate(doc.get("background", [])):
        try:
            background.append(BackgroundLoad(**load))
        except TypeError as exc:
            raise ConfigError(f"background[{k}]: {exc}") from None
    config = SimConfig(background=tuple(background), **sim)
    return Scenario(mode, seeds, params, topo, config, _policies(doc),
                    _section(doc, "mobility", _MOBILITY_KEYS), _section(doc, "failure"),
                    _section(doc, "csp"), _section(doc, "analytics"), Path(base_dir))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return parse_scenario(text, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_topology(sc: Scenario, seed: int) -> Topology:
    spec = sc.topology
    bw = float(spec.get("bandwidth", DEFAULT_BANDWIDTH))
    if spec["generator"] == "file":
        return read_edge_list(sc.base_dir / spec["path"])
    n = spec["nodes"]
    if spec["generator"] == "wired":
        return generate_wired(n, float(spec.get("degree", 3.5)), seed, bandwidth=bw)
    return generate_adhoc(n, spec.get("radius"), spec.get("density", "sparse"), seed, bandwidth=bw)


# -- modes ---------------------------------------------------------------------

def _fmt(x, digits):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def _density(sc: Scenario) -> str:
    if sc.topology["generator"] == "adhoc":
        return sc.topology.get("density", "sparse")[0]
    return "w" if sc.topology["generator"] == "wired" else "-"


def _table_row(sc, seed, t, m) -> dict:
    p = sc.params
    return {"seed": seed, "n.s": t.node_count, "n.t": _density(sc),
            "c.t(ms)": 1000.0 * m.convergence_time_s, "n.w": m.width.mean_shortest_path_hops,
            "eff": m.efficiency, "p.o/link": m.overhead_bytes_per_link_per_s,
            "g.l": p.gene_length, "b": p.base, "a.l": p.address_length, "n.g": p.genes_per_node,
            "n.w.max": m.width.diameter_hops, "delivered": m.delivered_fraction}


def run_table(sc: Scenario, seed: int, trace_dir: Path | None) -> tuple[dict, dict]:
    t = build_topology(sc, seed)
    config = sc.simulation
    if trace_dir is not None:
        config = replace(config, trace=True)
    res = run_convergence(t, sc.params, sc.policies, seed, config)
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)
        write_trace(res, trace_dir / f"seed_{seed}.jsonl")
    detail = {"metrics": res.metrics.to_dict(), "links": [list(e) for e in t.links],
              "addresses": [to_digit_string(a) for a in res.addresses]}
    return _table_row(sc, seed, t, res.metrics), detail


def run_failure(sc: Scenario, seed: int, trace_dir) -> tuple[dict, dict]:
    t = build_topology(sc, seed)
    link = sc.failure.get("link")
    x = link_failure_experiment(t, sc.params, seed, tuple(link) if link else None, sc.policies,
                                sc.simulation, float(sc.failure.get("fraction", 1.0)))
    m = x.recovery.metrics
    row = _table_row(sc, seed, x.recovery.topology, m)
    row.update({"link": f"{x.link[0]}-{x.link[1]}", "lost": x.packets_lost,
                "delivered_before": x.before.delivered_fraction,
                "delivered_cut": x.after_cut.delivered_fraction,
                "delivered": x.recovered.delivered_fraction})
    detail = {"link": list(x.link), "before": asdict(x.before), "after_cut": asdict(x.after_cut),
              "recovered": asdict(x.recovered), "recovery_metrics": m.to_dict()}
    return row, detail


def run_manet(sc: Scenario, seed: int, trace_dir) -> tuple[dict, dict]:
    mob = sc.mobility
    depth = int(mob.get("depth", 3))
    age = int(mob.get("epoch_age", 1))
    epochs = int(mob.get("epochs", 3))
    t = build_topology(sc, seed)
    radius = sc.topology.get("radius") or adhoc_radius(t.node_count, sc.topology.get("density", "sparse"))
    model = MobilityModel.for_topology(t, radius, speed_range=(float(mob.get("speed_min", 0.002)),
                                                               float(mob.get("speed_max", 0.01))),
                                       pause=float(mob.get("pause", 1.0)), seed=seed,
                                       bandwidth=float(sc.topology.get("bandwidth", DEFAULT_BANDWIDTH)))
    permanent = [n for n, p in sc.policies.items() if p.permanent]
    state = start_epochs(t, sc.params, depth, seed, permanent, sc.policies, sc.simulation)
    period = float(mob["period"]) if "period" in mob else state.default_period
    for _ in range(epochs):
        model.step(period)
        state = advance_epoch(state, model.topology(), sc.params, seed, sc.policies, sc.simulation)
    t = state.topology
    ttl = 4 * t.node_count
    counts = {o.value: 0 for o in AgedOutcome}
    redirected = pairs = 0
    for s in range(t.node_count):
        for d in range(t.node_count):
            if s == d:
                continue
            pairs += 1
            r = route_aged(state, t, s, aged_packet(state, d, age, ttl))
            counts[r.outcome.value] += 1
            redirected += r.scenario == 2
    try:
        route_aged(state, t, 0, Packet(state.addresses[1], ttl, depth))
        stale_raised = False
    except StaleAddress:
        stale_raised = True
    movers = sum(m is not None for m in state.last_moved)
    row = {"seed": seed, "n.s": t.node_count, "n.t": _density(sc), "K": depth, "epoch_age": age,
           "epochs": epochs, "period_s": period, "movers": movers,
           "delivered": counts["delivered"] / pairs, "redirected": redirected / pairs,
           "stale": counts["undeliverable_stale"] / pairs, "stale_at_K": stale_raised}
    detail = {"outcomes": counts, "convergence_times_s": list(state.convergence_times),
              "last_moved": list(state.last_moved)}
    return row, detail


def run_csp(sc: Scenario, seed: int, trace_dir) -> tuple[dict, dict]:
    rng = np.random.default_rng([seed, 0xC5])
    if "targets" in sc.csp:
        t, targets = parse_targets((sc.base_dir / sc.csp["targets"]).read_text())
    else:
        # targets taken from a hidden reference assignment, so they are feasible
        t = build_topology(sc, seed)
        S = similarity_matrix(random_address_matrix(t.node_count, sc.params, rng))
        targets = {e: int(S[e]) for e in t.links}
    res = assign_network(t, targets, sc.params, rng)
    exact = all(int(similarity_matrix(np.array([a.digits for a in res.addresses]))[e]) == k
                for e, k in targets.items())
    row = {"seed": seed, "n.s": t.node_count, "links": t.link_count, "exact": exact,
           "backtracks": res.backtracks, "exact_solver_calls": res.exact_solver_calls}
    detail = {"addresses": [to_digit_string(a) for a in res.addresses], "order": res.order,
              "targets": [[u, v, k] for (u, v), k in sorted(targets.items())]}
    return row, detail


def run_analytics(sc: Scenario, seed: int, trace_dir) -> tuple[list[dict], dict]:
    rows = analytics_report(sc.params, int(sc.analytics.get("trials", 2000)), seed)
    return rows, {"rows": rows}


RUNNERS = {"wired_table1": run_table, "adhoc_table2": run_table, "failure": run_failure,
           "manet": run_manet, "csp": run_csp}


# -- output --------------------------------------------------------------------

_DIGITS = {"c.t(ms)": 3, "n.w": 2, "eff": 3, "p.o/link": 1, "n.w.max": 2, "delivered": 4,
           "delivered_before": 4, "delivered_cut": 4, "redirected": 4, "stale": 4, "period_s": 4,
           "formula": 4, "simulated": 4, "relative_error": 4}


def _cell(key, value):
    if isinstance(value, bool):
        return str(value).lower()
    if value is None:
        return ""
    if key == "n.g":
        return f"{value:g}"
    if isinstance(value, float) or key in _DIGITS and not isinstance(value, str):
        return _fmt(float(value), _DIGITS.get(key, 4))
    return str(value)


def _mean_row(rows: list[dict]) -> dict:
    out = {}
    for key in rows[0]:
        vals = [r[key] for r in rows]
        nums = [v for v in vals if isinstance(v, (int, float)) and not isinstance(v, bool)]
        if key == "seed":
            out[key] = "mean"
        elif all(v == vals[0] and type(v) is type(vals[0]) for v in vals):
            out[key] = vals[0]
        elif all(isinstance(v, bool) for v in vals):
            out[key] = all(vals)
        elif nums and len(nums) == sum(v is not None for v in vals):
            out[key] = float(np.mean(nums))
        else:
            out[key] = ""
    return out


def format_csv(rows: list[dict], mean: bool = True) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    w.writerow(cols)
    body = rows + ([_mean_row(rows)] if mean else [])
    for r in body:
        w.writerow([_cell(k, r.get(k)) for k in cols])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def run_scenario(sc: Scenario, out: Path, trace: bool = False, analytics: bool = False,
                 log=sys.stderr) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    status = 0
    if sc.mode == "analytics":
        rows, detail = run_analytics(sc, sc.seeds[0], None)
        (out / "summary.csv").write_text(format_csv(rows, mean=False))
        _dump(out / "runs" / f"seed_{sc.seeds[0]}.json", detail)
        return 0
    runner = RUNNERS[sc.mode]
    trace_dir = out / "traces" if trace else None
    rows = []
    for seed in sc.seeds:
        try:
            row, detail = runner(sc, seed, trace_dir)
        except (TopologyError, AssignmentError, ParameterError, RuntimeError, ValueError,
                StaleAddress) as exc:
            print(f"seed {seed}: run failed: {exc}", file=log)
            _dump(out / "runs" / f"seed_{seed}.json", {"seed": seed, "error": str(exc)})
            status = 1
            continue
        rows.append(row)
        _dump(out / "runs" / f"seed_{seed}.json", {"seed": seed, "mode": sc.mode, "row": row, **detail})
    (out / "summary.csv").write_text(format_csv(rows))
    if analytics:
        rows, _ = run_analytics(sc, sc.seeds[0], None)
        (out / "analytics.csv").write_text(format_csv(rows, mean=False))
    return status


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, default=_json_default) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="genroute", description="Run a gene routing scenario.")
    ap.add_argument("--scenario", required=True, help="TOML scenario file")
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int, help="run a single seed")
    g.add_argument("--seeds", help="inclusive seed range N..M")
    ap.add_argument("--out", default="results", help="output directory (default: results)")
    ap.add_argument("--trace", action="store_true", help="write per-seed gene traces")
    ap.add_argument("--analytics", action="store_true",
                    help="also compare the closed forms with simulation for these parameters")
    ap.add_argument("--mode", choices=MODES, help="override the scenario's mode")
    args = ap.parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc.seeds = [args.seed]
        elif args.seeds is not None:
            sc.seeds = parse_seeds(args.seeds)
        if args.mode:
            sc.mode = args.mode
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    status = run_scenario(sc, Path(args.out), args.trace, args.analytics)
    print(f"wrote {Path(args.out) / 'summary.csv'}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
