"""Experiment orchestration, utilization, CSV and trace files.

Utilization follows the busiest-port reading: the fraction of a window
during which frames that were actually delivered occupied the medium as
seen at the gateway (management node). Collided or undecodable airtime
counts toward occupancy but never toward useful traffic. Overlapping
frames are merged, so the fraction stays within [0, 1] even when parallel
frequencies are in flight.

The paper-2021 calibration preset swaps the slot-accurate protocol run
for a fitted per-node admission cost (80 ms per node for preamble access,
5.12 s per node for CSMA) while keeping topology, join order and
determinism; the data phase still runs frame by frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .channel import Medium
from .csma import CsmaNetwork
from .engine import SimulationError, Simulator, Trace
from .fdplc import FdNetwork
from .frames import ADMISSION, DATA, POLL, Frame
from .pmac import PmacNetwork
from .reports import EstablishReport, JoinRecord
from .scenario import GATEWAY, ScenarioConfig, ScenarioError, build_plan, build_snr, build_topology

CSV_HEADER = "protocol,node_count,networking_time_us,establish_util,data_util,seed"

PRESET_PER_NODE_US = {
    "pmac": 80_000,
    "fd-pmac": 80_000,
    "csma": 5_120_000,
    "fd-csma": 5_120_000,
}


@dataclass(frozen=True)
class MetricsRow:
    protocol: str
    node_count: int
    networking_time_us: int
    establish_util: float
    data_util: float
    seed: int


@dataclass(frozen=True)
class UtilizationSample:
    window_start: int
    window_end: int
    busy_useful_us: int
    busy_total_us: int

    def __post_init__(self):
        length = self.window_end - self.window_start
        if length <= 0:
            raise SimulationError("utilization window must not be empty")
        if not 0 <= self.busy_useful_us <= self.busy_total_us <= length:
            raise SimulationError("busy times must satisfy useful <= total <= window")

    @property
    def utilization(self) -> float:
        return self.busy_useful_us / (self.window_end - self.window_start)


def _merged_length(intervals) -> int:
    total = 0
    last_end = None
    for start, end in sorted(intervals):
        if last_end is None or start > last_end:
            total += end - start
            last_end = end
        elif end > last_end:
            total += end - last_end
            last_end = end
    return total


def utilization_sample(trace: Trace, window: tuple[int, int], port: int = GATEWAY) -> UtilizationSample:
    a, b = window
    if b <= a:
        raise SimulationError("utilization window must not be empty")
    useful = []
    busy = []
    for rec in trace.by_kind("frame"):
        d = rec.detail
        start, end = d["start"], d["start"] + d["dur"]
        lo, hi = max(start, a), min(end, b)
        if hi <= lo:
            continue
        touches = (d["src"] == port or port in d["delivered"]
                   or port in d["collided"] or port in d["below"])
        if not touches:
            continue
        busy.append((lo, hi))
        if (d["src"] == port and d["delivered"]) or port in d["delivered"]:
            useful.append((lo, hi))
    return UtilizationSample(a, b, _merged_length(useful), _merged_length(busy))


def compute_utilization(trace: Trace, window: tuple[int, int], port: int = GATEWAY) -> float:
    return utilization_sample(trace, window, port).utilization


# ----------------------------------------------------------------------
# scenario execution

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    row: MetricsRow
    report: EstablishReport
    sim: Simulator

    @property
    def trace(self) -> Trace:
        return self.sim.trace


def build_simulation(cfg: ScenarioConfig):
    cfg.validate()
    sim = Simulator(cfg.seed)
    topology = build_topology(cfg)
    plan = build_plan(cfg)
    snr = build_snr(cfg, topology, plan)
    medium = Medium(sim, topology, plan, snr, cfg.snr_threshold_db)
    return sim, medium


def build_stack(cfg: ScenarioConfig, sim: Simulator, medium: Medium):
    if cfg.protocol == "pmac":
        return PmacNetwork(sim, medium, GATEWAY,
                           preamble_slot_us=cfg.preamble_slot_us,
                           data_slot_us=cfg.data_slot_us,
                           window_slots=cfg.contention_window,
                           control_freq=cfg.control_freq,
                           heartbeat_us=cfg.heartbeat_us,
                           mode=cfg.access_mode)
    if cfg.protocol == "csma":
        return CsmaNetwork(sim, medium, GATEWAY,
                           data_slot_us=cfg.data_slot_us,
                           window_slots=cfg.contention_window,
                           control_freq=cfg.control_freq)
    if cfg.protocol in ("fd-pmac", "fd-csma"):
        return FdNetwork(sim, medium, GATEWAY,
                         access=cfg.protocol.split("-", 1)[1],
                         preamble_slot_us=cfg.preamble_slot_us,
                         data_slot_us=cfg.data_slot_us,
                         window_slots=cfg.contention_window,
                         control_freq=cfg.control_freq,
                         common_control=cfg.fd_common_control,
                         probe_us=cfg.sweep_probe_us)
    raise ScenarioError(f"unknown protocol {cfg.protocol!r}")


def _calibrated_establish(cfg: ScenarioConfig, sim: Simulator, medium: Medium) -> EstablishReport:
    """Fitted per-node admission schedule: breadth-first over communicable
    links, one fixed-cost admission block per joining node."""
    cost = PRESET_PER_NODE_US[cfg.protocol]
    thr = cfg.snr_threshold_db
    topo = medium.topology

    def usable(a, b):
        return (medium.snr_table.snr_directed(a, b, cfg.control_freq) >= thr
                and medium.snr_table.snr_directed(b, a, cfg.control_freq) >= thr)

    levels = {GATEWAY: 0}
    parent = {}
    frontier = [GATEWAY]
    order = []
    while frontier:
        nxt = []
        for relay in frontier:
            for nb in topo.neighbors(relay):
                if nb in levels or not usable(relay, nb):
                    continue
                levels[nb] = levels[relay] + 1
                parent[nb] = relay
                order.append(nb)
                nxt.append(nb)
        frontier = sorted(nxt)

    def proc():
        joined = []
        for addr, node in enumerate(order, start=1):
            yield cost
            sim.record(node, ADMISSION, addr=addr, level=levels[node],
                       parent=parent[node], cost_us=cost)
            joined.append(JoinRecord(node, addr, levels[node], parent[node], sim.now))
        unjoined = [n for n in topo.nodes if n != GATEWAY and n not in levels]
        return EstablishReport(cfg.protocol, joined, unjoined, sim.now, mode=cfg.calibration)

    return sim.run_process(proc())


def _data_phase(cfg: ScenarioConfig, sim: Simulator, medium: Medium,
                report: EstablishReport) -> tuple[int, int]:
    """Post-establishment workload: the gateway polls each member in address
    order and the member answers with one data packet, hop by hop along its
    route. Returns the phase window."""
    parents = report.parent_map()
    link_freqs = report.link_freqs

    def hop_freq(a, b):
        pair = link_freqs.get((a, b))
        if pair is not None:
            return pair[1]  # parent to child runs on the downlink choice
        pair = link_freqs.get((b, a))
        if pair is not None:
            return pair[0]  # child to parent runs on the uplink choice
        return cfg.control_freq

    def route(node):
        path = [node]
        while path[-1] != GATEWAY:
            path.append(parents[path[-1]])
        path.reverse()
        return path

    def proc():
        for rec in sorted(report.joined, key=lambda r: r.address):
            path = route(rec.node)
            for a, b in zip(path, path[1:]):
                medium.transmit(a, Frame(POLL, a, b, {"target": rec.node}),
                                hop_freq(a, b), cfg.data_slot_us)
                yield cfg.data_slot_us
            back = list(reversed(path))
            for a, b in zip(back, back[1:]):
                medium.transmit(a, Frame(DATA, a, b, {"origin": rec.node}),
                                hop_freq(b, a), cfg.data_slot_us)
                yield cfg.data_slot_us

    start = sim.now
    sim.run_process(proc())
    return start, sim.now


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Build, establish, run the data phase, measure. Deterministic per seed."""
    cfg.validate()
    sim, medium = build_simulation(cfg)
    if cfg.calibration == "paper-2021":
        report = _calibrated_establish(cfg, sim, medium)
    else:
        stack = build_stack(cfg, sim, medium)
        report = stack.establish()
    est_end = sim.now
    if est_end > 0 and cfg.calibration != "paper-2021":
        establish_util = compute_utilization(sim.trace, (0, est_end), GATEWAY)
    else:
        establish_util = 0.0
    data_util = 0.0
    if report.joined:
        d0, d1 = _data_phase(cfg, sim, medium, report)
        if d1 > d0:
            data_util = compute_utilization(sim.trace, (d0, d1), GATEWAY)
    row = MetricsRow(cfg.protocol, cfg.node_count, report.networking_time_us,
                     establish_util, data_util, cfg.seed)
    return ScenarioResult(cfg, row, report, sim)


def run_node_sweep(cfg: ScenarioConfig, counts) -> list[ScenarioResult]:
    results = []
    for count in counts:
        c = ScenarioConfig.from_dict({**cfg.to_dict(), "node_count": count})
        results.append(run_scenario(c))
    return results


# ----------------------------------------------------------------------
# CSV and plot data

def emit_csv(rows, path) -> None:
    rows = list(rows)
    if not rows:
        raise SimulationError("refusing to emit an empty CSV")
    rows.sort(key=lambda r: (r.protocol, r.node_count, r.seed))
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.protocol},{r.node_count},{r.networking_time_us},"
                     f"{r.establish_util!r},{r.data_util!r},{r.seed}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> list[MetricsRow]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise SimulationError(f"unexpected CSV header in {path}")
    rows = []
    for ln in lines[1:]:
        p, n, t, eu, du, s = ln.split(",")
        rows.append(MetricsRow(p, int(n), int(t), float(eu), float(du), int(s)))
    return rows


def write_plot_data(rows, prefix) -> list[str]:
    """Long-format TSV per figure: networking time and both utilization
    series against node count."""
    series = [
        ("time", lambda r: r.networking_time_us),
        ("establish_util", lambda r: r.establish_util),
        ("data_util", lambda r: r.data_util),
    ]
    paths = []
    ordered = sorted(rows, key=lambda r: (r.protocol, r.node_count, r.seed))
    for name, pick in series:
        path = f"{prefix}_{name}.tsv"
        lines = ["protocol\tnode_count\tvalue"]
        for r in ordered:
            lines.append(f"{r.protocol}\t{r.node_count}\t{pick(r)!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        paths.append(path)
    return paths


# ----------------------------------------------------------------------
# trace files and replay

TRACE_MAGIC = "#pmacsim-trace v1"


def write_trace(path, cfg: ScenarioConfig, trace: Trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_MAGIC + "\n")
        fh.write("#scenario " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
        for line in trace.lines():
            fh.write(line + "\n")


def read_trace(path) -> tuple[ScenarioConfig, list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRACE_MAGIC:
        raise SimulationError(f"{path} is not a pmacsim trace")
    if len(lines) < 2 or not lines[1].startswith("#scenario "):
        raise SimulationError(f"{path} is missing its scenario header")
    cfg = ScenarioConfig.from_dict(json.loads(lines[1][len("#scenario "):]))
    return cfg, [ln for ln in lines[2:] if ln]


def replay_trace(path) -> tuple[bool, str]:
    """Re-run the embedded scenario and compare traces line by line."""
    cfg, recorded = read_trace(path)
    result = run_scenario(cfg)
    fresh = result.trace.lines()
    if fresh == recorded:
        return True, f"replay matches: {len(fresh)} records"
    n = min(len(fresh), len(recorded))
    for i in range(n):
        if fresh[i] != recorded[i]:
            return False, (f"divergence at record {i}:\n"
                           f"  recorded: {recorded[i]}\n"
                           f"  replayed: {fresh[i]}")
    return False, f"record count differs: recorded {len(recorded)}, replayed {len(fresh)}"
