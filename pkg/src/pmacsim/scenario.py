"""Scenario files: flat `key = value` text, one pair per line, `#` comments.

`node_count` counts the stations that want to join; the gateway (node 0)
comes on top. Topologies are generated (star, chain, tree, random) or
given as an explicit edge list. SNR tables are drawn from a seeded
generator or pinned per entry with `snr_override` lines, which may repeat:

    snr_override = 3>1:*:30.0     # node 3 to node 1, every frequency
    snr_override = 4>2:5:12.5     # node 4 to node 2, frequency index 5
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .channel import FrequencyPlan, SnrTable, Topology
from .engine import RngStream

GATEWAY = 0

PROTOCOLS = ("pmac", "csma", "fd-pmac", "fd-csma")
TOPOLOGIES = ("star", "chain", "tree", "random", "explicit")
CALIBRATIONS = ("physical", "paper-2021")
ACCESS_MODES = ("fair", "fast")
SNR_MODES = ("uniform", "constant")

# reserved stream ids, far away from node ids
TOPOLOGY_STREAM = 1 << 40
SNR_STREAM = (1 << 40) + 1


class ScenarioError(Exception):
    """Bad scenario file or invalid configuration."""


@dataclass
class ScenarioConfig:
    seed: int = 0
    protocol: str = "pmac"
    topology: str = "star"
    node_count: int = 8
    edges: tuple = ()
    preamble_slot_us: int = 220
    data_slot_us: int = 10445
    contention_window: int = 256
    access_mode: str = "fair"
    freq_points: int = 8
    band_lo_hz: float = 2e6
    band_hi_hz: float = 12e6
    snr_mode: str = "uniform"
    snr_lo_db: float = 15.0
    snr_hi_db: float = 35.0
    snr_db: float = 25.0
    snr_overrides: tuple = ()
    snr_threshold_db: float = 10.0
    calibration: str = "physical"
    heartbeat_us: int = 10_000_000
    control_freq: int = 0
    fd_common_control: bool = False
    sweep_probe_us: int | None = None
    retune_us: int = 0
    extra_link_prob: float = 0.15

    def validate(self) -> "ScenarioConfig":
        problems = []
        if self.protocol not in PROTOCOLS:
            problems.append(f"unknown protocol {self.protocol!r}; valid: {', '.join(PROTOCOLS)}")
        if self.topology not in TOPOLOGIES:
            problems.append(f"unknown topology {self.topology!r}; valid: {', '.join(TOPOLOGIES)}")
        if self.calibration not in CALIBRATIONS:
            problems.append(f"unknown calibration {self.calibration!r}; valid: {', '.join(CALIBRATIONS)}")
        if self.access_mode not in ACCESS_MODES:
            problems.append(f"unknown access_mode {self.access_mode!r}; valid: {', '.join(ACCESS_MODES)}")
        if self.snr_mode not in SNR_MODES:
            problems.append(f"unknown snr_mode {self.snr_mode!r}; valid: {', '.join(SNR_MODES)}")
        if self.node_count < 2:
            problems.append("node_count must be at least 2")
        for name in ("preamble_slot_us", "data_slot_us", "heartbeat_us"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.contention_window < 1:
            problems.append("contention_window must be at least 1")
        if self.data_slot_us < self.preamble_slot_us:
            problems.append("data_slot_us must be at least preamble_slot_us")
        if self.freq_points < 1:
            problems.append("freq_points must be at least 1")
        if not 0 <= self.control_freq < self.freq_points:
            problems.append("control_freq outside the frequency plan")
        if self.band_lo_hz >= self.band_hi_hz:
            problems.append("band_lo_hz must be below band_hi_hz")
        if self.topology == "explicit" and not self.edges:
            problems.append("explicit topology needs an edges list")
        if self.sweep_probe_us is not None and self.sweep_probe_us <= 0:
            problems.append("sweep_probe_us must be positive")
        if self.retune_us < 0:
            problems.append("retune_us must be non-negative")
        if problems:
            raise ScenarioError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["edges"] = [list(e) for e in self.edges]
        d["snr_overrides"] = [list(o) for o in self.snr_overrides]
        return d

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["edges"] = tuple(tuple(e) for e in d.get("edges", ()))
        d["snr_overrides"] = tuple(tuple(o) for o in d.get("snr_overrides", ()))
        return ScenarioConfig(**d).validate()


_INT_KEYS = {"seed", "node_count", "preamble_slot_us", "data_slot_us",
             "contention_window", "freq_points", "heartbeat_us", "control_freq",
             "sweep_probe_us", "retune_us"}
_FLOAT_KEYS = {"band_lo_hz", "band_hi_hz", "snr_lo_db", "snr_hi_db", "snr_db",
               "snr_threshold_db", "extra_link_prob"}
_BOOL_KEYS = {"fd_common_control"}
_STR_KEYS = {"protocol", "topology", "access_mode", "snr_mode", "calibration"}


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    values: dict = {}
    overrides: list[tuple] = []
    edges: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            if key == "edges":
                edges.extend(_parse_edges(value))
            elif key == "snr_override":
                overrides.append(_parse_override(value))
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _BOOL_KEYS:
                values[key] = _parse_bool(value)
            elif key in _STR_KEYS:
                values[key] = value
            else:
                raise ScenarioError(f"unknown key {key!r}")
        except ScenarioError as exc:
            raise ScenarioError(f"{source}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ScenarioError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    if edges:
        values["edges"] = tuple(edges)
    if overrides:
        values["snr_overrides"] = tuple(overrides)
    try:
        cfg = ScenarioConfig(**values)
    except TypeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    try:
        return cfg.validate()
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, source=str(path))


def _parse_bool(value: str) -> bool:
    v = value.lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_edges(value: str) -> list[tuple[int, int]]:
    out = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        a, sep, b = part.partition("-")
        if not sep:
            raise ValueError(f"edge {part!r} is not 'a-b'")
        out.append((int(a), int(b)))
    return out


def _parse_override(value: str) -> tuple:
    # tx>rx:freq:db with freq either an index or * for all
    head, _, rest = value.partition(":")
    tx, sep, rx = head.partition(">")
    if not sep:
        raise ValueError(f"override {value!r} is not 'tx>rx:freq:db'")
    freq_s, sep, db_s = rest.partition(":")
    if not sep:
        raise ValueError(f"override {value!r} is not 'tx>rx:freq:db'")
    freq = None if freq_s.strip() == "*" else int(freq_s)
    return (int(tx), int(rx), freq, float(db_s))


# ----------------------------------------------------------------------
# builders

def build_topology(cfg: ScenarioConfig) -> Topology:
    n = cfg.node_count
    if cfg.topology == "star":
        return Topology((GATEWAY, i) for i in range(1, n + 1))
    if cfg.topology == "chain":
        return Topology((i - 1, i) for i in range(1, n + 1))
    if cfg.topology == "tree":
        # binary tree rooted at the gateway
        return Topology(((i - 1) // 2, i) for i in range(1, n + 1))
    if cfg.topology == "random":
        stream = RngStream(cfg.seed, TOPOLOGY_STREAM)
        links = [(stream.draw_uniform(0, i - 1), i) for i in range(1, n + 1)]
        topo = Topology(links)
        for i in range(n + 1):
            for j in range(i + 1, n + 1):
                if not topo.has_link(i, j) and stream.draw_float(0.0, 1.0) < cfg.extra_link_prob:
                    topo.add_link(i, j)
        return topo
    if cfg.topology == "explicit":
        topo = Topology(cfg.edges)
        if not topo.has_node(GATEWAY):
            raise ScenarioError("explicit topology must include the gateway node 0")
        return topo
    raise ScenarioError(f"unknown topology {cfg.topology!r}")


def build_plan(cfg: ScenarioConfig) -> FrequencyPlan:
    return FrequencyPlan.split_band(cfg.freq_points, cfg.band_lo_hz, cfg.band_hi_hz)


def build_snr(cfg: ScenarioConfig, topology: Topology, plan: FrequencyPlan) -> SnrTable:
    if cfg.snr_mode == "constant":
        table = SnrTable.constant(topology, plan, cfg.snr_db)
    else:
        stream = RngStream(cfg.seed, SNR_STREAM)
        table = SnrTable.generate(topology, plan, stream, cfg.snr_lo_db, cfg.snr_hi_db)
    for tx, rx, freq, db in cfg.snr_overrides:
        if freq is None:
            for f in range(plan.n_points):
                table.set_directed(tx, rx, f, db)
        else:
            table.set_directed(tx, rx, freq, db)
    return table
