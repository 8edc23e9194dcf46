"""Abstract power-line channel.

A topology graph says who can hear whom, a per-link per-frequency SNR table
says how well, and an on-off collision rule replaces the physical layer:
a frame reaches a neighbor iff its SNR meets the decode threshold and no
other transmission on the same frequency overlaps it in time at that
receiver. There is no capture effect. Traffic on different frequency
indices never interacts.

Nodes are half duplex: a node transmitting on a frequency cannot receive
another frame on that frequency at the same time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import SimulationError, Simulator, RngStream

DELIVERED = "delivered"
COLLIDED = "collided"
BELOW_THRESHOLD = "below_threshold"

DEFAULT_SNR_THRESHOLD_DB = 10.0

UP = "up"
DOWN = "down"


class ChannelConfigError(Exception):
    """Topology or SNR table is missing data the scenario needs."""


class Topology:
    """Undirected link graph; node ids are small non-negative integers."""

    def __init__(self, links):
        self._neighbors: dict[int, set[int]] = {}
        self._links: set[frozenset[int]] = set()
        for a, b in links:
            self.add_link(a, b)

    def add_node(self, n: int) -> None:
        self._neighbors.setdefault(n, set())

    def add_link(self, a: int, b: int) -> None:
        if a == b:
            raise ChannelConfigError(f"self-link at node {a}")
        self.add_node(a)
        self.add_node(b)
        self._neighbors[a].add(b)
        self._neighbors[b].add(a)
        self._links.add(frozenset((a, b)))

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted(self._neighbors))

    @property
    def links(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(tuple(sorted(l)) for l in self._links))

    def has_node(self, n: int) -> bool:
        return n in self._neighbors

    def has_link(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self._links

    def neighbors(self, n: int) -> tuple[int, ...]:
        if n not in self._neighbors:
            raise ChannelConfigError(f"unknown node {n}")
        return tuple(sorted(self._neighbors[n]))


@dataclass(frozen=True)
class FrequencyPlan:
    """N configurable center frequencies inside one band."""

    n_points: int
    band_lo_hz: float
    band_hi_hz: float
    centers: tuple[float, ...]

    def __post_init__(self):
        if self.n_points < 1 or len(self.centers) != self.n_points:
            raise ChannelConfigError("frequency plan needs n_points >= 1 matching centers")
        prev = None
        for c in self.centers:
            if not (self.band_lo_hz <= c <= self.band_hi_hz):
                raise ChannelConfigError(f"center {c} Hz outside band")
            if prev is not None and c <= prev:
                raise ChannelConfigError("centers must be strictly increasing")
            prev = c

    def valid_index(self, freq_index: int) -> bool:
        return 0 <= freq_index < self.n_points

    @staticmethod
    def split_band(n_points: int = 8, band_lo_hz: float = 2e6, band_hi_hz: float = 12e6) -> "FrequencyPlan":
        """Equal contiguous sub-bands; default 8 x 1.25 MHz across 2-12 MHz."""
        width = (band_hi_hz - band_lo_hz) / n_points
        centers = tuple(band_lo_hz + width * (i + 0.5) for i in range(n_points))
        return FrequencyPlan(n_points, band_lo_hz, band_hi_hz, centers)


class SnrTable:
    """Directed per-link, per-frequency SNR in dB.

    The (link, direction) view treats a link (a, b) as a being the upper
    end: direction "down" is a -> b and "up" is b -> a.
    """

    def __init__(self):
        self._entries: dict[tuple[int, int, int], float] = {}

    def set_directed(self, tx: int, rx: int, freq_index: int, db: float) -> None:
        self._entries[(tx, rx, freq_index)] = float(db)

    def snr_directed(self, tx: int, rx: int, freq_index: int) -> float:
        try:
            return self._entries[(tx, rx, freq_index)]
        except KeyError:
            raise ChannelConfigError(
                f"no SNR entry for link {tx}->{rx} frequency {freq_index}"
            ) from None

    def snr(self, link: tuple[int, int], direction: str, freq_index: int) -> float:
        a, b = link
        if direction == DOWN:
            return self.snr_directed(a, b, freq_index)
        if direction == UP:
            return self.snr_directed(b, a, freq_index)
        raise ChannelConfigError(f"direction must be 'up' or 'down', got {direction!r}")

    def is_communicable(self, link: tuple[int, int], direction: str, freq_index: int,
                        threshold_db: float) -> bool:
        return self.snr(link, direction, freq_index) >= threshold_db

    @staticmethod
    def generate(topology: Topology, plan: FrequencyPlan, stream: RngStream,
                 lo_db: float, hi_db: float) -> "SnrTable":
        """Seeded uniform draw per directed entry, in a fixed link order."""
        table = SnrTable()
        for a, b in topology.links:
            for f in range(plan.n_points):
                table.set_directed(a, b, f, stream.draw_float(lo_db, hi_db))
                table.set_directed(b, a, f, stream.draw_float(lo_db, hi_db))
        return table

    @staticmethod
    def constant(topology: Topology, plan: FrequencyPlan, db: float) -> "SnrTable":
        table = SnrTable()
        for a, b in topology.links:
            for f in range(plan.n_points):
                table.set_directed(a, b, f, db)
                table.set_directed(b, a, f, db)
        return table


@dataclass(frozen=True, eq=False)  # identity semantics; attempts are unique events
class TransmissionAttempt:
    sender: int
    frame: object
    freq_index: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class DeliveryOutcome:
    receiver: int
    status: str


def overlaps(a: TransmissionAttempt, b: TransmissionAttempt) -> bool:
    """Half-open interval overlap on the same frequency."""
    return a.freq_index == b.freq_index and a.start < b.end and b.start < a.end


def resolve_deliveries(attempt: TransmissionAttempt,
                       concurrent,
                       topology: Topology,
                       snr_table: SnrTable,
                       threshold_db: float) -> list[DeliveryOutcome]:
    """Outcome of one attempt at every neighbor of its sender.

    `concurrent` is any collection of attempts that includes all
    transmissions overlapping this one (extra non-overlapping entries are
    ignored). Pure function; the same inputs always give the same outcomes.
    """
    outcomes = []
    for rx in topology.neighbors(attempt.sender):
        if snr_table.snr_directed(attempt.sender, rx, attempt.freq_index) < threshold_db:
            outcomes.append(DeliveryOutcome(rx, BELOW_THRESHOLD))
            continue
        interfered = False
        for other in concurrent:
            if other is attempt or not overlaps(attempt, other):
                continue
            # Interference needs the other sender's signal present at rx:
            # either rx itself is transmitting or the sender is in range.
            if other.sender == rx or topology.has_link(other.sender, rx):
                interfered = True
                break
        outcomes.append(DeliveryOutcome(rx, COLLIDED if interfered else DELIVERED))
    return outcomes


class Medium:
    """Event-driven wrapper: registers attempts, resolves them at end of frame.

    Outcomes are evaluated when a frame finishes, at which point every
    overlapping transmission has already started (events cannot be scheduled
    into the past), so the concurrency set is complete. The handler, if set,
    is called as handler(receiver, attempt, status) for every outcome, and a
    per-attempt outcome map stays queryable afterwards.
    """

    def __init__(self, sim: Simulator, topology: Topology, plan: FrequencyPlan,
                 snr_table: SnrTable, threshold_db: float = DEFAULT_SNR_THRESHOLD_DB,
                 handler=None):
        self.sim = sim
        self.topology = topology
        self.plan = plan
        self.snr_table = snr_table
        self.threshold_db = threshold_db
        self.handler = handler
        self._active: list[TransmissionAttempt] = []
        self._outcomes: dict[TransmissionAttempt, dict[int, str]] = {}
        self._max_duration = 1

    def transmit(self, sender: int, frame, freq_index: int, duration: int) -> TransmissionAttempt:
        if not self.topology.has_node(sender):
            raise SimulationError(f"transmit from unknown node {sender}")
        if not self.plan.valid_index(freq_index):
            raise SimulationError(f"invalid frequency index {freq_index}")
        if duration <= 0:
            raise SimulationError("frame duration must be positive")
        attempt = TransmissionAttempt(sender, frame, freq_index, self.sim.now, duration)
        self._active.append(attempt)
        self._max_duration = max(self._max_duration, duration)
        self.sim.schedule(attempt.end, lambda: self._resolve(attempt))
        return attempt

    def outcomes(self, attempt: TransmissionAttempt) -> dict[int, str]:
        """Receiver -> status map; empty until the frame has finished."""
        return self._outcomes.get(attempt, {})

    def delivered_to(self, attempt: TransmissionAttempt, receiver: int) -> bool:
        return self.outcomes(attempt).get(receiver) == DELIVERED

    def _resolve(self, attempt: TransmissionAttempt) -> None:
        outs = resolve_deliveries(attempt, self._active, self.topology,
                                  self.snr_table, self.threshold_db)
        self._outcomes[attempt] = {o.receiver: o.status for o in outs}
        frame = attempt.frame
        self.sim.record(
            attempt.sender, "frame",
            frame=getattr(frame, "kind", str(frame)),
            src=attempt.sender,
            dst=getattr(frame, "dst", None),
            info=dict(getattr(frame, "info", {})),
            freq=attempt.freq_index,
            start=attempt.start,
            dur=attempt.duration,
            delivered=sorted(o.receiver for o in outs if o.status == DELIVERED),
            collided=sorted(o.receiver for o in outs if o.status == COLLIDED),
            below=sorted(o.receiver for o in outs if o.status == BELOW_THRESHOLD),
        )
        if self.handler is not None:
            for o in outs:
                self.handler(o.receiver, attempt, o.status)
        # Attempts that ended long enough ago can no longer overlap anything
        # still unresolved (unresolved frames end at or after now and are no
        # longer than the longest frame seen).
        horizon = self.sim.now - self._max_duration
        self._active = [a for a in self._active if a.end > horizon]
