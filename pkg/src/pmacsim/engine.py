"""Deterministic discrete-event core.

The clock is an integer microsecond counter, so slot arithmetic (220 us
preamble slots, 56.32 ms contention windows) is exact and replays are
bit-identical. Events are totally ordered by (time, insertion sequence);
ties between events scheduled for the same instant fire in insertion order.

Each node draws randomness from its own stream derived from the scenario
seed, so adding or removing one node never perturbs the draws of another.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterator


class SimulationError(Exception):
    """A protocol or engine contract was violated; the run must abort."""


class SchedulingError(SimulationError):
    """An event was scheduled before the current simulation time."""


_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_stream_seed(seed: int, stream_id: int) -> int:
    """Mix a scenario seed with a stream id into an independent 64-bit seed."""
    return _splitmix64(_splitmix64(seed & _MASK64) ^ (stream_id & _MASK64))


class RngStream:
    """Reproducible uniform source; one stream per node.

    The same (seed, stream_id, draw sequence) always yields the same values.
    """

    def __init__(self, seed: int, stream_id: int):
        self.seed = seed
        self.stream_id = stream_id
        self._rng = random.Random(derive_stream_seed(seed, stream_id))

    def draw_uniform(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if lo > hi:
            raise SimulationError(f"draw_uniform bounds inverted: [{lo}, {hi}]")
        return self._rng.randint(lo, hi)

    def draw_float(self, lo: float, hi: float) -> float:
        if lo > hi:
            raise SimulationError(f"draw_float bounds inverted: [{lo}, {hi}]")
        return self._rng.uniform(lo, hi)


@dataclass(frozen=True)
class TraceRecord:
    at: int
    seq: int
    node: int
    kind: str
    detail: dict

    def line(self) -> str:
        payload = json.dumps(self.detail, sort_keys=True, separators=(",", ":"))
        return f"{self.at}\t{self.seq}\t{self.node}\t{self.kind}\t{payload}"


class Trace:
    """Append-only event log, ordered by (time, append sequence)."""

    def __init__(self):
        self._records: list[TraceRecord] = []

    def append(self, at: int, node: int, kind: str, detail: dict) -> None:
        self._records.append(TraceRecord(at, len(self._records), node, kind, detail))

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self._records)

    def by_kind(self, kind: str) -> list[TraceRecord]:
        return [r for r in self._records if r.kind == kind]

    def lines(self) -> list[str]:
        return [r.line() for r in self._records]

    def to_bytes(self) -> bytes:
        return ("\n".join(self.lines()) + "\n").encode("utf-8") if self._records else b""


@dataclass
class _Event:
    at: int
    seq: int
    action: Callable[[], None] = field(compare=False)
    cancelled: bool = field(default=False, compare=False)

    def __lt__(self, other: "_Event") -> bool:
        return (self.at, self.seq) < (other.at, other.seq)


class Simulator:
    """Single-threaded event loop with a seeded stream registry and a trace.

    Instances are independent; nothing is shared, so separate simulations may
    run concurrently in different threads or processes.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0
        self.trace = Trace()
        self._heap: list[_Event] = []
        self._seq = 0
        self._streams: dict[int, RngStream] = {}

    def stream(self, stream_id: int) -> RngStream:
        """Per-node stream; created on first use and cached."""
        st = self._streams.get(stream_id)
        if st is None:
            st = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return st

    def schedule(self, at: int, action: Callable[[], None]) -> _Event:
        """Enqueue an action at absolute time `at`; returns a cancellable handle."""
        if at < self.now:
            raise SchedulingError(f"schedule at {at} us before current time {self.now} us")
        ev = _Event(at, self._seq, action)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay: int, action: Callable[[], None]) -> _Event:
        return self.schedule(self.now + delay, action)

    def cancel(self, handle: _Event) -> None:
        handle.cancelled = True

    def run_to_completion(self) -> int:
        """Process all events in (time, seq) order; returns the last event time."""
        last = 0
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = ev.at
            last = ev.at
            ev.action()
        return last

    def record(self, node: int, kind: str, **detail) -> None:
        self.trace.append(self.now, node, kind, detail)

    # Generator-based processes: a process yields integer delays in us.
    # `yield 0` reschedules behind every event already queued for the same
    # instant, which lets a process observe frames that finish exactly then.

    def launch(self, gen, done: Callable[[object], None] | None = None) -> None:
        self._step(gen, done)

    def _step(self, gen, done) -> None:
        try:
            delay = next(gen)
        except StopIteration as stop:
            if done is not None:
                done(stop.value)
            return
        self.schedule_in(delay, lambda: self._step(gen, done))

    def run_process(self, gen):
        """Drive a process to completion and return its return value."""
        out: list[object] = []
        self.launch(gen, done=out.append)
        self.run_to_completion()
        return out[0] if out else None
