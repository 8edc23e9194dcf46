"""Frequency sweeping: pick the best uplink and downlink frequencies.

Three mechanisms over the same N-point plan:

- traditional-nxn: the upper end polls all N frequencies each round while
  the lower end listens on one fixed frequency per round, then replies
  once. N rounds cost N^2 + N communications.
- traditional-incomplete: triangular polling (round i probes indices
  0..i) that stops at the first frequency workable in both directions;
  worst case N(N+1)/2 + 2 communications. First found, not best.
- frequency-division: multi-channel front ends let the lower end receive
  on any frequency, so one probe and one immediate reply per frequency
  plus a final confirmation settle both directions in 2N + 1
  communications.

Replies piggyback the downlink SNR measured at the lower end, so the
upper end decides both argmaxes; a frequency enters the records only if
its probe round-tripped. comm_count counts actual transmissions, which
matches the formulas whenever every frequency is communicable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .channel import Medium
from .engine import SimulationError
from .frames import SWEEP_CONFIRM, SWEEP_PROBE, SWEEP_REPLY, Frame

FD = "frequency-division"
TRADITIONAL = "traditional-nxn"
INCOMPLETE = "traditional-incomplete"

MECHANISMS = (TRADITIONAL, INCOMPLETE, FD)


def comm_count_formula(mechanism: str, n: int) -> int:
    """Communication count for a complete sweep (worst case for incomplete)."""
    if n < 1:
        raise SimulationError(f"sweep needs at least one frequency point, got {n}")
    if mechanism == TRADITIONAL:
        return n * n + n
    if mechanism == INCOMPLETE:
        return n * (n + 1) // 2 + 2
    if mechanism == FD:
        return 2 * n + 1
    raise SimulationError(f"unknown sweep mechanism {mechanism!r}")


def best_frequency(records) -> int:
    """Argmax over populated entries; ties go to the lowest index."""
    best = None
    for i, db in enumerate(records):
        if db is None:
            continue
        if best is None or db > records[best]:
            best = i
    if best is None:
        raise SimulationError("no populated frequency record")
    return best


@dataclass(frozen=True)
class SweepResult:
    mechanism: str
    best_up: int | None
    best_down: int | None
    comm_count: int
    complete: bool
    up_records: tuple
    down_records: tuple


def run_fd_sweep(medium: Medium, upper: int, lower: int, *,
                 probe_us: int, confirm_us: int):
    """Frequency-division sweep over the (upper, lower) link.

    Process generator. The upper end probes each frequency once; the lower
    end answers every probe it hears at the same frequency, reporting the
    downlink SNR it measured; the upper end records the uplink SNR of each
    reply; one confirmation carries the chosen pair back down.
    """
    sim = medium.sim
    n = medium.plan.n_points
    up: list = [None] * n
    down: list = [None] * n
    count = 0
    for i in range(n):
        att = medium.transmit(upper, Frame(SWEEP_PROBE, upper, lower, {"freq": i}),
                              i, probe_us)
        count += 1
        yield probe_us
        if medium.delivered_to(att, lower):
            down_db = medium.snr_table.snr_directed(upper, lower, i)
            reply = Frame(SWEEP_REPLY, lower, upper, {"freq": i, "down_db": down_db})
            att2 = medium.transmit(lower, reply, i, probe_us)
            count += 1
            yield probe_us
            if medium.delivered_to(att2, upper):
                up[i] = medium.snr_table.snr_directed(lower, upper, i)
                down[i] = down_db
        else:
            yield probe_us  # the reply slot passes empty
    if all(v is None for v in up):
        sim.record(upper, "sweep_incomplete", mechanism=FD, comm_count=count)
        return SweepResult(FD, None, None, count, False, tuple(up), tuple(down))
    b_up = best_frequency(up)
    b_down = best_frequency(down)
    medium.transmit(upper, Frame(SWEEP_CONFIRM, upper, lower,
                                 {"best_up": b_up, "best_down": b_down}),
                    b_down, confirm_us)
    count += 1
    yield confirm_us
    sim.record(upper, "sweep_done", mechanism=FD, best_up=b_up, best_down=b_down,
               comm_count=count)
    return SweepResult(FD, b_up, b_down, count, True, tuple(up), tuple(down))


def run_traditional_sweep(medium: Medium, upper: int, lower: int, *,
                          probe_us: int, retune_us: int = 0):
    """Single-front-end N x N sweep: round i polls every frequency while the
    lower end listens on frequency i only, then replies once at i. Both
    ends retune between configurations; the optional retune delay models
    that cost without adding communications."""
    sim = medium.sim
    n = medium.plan.n_points
    up: list = [None] * n
    down: list = [None] * n
    count = 0
    for i in range(n):
        if retune_us and i:
            yield retune_us  # lower end switches its listening frequency
        heard = False
        down_db = None
        for f in range(n):
            if retune_us and f:
                yield retune_us  # upper end switches between polls
            att = medium.transmit(upper, Frame(SWEEP_PROBE, upper, lower,
                                               {"freq": f, "round": i}), f, probe_us)
            count += 1
            yield probe_us
            if f == i and medium.delivered_to(att, lower):
                heard = True
                down_db = medium.snr_table.snr_directed(upper, lower, i)
        if heard:
            reply = Frame(SWEEP_REPLY, lower, upper, {"freq": i, "down_db": down_db})
            att2 = medium.transmit(lower, reply, i, probe_us)
            count += 1
            yield probe_us
            if medium.delivered_to(att2, upper):
                up[i] = medium.snr_table.snr_directed(lower, upper, i)
                down[i] = down_db
        else:
            yield probe_us
    if all(v is None for v in up):
        sim.record(upper, "sweep_incomplete", mechanism=TRADITIONAL, comm_count=count)
        return SweepResult(TRADITIONAL, None, None, count, False, tuple(up), tuple(down))
    b_up = best_frequency(up)
    b_down = best_frequency(down)
    sim.record(upper, "sweep_done", mechanism=TRADITIONAL, best_up=b_up,
               best_down=b_down, comm_count=count)
    return SweepResult(TRADITIONAL, b_up, b_down, count, True, tuple(up), tuple(down))


def run_incomplete_sweep(medium: Medium, upper: int, lower: int, *,
                         probe_us: int, confirm_us: int,
                         threshold_db: float | None = None, retune_us: int = 0):
    """Triangular search for any frequency workable in both directions.

    Round i probes indices 0..i while the lower end listens on i; the first
    pair at or above the threshold ends the sweep with a reply and a
    confirmation (+2). The result is the first workable frequency, not the
    best one."""
    sim = medium.sim
    n = medium.plan.n_points
    thr = medium.threshold_db if threshold_db is None else threshold_db
    count = 0
    for i in range(n):
        if retune_us and i:
            yield retune_us
        heard = False
        down_db = None
        for f in range(i + 1):
            if retune_us and f:
                yield retune_us
            att = medium.transmit(upper, Frame(SWEEP_PROBE, upper, lower,
                                               {"freq": f, "round": i}), f, probe_us)
            count += 1
            yield probe_us
            if f == i and medium.delivered_to(att, lower):
                db = medium.snr_table.snr_directed(upper, lower, i)
                if db >= thr:
                    heard = True
                    down_db = db
        if not heard:
            yield probe_us
            continue
        reply = Frame(SWEEP_REPLY, lower, upper, {"freq": i, "down_db": down_db})
        att2 = medium.transmit(lower, reply, i, probe_us)
        count += 1
        yield probe_us
        if medium.delivered_to(att2, upper):
            up_db = medium.snr_table.snr_directed(lower, upper, i)
            if up_db >= thr:
                medium.transmit(upper, Frame(SWEEP_CONFIRM, upper, lower,
                                             {"best_up": i, "best_down": i}),
                                i, confirm_us)
                count += 1
                yield confirm_us
                up = tuple(up_db if j == i else None for j in range(n))
                down = tuple(down_db if j == i else None for j in range(n))
                sim.record(upper, "sweep_done", mechanism=INCOMPLETE, best_up=i,
                           best_down=i, comm_count=count)
                return SweepResult(INCOMPLETE, i, i, count, True, up, down)
    sim.record(upper, "sweep_incomplete", mechanism=INCOMPLETE, comm_count=count)
    return SweepResult(INCOMPLETE, None, None, count, False,
                       (None,) * n, (None,) * n)
