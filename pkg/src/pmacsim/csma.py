"""Beacon-driven CSMA/CA tree networking, the comparison baseline.

Joined nodes advertise themselves with beacons in dedicated slots; an
unassociated station picks the best node it heard this period and contends
for the medium with a data-sized association request inside a fixed
256-slot window. Same-slot requests collide and both stations retry next
period. A station whose child association succeeds is promoted from STA to
proxy coordinator (PCO); the central coordinator (CCO) never changes role.
"""

from __future__ import annotations

from .channel import COLLIDED, DELIVERED, Medium
from .engine import RngStream, SimulationError, Simulator
from .frames import ASSOC_REPLY, ASSOC_REQUEST, BEACON, Frame
from .reports import EstablishReport, JoinRecord

CCO = "cco"
PCO = "pco"
STA = "sta"
XSTA = "xsta"


def contend(window_slots: int, stream: RngStream) -> int:
    """Uniform backoff slot draw in [0, window_slots - 1]."""
    if window_slots < 1:
        raise SimulationError("contention window must hold at least one slot")
    return stream.draw_uniform(0, window_slots - 1)


class CsmaNetwork:
    def __init__(self, sim: Simulator, medium: Medium, cco: int = 0, *,
                 data_slot_us: int = 10445,
                 window_slots: int = 256,
                 control_freq: int = 0):
        self.sim = sim
        self.medium = medium
        self.cco = cco
        self.data_slot_us = data_slot_us
        self.window_slots = window_slots
        self.control_freq = control_freq

        self.roles = {n: XSTA for n in medium.topology.nodes}
        self.roles[cco] = CCO
        self.parent: dict[int, int] = {}
        self.levels: dict[int, int] = {cco: 0}
        self.joined_order: list[JoinRecord] = []
        self._addr_next = 1
        self._heard: dict[int, list] = {}
        self._requests: list[tuple[int, int]] = []
        self._collided_requests = 0
        self._period_cap = max(32, 8 * len(self.roles))

        medium.handler = self._on_frame

    def _on_frame(self, receiver: int, attempt, status: str) -> None:
        frame = attempt.frame
        if frame.kind == BEACON:
            if status == DELIVERED and self.roles.get(receiver) == XSTA:
                snr = self.medium.snr_table.snr_directed(frame.src, receiver,
                                                         self.control_freq)
                self._heard.setdefault(receiver, []).append((snr, frame.src))
        elif frame.kind == ASSOC_REQUEST and frame.dst == receiver:
            if status == DELIVERED:
                self._requests.append((frame.src, receiver))
            elif status == COLLIDED:
                self._collided_requests += 1

    def joined(self, node: int) -> bool:
        return self.roles[node] in (CCO, STA, PCO)

    def apply_association(self, x: int, target: int) -> None:
        """State change once request and reply both got through."""
        if self.roles[x] != XSTA:
            raise SimulationError(f"node {x} is already associated")
        if not self.joined(target):
            raise SimulationError(f"association target {target} has not joined")
        self.roles[x] = STA
        if self.roles[target] == STA:
            self.roles[target] = PCO
            self.sim.record(target, "role_change", role=PCO)
        self.parent[x] = target
        level = self.levels[target] + 1
        self.levels[x] = level
        addr = self._addr_next
        self._addr_next += 1
        rec = JoinRecord(x, addr, level, target, self.sim.now)
        self.joined_order.append(rec)
        self.sim.record(x, "associated", addr=addr, level=level, parent=target)

    def _period_proc(self, index: int):
        self.sim.record(self.cco, "beacon_period_start", index=index)
        beaconers = [self.cco] + [r.node for r in self.joined_order]
        self._heard = {}
        for b in beaconers:
            self.medium.transmit(b, Frame(BEACON, b), self.control_freq, self.data_slot_us)
            yield self.data_slot_us
        contenders = []
        for x in sorted(self._heard):
            if self.roles[x] != XSTA:
                continue
            snr, target = max(self._heard[x], key=lambda e: (e[0], -e[1]))
            contenders.append((x, target))
        self._requests = []
        self._collided_requests = 0
        for x, target in contenders:
            slot = contend(self.window_slots, self.sim.stream(x))
            self.sim.record(x, "csma_contend", slot=slot, target=target)
            self.sim.schedule_in(
                slot * self.data_slot_us,
                lambda x=x, t=target: self.medium.transmit(
                    x, Frame(ASSOC_REQUEST, x, t), self.control_freq, self.data_slot_us))
        yield self.window_slots * self.data_slot_us
        yield 0  # requests ending exactly at the window edge resolve first
        admitted = 0
        for x, target in list(self._requests):
            if self.roles[x] != XSTA:
                continue
            att = self.medium.transmit(target, Frame(ASSOC_REPLY, target, x),
                                       self.control_freq, self.data_slot_us)
            yield self.data_slot_us
            if self.medium.delivered_to(att, x):
                self.apply_association(x, target)
                admitted += 1
        activity = bool(self._requests) or self._collided_requests > 0
        self.sim.record(self.cco, "beacon_period_end", index=index, admitted=admitted)
        return admitted, activity

    def establish(self) -> EstablishReport:
        return self.sim.run_process(self._establish_proc())

    def _establish_proc(self):
        t0 = self.sim.now
        self.sim.record(self.cco, "establish_start", mode="")
        period = 0
        while True:
            period += 1
            if period > self._period_cap:
                self.sim.record(self.cco, "period_cap_reached", cap=self._period_cap)
                break
            admitted, activity = yield from self._period_proc(period)
            if admitted == 0 and not activity:
                break
        unjoined = [n for n in sorted(self.roles) if self.roles[n] == XSTA]
        report = EstablishReport("csma", list(self.joined_order), unjoined,
                                 self.sim.now - t0)
        self.sim.record(self.cco, "establish_done", joined=len(report.joined),
                        unjoined=len(unjoined),
                        networking_time_us=report.networking_time_us)
        return report
