"""Multi-frequency network formation with management/relay/leaf roles.

Every cycle, the joined nodes (the management node, then relay and leaf
nodes as they appear) broadcast beacons; unassociated leaves pick the best
beacon they heard and run a registration through the chosen access
mechanism, either preamble contention plus T-Query (pmac) or data-frame
contention (csma). Before the configuration exchange, the new parent-child
pair sweeps the band so the link runs on its best uplink and downlink
frequencies. Approvals and short addresses always come from the management
node; relaying inside the already-built tree is abstracted to one request
and one reply packet on the hop next to the management node.

Role transitions: an approved xLN becomes LN; an LN that gains a child
becomes RN; MN and RN never change.
"""

from __future__ import annotations

from .channel import COLLIDED, DELIVERED, Medium
from .engine import SimulationError, Simulator
from .frames import (
    ASSOC_REPLY,
    ASSOC_REQUEST,
    BEACON,
    NETCONFIG,
    NETCONFIG_CONFIRM,
    PREAMBLE,
    REG_REPLY,
    REG_REQUEST,
    TQUERY,
    TQUERY_REPLY,
    Frame,
    tquery_frame,
)
from .pmac import PreambleContention, mac_address
from .reports import EstablishReport, JoinRecord
from .sweep import run_fd_sweep

MN = "mn"
RN = "rn"
LN = "ln"
XLN = "xln"

CHILD_ATTACHED = "child-attached"
APPROVED = "approved-by-mn"


def promote(role: str, event: str) -> str:
    """Legal role transitions; anything else is a contract violation."""
    if event == APPROVED:
        if role == XLN:
            return LN
        raise SimulationError(f"role {role} cannot be approved into the network")
    if event == CHILD_ATTACHED:
        if role == LN:
            return RN
        if role in (RN, MN):
            return role
        raise SimulationError(f"role {role} cannot take a child")
    raise SimulationError(f"unknown promotion event {event!r}")


class FdNetwork:
    def __init__(self, sim: Simulator, medium: Medium, mn: int = 0, *,
                 access: str = "pmac",
                 preamble_slot_us: int = 220,
                 data_slot_us: int = 10445,
                 window_slots: int = 256,
                 control_freq: int = 0,
                 common_control: bool = False,
                 probe_us: int | None = None):
        if access not in ("pmac", "csma"):
            raise SimulationError(f"unknown access mechanism {access!r}")
        self.sim = sim
        self.medium = medium
        self.mn = mn
        self.access = access
        self.preamble_slot_us = preamble_slot_us
        self.data_slot_us = data_slot_us
        self.window_slots = window_slots
        self.control_freq = control_freq
        self.common_control = common_control
        self.probe_us = probe_us if probe_us is not None else preamble_slot_us

        self.roles = {n: XLN for n in medium.topology.nodes}
        self.roles[mn] = MN
        self.short_addr: dict[int, int] = {}
        self.link_freqs: dict[tuple[int, int], tuple[int, int]] = {}
        self.parent: dict[int, int] = {}
        self.levels: dict[int, int] = {mn: 0}
        self.joined_order: list[JoinRecord] = []
        self._addr_next = 1
        self._heard: dict[int, list] = {}
        self._requests: list[tuple[int, int]] = []
        self._collided_requests = 0
        self._stored_dt: dict[int, int] = {}
        self._selectors: dict[int, list[int]] = {}
        self._expect: dict | None = None
        self._got: Frame | None = None
        self._cycle_cap = max(32, 8 * len(self.roles))

        medium.handler = self._on_frame
        self._contention = PreambleContention(
            sim, medium, preamble_slot_us, window_slots, control_freq,
            eligible=self._may_contend,
            remember=self._store_dt,
            is_joined=lambda n: self.roles[n] != XLN,
        )

    def joined(self, node: int) -> bool:
        return self.roles[node] != XLN

    def beacon_freq(self, node: int) -> int:
        """A joined node beacons on the downlink frequency negotiated on its
        parent link; the management node uses the control frequency."""
        if self.common_control or node == self.mn:
            return self.control_freq
        p = self.parent.get(node)
        pair = self.link_freqs.get((p, node))
        return self.control_freq if pair is None else pair[1]

    # ------------------------------------------------------------------
    # frame handling

    def _may_contend(self, node: int) -> bool:
        target = self._contention.initiator
        return (self.roles[node] == XLN
                and node in self._selectors.get(target, ()))

    def _store_dt(self, node: int, dt_us: int) -> None:
        self._stored_dt[node] = dt_us

    def _on_frame(self, receiver: int, attempt, status: str) -> None:
        frame = attempt.frame
        if frame.kind == PREAMBLE:
            self._contention.on_frame(receiver, attempt, status)
            return
        if frame.kind == ASSOC_REQUEST and frame.dst == receiver:
            if status == DELIVERED:
                self._requests.append((frame.src, receiver))
            elif status == COLLIDED:
                self._collided_requests += 1
            return
        if status != DELIVERED:
            return
        if frame.kind == BEACON and self.roles.get(receiver) == XLN:
            snr = self.medium.snr_table.snr_directed(frame.src, receiver,
                                                     attempt.freq_index)
            self._heard.setdefault(receiver, []).append((snr, frame.src))
        elif frame.kind == TQUERY and frame.dst is None:
            if self._stored_dt.get(receiver) == frame.info["dt_us"]:
                reply = Frame(TQUERY_REPLY, receiver, frame.src,
                              {"mac": mac_address(receiver), "origin": receiver})
                self.medium.transmit(receiver, reply, attempt.freq_index,
                                     self.data_slot_us)
        elif self._expect is not None:
            e = self._expect
            if frame.kind == e["kind"] and receiver == e["at"] and frame.dst == receiver:
                self._got = frame

    # ------------------------------------------------------------------
    # establishment

    def route_to(self, node: int) -> list[int]:
        path = [node]
        while path[-1] != self.mn:
            nxt = self.parent.get(path[-1])
            if nxt is None:
                raise SimulationError(f"no route recorded to node {node}")
            path.append(nxt)
        path.reverse()
        return path

    def establish(self) -> EstablishReport:
        return self.sim.run_process(self._establish_proc())

    def _establish_proc(self):
        t0 = self.sim.now
        self.sim.record(self.mn, "establish_start", mode=self.access)
        cycle = 0
        while True:
            cycle += 1
            if cycle > self._cycle_cap:
                self.sim.record(self.mn, "cycle_cap_reached", cap=self._cycle_cap)
                break
            admitted, activity = yield from self.run_cycle(cycle)
            if admitted == 0 and not activity:
                break
        unjoined = [n for n in sorted(self.roles) if self.roles[n] == XLN]
        report = EstablishReport(f"fd-{self.access}", list(self.joined_order), unjoined,
                                 self.sim.now - t0, mode=self.access,
                                 link_freqs=dict(self.link_freqs))
        self.sim.record(self.mn, "establish_done", joined=len(report.joined),
                        unjoined=len(unjoined),
                        networking_time_us=report.networking_time_us)
        return report

    def run_cycle(self, index: int):
        """One beacon-plus-admission cycle; returns (admitted, activity)."""
        beaconers = [self.mn] + [r.node for r in self.joined_order]
        self.sim.record(self.mn, "cycle_start", index=index, beaconers=beaconers)
        self._heard = {}
        for b in beaconers:
            self.medium.transmit(b, Frame(BEACON, b), self.beacon_freq(b),
                                 self.data_slot_us)
            yield self.data_slot_us
        self._selectors = {}
        for x in sorted(self._heard):
            if self.roles[x] != XLN:
                continue
            snr, target = max(self._heard[x], key=lambda e: (e[0], -e[1]))
            self._selectors.setdefault(target, []).append(x)

        admitted = 0
        activity = False
        if self.access == "pmac":
            for target in sorted(self._selectors):
                dts, act = yield from self._contention.run(target, self.beacon_freq(target))
                activity = activity or act
                freq = self.beacon_freq(target)
                for dt in dts:
                    node = yield from self._tquery_direct(target, dt, freq)
                    if node is None:
                        continue
                    ok = yield from self._admit(node, target)
                    admitted += 1 if ok else 0
                self._stored_dt.clear()
        else:
            self._requests = []
            self._collided_requests = 0
            for target in sorted(self._selectors):
                for x in self._selectors[target]:
                    slot = self.sim.stream(x).draw_uniform(0, self.window_slots - 1)
                    self.sim.record(x, "csma_contend", slot=slot, target=target)
                    self.sim.schedule_in(
                        slot * self.data_slot_us,
                        lambda x=x, t=target: self.medium.transmit(
                            x, Frame(ASSOC_REQUEST, x, t),
                            self.beacon_freq(t), self.data_slot_us))
            yield self.window_slots * self.data_slot_us
            yield 0
            activity = bool(self._requests) or self._collided_requests > 0
            for x, target in list(self._requests):
                if self.roles[x] != XLN:
                    continue
                ok = yield from self._admit(x, target)
                admitted += 1 if ok else 0
        self.sim.record(self.mn, "cycle_end", index=index, admitted=admitted)
        return admitted, activity

    def _tquery_direct(self, target: int, dt_us: int, freq: int):
        """Single-hop time-difference query run by the admission target."""
        self._expect = {"kind": TQUERY_REPLY, "at": target}
        self._got = None
        self.medium.transmit(target, tquery_frame(target, dt_us), freq, self.data_slot_us)
        yield self.data_slot_us
        yield self.data_slot_us
        got = self._got
        self._expect = None
        self._got = None
        return None if got is None else got.info["origin"]

    def _admit(self, node: int, target: int):
        """Sweep the new link, register with the management node, then run the
        configuration exchange on the chosen frequencies."""
        res = yield from run_fd_sweep(self.medium, target, node,
                                      probe_us=self.probe_us,
                                      confirm_us=self.data_slot_us)
        if not res.complete:
            self.sim.record(node, "fd_admission_failed", reason="sweep_incomplete",
                            target=target)
            return False
        approved = yield from self._register(node, target, res)
        if not approved:
            self.sim.record(node, "fd_admission_failed", reason="not_approved",
                            target=target)
            return False
        addr = self._addr_next
        if self.access == "pmac":
            att = self.medium.transmit(target, Frame(NETCONFIG, target, node,
                                                     {"short_addr": addr}),
                                       res.best_down, self.data_slot_us)
            yield self.data_slot_us
            if not self.medium.delivered_to(att, node):
                return False
            att2 = self.medium.transmit(node, Frame(NETCONFIG_CONFIRM, node, target,
                                                    {"short_addr": addr}),
                                        res.best_up, self.data_slot_us)
            yield self.data_slot_us
            if not self.medium.delivered_to(att2, target):
                return False
        else:
            att = self.medium.transmit(target, Frame(ASSOC_REPLY, target, node,
                                                     {"short_addr": addr}),
                                       res.best_down, self.data_slot_us)
            yield self.data_slot_us
            if not self.medium.delivered_to(att, node):
                return False
        self._addr_next += 1
        self.short_addr[node] = addr
        self.roles[node] = promote(self.roles[node], APPROVED)
        if self.roles[target] == LN:
            self.roles[target] = promote(self.roles[target], CHILD_ATTACHED)
            self.sim.record(target, "role_change", role=RN)
        self.parent[node] = target
        level = self.levels[target] + 1
        self.levels[node] = level
        self.link_freqs[(target, node)] = (res.best_up, res.best_down)
        self.joined_order.append(JoinRecord(node, addr, level, target, self.sim.now))
        self.sim.record(node, "fd_admitted", addr=addr, assigner=self.mn, level=level,
                        parent=target, best_up=res.best_up, best_down=res.best_down)
        return True

    def _register(self, node: int, target: int, res):
        """Approval round trip with the management node: one request and one
        reply packet on the hop next to it; deeper relaying is free."""
        if target == self.mn:
            requester = node
            up_freq = res.best_up
            down_freq = res.best_down
        else:
            requester = self.route_to(target)[1]
            pair = self.link_freqs.get((self.mn, requester))
            up_freq = self.control_freq if pair is None else pair[0]
            down_freq = self.control_freq if pair is None else pair[1]
        att = self.medium.transmit(requester, Frame(REG_REQUEST, requester, self.mn,
                                                    {"node": node}),
                                   up_freq, self.data_slot_us)
        yield self.data_slot_us
        if not self.medium.delivered_to(att, self.mn):
            yield self.data_slot_us  # the reply window passes empty
            return False
        att2 = self.medium.transmit(self.mn, Frame(REG_REPLY, self.mn, requester,
                                                   {"node": node, "approved": True}),
                                    down_freq, self.data_slot_us)
        yield self.data_slot_us
        return self.medium.delivered_to(att2, requester)
