"""Preamble-based network establishment and maintenance.

The gateway builds the network level by level. A contention round starts
with a broadcast PTE preamble; every node that wants in picks a random
slot inside the reply window, answers with its own PTE preamble, and both
ends remember the time difference between the broadcast and the reply.
The time difference is reused as an address: a T-Query data packet names
one recorded difference, and only the node holding it answers with its MAC
(or its retained SID if it held one before). Net-Config then binds MAC to
SID, distributes the network id and heartbeat, and confirms membership.

Deeper levels are reached by P-beacon: the gateway instructs an already
joined relay to run the contention round locally and ship the recorded
time differences back. When one node is reachable through several relays,
the route with the best channel quality wins.

Maintenance repeats the same machinery: joined nodes keep silent during
the rounds, nodes whose survival period lapsed contend again and are
re-admitted under the SID they kept, and silent members get keep-alive
Net-Configs that push their survival deadline forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .channel import COLLIDED, DELIVERED, Medium
from .engine import SimulationError, Simulator
from .frames import (
    MODE_PTE,
    NETCONFIG,
    NETCONFIG_CONFIRM,
    PBEACON,
    PBEACON_REPORT,
    PREAMBLE,
    TQUERY,
    TQUERY_REPLY,
    Frame,
    classify_preamble,
    netconfig_frame,
    preamble_frame,
    tquery_frame,
    tquery_reply_frame,
)
from .reports import EstablishReport, JoinRecord, MaintenanceReport

DEFAULT_PREAMBLE_SLOT_US = 220
DEFAULT_DATA_SLOT_US = 10445  # 12 OFDM symbols of 1024+64 samples at 1.25 MSPS
DEFAULT_WINDOW_SLOTS = 256
DEFAULT_HEARTBEAT_US = 10_000_000

MODE_FAIR = "fair"
MODE_FAST = "fast"


def mac_address(node: int) -> int:
    """Locally administered 48-bit MAC derived from the node id."""
    return 0x02_00_00_00_00_00 | node


@dataclass
class NodeState:
    node: int
    mac: int
    sid: int | None = None
    nwkid: int | None = None
    joined: bool = False
    stored_dt: int | None = None
    survival_deadline: int | None = None
    parent: int | None = None
    level: int = 0
    # initiators this node already answered a T-Query for during the
    # current pass; it stays silent in their later rounds
    matched_via: set = field(default_factory=set)


class BindingTable:
    """Gateway-held bijection between MAC addresses and SIDs."""

    def __init__(self, first_sid: int = 1):
        self._mac_to_sid: dict[int, int] = {}
        self._sid_to_mac: dict[int, int] = {}
        self._next = first_sid

    def assign(self, mac: int) -> int:
        """Existing binding if present, otherwise the next free SID."""
        sid = self._mac_to_sid.get(mac)
        if sid is None:
            sid = self._next
            self._next += 1
            self._mac_to_sid[mac] = sid
            self._sid_to_mac[sid] = mac
        return sid

    def sid_for(self, mac: int) -> int | None:
        return self._mac_to_sid.get(mac)

    def mac_for(self, sid: int) -> int | None:
        return self._sid_to_mac.get(sid)

    def items(self) -> list[tuple[int, int]]:
        return sorted(self._mac_to_sid.items())

    def __len__(self) -> int:
        return len(self._mac_to_sid)


def select_route(candidates) -> int:
    """Pick the relay with the best channel quality; ties go to the smallest id.

    `candidates` is a list of (relay_id, quality_db) pairs.
    """
    if not candidates:
        raise SimulationError("route selection needs at least one candidate")
    return min(candidates, key=lambda c: (-c[1], c[0]))[0]


class PreambleContention:
    """One broadcast-plus-window contention round.

    The initiator sends a PTE preamble; each eligible node draws a slot in
    [0, window_slots - 1] from its own stream, remembers the resulting time
    difference, and replies with a PTE preamble in that slot. A round takes
    exactly (1 + window_slots) preamble slots. Same-slot replies collide at
    the initiator and neither time difference is recorded.
    """

    def __init__(self, sim: Simulator, medium: Medium, slot_us: int, window_slots: int,
                 freq_index: int, eligible, remember, is_joined):
        self.sim = sim
        self.medium = medium
        self.slot_us = slot_us
        self.window_slots = window_slots
        self.freq_index = freq_index
        self.eligible = eligible
        self.remember = remember
        self.is_joined = is_joined
        self.initiator: int | None = None
        self._window_start = 0
        self._dts: list[int] = []
        self._activity = False

    def run(self, initiator: int, freq_index: int | None = None):
        freq = self.freq_index if freq_index is None else freq_index
        self.initiator = initiator
        self._freq = freq
        self._dts = []
        self._activity = False
        self.sim.record(initiator, "pte_round_start",
                        window_slots=self.window_slots, slot_us=self.slot_us, freq=freq)
        # the reply window opens when the broadcast ends; fixed up front so the
        # broadcast's own delivery callbacks can already tell the two apart
        self._window_start = self.sim.now + self.slot_us
        self.medium.transmit(initiator, preamble_frame(initiator, MODE_PTE), freq, self.slot_us)
        yield self.slot_us
        yield self.window_slots * self.slot_us
        yield 0  # let replies that finish exactly at the window edge resolve first
        dts = sorted(self._dts)
        activity = self._activity
        self.sim.record(initiator, "pte_round_end", dts=dts, activity=activity)
        self.initiator = None
        return dts, activity

    def on_frame(self, receiver: int, attempt, status: str) -> None:
        if self.initiator is None:
            return
        frame = attempt.frame
        if classify_preamble(frame.info.get("pattern", ())) != MODE_PTE:
            return
        if attempt.sender == self.initiator and attempt.start < self._window_start:
            # the round broadcast reaching a potential responder
            if status == DELIVERED and receiver != self.initiator and self.eligible(receiver):
                slot = self.sim.stream(receiver).draw_uniform(0, self.window_slots - 1)
                dt = slot * self.slot_us
                self.remember(receiver, dt)
                self.sim.schedule_in(slot * self.slot_us,
                                     lambda n=receiver: self._send_reply(n))
        elif receiver == self.initiator and attempt.sender != self.initiator:
            # a reply arriving back at the initiator
            if status == DELIVERED:
                dt = attempt.start - self._window_start
                self._dts.append(dt)
                self._activity = True
                self.sim.record(receiver, "dt_recorded", dt_us=dt, responder=attempt.sender)
            elif status == COLLIDED:
                self._activity = True

    def _send_reply(self, node: int) -> None:
        self.sim.record(node, "pte_reply", joined=self.is_joined(node))
        self.medium.transmit(node, preamble_frame(node, MODE_PTE), self._freq, self.slot_us)


class PmacNetwork:
    """Protocol state and orchestration for one gateway-rooted network."""

    def __init__(self, sim: Simulator, medium: Medium, gateway: int = 0, *,
                 preamble_slot_us: int = DEFAULT_PREAMBLE_SLOT_US,
                 data_slot_us: int = DEFAULT_DATA_SLOT_US,
                 window_slots: int = DEFAULT_WINDOW_SLOTS,
                 control_freq: int = 0,
                 heartbeat_us: int = DEFAULT_HEARTBEAT_US,
                 nwkid: int = 1,
                 mode: str = MODE_FAIR):
        self.sim = sim
        self.medium = medium
        self.gateway = gateway
        self.preamble_slot_us = preamble_slot_us
        self.data_slot_us = data_slot_us
        self.window_slots = window_slots
        self.control_freq = control_freq
        self.heartbeat_us = heartbeat_us
        self.nwkid = nwkid
        self.mode = mode

        self.nodes = {n: NodeState(n, mac_address(n)) for n in medium.topology.nodes}
        gw = self.nodes[gateway]
        gw.joined = True
        gw.level = 0
        self.binding = BindingTable()
        self.parent: dict[int, int] = {}
        self.levels: dict[int, int] = {gateway: 0}
        self.joined_order: list[JoinRecord] = []
        self._access_list: list[JoinRecord] | None = None
        # survival enforcement starts once the network is operational;
        # mid-establishment expiry would make joiners lapse and re-contend
        self._lapse_armed = False
        self._expect: dict | None = None
        self._got: Frame | None = None
        # safety bound so degenerate windows (e.g. a single slot) cannot loop
        self._round_cap = max(16, 4 * len(self.nodes))

        medium.handler = self._on_frame
        self._contention = PreambleContention(
            sim, medium, preamble_slot_us, window_slots, control_freq,
            eligible=self._may_contend,
            remember=self._store_dt,
            is_joined=lambda n: self.nodes[n].joined,
        )

    # ------------------------------------------------------------------
    # node-side behaviour

    def _check_lapse(self, st: NodeState) -> None:
        # survival expiry is observed lazily: the node exits on its next
        # chance to act, keeping the SID binding
        if not self._lapse_armed:
            return
        if st.joined and st.survival_deadline is not None and self.sim.now > st.survival_deadline:
            st.joined = False
            st.survival_deadline = None
            self.sim.record(st.node, "auto_exit", sid=st.sid)

    def _may_contend(self, node: int) -> bool:
        if node == self.gateway:
            return False
        st = self.nodes[node]
        self._check_lapse(st)
        if st.joined:
            return False
        return self._contention.initiator not in st.matched_via

    def _store_dt(self, node: int, dt_us: int) -> None:
        self.nodes[node].stored_dt = dt_us

    def _on_frame(self, receiver: int, attempt, status: str) -> None:
        frame = attempt.frame
        if frame.kind == PREAMBLE:
            self._contention.on_frame(receiver, attempt, status)
            return
        if status != DELIVERED:
            return
        if frame.kind == TQUERY and frame.dst is None:
            st = self.nodes[receiver]
            if st.stored_dt is not None and st.stored_dt == frame.info["dt_us"]:
                self._reply_tquery(receiver, attempt.sender)
        elif frame.kind == NETCONFIG and frame.dst == receiver:
            self._apply_netconfig(receiver, attempt.sender, frame.info)
        elif self._expect is not None:
            e = self._expect
            if frame.kind == e["kind"] and receiver == e["at"] and frame.dst == receiver:
                self._got = frame

    def _reply_tquery(self, node: int, to: int) -> None:
        st = self.nodes[node]
        holders = sorted(n for n, s in self.nodes.items() if s.stored_dt == st.stored_dt)
        self.sim.record(node, "tquery_match", dt_us=st.stored_dt, holders=holders)
        st.matched_via.add(to)
        if st.sid is not None:
            reply = tquery_reply_frame(node, to, sid=st.sid)
        else:
            reply = tquery_reply_frame(node, to, mac=st.mac)
        reply.info["origin"] = node
        self.medium.transmit(node, reply, self.control_freq, self.data_slot_us)

    def _apply_netconfig(self, node: int, from_relay: int, info: dict) -> None:
        st = self.nodes[node]
        self._check_lapse(st)
        if info["mac"] is not None:
            if info["mac"] != st.mac:
                return
            st.sid = info["sid"]
            st.nwkid = info["nwkid"]
            st.joined = True
            st.survival_deadline = self.sim.now + info["heartbeat_us"]
            st.parent = from_relay
            st.level = info["level"]
            self.sim.record(node, "rejoin" if info.get("rejoin") else "join",
                            sid=st.sid, nwkid=st.nwkid, level=st.level, parent=from_relay)
        else:
            # keep-alive addressed by SID: only the survival period moves
            if info["sid"] != st.sid:
                return
            st.joined = True
            st.survival_deadline = self.sim.now + info["heartbeat_us"]
            self.sim.record(node, "keepalive", sid=st.sid,
                            survival_deadline=st.survival_deadline)
        confirm = Frame(NETCONFIG_CONFIRM, node, from_relay, {"sid": st.sid})
        self.medium.transmit(node, confirm, self.control_freq, self.data_slot_us)

    # ------------------------------------------------------------------
    # gateway-side procedures (generator processes; yields are delays in us)

    def route_to(self, node: int) -> list[int]:
        """Gateway-to-node path along recorded parents."""
        path = [node]
        while path[-1] != self.gateway:
            nxt = self.parent.get(path[-1])
            if nxt is None:
                raise SimulationError(f"no route recorded to node {node}")
            path.append(nxt)
        path.reverse()
        return path

    def _chain(self, path, make_frame):
        """Unicast hop by hop; one data slot elapses per hop either way."""
        ok = True
        att = None
        for a, b in zip(path, path[1:]):
            if ok:
                att = self.medium.transmit(a, make_frame(a, b), self.control_freq,
                                           self.data_slot_us)
            yield self.data_slot_us
            if ok and not self.medium.delivered_to(att, b):
                ok = False
        return ok

    def run_pte(self, initiator: int):
        """One contention round; returns (sorted time differences, activity)."""
        return self._contention.run(initiator)

    def run_tquery(self, route: list[int], dt_us: int):
        """Query one recorded time difference through `route` (gateway first,
        querying relay last). Returns the reply frame or None after a
        one-exchange timeout. Costs 2 * len(route) data slots either way."""
        relay = route[-1]
        ok = True
        if len(route) > 1:
            ok = yield from self._chain(route, lambda a, b: tquery_frame(a, dt_us, dst=b))
        self._expect = {"kind": TQUERY_REPLY, "at": relay}
        self._got = None
        if ok:
            self.medium.transmit(relay, tquery_frame(relay, dt_us), self.control_freq,
                                 self.data_slot_us)
        yield self.data_slot_us  # query airtime
        yield self.data_slot_us  # reply airtime, or the timeout elapsing
        got = self._got
        self._expect = None
        self._got = None
        if len(route) > 1:
            if got is not None:
                back = list(reversed(route))
                okb = yield from self._chain(
                    back, lambda a, b, g=got: Frame(TQUERY_REPLY, a, b, dict(g.info)))
                if not okb:
                    got = None
            else:
                yield (len(route) - 1) * self.data_slot_us
        return got

    def run_netconfig(self, route: list[int], *, mac: int | None, sid: int,
                      keepalive: bool = False, rejoin: bool = False):
        """Configure the last node on `route`; returns True once the
        confirmation made it back. Costs 2 * (len(route) - 1) data slots."""
        target = route[-1]
        level = len(route) - 1
        info = {"mac": None if keepalive else mac, "sid": sid, "nwkid": self.nwkid,
                "heartbeat_us": self.heartbeat_us, "level": level, "rejoin": rejoin}

        self._expect = {"kind": NETCONFIG_CONFIRM, "at": route[-2]}
        self._got = None
        ok = yield from self._chain(
            route, lambda a, b: netconfig_frame_with(a, b, info))
        yield self.data_slot_us  # confirmation airtime at the last hop
        got = self._got
        self._expect = None
        self._got = None
        confirmed = ok and got is not None
        if len(route) > 2:
            if confirmed:
                back = list(reversed(route))[1:]
                confirmed = yield from self._chain(
                    back, lambda a, b, g=got: Frame(NETCONFIG_CONFIRM, a, b, dict(g.info)))
            else:
                yield (len(route) - 2) * self.data_slot_us
        if confirmed:
            self.sim.record(self.gateway, "netconfig_confirmed", target=target,
                            sid=sid, keepalive=keepalive)
        else:
            self.sim.record(self.gateway, "netconfig_timeout", target=target, sid=sid,
                            keepalive=keepalive)
        return confirmed

    def run_pbeacon(self, relay: int):
        """Ask a joined relay to run a contention round on the gateway's
        behalf; the recorded time differences travel back along the route.
        Returns (dts, activity, reached)."""
        route = self.route_to(relay)
        reached = True
        if len(route) > 1:
            reached = yield from self._chain(
                route, lambda a, b: Frame(PBEACON, a, b, {"relay": relay}))
        if reached:
            dts, activity = yield from self._contention.run(relay)
        else:
            # the scheduled round slot passes unused
            yield (1 + self.window_slots) * self.preamble_slot_us
            dts, activity = [], False
        if len(route) > 1:
            if reached:
                back = list(reversed(route))
                ok = yield from self._chain(
                    back, lambda a, b, d=dts: Frame(PBEACON_REPORT, a, b, {"dts": list(d)}))
                if not ok:
                    return [], False, False
            else:
                yield (len(route) - 1) * self.data_slot_us
        return dts, activity, reached

    # ------------------------------------------------------------------
    # establishment

    def _discover_via(self, relay: int, level: int, mode: str, discovered: dict,
                      order: list[int]):
        """Contention rounds at one relay until a silent round; T-Query every
        recorded time difference. In fast mode new nodes are configured on
        the spot; otherwise candidates accumulate for route selection."""
        admitted: list[int] = []
        rounds = 0
        while True:
            rounds += 1
            if rounds > self._round_cap:
                self.sim.record(relay, "round_cap_reached", cap=self._round_cap)
                break
            if relay == self.gateway:
                dts, activity = yield from self._contention.run(self.gateway)
            else:
                dts, activity, reached = yield from self.run_pbeacon(relay)
                if not reached:
                    break
            if not activity:
                break
            route = self.route_to(relay)
            fresh: list[int] = []
            for dt in dts:
                got = yield from self.run_tquery(route, dt)
                if got is None:
                    continue
                target = got.info["origin"]
                if "sid" in got.info:
                    sid = got.info["sid"]
                else:
                    sid = self.binding.assign(got.info["mac"])
                quality = self.medium.snr_table.snr_directed(target, relay, self.control_freq)
                discovered.setdefault(target, []).append((relay, quality))
                if target not in order and not self.nodes[target].joined:
                    order.append(target)
                    fresh.append(target)
                self.sim.record(self.gateway, "discovered", target=target, via=relay,
                                quality_db=quality, sid=sid)
            # recorded time differences are single use
            for st in self.nodes.values():
                st.stored_dt = None
            if mode == MODE_FAST:
                for target in fresh:
                    if self.nodes[target].joined:
                        continue
                    okj = yield from self._admit(target, relay, level)
                    if okj:
                        admitted.append(target)
        return admitted

    def _admit(self, target: int, via_relay: int, level: int):
        mac = self.nodes[target].mac
        sid = self.binding.assign(mac)
        route = self.route_to(via_relay) + [target]
        ok = yield from self.run_netconfig(route, mac=mac, sid=sid)
        if ok:
            self.parent[target] = via_relay
            self.levels[target] = level
            rec = JoinRecord(target, sid, level, via_relay, self.sim.now)
            self.joined_order.append(rec)
            self.sim.record(self.gateway, "admitted", target=target, sid=sid,
                            level=level, parent=via_relay)
        return ok

    def establish(self, mode: str | None = None) -> EstablishReport:
        """Build the whole network; blocks until the simulation settles."""
        return self.sim.run_process(self._establish_proc(mode or self.mode))

    def _establish_proc(self, mode: str):
        if mode not in (MODE_FAIR, MODE_FAST):
            raise SimulationError(f"unknown access mode {mode!r}")
        t0 = self.sim.now
        self.sim.record(self.gateway, "establish_start", mode=mode)
        frontier = [self.gateway]
        level = 1
        while frontier:
            for st in self.nodes.values():
                st.matched_via.clear()
            discovered: dict[int, list] = {}
            order: list[int] = []
            admitted: list[int] = []
            for relay in frontier:
                got_now = yield from self._discover_via(relay, level, mode, discovered, order)
                admitted.extend(got_now)
            if mode == MODE_FAIR:
                for target in order:
                    if self.nodes[target].joined:
                        continue
                    relay = select_route(discovered[target])
                    okj = yield from self._admit(target, relay, level)
                    if okj:
                        admitted.append(target)
            if not admitted:
                break
            frontier = sorted(admitted)
            level += 1
        unjoined = [n for n, st in sorted(self.nodes.items())
                    if n != self.gateway and not st.joined]
        report = EstablishReport("pmac", list(self.joined_order), unjoined,
                                 self.sim.now - t0, mode=mode)
        self._access_list = list(self.joined_order)
        # the operational phase starts now: every member is fresh
        for st in self.nodes.values():
            if st.joined and st.node != self.gateway:
                st.survival_deadline = self.sim.now + self.heartbeat_us
        self._lapse_armed = True
        self.sim.record(self.gateway, "establish_done",
                        joined=len(report.joined), unjoined=len(unjoined),
                        networking_time_us=report.networking_time_us)
        return report

    # ------------------------------------------------------------------
    # maintenance

    def force_lapse(self, node: int) -> None:
        """Drop a node out of the network as if its survival period expired;
        the SID binding is retained."""
        st = self.nodes[node]
        st.joined = False
        st.survival_deadline = None
        self.sim.record(node, "auto_exit", sid=st.sid)

    def maintain(self) -> MaintenanceReport:
        return self.sim.run_process(self._maintain_proc())

    def _maintain_proc(self):
        if self._access_list is None:
            raise SimulationError("maintenance requires a prior establishment")
        t0 = self.sim.now
        self.sim.record(self.gateway, "maintenance_start", members=len(self._access_list))
        access = self._access_list
        kept: list[int] = []
        rejoined: list[int] = []
        lost: list[int] = []
        discovered_all: set[int] = set()
        max_level = max((r.level for r in access), default=0)
        for level in range(1, max_level + 1):
            for st in self.nodes.values():
                st.matched_via.clear()
            relays = sorted(n for n, lv in self.levels.items()
                            if lv == level - 1 and self.nodes[n].joined)
            discovered: dict[int, list] = {}
            order: list[int] = []
            for relay in relays:
                yield from self._discover_via(relay, level, "maintain", discovered, order)
            discovered_all.update(order)
            # keep-alives for the members of this level that stayed silent
            for rec in access:
                n = rec.node
                if rec.level != level or n in discovered_all or n in rejoined:
                    continue
                route = self.route_to(n)
                sid = self.binding.sid_for(self.nodes[n].mac)
                ok = yield from self.run_netconfig(route, mac=None, sid=sid, keepalive=True)
                if ok:
                    kept.append(n)
                else:
                    lost.append(n)
            # re-admissions under the retained SID, best route first
            for target in order:
                if self.nodes[target].joined:
                    continue
                relay = select_route(discovered[target])
                new_level = self.levels[relay] + 1
                okj = yield from self._readmit(target, relay, new_level)
                if okj:
                    rejoined.append(target)
                else:
                    lost.append(target)
        for rec in access:
            if not self.nodes[rec.node].joined and rec.node not in lost:
                lost.append(rec.node)
        report = MaintenanceReport(kept, rejoined, lost, self.sim.now - t0)
        self.sim.record(self.gateway, "maintenance_done", kept=len(kept),
                        rejoined=len(rejoined), lost=len(lost))
        return report

    def _readmit(self, target: int, via_relay: int, level: int):
        mac = self.nodes[target].mac
        sid = self.binding.assign(mac)
        route = self.route_to(via_relay) + [target]
        ok = yield from self.run_netconfig(route, mac=mac, sid=sid, rejoin=True)
        if ok:
            self.parent[target] = via_relay
            self.levels[target] = level
            self._access_list = [r for r in self._access_list if r.node != target]
            self._access_list.append(JoinRecord(target, sid, level, via_relay, self.sim.now))
            self.sim.record(self.gateway, "readmitted", target=target, sid=sid,
                            level=level, parent=via_relay)
        return ok


def netconfig_frame_with(src: int, dst: int, info: dict) -> Frame:
    f = netconfig_frame(src, dst, mac=info["mac"], sid=info["sid"], nwkid=info["nwkid"],
                        heartbeat_us=info["heartbeat_us"])
    f.info["level"] = info["level"]
    f.info["rejoin"] = info["rejoin"]
    return f
