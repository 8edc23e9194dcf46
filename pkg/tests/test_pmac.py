"""Preamble time exchange, handshakes, establishment, and maintenance."""

import pytest

from pmacsim import SimulationError, select_route
from pmacsim.pmac import PmacNetwork, mac_address, BindingTable

from conftest import DIAMOND_LINKS, DIAMOND_QUALITIES, make_medium


def make_stack(links, *, seed=0, overrides=(), **kwargs):
    sim, medium = make_medium(links, seed=seed, overrides=overrides)
    return sim, medium, PmacNetwork(sim, medium, **kwargs)


# ----------------------------------------------------------------------
# PTE rounds

def test_pte_window_duration_is_256_slots_of_220us():
    sim, medium, stack = make_stack([(0, 1), (0, 2)], seed=4)
    sim.run_process(stack.run_pte(0))
    start = sim.trace.by_kind("pte_round_start")[0]
    end = sim.trace.by_kind("pte_round_end")[0]
    # reply window alone: 256 x 220 us = 56.32 ms; the whole round adds the
    # broadcast slot on top
    assert end.at - start.at == (1 + 256) * 220
    assert 256 * 220 == 56_320


def test_pte_time_differences_are_slot_multiples_recorded_at_both_ends():
    sim, medium, stack = make_stack([(0, 1), (0, 2)], seed=4)
    dts, activity = sim.run_process(stack.run_pte(0))
    assert activity and len(dts) == 2
    for node in (1, 2):
        st = stack.nodes[node]
        assert st.stored_dt in dts
        assert st.stored_dt % 220 == 0
        assert 0 <= st.stored_dt // 220 < 256
    # the initiator derives the same values from reply timing
    recorded = sorted(r.detail["dt_us"] for r in sim.trace.by_kind("dt_recorded"))
    assert recorded == dts


def test_pte_same_slot_collision_drops_both():
    # a single-slot window forces both responders into slot 0
    sim, medium = make_medium([(0, 1), (0, 2)], seed=4)
    stack = PmacNetwork(sim, medium, window_slots=1)
    dts, activity = sim.run_process(stack.run_pte(0))
    assert dts == []
    assert activity  # the initiator heard the pile-up even if nothing decoded
    # both responders still drew and stored the same difference
    assert stack.nodes[1].stored_dt == stack.nodes[2].stored_dt == 0


def test_pte_zero_responders_returns_empty():
    sim, medium, stack = make_stack([(0, 1)], seed=4)
    stack.nodes[1].joined = True
    dts, activity = sim.run_process(stack.run_pte(0))
    assert dts == [] and not activity


def test_joined_nodes_do_not_reply():
    sim, medium, stack = make_stack([(0, 1), (0, 2)], seed=4)
    stack.nodes[2].joined = True
    dts, _ = sim.run_process(stack.run_pte(0))
    assert len(dts) == 1
    assert stack.nodes[2].stored_dt is None
    for rec in sim.trace.by_kind("pte_reply"):
        assert rec.detail["joined"] is False


# ----------------------------------------------------------------------
# T-Query

def test_tquery_matches_stored_difference_and_returns_mac():
    sim, medium, stack = make_stack([(0, 2), (0, 3)], seed=1)
    stack.nodes[2].stored_dt = 1540
    stack.nodes[3].stored_dt = 4180
    got = sim.run_process(stack.run_tquery([0], 1540))
    assert got is not None
    assert got.info["origin"] == 2
    assert got.info["mac"] == mac_address(2)
    # one packet out, one back
    assert sim.now == 2 * stack.data_slot_us


def test_tquery_bound_node_answers_with_sid():
    sim, medium, stack = make_stack([(0, 2)], seed=1)
    stack.nodes[2].stored_dt = 660
    stack.nodes[2].sid = 9
    got = sim.run_process(stack.run_tquery([0], 660))
    assert got.info.get("sid") == 9
    assert "mac" not in got.info


def test_tquery_unmatched_difference_times_out():
    sim, medium, stack = make_stack([(0, 2)], seed=1)
    stack.nodes[2].stored_dt = 220
    got = sim.run_process(stack.run_tquery([0], 999))
    assert got is None
    assert sim.now == 2 * stack.data_slot_us  # the timeout costs one exchange


def test_tquery_quality_sample_comes_from_snr_table():
    sim, medium, stack = make_stack([(0, 1)], seed=1,
                                    overrides=[(1, 0, None, 27.5)])
    assert medium.snr_table.snr_directed(1, 0, 0) == 27.5


# ----------------------------------------------------------------------
# Net-Config

def test_netconfig_binds_fresh_sid_and_confirms():
    sim, medium, stack = make_stack([(0, 2)], seed=1)
    ok = sim.run_process(stack.run_netconfig([0, 2], mac=mac_address(2), sid=5))
    st = stack.nodes[2]
    assert ok and st.joined and st.sid == 5 and st.nwkid == stack.nwkid
    assert st.survival_deadline is not None
    assert sim.now == 2 * stack.data_slot_us


def test_netconfig_keepalive_only_advances_survival():
    sim, medium, stack = make_stack([(0, 2)], seed=1)
    sim.run_process(stack.run_netconfig([0, 2], mac=mac_address(2), sid=5))
    st = stack.nodes[2]
    before = (st.sid, st.nwkid, st.parent, st.level)
    deadline_before = st.survival_deadline
    ok = sim.run_process(stack.run_netconfig([0, 2], mac=None, sid=5, keepalive=True))
    assert ok
    # the deadline re-arms to a full heartbeat from the keep-alive delivery,
    # which lands one slot before its confirmation returns
    assert st.survival_deadline == (sim.now - stack.data_slot_us) + stack.heartbeat_us
    assert st.survival_deadline > deadline_before
    assert (st.sid, st.nwkid, st.parent, st.level) == before


def test_netconfig_unreachable_target_times_out_without_state_change():
    sim, medium, stack = make_stack([(0, 2)], seed=1,
                                    overrides=[(0, 2, None, 2.0)])
    ok = sim.run_process(stack.run_netconfig([0, 2], mac=mac_address(2), sid=5))
    assert not ok
    assert not stack.nodes[2].joined and stack.nodes[2].sid is None


# ----------------------------------------------------------------------
# P-beacon

def _join_level_one(stack, nodes):
    for n in nodes:
        st = stack.nodes[n]
        st.joined = True
        st.sid = n
        st.level = 1
        st.parent = stack.gateway
        stack.parent[n] = stack.gateway
        stack.levels[n] = 1


def test_pbeacon_relays_the_round_and_reports_differences():
    sim, medium, stack = make_stack(DIAMOND_LINKS, seed=3,
                                    overrides=DIAMOND_QUALITIES)
    _join_level_one(stack, (1, 2))
    dts, activity, reached = sim.run_process(stack.run_pbeacon(1))
    assert reached and activity
    assert len(dts) == 2  # nodes 3 and 4 replied to the relayed round
    assert stack.nodes[3].stored_dt in dts and stack.nodes[4].stored_dt in dts


def test_pbeacon_with_no_unjoined_neighbors_returns_empty():
    sim, medium, stack = make_stack([(0, 1)], seed=3)
    _join_level_one(stack, (1,))
    dts, activity, reached = sim.run_process(stack.run_pbeacon(1))
    assert reached and dts == [] and not activity


def test_pbeacon_joined_neighbor_stays_silent():
    sim, medium, stack = make_stack(DIAMOND_LINKS, seed=3)
    _join_level_one(stack, (1, 2))
    stack.nodes[3].joined = True
    dts, _, _ = sim.run_process(stack.run_pbeacon(1))
    assert len(dts) == 1
    assert stack.nodes[4].stored_dt in dts


def test_pbeacon_unreachable_relay_flags_timeout():
    sim, medium, stack = make_stack([(0, 1), (1, 5)], seed=3,
                                    overrides=[(0, 1, None, 2.0)])
    _join_level_one(stack, (1,))
    dts, activity, reached = sim.run_process(stack.run_pbeacon(1))
    assert not reached and dts == []


# ----------------------------------------------------------------------
# route selection

def test_select_route_prefers_quality():
    assert select_route([(1, 25.0), (2, 18.0)]) == 1
    assert select_route([(2, 18.0), (1, 25.0)]) == 1


def test_select_route_tie_breaks_to_smaller_id():
    assert select_route([(2, 20.0), (1, 20.0)]) == 1


def test_select_route_single_candidate():
    assert select_route([(7, 1.0)]) == 7


def test_select_route_rejects_empty():
    with pytest.raises(SimulationError):
        select_route([])


# ----------------------------------------------------------------------
# establishment

def test_two_level_establishment_matches_the_worked_example(diamond_stack):
    sim, medium, stack = diamond_stack
    report = stack.establish()
    assert sorted(r.node for r in report.joined) == [1, 2, 3, 4]
    levels = report.levels()
    assert levels[1] == 1 and levels[2] == 1
    assert levels[3] == 2 and levels[4] == 2
    parents = report.parent_map()
    assert parents[3] == 1  # route 1: gateway -> node 1 -> node 3
    assert parents[4] == 2  # route 2: gateway -> node 2 -> node 4
    assert report.unjoined == []


def test_single_node_joins_at_level_one():
    sim, medium, stack = make_stack([(0, 1)], seed=5)
    report = stack.establish()
    assert [r.node for r in report.joined] == [1]
    assert report.joined[0].level == 1
    assert report.joined[0].parent == 0


def test_unreachable_node_reported_unjoined_not_error():
    sim, medium, stack = make_stack([(0, 1), (1, 2)], seed=5,
                                    overrides=[(1, 2, None, 2.0), (2, 1, None, 2.0)])
    report = stack.establish()
    assert [r.node for r in report.joined] == [1]
    assert report.unjoined == [2]


def test_sid_bindings_are_a_bijection(diamond_stack):
    sim, medium, stack = diamond_stack
    report = stack.establish()
    sids = [r.address for r in report.joined]
    assert len(sids) == len(set(sids))
    for mac, sid in stack.binding.items():
        assert stack.binding.mac_for(sid) == mac


def test_fast_mode_matches_fair_final_state_on_collision_free_run():
    runs = {}
    for mode in ("fair", "fast"):
        sim, medium, stack = make_stack(DIAMOND_LINKS, seed=3,
                                        overrides=DIAMOND_QUALITIES)
        report = stack.establish(mode)
        # confirm no preamble reply collided in this run
        collided = any(r.detail["collided"] for r in sim.trace.by_kind("frame")
                       if r.detail["frame"] == "preamble")
        assert not collided
        runs[mode] = {r.node: r.address for r in report.joined}
    assert runs["fair"] == runs["fast"]


def test_binding_table_reuses_sid_for_known_mac():
    table = BindingTable()
    first = table.assign(0x02_00_00_00_00_07)
    again = table.assign(0x02_00_00_00_00_07)
    other = table.assign(0x02_00_00_00_00_08)
    assert first == again and other != first


# ----------------------------------------------------------------------
# maintenance

def test_maintenance_reproduces_the_lapsed_pair_example(diamond_stack):
    sim, medium, stack = diamond_stack
    report = stack.establish()
    sid2 = stack.nodes[2].sid
    sid4 = stack.nodes[4].sid
    stack.force_lapse(2)
    stack.force_lapse(4)
    result = stack.maintain()
    assert sorted(result.rejoined) == [2, 4]
    assert sorted(result.kept_alive) == [1, 3]
    assert result.lost == []
    # SIDs retained across the lapse
    assert stack.nodes[2].sid == sid2
    assert stack.nodes[4].sid == sid4
    # node 4 re-selected the better of the two relays
    assert stack.parent[4] == 2


def test_maintenance_without_lapses_extends_every_survival(diamond_stack):
    sim, medium, stack = diamond_stack
    stack.establish()
    result = stack.maintain()
    assert result.rejoined == [] and result.lost == []
    assert sorted(result.kept_alive) == [1, 2, 3, 4]
    # nobody replied to any maintenance round
    start = sim.trace.by_kind("maintenance_start")[0]
    replies = [r for r in sim.trace.by_kind("pte_reply") if r.at >= start.at]
    assert replies == []
    for n in (1, 2, 3, 4):
        assert stack.nodes[n].survival_deadline > start.at


def test_maintenance_requires_prior_establishment():
    sim, medium, stack = make_stack([(0, 1)])
    with pytest.raises(SimulationError):
        stack.maintain()


def test_lapsed_node_out_of_range_is_reported_lost():
    sim, medium, stack = make_stack([(0, 1)], seed=5)
    stack.establish()
    stack.force_lapse(1)
    # sever the link after establishment
    for f in range(medium.plan.n_points):
        medium.snr_table.set_directed(0, 1, f, 2.0)
        medium.snr_table.set_directed(1, 0, f, 2.0)
    result = stack.maintain()
    assert result.lost == [1] and result.rejoined == []
