"""Multi-frequency networking: cycles, promotions, per-link frequencies."""

import pytest

from pmacsim import FdNetwork, SimulationError, promote
from pmacsim.fdplc import APPROVED, CHILD_ATTACHED, LN, MN, RN, XLN

from conftest import make_medium


def make_fd(links, *, seed=0, access="pmac", overrides=(), **kwargs):
    sim, medium = make_medium(links, seed=seed, overrides=overrides)
    return sim, medium, FdNetwork(sim, medium, access=access, **kwargs)


# ----------------------------------------------------------------------
# promotions

def test_promote_approved_xln_becomes_leaf():
    assert promote(XLN, APPROVED) == LN


def test_promote_leaf_with_child_becomes_relay():
    assert promote(LN, CHILD_ATTACHED) == RN


def test_promote_relay_and_management_are_absorbing():
    assert promote(RN, CHILD_ATTACHED) == RN
    assert promote(MN, CHILD_ATTACHED) == MN


def test_illegal_promotions_are_contract_violations():
    with pytest.raises(SimulationError):
        promote(XLN, CHILD_ATTACHED)
    with pytest.raises(SimulationError):
        promote(LN, APPROVED)
    with pytest.raises(SimulationError):
        promote(RN, "made-up")


# ----------------------------------------------------------------------
# cycles

def test_first_cycle_admits_a_neighbor_of_the_management_node():
    sim, medium, net = make_fd([(0, 1)], seed=6)
    report = net.establish()
    assert net.roles[1] == LN
    assert 1 in net.short_addr
    cycles = sim.trace.by_kind("cycle_start")
    assert cycles[0].detail["beaconers"] == [0]


def test_second_cycle_leaf_gains_child_and_becomes_relay():
    sim, medium, net = make_fd([(0, 1), (1, 2)], seed=6)
    report = net.establish()
    assert net.roles[1] == RN
    assert net.roles[2] == LN
    assert report.parent_map() == {1: 0, 2: 1}


def test_third_cycle_relay_keeps_its_role():
    sim, medium, net = make_fd([(0, 1), (1, 2), (2, 3)], seed=6)
    net.establish()
    assert net.roles[1] == RN and net.roles[2] == RN and net.roles[3] == LN


def test_cycle_count_bounded_by_depth_plus_one():
    links = [(0, 1), (1, 2), (2, 3), (3, 4)]
    sim, medium, net = make_fd(links, seed=6)
    net.establish()
    cycles = sim.trace.by_kind("cycle_end")
    assert len(cycles) <= 4 + 1


def test_short_addresses_unique_and_assigned_by_management_node():
    sim, medium, net = make_fd([(0, 1), (0, 2), (1, 3), (2, 4)], seed=6)
    net.establish()
    addrs = list(net.short_addr.values())
    assert len(addrs) == len(set(addrs)) == 4
    for rec in sim.trace.by_kind("fd_admitted"):
        assert rec.detail["assigner"] == 0


# ----------------------------------------------------------------------
# whole-network establishment

def test_links_operate_on_their_per_link_argmax_frequencies():
    sim, medium, net = make_fd([(0, 1), (0, 2), (1, 3)], seed=13)
    # make the table non-constant so argmaxes are distinctive
    table = medium.snr_table
    from pmacsim import RngStream
    stream = RngStream(13, 99)
    for a, b in medium.topology.links:
        for f in range(medium.plan.n_points):
            table.set_directed(a, b, f, stream.draw_float(12.0, 38.0))
            table.set_directed(b, a, f, stream.draw_float(12.0, 38.0))
    report = net.establish()
    assert report.unjoined == []
    assert report.link_freqs
    for (parent, child), (up, down) in report.link_freqs.items():
        joint = [f for f in range(8)
                 if table.snr_directed(parent, child, f) >= 10.0
                 and table.snr_directed(child, parent, f) >= 10.0]
        want_down = max(joint, key=lambda f: (table.snr_directed(parent, child, f), -f))
        want_up = max(joint, key=lambda f: (table.snr_directed(child, parent, f), -f))
        assert (up, down) == (want_up, want_down)


def test_csma_access_joins_the_same_set_but_slower():
    links = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (3, 6), (4, 7)]
    sim_p, _, net_p = make_fd(links, seed=11, access="pmac")
    rep_p = net_p.establish()
    sim_c, _, net_c = make_fd(links, seed=11, access="csma")
    rep_c = net_c.establish()
    assert rep_p.joined_nodes == rep_c.joined_nodes
    assert rep_p.networking_time_us < rep_c.networking_time_us


def test_node_deaf_on_every_frequency_stays_out():
    overrides = [(0, 2, None, 2.0), (2, 0, None, 2.0)]
    sim, medium, net = make_fd([(0, 1), (0, 2)], seed=6, overrides=overrides)
    report = net.establish()
    assert report.unjoined == [2]
    assert net.roles[2] == XLN


def test_role_transition_trace_contains_only_legal_changes():
    sim, medium, net = make_fd([(0, 1), (1, 2), (1, 3), (2, 4)], seed=6)
    net.establish()
    for rec in sim.trace.by_kind("role_change"):
        assert rec.detail["role"] == RN


def test_common_control_switch_keeps_beacons_on_one_frequency():
    links = [(0, 1), (1, 2)]
    sim, medium, net = make_fd(links, seed=6, common_control=True)
    net.establish()
    beacons = [r for r in sim.trace.by_kind("frame") if r.detail["frame"] == "beacon"]
    assert beacons and all(r.detail["freq"] == 0 for r in beacons)


def test_unknown_access_mechanism_rejected():
    sim, medium = make_medium([(0, 1)])
    with pytest.raises(SimulationError):
        FdNetwork(sim, medium, access="tdma")
