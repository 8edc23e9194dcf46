"""Topology, SNR tables, and collision semantics."""

import pytest

from pmacsim import (
    BELOW_THRESHOLD,
    COLLIDED,
    DELIVERED,
    ChannelConfigError,
    FrequencyPlan,
    SimulationError,
    Simulator,
    SnrTable,
    Topology,
    TransmissionAttempt,
    resolve_deliveries,
)
from pmacsim.frames import Frame

from conftest import make_medium


def test_topology_rejects_self_links():
    with pytest.raises(ChannelConfigError):
        Topology([(1, 1)])


def test_topology_neighbors_sorted():
    topo = Topology([(0, 2), (0, 1), (2, 3)])
    assert topo.neighbors(0) == (1, 2)
    assert topo.neighbors(2) == (0, 3)
    assert topo.nodes == (0, 1, 2, 3)


def test_default_plan_splits_2_to_12_mhz_into_8_subbands():
    plan = FrequencyPlan.split_band()
    assert plan.n_points == 8
    expected = [2.625e6, 3.875e6, 5.125e6, 6.375e6, 7.625e6, 8.875e6, 10.125e6, 11.375e6]
    assert list(plan.centers) == pytest.approx(expected)


def test_plan_centers_must_increase_within_band():
    with pytest.raises(ChannelConfigError):
        FrequencyPlan(2, 0.0, 10.0, (5.0, 5.0))
    with pytest.raises(ChannelConfigError):
        FrequencyPlan(2, 0.0, 10.0, (5.0, 20.0))


def test_snr_lookup_and_direction_convention():
    table = SnrTable()
    table.set_directed(1, 2, 3, 22.5)
    table.set_directed(2, 1, 3, 18.0)
    assert table.snr((1, 2), "down", 3) == 22.5
    assert table.snr((1, 2), "up", 3) == 18.0
    assert table.snr((2, 1), "down", 3) == 18.0
    assert table.snr_directed(1, 2, 3) == 22.5


def test_missing_snr_entry_is_a_configuration_error():
    with pytest.raises(ChannelConfigError):
        SnrTable().snr_directed(0, 1, 0)


def test_symmetric_table_reads_same_both_ways():
    topo = Topology([(0, 1)])
    plan = FrequencyPlan.split_band(4)
    table = SnrTable.constant(topo, plan, 19.0)
    for f in range(4):
        assert table.snr((0, 1), "up", f) == table.snr((0, 1), "down", f)


def test_generated_table_is_reproducible():
    from pmacsim import RngStream
    topo = Topology([(0, 1), (1, 2)])
    plan = FrequencyPlan.split_band(8)
    t1 = SnrTable.generate(topo, plan, RngStream(5, 1), 10, 30)
    t2 = SnrTable.generate(topo, plan, RngStream(5, 1), 10, 30)
    for a, b in topo.links:
        for f in range(8):
            assert t1.snr_directed(a, b, f) == t2.snr_directed(a, b, f)


def test_is_communicable_uses_at_least_semantics():
    table = SnrTable()
    table.set_directed(0, 1, 0, 9.99)
    table.set_directed(0, 1, 1, 10.0)
    assert not table.is_communicable((0, 1), "down", 0, 10.0)
    assert table.is_communicable((0, 1), "down", 1, 10.0)


def test_all_blocked_table_never_communicable():
    topo = Topology([(0, 1)])
    plan = FrequencyPlan.split_band(8)
    table = SnrTable.constant(topo, plan, 3.0)
    assert not any(table.is_communicable((0, 1), "down", f, 10.0) for f in range(8))


# ----------------------------------------------------------------------
# delivery resolution

def _attempt(sender, freq, start, dur, tag="x"):
    return TransmissionAttempt(sender, Frame(tag, sender), freq, start, dur)


def _mk_env(snr_entries):
    topo = Topology([(0, 2), (1, 2), (0, 1)])
    table = SnrTable()
    for (tx, rx, f), db in snr_entries.items():
        table.set_directed(tx, rx, f, db)
    return topo, table


def test_single_sender_above_threshold_delivers():
    topo, table = _mk_env({(0, 1, 0): 30.0, (0, 2, 0): 30.0})
    att = _attempt(0, 0, 0, 100)
    outs = {o.receiver: o.status for o in resolve_deliveries(att, [att], topo, table, 10.0)}
    assert outs == {1: DELIVERED, 2: DELIVERED}


def test_same_frequency_overlap_collides_at_shared_neighbor():
    topo, table = _mk_env({(0, 1, 0): 30.0, (0, 2, 0): 30.0,
                           (1, 0, 0): 30.0, (1, 2, 0): 30.0})
    a = _attempt(0, 0, 0, 100)
    b = _attempt(1, 0, 50, 100)
    outs_a = {o.receiver: o.status for o in resolve_deliveries(a, [a, b], topo, table, 10.0)}
    outs_b = {o.receiver: o.status for o in resolve_deliveries(b, [a, b], topo, table, 10.0)}
    assert outs_a[2] == COLLIDED and outs_b[2] == COLLIDED
    # the two senders are each other's receivers and are busy transmitting
    assert outs_a[1] == COLLIDED and outs_b[0] == COLLIDED


def test_different_frequencies_do_not_interact():
    topo, table = _mk_env({(0, 1, 0): 30.0, (0, 2, 0): 30.0,
                           (1, 0, 1): 30.0, (1, 2, 1): 30.0})
    a = _attempt(0, 0, 0, 100)
    b = _attempt(1, 1, 0, 100)
    outs_a = {o.receiver: o.status for o in resolve_deliveries(a, [a, b], topo, table, 10.0)}
    outs_b = {o.receiver: o.status for o in resolve_deliveries(b, [a, b], topo, table, 10.0)}
    assert outs_a[2] == DELIVERED
    assert outs_b[2] == DELIVERED


def test_exhaustive_two_sender_overlap_patterns():
    """Small-case oracle: every start/duration/frequency/SNR combination of
    two attempts, expected outcomes computed with an independent
    occupied-microsecond model."""
    thr = 10.0
    for s0 in (0, 1, 2):
        for s1 in (0, 1, 2):
            for d0 in (1, 2):
                for d1 in (1, 2):
                    for f1 in (0, 1):
                        for snr02 in (5.0, 20.0):
                            topo, table = _mk_env({
                                (0, 1, 0): 20.0, (0, 2, 0): snr02,
                                (1, 0, f1): 20.0, (1, 2, f1): 20.0,
                            })
                            a = _attempt(0, 0, s0, d0)
                            b = _attempt(1, f1, s1, d1)
                            outs = {o.receiver: o.status
                                    for o in resolve_deliveries(a, [a, b], topo, table, thr)}
                            # oracle: explicit microsecond occupancy
                            occupied_same_freq = (f1 == 0 and
                                                  set(range(s0, s0 + d0)) & set(range(s1, s1 + d1)))
                            if snr02 < thr:
                                want2 = BELOW_THRESHOLD
                            elif occupied_same_freq:
                                want2 = COLLIDED
                            else:
                                want2 = DELIVERED
                            assert outs[2] == want2, (s0, s1, d0, d1, f1, snr02)


def test_collision_relation_zero_deliveries_for_overlapping_set():
    # three same-slot senders into one hub: nobody gets through
    topo = Topology([(0, 9), (1, 9), (2, 9)])
    table = SnrTable()
    for s in (0, 1, 2):
        table.set_directed(s, 9, 0, 30.0)
        table.set_directed(9, s, 0, 30.0)
    atts = [_attempt(s, 0, 0, 100) for s in (0, 1, 2)]
    for att in atts:
        outs = {o.receiver: o.status for o in resolve_deliveries(att, atts, topo, table, 10.0)}
        assert outs[9] == COLLIDED


def test_medium_delivery_is_deterministic_and_traced():
    sim, medium = make_medium([(0, 1), (0, 2)], seed=1)
    medium.transmit(0, Frame("x", 0), 0, 100)
    sim.run_to_completion()
    frames = sim.trace.by_kind("frame")
    assert len(frames) == 1
    assert frames[0].detail["delivered"] == [1, 2]
    assert frames[0].detail["start"] == 0 and frames[0].detail["dur"] == 100


def test_medium_frequency_isolation_end_to_end():
    """Adding traffic on another frequency leaves the outcome records of the
    original frequency untouched."""
    def run(extra):
        sim, medium = make_medium([(0, 2), (1, 2)], seed=1)
        medium.transmit(0, Frame("x", 0), 0, 100)
        if extra:
            medium.transmit(1, Frame("y", 1), 1, 100)
        sim.run_to_completion()
        return [r.line() for r in sim.trace.by_kind("frame") if r.detail["freq"] == 0]

    assert run(extra=False) == run(extra=True)


def test_medium_rejects_bad_transmissions():
    sim, medium = make_medium([(0, 1)])
    with pytest.raises(SimulationError):
        medium.transmit(7, Frame("x", 7), 0, 10)
    with pytest.raises(SimulationError):
        medium.transmit(0, Frame("x", 0), 99, 10)
    with pytest.raises(SimulationError):
        medium.transmit(0, Frame("x", 0), 0, 0)


def test_late_starting_overlap_still_collides():
    # frame B starts while A is in flight and ends after it; both resolve
    # correctly even though A resolves first
    sim, medium = make_medium([(0, 2), (1, 2)], seed=1)
    a = medium.transmit(0, Frame("a", 0), 0, 100)
    sim.schedule(50, lambda: medium.transmit(1, Frame("b", 1), 0, 100))
    sim.run_to_completion()
    assert medium.outcomes(a)[2] == COLLIDED
    frames = sim.trace.by_kind("frame")
    assert all(rec.detail["collided"] == [2] or 2 in rec.detail["collided"] for rec in frames)
