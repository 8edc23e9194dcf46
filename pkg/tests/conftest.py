"""Shared builders for protocol-level tests."""

from __future__ import annotations

import pytest

from pmacsim import FrequencyPlan, Medium, Simulator, SnrTable, Topology
from pmacsim.pmac import PmacNetwork


def make_medium(links, *, seed=0, n_freq=8, snr_db=25.0, overrides=(), threshold=10.0):
    """Simulator plus medium over an explicit topology with constant SNR,
    optionally pinned per directed entry: (tx, rx, freq_or_None, db)."""
    sim = Simulator(seed)
    topo = Topology(links)
    plan = FrequencyPlan.split_band(n_freq)
    table = SnrTable.constant(topo, plan, snr_db)
    for tx, rx, freq, db in overrides:
        if freq is None:
            for f in range(plan.n_points):
                table.set_directed(tx, rx, f, db)
        else:
            table.set_directed(tx, rx, freq, db)
    medium = Medium(sim, topo, plan, table, threshold)
    return sim, medium


DIAMOND_LINKS = ((0, 1), (0, 2), (1, 3), (1, 4), (2, 3), (2, 4))
# uplink qualities steering node 3 via relay 1 and node 4 via relay 2
DIAMOND_QUALITIES = ((3, 1, None, 30.0), (3, 2, None, 20.0),
                     (4, 1, None, 20.0), (4, 2, None, 30.0))


@pytest.fixture
def diamond_stack():
    """The two-level, four-node example network used throughout: gateway 0
    talks to nodes 1 and 2; both of those talk to nodes 3 and 4."""
    sim, medium = make_medium(DIAMOND_LINKS, seed=3, overrides=DIAMOND_QUALITIES)
    stack = PmacNetwork(sim, medium)
    return sim, medium, stack
