"""pmacsim: preamble-based vs CSMA/CA network establishment, simulated.

A deterministic discrete-event model of ad-hoc power line network
formation: preamble time exchange with T-Query and Net-Config handshakes,
a beacon-driven CSMA/CA baseline, frequency sweeping for the
frequency-division system, and multi-frequency networking that combines
both.
"""

from .channel import (
    BELOW_THRESHOLD,
    COLLIDED,
    DELIVERED,
    ChannelConfigError,
    DeliveryOutcome,
    FrequencyPlan,
    Medium,
    SnrTable,
    Topology,
    TransmissionAttempt,
    resolve_deliveries,
)
from .csma import CsmaNetwork, contend
from .engine import RngStream, SchedulingError, SimulationError, Simulator, Trace
from .fdplc import FdNetwork, promote
from .frames import Frame, classify_preamble, encode_preamble
from .metrics import (
    CSV_HEADER,
    MetricsRow,
    ScenarioResult,
    UtilizationSample,
    compute_utilization,
    emit_csv,
    read_csv,
    replay_trace,
    run_node_sweep,
    run_scenario,
    utilization_sample,
    write_trace,
)
from .pmac import BindingTable, NodeState, PmacNetwork, mac_address, select_route
from .reports import EstablishReport, JoinRecord, MaintenanceReport
from .scenario import ScenarioConfig, ScenarioError, load_scenario, parse_scenario
from .sweep import (
    SweepResult,
    best_frequency,
    comm_count_formula,
    run_fd_sweep,
    run_incomplete_sweep,
    run_traditional_sweep,
)

__version__ = "0.1.0"
