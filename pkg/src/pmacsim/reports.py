"""Establishment and maintenance results, shared across all protocols."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class JoinRecord:
    node: int
    address: int
    level: int
    parent: int
    at_us: int


@dataclass
class EstablishReport:
    protocol: str
    joined: list[JoinRecord]
    unjoined: list[int]
    networking_time_us: int
    mode: str = ""
    link_freqs: dict = field(default_factory=dict)  # (parent, child) -> (best_up, best_down)

    @property
    def joined_nodes(self) -> frozenset[int]:
        return frozenset(r.node for r in self.joined)

    def parent_map(self) -> dict[int, int]:
        return {r.node: r.parent for r in self.joined}

    def levels(self) -> dict[int, int]:
        return {r.node: r.level for r in self.joined}

    def addresses(self) -> dict[int, int]:
        return {r.node: r.address for r in self.joined}


@dataclass
class MaintenanceReport:
    kept_alive: list[int]
    rejoined: list[int]
    lost: list[int]
    duration_us: int
