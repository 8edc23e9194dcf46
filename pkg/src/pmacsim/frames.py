"""Protocol frame vocabulary and SYNCP preamble patterns.

A preamble is four slots that each either carry a SYNCP symbol or stay
empty. Data-mode preambles use four consecutive SYNCPs; time-exchange
(PTE) preambles drop the third SYNCP, and the receiver classifies the mode
from the position of the gap. The gap slot is a fixed convention here.

Frame kind tags are stable strings; traces and CSV tooling rely on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MODE_PTE = "pte"
MODE_DATA = "data"
MODE_INVALID = "invalid"

# Slot 3 of 4 is the empty position in a PTE preamble.
PTE_GAP_SLOT = 2

DATA_PATTERN = (True, True, True, True)
PTE_PATTERN = tuple(i != PTE_GAP_SLOT for i in range(4))

PREAMBLE = "preamble"
TQUERY = "tquery"
TQUERY_REPLY = "tquery_reply"
NETCONFIG = "netconfig"
NETCONFIG_CONFIRM = "netconfig_confirm"
PBEACON = "pbeacon"
PBEACON_REPORT = "pbeacon_report"
BEACON = "beacon"
ASSOC_REQUEST = "assoc_request"
ASSOC_REPLY = "assoc_reply"
SWEEP_PROBE = "sweep_probe"
SWEEP_REPLY = "sweep_reply"
SWEEP_CONFIRM = "sweep_confirm"
REG_REQUEST = "reg_request"
REG_REPLY = "reg_reply"
POLL = "poll"
DATA = "data"
ADMISSION = "admission"


def encode_preamble(mode: str) -> tuple[bool, ...]:
    """Canonical slot pattern for a preamble mode."""
    if mode == MODE_DATA:
        return DATA_PATTERN
    if mode == MODE_PTE:
        return PTE_PATTERN
    raise ValueError(f"unknown preamble mode {mode!r}")


def classify_preamble(pattern) -> str:
    """Map a received slot pattern back to its mode; unknown patterns are invalid."""
    p = tuple(bool(s) for s in pattern)
    if p == DATA_PATTERN:
        return MODE_DATA
    if p == PTE_PATTERN:
        return MODE_PTE
    return MODE_INVALID


@dataclass(frozen=True)
class Frame:
    """Tagged protocol message. dst None means broadcast."""

    kind: str
    src: int
    dst: int | None = None
    info: dict = field(default_factory=dict)


def preamble_frame(src: int, mode: str) -> Frame:
    return Frame(PREAMBLE, src, None, {"mode": mode, "pattern": list(encode_preamble(mode))})


def tquery_frame(src: int, dt_us: int, dst: int | None = None) -> Frame:
    return Frame(TQUERY, src, dst, {"dt_us": dt_us})


def tquery_reply_frame(src: int, dst: int, *, mac: int | None = None, sid: int | None = None) -> Frame:
    info = {}
    if mac is not None:
        info["mac"] = mac
    if sid is not None:
        info["sid"] = sid
    return Frame(TQUERY_REPLY, src, dst, info)


def netconfig_frame(src: int, dst: int, *, mac: int | None, sid: int, nwkid: int,
                    heartbeat_us: int) -> Frame:
    return Frame(NETCONFIG, src, dst,
                 {"mac": mac, "sid": sid, "nwkid": nwkid, "heartbeat_us": heartbeat_us})
