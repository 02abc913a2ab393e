"""Capacity expansion planning with convex power-flow approximations and AC reinforcement."""

from accep.netmodel import (
    AcBranch,
    Bus,
    CapabilityCurve,
    DcBranch,
    NetworkCase,
    PowerSource,
    SnapshotSeries,
    Violation,
    attach_vsc_compensators,
    derive_reactive_loads,
    validate_case,
)

__version__ = "0.1.0"

__all__ = [
    "AcBranch",
    "Bus",
    "CapabilityCurve",
    "DcBranch",
    "NetworkCase",
    "PowerSource",
    "SnapshotSeries",
    "Violation",
    "attach_vsc_compensators",
    "derive_reactive_loads",
    "validate_case",
]
