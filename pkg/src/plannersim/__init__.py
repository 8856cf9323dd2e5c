"""Desk-scale simulator and analysis toolkit for rollback-protected,
quorum-audited federated learning with correlated noise."""

from .analysis import (
    FailureParams,
    delta_interrupt,
    delta_privacy,
    mc_round_failure,
    optimize_params,
    sweep,
)
from .simulator import WorldConfig, check_integrity, ideal_oracle, run
from .eventlog import EventLog, check_linearizable

__version__ = "0.1.0"

__all__ = [
    "FailureParams",
    "delta_privacy",
    "delta_interrupt",
    "optimize_params",
    "mc_round_failure",
    "sweep",
    "WorldConfig",
    "run",
    "check_integrity",
    "check_linearizable",
    "ideal_oracle",
    "EventLog",
    "__version__",
]
