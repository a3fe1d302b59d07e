"""Stable matching market simulator with hospital loyalty.

Doctors propose in preference order; hospitals hold their current match
and switch only for proposers ranked more than k positions better. The
package bundles the proposal engine, lazily sampled random preferences,
stability verification, brute-force oracles, and an experiment harness.
"""

from .engine import (
    CLASSIC_ACCEPT,
    FifoPolicy,
    HistoryEvent,
    LifoPolicy,
    LoyaltyAccept,
    MatchingState,
    RandomPolicy,
    RunOutcome,
    accept_loyal,
    run,
    step,
)
from .experiments import ExperimentSpec, SweepResult, snapshot, sweep
from .oracle import (
    CollectorStats,
    StableSet,
    absent_minded_sim,
    coupon_collector_sim,
    enumerate_stable,
    min_element_sim,
    rural_hospital_check,
)
from .prefs import (
    MarketShape,
    PreferenceOracle,
    from_explicit,
    load_instance,
    random_instance,
)
from .stability import BlockingReport, check_consistency, verify_stable

__version__ = "0.1.0"

__all__ = [
    "CLASSIC_ACCEPT",
    "BlockingReport",
    "CollectorStats",
    "ExperimentSpec",
    "FifoPolicy",
    "HistoryEvent",
    "LifoPolicy",
    "LoyaltyAccept",
    "MarketShape",
    "MatchingState",
    "PreferenceOracle",
    "RandomPolicy",
    "RunOutcome",
    "StableSet",
    "SweepResult",
    "absent_minded_sim",
    "accept_loyal",
    "check_consistency",
    "coupon_collector_sim",
    "enumerate_stable",
    "from_explicit",
    "load_instance",
    "min_element_sim",
    "random_instance",
    "run",
    "rural_hospital_check",
    "snapshot",
    "step",
    "sweep",
    "verify_stable",
    "__version__",
]
