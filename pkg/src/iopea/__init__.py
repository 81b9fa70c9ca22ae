"""Information-ordered epoch-based policy elimination for average-cost MDPs."""
from .algorithm import IopeaConfig, RunResult, epsilon_net, run
from .core import IopeaError, PolicyParam, RegretLedger, Trajectory, empirical_gain, regret
from .order import PolicyOrder, maximal_set, width

__version__ = "0.1.0"

__all__ = [
    "IopeaConfig",
    "IopeaError",
    "PolicyOrder",
    "PolicyParam",
    "RegretLedger",
    "RunResult",
    "Trajectory",
    "empirical_gain",
    "epsilon_net",
    "maximal_set",
    "regret",
    "run",
    "width",
]
