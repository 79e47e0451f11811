"""Two-agent behaviour-change toolkit.

A user decides to act or abstain as the optimal agent of a small MDP whose
parameters may be impaired (myopic discounting, mis-estimated progress
probability).  An app agent plans one-step interventions on those
parameters to keep the user moving toward their goal.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DISENGAGED,
    GOAL,
    DecisionComponents,
    ParameterError,
    Progress,
    SingularityError,
    UserParams,
    WorldParams,
    decision_components,
    user_policy,
    user_reward,
    user_value,
    v_right,
    v_stay,
)
from .interventions import InterventionKind, InterventionProfile, induced_action, min_effectiveness  # noqa: E402
from .planner import AppPolicy, extract_windows, plan  # noqa: E402

__all__ = [
    "DISENGAGED",
    "GOAL",
    "DecisionComponents",
    "ParameterError",
    "Progress",
    "SingularityError",
    "UserParams",
    "WorldParams",
    "decision_components",
    "user_policy",
    "user_reward",
    "user_value",
    "v_right",
    "v_stay",
    "InterventionKind",
    "InterventionProfile",
    "induced_action",
    "min_effectiveness",
    "AppPolicy",
    "extract_windows",
    "plan",
]
