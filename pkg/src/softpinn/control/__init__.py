from softpinn.control.closed_loop import (
    ClosedLoopLog,
    ClosedLoopMetrics,
    Controller,
    closed_loop,
    save_campaign,
    save_closed_loop_log,
    tracking_campaign,
)
from softpinn.control.mpc import (
    MPCController,
    default_mpc_config,
    input_box,
    mpc_cost,
    mpc_solve,
)
from softpinn.control.pi import PIController, PIState, pi_control, published_pi_config
from softpinn.control.reference import Reference, generate_reference, zero_reference

__all__ = [
    "ClosedLoopLog",
    "ClosedLoopMetrics",
    "Controller",
    "MPCController",
    "PIController",
    "PIState",
    "Reference",
    "closed_loop",
    "default_mpc_config",
    "generate_reference",
    "input_box",
    "mpc_cost",
    "mpc_solve",
    "pi_control",
    "published_pi_config",
    "save_campaign",
    "save_closed_loop_log",
    "tracking_campaign",
    "zero_reference",
]
