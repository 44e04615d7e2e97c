from softpinn.dynamics.model import (
    BatchDerivative,
    BatchedDynamics,
    DynamicsTerms,
    FirstPrinciplesDynamics,
    actuation_torques,
    contact_torques,
    coriolis_torques,
    dynamics_terms,
    forward_dynamics,
    forward_kinematics,
    friction_torques,
    gravity_torques,
    gravity_vector,
    inverse_dynamics,
    kinetic_energy,
    mass_matrix,
    potential_energy,
    stiffness_torques,
)
from softpinn.dynamics.robot_model import DEG, RobotModel, default_robot_model
from softpinn.dynamics.types import NOMINAL_DOMAIN, Domain

__all__ = [
    "BatchDerivative",
    "BatchedDynamics",
    "DEG",
    "Domain",
    "DynamicsTerms",
    "FirstPrinciplesDynamics",
    "NOMINAL_DOMAIN",
    "RobotModel",
    "actuation_torques",
    "contact_torques",
    "coriolis_torques",
    "default_robot_model",
    "dynamics_terms",
    "forward_dynamics",
    "forward_kinematics",
    "friction_torques",
    "gravity_torques",
    "gravity_vector",
    "inverse_dynamics",
    "kinetic_energy",
    "mass_matrix",
    "potential_energy",
    "stiffness_torques",
]
