from riemspline.models.chain import (
    KinematicChain,
    end_jacobian,
    endpoint_drag_tensor,
    forward_kinematics,
    joint_drag_tensor,
    link_jacobians,
    mass_matrix,
    potential_energy,
)
from riemspline.models.mech import (
    DragField,
    MechModel,
    ModelJet,
    TwoLinkParams,
    chain_model,
    euclidean_model,
    load_ur5_chain,
    two_link_model,
    ur5_model,
)

__all__ = [
    "DragField",
    "KinematicChain",
    "MechModel",
    "ModelJet",
    "TwoLinkParams",
    "chain_model",
    "end_jacobian",
    "endpoint_drag_tensor",
    "euclidean_model",
    "forward_kinematics",
    "joint_drag_tensor",
    "link_jacobians",
    "load_ur5_chain",
    "mass_matrix",
    "potential_energy",
    "two_link_model",
    "ur5_model",
]
