"""Online physically consistent identification of underwater vehicle-manipulator dynamics."""

__version__ = "0.1.0"

from .model import (
    JointDescriptor,
    LinkHydrodynamics,
    ParameterVector,
    UvmsModel,
    VehicleDescriptor,
    VehicleLumps,
    WeightBounds,
    build_pseudo_inertia,
    build_vehicle_inertia,
    feasibility_report,
    load_model,
    model_from_parameters,
    pack,
    parameters_from_model,
    unpack,
)
from .dynamics import (
    GeneralizedForce,
    GeneralizedState,
    forward_dynamics,
    hydro_rnea,
    inverse_dynamics,
    mass_matrix_and_bias,
    simulate,
)
from .regressor import system_regressor
from .spatial import PluckerTransform, SpatialForce, SpatialInertia, SpatialMotion
