"""Input-output transformations that map (rho, nu)-passive systems to
(rho*, nu*)-passive systems, with synthesis tools and a network simulator."""

from .cones import (
    IoTransformation,
    MimoCertificate,
    PassivityIndexPair,
    Pqi,
    SingularTransformationError,
    SisoCertificate,
    block_relax_check,
    build_s,
    check_mimo,
    check_siso,
    cone_contains,
    decompose_siso,
    map_cone_into_cone,
    phi,
    riccati_lambda_search,
)
from .lti import (
    FrequencyIndices,
    RationalTransferFunction,
    StateSpaceModel,
    find_storage_realization,
    frequency_indices,
    hinf_norm,
    is_stable,
    poles,
    realize,
    ss_to_tf,
    transform_tf,
    verify_dissipativity_fixed_storage,
    zeros,
)
from .netsim import (
    NetworkGraph,
    SimConfig,
    SimTrace,
    SwitchedAgentBank,
    build_cycle_graph,
    sample_mode_schedule,
    simulate,
    transformed_mode_check,
)
from .synthesize import (
    SimultaneousSpec,
    closest_transform,
    hinf_min_feedback_feedthrough,
    simultaneous_passivation,
)

__version__ = "0.1.0"
