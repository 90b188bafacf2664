"""flowlab: suspension flows, smooth time changes, and covering entropy estimates."""

from .dynamics import (
    GOLDEN_ANGLE,
    BaseMap,
    SuspensionFlow,
    SuspensionPoint,
    TorusPoint,
    apply_base,
    dist_base,
    dist_susp,
    make_cat_map,
    make_rotation,
    suspension_advance,
)
from .entropy import (
    EntropyEstimate,
    EntropyGrid,
    EntropyGridSpec,
    bowen_distance,
    entropy_estimate_flow,
    entropy_estimate_map,
    k_of_eps,
    katok_count,
    suspension_box_count,
    totoki_check,
)
from .recurrence import (
    RecurrenceReport,
    ball_measure_bound_check,
    empirical_recurrence,
    recurrence_constant,
    recurrence_profile,
    rotation_gap_L,
)
from .sampling import birkhoff_cloud, rng_for, suspension_cloud
from .speed import (
    FlatProfile,
    SpeedField,
    build_flat_profile,
    constant_field,
    default_flat_profile,
    eta_derivative,
    eta_eval,
    flat_field,
    mollifier_h,
    quadratic_field,
    speed_at,
)
from .timechange import (
    AdditiveClock,
    ReturnTimeReport,
    TimeChangedFlow,
    clock_from_speed_field,
    constant_clock,
    expected_gamma,
    flow_trajectories,
    gamma,
    orbit_equivalence_check,
    phi_advance,
    push_measure_gamma,
    pushforward_density,
    tau,
    theta,
    time_changed_flow,
)

__version__ = "0.1.0"
