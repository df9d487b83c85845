//! Emitter-number inversion from g²(0) and the collective lifetime, the
//! lifetime-scaling fit and the (τ₁, g², N) lookup surface.

mod cubic;
mod scaling;
mod solve;
mod surface;

pub use cubic::cubic_roots;
pub use scaling::{
    fit_lifetime_scaling, g2_of_n, g2_of_n_value, g2_of_n_with_floor,
    scaling_monotonicity_violations, LifetimeScalingFit, DEFAULT_MIN_TAU1_NS,
};
pub use solve::{
    classify_single_emitter, resolve_with_constraints, round_half_up, solve_n, solve_n_with,
    NEstimate, ResolveMethod, ResolveStatus, ResolverOptions, RootClass, RootReport,
};
pub use surface::{
    generate_surface, ScalingPoint, SurfaceGrid, SurfaceMap, DEFAULT_SURFACE_MAX_N, SURFACE_MIN_N,
};
