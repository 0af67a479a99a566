//! Numerical tolerances shared across modules.

/// Envelope containment and boundary equality checks.
pub const ENVELOPE: f64 = 1e-9;

/// Battery membership comparisons (rates and running integral).
pub const MEMBERSHIP: f64 = 1e-12;

/// Frontier classification of the area condition.
pub const BOUNDARY: f64 = 1e-9;

/// Slack on the closed-form trade-off inequality.
pub const TRADEOFF: f64 = 1e-12;

/// Absolute tolerance used by every bisection on a stored-energy target.
pub const BISECTION: f64 = 1e-9;

/// Maximum bisection iterations.
pub const BISECTION_MAX_ITER: usize = 60;

/// Relative tolerance on aggregate power feasibility in the simulator.
pub const AGGREGATE_REL: f64 = 1e-9;
