//! Battery capacity of a homogeneous fleet of deferrable loads.
//!
//! * [`model`]: load classes, envelopes, slacks, battery timing.
//! * [`capacity`]: the analytic trade-off frontier and its area construction.
//! * [`allocation`]: fluid-limit allocations and their dynamics.
//! * [`signals`]: battery-feasible power trajectories and adversarial probes.
//! * [`simulate`]: finite-population scheduling simulator.
//! * [`cli`]: command-line front end.

pub mod allocation;
pub mod capacity;
pub mod cli;
pub mod error;
pub mod model;
pub mod numeric;
pub mod signals;
pub mod simulate;
pub mod tolerance;

pub use error::{Error, Result};
pub use model::{BatterySpec, DerivedCapacity, LoadClass, MaxPower, NormalizedBattery};
