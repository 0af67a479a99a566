//! Per-step power allocation across the active fleet.

use std::fmt;
use std::str::FromStr;

use crate::allocation::EqualizedShape;
use crate::error::{Error, Result};
use crate::model::LoadClass;
use crate::numeric::water_fill;
use crate::tolerance;

/// Which slack-equalized shape a [`PolicyKind::TargetProfile`] steers toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    Charge,
    Discharge,
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Charge => "charge",
            ProfileKind::Discharge => "discharge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Surplus to the loads with the largest charge slack.
    ChargeSlackGreedy,
    /// Surplus to the loads with the smallest discharge slack.
    DischargeSlackGreedy,
    /// Surplus split in proportion to each load's headroom.
    NominalProportional,
    /// Steer toward the slack-equalized profile at the current stored energy.
    TargetProfile(ProfileKind),
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::ChargeSlackGreedy,
        PolicyKind::DischargeSlackGreedy,
        PolicyKind::NominalProportional,
        PolicyKind::TargetProfile(ProfileKind::Charge),
        PolicyKind::TargetProfile(ProfileKind::Discharge),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::ChargeSlackGreedy => "charge_slack_greedy",
            PolicyKind::DischargeSlackGreedy => "discharge_slack_greedy",
            PolicyKind::NominalProportional => "nominal_proportional",
            PolicyKind::TargetProfile(ProfileKind::Charge) => "target_profile(charge)",
            PolicyKind::TargetProfile(ProfileKind::Discharge) => "target_profile(discharge)",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "target_profile:charge" | "target_profile_charge" => {
                return Ok(PolicyKind::TargetProfile(ProfileKind::Charge))
            }
            "target_profile:discharge" | "target_profile_discharge" => {
                return Ok(PolicyKind::TargetProfile(ProfileKind::Discharge))
            }
            _ => {}
        }
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy `{s}`")))
    }
}

/// An active load: arrival time and energy delivered so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadInstance {
    pub arrival: f64,
    pub energy: f64,
}

impl LoadInstance {
    pub fn deadline(&self, lc: &LoadClass) -> f64 {
        self.arrival + lc.window()
    }
}

/// Power bounds for a load with `remaining` time to its deadline.
pub(crate) fn power_interval(energy: f64, remaining: f64, dt: f64, lc: &LoadClass) -> Result<(f64, f64)> {
    let p = lc.max_power().as_f64();
    let missing = lc.energy() - energy;
    let slack = tolerance::ENVELOPE * lc.energy().max(1.0);
    if missing > p * remaining + slack {
        return Err(Error::Infeasible { shortfall: missing - p * remaining });
    }
    let p_max = p.min((missing / dt).max(0.0));
    let p_min = ((missing - p * (remaining - dt)) / dt).clamp(0.0, p_max);
    Ok((p_min, p_max))
}

/// Range of powers that keeps the load able to finish by its deadline.
pub fn feasible_power_interval(load: &LoadInstance, now: f64, dt: f64, lc: &LoadClass) -> Result<(f64, f64)> {
    let remaining = load.deadline(lc) - now;
    if !(remaining > 0.0) || dt > remaining * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "step {dt} exceeds the remaining time {remaining}"
        )));
    }
    power_interval(load.energy, remaining, dt, lc)
}

/// Outcome of one aggregate allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAllocation {
    pub powers: Vec<f64>,
    /// Requested minus delivered aggregate power; zero when the target was
    /// within the fleet's range.
    pub shortfall: f64,
}

/// Per-load inputs of [`allocate_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadView {
    pub age: f64,
    pub energy: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Splits `target` across the loads.
///
/// Greedy policies water-fill: surplus goes to the highest-priority loads until
/// their post-step slack drops to the next load's, then is shared, so exact
/// ties split evenly instead of by index. `reference` is the profile a
/// target-profile policy steers toward.
pub fn allocate_step(
    loads: &[LoadView],
    target: f64,
    policy: PolicyKind,
    lc: &LoadClass,
    dt: f64,
    reference: Option<&EqualizedShape>,
) -> Result<StepAllocation> {
    if !(target >= 0.0) {
        return Err(Error::InvalidArgument(format!("aggregate target must be non-negative, got {target}")));
    }
    let lo: Vec<f64> = loads.iter().map(|l| l.p_min).collect();
    let hi: Vec<f64> = loads.iter().map(|l| l.p_max).collect();
    let sum_lo: f64 = lo.iter().sum();
    let sum_hi: f64 = hi.iter().sum();
    let slack = tolerance::AGGREGATE_REL * (1.0 + sum_hi);
    let (goal, shortfall) = if target > sum_hi + slack {
        (sum_hi, target - sum_hi)
    } else if target < sum_lo - slack {
        (sum_lo, target - sum_lo)
    } else {
        (target.clamp(sum_lo, sum_hi), 0.0)
    };

    let powers = match policy {
        PolicyKind::NominalProportional => {
            let room = sum_hi - sum_lo;
            let share = if room > 0.0 { (goal - sum_lo) / room } else { 0.0 };
            loads.iter().map(|l| l.p_min + share * (l.p_max - l.p_min)).collect()
        }
        _ => {
            let p_bar = lc.max_power().as_f64();
            let offset: Vec<f64> = match policy {
                // equal post-step charge slack (E − e − p·dt)/P̄
                PolicyKind::ChargeSlackGreedy => loads.iter().map(|l| -l.energy / dt).collect(),
                // equal post-step discharge slack T − σ − dt − (E − e − p·dt)/P̄
                PolicyKind::DischargeSlackGreedy => {
                    loads.iter().map(|l| (p_bar * l.age - l.energy) / dt).collect()
                }
                PolicyKind::TargetProfile(_) => {
                    let shape = reference.ok_or_else(|| {
                        Error::InvalidArgument("target-profile policy needs a reference profile".into())
                    })?;
                    loads
                        .iter()
                        .map(|l| (shape.eval(lc, (l.age + dt).min(lc.window())) - l.energy) / dt)
                        .collect()
                }
                PolicyKind::NominalProportional => unreachable!(),
            };
            water_fill(&offset, &lo, &hi, goal).expect("goal clamped into the feasible range")
        }
    };
    Ok(StepAllocation { powers, shortfall })
}
