//! Adversarial probe suites and the empirical frontier built from them.

use rayon::prelude::*;

use super::{Fleet, InitialProfile, PolicyKind, ProfileKind, SimConfig, SimResult, Verdict};
use crate::capacity::area_condition_holds;
use crate::error::{check_range, Result};
use crate::model::{denormalize, BatterySpec, NormalizedBattery};
use crate::signals::{self, extremal_probe, ramp_to, ProbePattern, Trajectory};

/// Resolution of the `w̲` bisection in [`empirical_frontier`].
pub const FRONTIER_TOL: f64 = 1.0 / 64.0;

/// Number of projected random walks per suite.
pub const RANDOM_WALKS: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    /// Battery stored energy at the start of the probe.
    pub chi0: f64,
    pub trajectory: Trajectory,
}

/// Adversarial members of the battery's signal set starting at `chi0`.
///
/// Extremal patterns first, then full-rate moves to a ladder of levels (and
/// to the area-condition witness, if any) followed by a full charge or
/// discharge, a hold of one window before each extremal outcome, and a few
/// projected random walks. Probes that would need a zero rate are skipped.
pub fn probe_suite(spec: &BatterySpec, lc_window: f64, chi0: f64, dt: f64, seed: u64, witness: Option<f64>) -> Result<Vec<Probe>> {
    spec.check_chi(chi0)?;
    let mut out: Vec<Probe> = Vec::new();
    let mut push = |name: String, trajectory: Trajectory| {
        if !trajectory.is_empty() && !out.iter().any(|p| p.trajectory == trajectory) {
            out.push(Probe { name, chi0, trajectory });
        }
    };
    let order = [
        ProbePattern::ChargeThenDischarge,
        ProbePattern::DischargeThenCharge,
        ProbePattern::ChargeFull,
        ProbePattern::DischargeEmpty,
    ];
    for p in order {
        if let Ok(tr) = extremal_probe(spec, p, chi0, dt) {
            push(p.name().to_string(), tr);
        }
    }

    let half = spec.half();
    let mut levels: Vec<f64> = (0..=4).map(|k| -half + spec.capacity * k as f64 / 4.0).collect();
    levels.extend(witness.map(|w| w.clamp(-half, half)));
    for level in levels {
        let Ok(ramp) = ramp_to(spec, chi0, level, dt) else { continue };
        for p in [ProbePattern::ChargeFull, ProbePattern::DischargeEmpty] {
            let Ok(branch) = extremal_probe(spec, p, level, dt) else { continue };
            if branch.is_empty() {
                continue;
            }
            let tr = ramp.clone().concat(&branch)?;
            push(format!("level({})+{}", crate::numeric::fmt9(level), p.name()), tr);
        }
    }

    let hold = signals::constant(0.0, lc_window, dt)?;
    for p in [ProbePattern::ChargeFull, ProbePattern::DischargeEmpty] {
        if let Ok(branch) = extremal_probe(spec, p, chi0, dt) {
            push(format!("hold+{}", p.name()), hold.clone().concat(&branch)?);
        }
    }

    let rate = spec.charge_rate.max(spec.discharge_rate);
    if rate > 0.0 {
        for i in 0..RANDOM_WALKS {
            let raw = signals::random_walk(seed.wrapping_add(i), 0.05 * rate, 2.0 * lc_window, dt)?;
            push(format!("random_walk({})", seed.wrapping_add(i)), signals::project_to_battery_from(&raw, spec, chi0));
        }
    }
    Ok(out)
}

/// Warm-up profile that suits `policy` when the battery starts at `chi0`.
pub fn initial_profile_for(policy: PolicyKind, chi0: f64) -> InitialProfile {
    match policy {
        PolicyKind::ChargeSlackGreedy => InitialProfile::ChargeEqualized(chi0),
        PolicyKind::DischargeSlackGreedy => InitialProfile::DischargeEqualized(chi0),
        PolicyKind::TargetProfile(kind) => InitialProfile::equalized(kind, chi0),
        PolicyKind::NominalProportional if chi0 == 0.0 => InitialProfile::Nominal,
        PolicyKind::NominalProportional => InitialProfile::equalized(ProfileKind::Charge, chi0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub name: String,
    pub chi0: f64,
    pub verdict: Verdict,
    pub events: usize,
    pub deadline_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub probes: Vec<ProbeOutcome>,
    pub verdict: Verdict,
}

/// Runs the suite for every start in `chi0s`. The warm-up for each start is
/// shared by its probes. With `short_circuit` the suite stops at the first
/// failing probe.
pub fn run_suite(base: &SimConfig, spec: &BatterySpec, chi0s: &[f64], short_circuit: bool) -> Result<SuiteOutcome> {
    let witness = area_condition_holds(&base.lc, spec).ok().and_then(|v| v.witness);
    let mut probes = Vec::new();
    for &chi0 in chi0s {
        let mut cfg = *base;
        cfg.initial_profile = initial_profile_for(base.policy, chi0);
        cfg.stop_on_failure = cfg.stop_on_failure || short_circuit;
        let fleet = Fleet::warm(&cfg)?;
        let suite = probe_suite(spec, cfg.lc.window(), chi0, cfg.dt, cfg.seed, witness)?;
        let run_one = |p: &Probe| -> Result<ProbeOutcome> {
            let r = fleet.clone().track(&p.trajectory)?;
            Ok(ProbeOutcome {
                name: p.name.clone(),
                chi0,
                verdict: r.verdict,
                events: r.events.len(),
                deadline_failures: r.deadline_failures.len(),
            })
        };
        if short_circuit {
            for p in &suite {
                let o = run_one(p)?;
                let failed = o.verdict == Verdict::Failed;
                probes.push(o);
                if failed {
                    return Ok(SuiteOutcome { probes, verdict: Verdict::Failed });
                }
            }
        } else {
            let outcomes: Result<Vec<_>> = suite.par_iter().map(run_one).collect();
            probes.extend(outcomes?);
        }
    }
    let verdict = if probes.iter().all(|p| p.verdict == Verdict::Tracked) {
        Verdict::Tracked
    } else {
        Verdict::Failed
    };
    Ok(SuiteOutcome { probes, verdict })
}

/// Every probe of the suite from `chi0` with its full simulation result.
pub fn suite_results(base: &SimConfig, spec: &BatterySpec, chi0: f64) -> Result<Vec<(Probe, SimResult)>> {
    let witness = area_condition_holds(&base.lc, spec).ok().and_then(|v| v.witness);
    let mut cfg = *base;
    cfg.initial_profile = initial_profile_for(base.policy, chi0);
    let fleet = Fleet::warm(&cfg)?;
    let suite = probe_suite(spec, cfg.lc.window(), chi0, cfg.dt, cfg.seed, witness)?;
    suite
        .into_par_iter()
        .map(|p| {
            let r = fleet.clone().track(&p.trajectory)?;
            Ok((p, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub w_bar: f64,
    pub w_under: f64,
    pub verdict: Verdict,
}

fn suite_tracks(config: &SimConfig, c: f64, w_bar: f64, w_under: f64) -> Result<bool> {
    let nb = NormalizedBattery::new(c, w_bar, w_under)?;
    let spec = denormalize(&nb, &config.lc)?;
    Ok(run_suite(config, &spec, &[0.0], true)?.verdict == Verdict::Tracked)
}

/// For each `w̄` on a uniform grid, the largest `w̲` (to [`FRONTIER_TOL`])
/// whose probe suite `policy` tracks from the battery's empty-signal start.
/// A column whose `w̲ = 0` battery already fails reports `w̲ = 0, failed`.
pub fn empirical_frontier(config: &SimConfig, c: f64, policy: PolicyKind, n_grid: usize) -> Result<Vec<FrontierPoint>> {
    check_range("c", c, 0.0, 1.0, 0.0)?;
    if n_grid < 2 {
        return Err(crate::error::Error::InvalidArgument("frontier needs at least two grid points".into()));
    }
    let mut cfg = *config;
    cfg.policy = policy;
    let columns: Vec<f64> = (0..n_grid)
        .map(|i| if i + 1 == n_grid { 1.0 } else { i as f64 / (n_grid - 1) as f64 })
        .collect();
    columns
        .par_iter()
        .map(|&wb| {
            if !suite_tracks(&cfg, c, wb, 0.0)? {
                return Ok(FrontierPoint { w_bar: wb, w_under: 0.0, verdict: Verdict::Failed });
            }
            if suite_tracks(&cfg, c, wb, 1.0)? {
                return Ok(FrontierPoint { w_bar: wb, w_under: 1.0, verdict: Verdict::Tracked });
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            while hi - lo > FRONTIER_TOL {
                let mid = 0.5 * (lo + hi);
                if suite_tracks(&cfg, c, wb, mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(FrontierPoint { w_bar: wb, w_under: lo, verdict: Verdict::Tracked })
        })
        .collect()
}
