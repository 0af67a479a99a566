//! Battery-feasible power trajectories: membership, projection, adversarial
//! probes and a few generators.
//!
//! Samples are held constant over their step and integrated left-Riemann, so
//! `χ(tᵢ) = χ₀ + Σ_{j<i} w_j·dt`, accumulated sequentially. The simulator
//! steps the same way, which keeps membership and simulation in exact
//! agreement.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::BatterySpec;
use crate::numeric::fmt9;
use crate::tolerance;

/// A uniformly sampled power signal `w(tᵢ)`, `tᵢ = i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    samples: Vec<f64>,
}

impl Trajectory {
    pub fn new(dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if let Some(i) = samples.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self { dt, samples })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Power held over step `i`; zero past the end.
    pub fn at_step(&self, i: usize) -> f64 {
        self.samples.get(i).copied().unwrap_or(0.0)
    }

    /// `χ(tᵢ)` for `i = 0..=len`, starting from `chi0`.
    pub fn running_integral(&self, chi0: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.samples.len() + 1);
        let mut chi = chi0;
        out.push(chi);
        for w in &self.samples {
            chi += w * self.dt;
            out.push(chi);
        }
        out
    }

    /// Appends `other`, which must share the time step.
    pub fn concat(mut self, other: &Trajectory) -> Result<Self> {
        if other.dt != self.dt {
            return Err(Error::InvalidArgument("cannot join trajectories with different steps".into()));
        }
        self.samples.extend_from_slice(&other.samples);
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# dt = {}\nt,w\n", self.dt);
        for (i, w) in self.samples.iter().enumerate() {
            s.push_str(&fmt9(i as f64 * self.dt));
            s.push(',');
            s.push_str(&fmt9(*w));
            s.push('\n');
        }
        s
    }

    /// Parses the output of [`Trajectory::to_csv`]. Without a `# dt` comment the
    /// step is taken from the first two time stamps.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut dt = None;
        let mut header = false;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("dt").and_then(|r| r.trim().strip_prefix('=')) {
                    dt = Some(parse_f64(v.trim(), n)?);
                }
                continue;
            }
            if !header {
                if line.replace(' ', "") != "t,w" {
                    return Err(Error::Parse(format!("line {}: expected header `t,w`", n + 1)));
                }
                header = true;
                continue;
            }
            let (t, w) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two fields", n + 1)))?;
            times.push(parse_f64(t.trim(), n)?);
            samples.push(parse_f64(w.trim(), n)?);
        }
        let dt = match dt {
            Some(dt) => dt,
            None if times.len() >= 2 => times[1] - times[0],
            None => return Err(Error::Parse("cannot infer the time step".into())),
        };
        Trajectory::new(dt, samples)
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {}: `{s}` is not a number", line + 1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    RateHigh,
    RateLow,
    VolumeHigh,
    VolumeLow,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::RateHigh => "rate_high",
            ViolationKind::RateLow => "rate_low",
            ViolationKind::VolumeHigh => "volume_high",
            ViolationKind::VolumeLow => "volume_low",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership {
    Member,
    Violation { kind: ViolationKind, t: f64 },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member)
    }
}

pub fn membership_check(traj: &Trajectory, spec: &BatterySpec) -> Membership {
    membership_check_from(traj, spec, 0.0)
}

/// Membership of `traj` in the battery's signal set when the battery starts
/// at `chi0`. Reports the earliest failure.
pub fn membership_check_from(traj: &Trajectory, spec: &BatterySpec, chi0: f64) -> Membership {
    let tol = tolerance::MEMBERSHIP;
    let half = spec.half();
    let mut chi = chi0;
    for i in 0..=traj.len() {
        let t = i as f64 * traj.dt;
        if chi > half + tol {
            return Membership::Violation { kind: ViolationKind::VolumeHigh, t };
        }
        if chi < -half - tol {
            return Membership::Violation { kind: ViolationKind::VolumeLow, t };
        }
        let Some(&w) = traj.samples.get(i) else { break };
        if w > spec.charge_rate + tol {
            return Membership::Violation { kind: ViolationKind::RateHigh, t };
        }
        if w < -spec.discharge_rate - tol {
            return Membership::Violation { kind: ViolationKind::RateLow, t };
        }
        chi += w * traj.dt;
    }
    Membership::Member
}

pub fn project_to_battery(raw: &Trajectory, spec: &BatterySpec) -> Trajectory {
    project_to_battery_from(raw, spec, 0.0)
}

/// Clamps each sample to the rate limits, then saturates it so the running
/// integral stays within the volume. Members are returned unchanged.
pub fn project_to_battery_from(raw: &Trajectory, spec: &BatterySpec, chi0: f64) -> Trajectory {
    let tol = tolerance::MEMBERSHIP;
    let half = spec.half();
    let dt = raw.dt;
    let mut chi = chi0.clamp(-half, half);
    let samples = raw
        .samples
        .iter()
        .map(|&w| {
            let mut w = w;
            if w > spec.charge_rate + tol {
                w = spec.charge_rate;
            } else if w < -spec.discharge_rate - tol {
                w = -spec.discharge_rate;
            }
            if chi + w * dt > half + tol {
                w = ((half - chi) / dt).max(0.0);
            } else if chi + w * dt < -half - tol {
                w = ((-half - chi) / dt).min(0.0);
            }
            chi += w * dt;
            w
        })
        .collect();
    Trajectory { dt, samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbePattern {
    ChargeFull,
    DischargeEmpty,
    ChargeThenDischarge,
    DischargeThenCharge,
}

impl ProbePattern {
    pub const ALL: [ProbePattern; 4] = [
        ProbePattern::ChargeFull,
        ProbePattern::DischargeEmpty,
        ProbePattern::ChargeThenDischarge,
        ProbePattern::DischargeThenCharge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProbePattern::ChargeFull => "charge_full",
            ProbePattern::DischargeEmpty => "discharge_empty",
            ProbePattern::ChargeThenDischarge => "charge_then_discharge",
            ProbePattern::DischargeThenCharge => "discharge_then_charge",
        }
    }
}

impl fmt::Display for ProbePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProbePattern::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown probe pattern `{s}`")))
    }
}

/// Appends samples that move `chi` to `target` at `rate` (signed), the last
/// sample scaled so the integral lands on `target`.
fn push_ramp(samples: &mut Vec<f64>, chi: &mut f64, target: f64, rate: f64, dt: f64) -> Result<()> {
    let gap = target - *chi;
    if gap == 0.0 {
        return Ok(());
    }
    if rate == 0.0 {
        return Err(Error::InvalidArgument("probe needs a zero rate to traverse a nonzero volume".into()));
    }
    let speed = rate.abs();
    let sign = gap.signum();
    while (target - *chi) * sign / dt > speed {
        samples.push(sign * speed);
        *chi += sign * speed * dt;
    }
    let last = (target - *chi) / dt;
    if last * sign > 0.0 {
        samples.push(last);
        *chi += last * dt;
    }
    Ok(())
}

/// Full-rate extremal outcome starting from `chi0`.
pub fn extremal_probe(spec: &BatterySpec, pattern: ProbePattern, chi0: f64, dt: f64) -> Result<Trajectory> {
    spec.check_chi(chi0)?;
    let mut tr = Trajectory::new(dt, Vec::new())?;
    let mut chi = chi0;
    let half = spec.half();
    let (up, down) = (spec.charge_rate, -spec.discharge_rate);
    match pattern {
        ProbePattern::ChargeFull => push_ramp(&mut tr.samples, &mut chi, half, up, dt)?,
        ProbePattern::DischargeEmpty => push_ramp(&mut tr.samples, &mut chi, -half, down, dt)?,
        ProbePattern::ChargeThenDischarge => {
            push_ramp(&mut tr.samples, &mut chi, half, up, dt)?;
            push_ramp(&mut tr.samples, &mut chi, -half, down, dt)?;
        }
        ProbePattern::DischargeThenCharge => {
            push_ramp(&mut tr.samples, &mut chi, -half, down, dt)?;
            push_ramp(&mut tr.samples, &mut chi, half, up, dt)?;
        }
    }
    Ok(tr)
}

/// Moves from `chi0` to `target` at full rate, a piece used to assemble probes.
pub fn ramp_to(spec: &BatterySpec, chi0: f64, target: f64, dt: f64) -> Result<Trajectory> {
    spec.check_chi(chi0)?;
    spec.check_chi(target)?;
    let mut tr = Trajectory::new(dt, Vec::new())?;
    let mut chi = chi0;
    let rate = if target >= chi0 { spec.charge_rate } else { -spec.discharge_rate };
    push_ramp(&mut tr.samples, &mut chi, target, rate, dt)?;
    Ok(tr)
}

fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    Ok((duration / dt - 1e-9).ceil().max(1.0) as usize)
}

pub fn constant(level: f64, duration: f64, dt: f64) -> Result<Trajectory> {
    Trajectory::new(dt, vec![level; step_count(duration, dt)?])
}

/// `amplitude·sign(cos(2πt/period))`; its running integral peaks at
/// `amplitude·period/4`.
pub fn square_wave(amplitude: f64, period: f64, duration: f64, dt: f64) -> Result<Trajectory> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    let n = step_count(duration, dt)?;
    let samples = (0..n)
        .map(|i| {
            // classify by the midpoint of the step so quarter-period edges are exact
            let phase = ((i as f64 + 0.5) * dt / period).fract();
            if (0.25..0.75).contains(&phase) {
                -amplitude
            } else {
                amplitude
            }
        })
        .collect();
    Trajectory::new(dt, samples)
}

/// Gaussian random walk `w₀ = 0`, `wᵢ₊₁ = wᵢ + N(0, step_sd²)`; raw, meant for
/// [`project_to_battery`].
pub fn random_walk(seed: u64, step_sd: f64, duration: f64, dt: f64) -> Result<Trajectory> {
    let n = step_count(duration, dt)?;
    let normal = Normal::new(0.0, step_sd)
        .map_err(|_| Error::InvalidArgument(format!("step deviation must be non-negative, got {step_sd}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = 0.0;
    let samples = (0..n)
        .map(|_| {
            let out = w;
            w += normal.sample(&mut rng);
            out
        })
        .collect();
    Trajectory::new(dt, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> BatterySpec {
        BatterySpec::new(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn membership_examples() {
        let dt = 0.01;
        assert!(membership_check(&constant(1.0, 0.2, dt).unwrap(), &spec()).is_member());
        match membership_check(&constant(1.0, 0.3, dt).unwrap(), &spec()) {
            Membership::Violation { kind, t } => {
                assert_eq!(kind, ViolationKind::VolumeHigh);
                assert!((t - 0.26).abs() < 1e-12);
            }
            m => panic!("{m:?}"),
        }
        match membership_check(&constant(1.5, 0.1, dt).unwrap(), &spec()) {
            Membership::Violation { kind, .. } => assert_eq!(kind, ViolationKind::RateHigh),
            m => panic!("{m:?}"),
        }
        match membership_check(&constant(-1.0, 0.3, dt).unwrap(), &spec()) {
            Membership::Violation { kind, .. } => assert_eq!(kind, ViolationKind::VolumeLow),
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn projection_saturates() {
        let raw = constant(2.0, 0.5, 0.01).unwrap();
        let p = project_to_battery(&raw, &spec());
        let chi = p.running_integral(0.0);
        assert!(p.samples()[..25].iter().all(|&w| w == 1.0));
        assert!(p.samples()[26..].iter().all(|&w| w.abs() < 1e-12));
        assert!((chi.last().unwrap() - 0.25).abs() < 1e-12);
        assert!(membership_check(&p, &spec()).is_member());
        assert_eq!(project_to_battery(&p, &spec()), p);
    }

    #[test]
    fn probe_examples() {
        let dt = 0.01;
        let cf = extremal_probe(&spec(), ProbePattern::ChargeFull, 0.0, dt).unwrap();
        assert_eq!(cf.len(), 25);
        assert!(cf.samples().iter().all(|&w| (w - 1.0).abs() < 1e-12));
        assert!((cf.running_integral(0.0).last().unwrap() - 0.25).abs() < 1e-12);

        let cd = extremal_probe(&spec(), ProbePattern::ChargeThenDischarge, 0.0, dt).unwrap();
        assert!((cd.duration() - 0.75).abs() < 1e-12);
        assert!((cd.running_integral(0.0).last().unwrap() + 0.25).abs() < 1e-12);

        let empty = extremal_probe(&spec(), ProbePattern::ChargeFull, 0.25, dt).unwrap();
        assert!(empty.is_empty());

        let odd = extremal_probe(&spec(), ProbePattern::DischargeEmpty, 0.0, 0.03).unwrap();
        assert_eq!(odd.len(), 9);
        assert!((odd.running_integral(0.0).last().unwrap() + 0.25).abs() < 1e-12);
        assert!(membership_check(&odd, &spec()).is_member());

        let no_discharge = BatterySpec::new(0.5, 1.0, 0.0).unwrap();
        assert!(extremal_probe(&no_discharge, ProbePattern::DischargeEmpty, 0.0, dt).is_err());
        assert!(extremal_probe(&no_discharge, ProbePattern::ChargeFull, 0.0, dt).is_ok());
    }

    #[test]
    fn probes_are_boundary_members() {
        for p in ProbePattern::ALL {
            for chi0 in [-0.25, -0.1, 0.0, 0.2, 0.25] {
                let tr = extremal_probe(&spec(), p, chi0, 0.007).unwrap();
                assert!(membership_check_from(&tr, &spec(), chi0).is_member(), "{p} from {chi0}");
            }
        }
    }

    #[test]
    fn square_wave_peak() {
        let (a, dt) = (1.0, 0.01);
        let period = 4.0 * 0.25 / a; // peak a·P/4 = C/2
        let tr = square_wave(a, period, 3.0, dt).unwrap();
        let peak = tr.running_integral(0.0).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - a * period / 4.0).abs() < 1e-12);
        assert!(membership_check(&tr, &spec()).is_member());
        assert!(square_wave(1.0, 0.0, 1.0, dt).is_err());
        assert!(constant(0.0, 0.0, dt).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_walk(1, 0.1, 1.0, 0.01).unwrap();
        let b = random_walk(1, 0.1, 1.0, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_walk(2, 0.1, 1.0, 0.01).unwrap());
        assert!(constant(0.0, 1.0, 0.01).unwrap().samples().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let tr = Trajectory::new(0.1, vec![0.5, -0.25, 1.0]).unwrap();
        let back = Trajectory::from_csv(&tr.to_csv()).unwrap();
        assert_eq!(back, tr);
        let bare = Trajectory::from_csv("t,w\n0,1\n0.5,2\n").unwrap();
        assert_eq!(bare.dt(), 0.5);
        assert!(Trajectory::from_csv("x,y\n").is_err());
    }
}
