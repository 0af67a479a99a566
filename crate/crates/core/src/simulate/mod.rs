//! Finite-population simulator: periodic arrivals, per-load deadline
//! feasibility, and an aggregate power target `n·P₀ + λT·w(t)`.
//!
//! Time is kept as integer step indices so arrivals, ages and deadlines are
//! exact; `t = k·dt`, tracking starts at `k = 0` and warm-up occupies the
//! steps before it.

mod policy;
pub mod suite;

pub use policy::{
    allocate_step, feasible_power_interval, LoadInstance, LoadView, PolicyKind, ProfileKind, StepAllocation,
};

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::allocation::{charge_equalized_level, discharge_equalized_slack, EqualizedShape};
use crate::error::{Error, Result};
use crate::model::{LoadClass, MaxPower};
use crate::numeric::fmt9;
use crate::signals::Trajectory;
use crate::tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Any infeasible step fails the run.
    Strict,
    /// Infeasible steps are clamped; only missed deadlines fail the run.
    Clip,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Strict => "strict",
            Mode::Clip => "clip",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "strict" => Ok(Mode::Strict),
            "clip" => Ok(Mode::Clip),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// Allocation the fleet is steered to during warm-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Nominal,
    ChargeEqualized(f64),
    DischargeEqualized(f64),
}

impl InitialProfile {
    /// Stored energy of the profile.
    pub fn chi(&self) -> f64 {
        match *self {
            InitialProfile::Nominal => 0.0,
            InitialProfile::ChargeEqualized(chi) | InitialProfile::DischargeEqualized(chi) => chi,
        }
    }

    fn shape(&self, lc: &LoadClass) -> Result<Option<EqualizedShape>> {
        Ok(match *self {
            InitialProfile::Nominal => None,
            InitialProfile::ChargeEqualized(chi) => {
                Some(EqualizedShape::ChargeLevel(charge_equalized_level(lc, chi)?))
            }
            InitialProfile::DischargeEqualized(chi) => {
                Some(EqualizedShape::DischargeSlack(discharge_equalized_slack(lc, chi)?))
            }
        })
    }

    /// Profile of the given kind storing `chi`.
    pub fn equalized(kind: ProfileKind, chi: f64) -> Self {
        match kind {
            ProfileKind::Charge => InitialProfile::ChargeEqualized(chi),
            ProfileKind::Discharge => InitialProfile::DischargeEqualized(chi),
        }
    }
}

impl fmt::Display for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            InitialProfile::Nominal => f.write_str("nominal"),
            InitialProfile::ChargeEqualized(chi) => write!(f, "charge_equalized({chi})"),
            InitialProfile::DischargeEqualized(chi) => write!(f, "discharge_equalized({chi})"),
        }
    }
}

impl FromStr for InitialProfile {
    type Err = Error;

    /// Accepts `nominal`, `charge_equalized(x)` and `discharge_equalized(x)`;
    /// a bare kind means `x = 0`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("unknown initial profile `{s}`"));
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(bad)?;
                let chi: f64 = inner.trim().parse().map_err(|_| bad())?;
                (name.trim(), chi)
            }
            None => (s, 0.0),
        };
        match name {
            "nominal" if arg == 0.0 => Ok(InitialProfile::Nominal),
            "charge_equalized" | "charge" => Ok(InitialProfile::ChargeEqualized(arg)),
            "discharge_equalized" | "discharge" => Ok(InitialProfile::DischargeEqualized(arg)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub lc: LoadClass,
    /// Arrivals per unit time.
    pub lambda: f64,
    pub dt: f64,
    pub warmup: f64,
    pub policy: PolicyKind,
    pub mode: Mode,
    pub seed: u64,
    pub initial_profile: InitialProfile,
    /// End the run at the first failure instead of completing it.
    pub stop_on_failure: bool,
}

/// Integer step counts derived from a validated config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub steps_per_arrival: i64,
    pub window_steps: i64,
    pub warmup_steps: i64,
    /// `λT`, the number of active loads.
    pub population: usize,
}

fn integer_ratio(what: &str, num: f64, den: f64) -> Result<i64> {
    let r = num / den;
    let n = r.round();
    if !(n >= 1.0) || (r - n).abs() > 1e-9 * n {
        return Err(Error::Config(format!("{what} must be a positive integer, got {r}")));
    }
    Ok(n as i64)
}

impl SimConfig {
    /// Desk-scale defaults: `λT = 100`, `dt = T/1000`, warm-up `2T`.
    pub fn new(lc: LoadClass) -> Self {
        let t = lc.window();
        SimConfig {
            lc,
            lambda: 100.0 / t,
            dt: t / 1000.0,
            warmup: 2.0 * t,
            policy: PolicyKind::ChargeSlackGreedy,
            mode: Mode::Strict,
            seed: 0,
            initial_profile: InitialProfile::Nominal,
            stop_on_failure: false,
        }
    }

    pub fn validate(&self) -> Result<Timing> {
        if let MaxPower::Unbounded = self.lc.max_power() {
            return Err(Error::Config("the simulator needs a finite power limit".into()));
        }
        for (name, v) in [("lambda", self.lambda), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let t = self.lc.window();
        let spa = integer_ratio("1/(lambda*dt)", 1.0, self.lambda * self.dt)?;
        let window_steps = integer_ratio("T/dt", t, self.dt)?;
        if window_steps % spa != 0 {
            return Err(Error::Config("T must be a whole number of arrival periods".into()));
        }
        if !(self.warmup.is_finite() && self.warmup >= t * (1.0 - 1e-12)) {
            return Err(Error::Config(format!("warmup must be at least T = {t}, got {}", self.warmup)));
        }
        let half = 0.5 * self.lc.derive_capacity().c_max;
        let chi = self.initial_profile.chi();
        if !(chi.abs() <= half * (1.0 + 1e-12)) {
            return Err(Error::Config(format!("initial stored energy {chi} outside [{}, {half}]", -half)));
        }
        Ok(Timing {
            steps_per_arrival: spa,
            window_steps,
            warmup_steps: (self.warmup / self.dt - 1e-9).ceil() as i64,
            population: (window_steps / spa) as usize,
        })
    }

    /// Resolved parameters as `key = value` pairs; numbers in shortest
    /// round-trip form.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let p = match self.lc.max_power() {
            MaxPower::Finite(p) => p.to_string(),
            MaxPower::Unbounded => "unbounded".into(),
        };
        vec![
            ("energy", self.lc.energy().to_string()),
            ("window", self.lc.window().to_string()),
            ("max_power", p),
            ("lambda", self.lambda.to_string()),
            ("dt", self.dt.to_string()),
            ("warmup", self.warmup.to_string()),
            ("policy", self.policy.name().into()),
            ("mode", self.mode.name().into()),
            ("seed", self.seed.to_string()),
            ("initial_profile", self.initial_profile.to_string()),
            ("stop_on_failure", self.stop_on_failure.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Step start.
    pub t: f64,
    pub w_target: f64,
    pub w_achieved: f64,
    /// Battery stored energy at `t + dt`.
    pub chi: f64,
    /// Fleet stored energy per active load at `t + dt`.
    pub x_avg: f64,
    pub n_active: usize,
    pub infeasible: bool,
}

/// Aggregate target outside the fleet's feasible range. Positive shortfall:
/// more power requested than the fleet can absorb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfeasibleEvent {
    pub t: f64,
    pub shortfall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineFailure {
    pub t: f64,
    pub arrival: f64,
    /// Energy still owed.
    pub missing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Tracked,
    Failed,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Tracked => "tracked",
            Verdict::Failed => "failed",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub config: SimConfig,
    pub records: Vec<StepRecord>,
    pub events: Vec<InfeasibleEvent>,
    pub deadline_failures: Vec<DeadlineFailure>,
    pub max_tracking_error: f64,
    /// Loads that reached their deadline during the run, warm-up included.
    pub completed: usize,
    /// Energy those loads received.
    pub delivered: f64,
    pub verdict: Verdict,
}

impl SimResult {
    pub fn tracked(&self) -> bool {
        self.verdict == Verdict::Tracked
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.config.echo() {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        s.push_str("# fleet power = n_active*P0 + lambda*T*w\n");
        s.push_str("# t is the step start; chi and x_avg are taken at t + dt\n");
        s.push_str("t,w_target,w_achieved,chi,x_avg,n_active,infeasible\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt9(r.t),
                fmt9(r.w_target),
                fmt9(r.w_achieved),
                fmt9(r.chi),
                fmt9(r.x_avg),
                r.n_active,
                u8::from(r.infeasible)
            ));
        }
        s
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from("t,shortfall\n");
        for e in &self.events {
            s.push_str(&format!("{},{}\n", fmt9(e.t), fmt9(e.shortfall)));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Load {
    arrival: i64,
    energy: f64,
}

/// Fleet state between steps. Cloning a warmed-up fleet lets many probes share
/// one warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    config: SimConfig,
    timing: Timing,
    k: i64,
    loads: VecDeque<Load>,
    chi: f64,
    completed: usize,
    delivered: f64,
    deadline_failures: Vec<DeadlineFailure>,
    init_shape: Option<EqualizedShape>,
}

impl Fleet {
    /// A nominal fleet at the start of warm-up, steered for the whole warm-up
    /// toward the configured initial profile.
    pub fn warm(config: &SimConfig) -> Result<Fleet> {
        let timing = config.validate()?;
        let lc = config.lc;
        let k0 = -timing.warmup_steps;
        let spa = timing.steps_per_arrival;
        let mut loads = VecDeque::with_capacity(timing.population + 1);
        // lattice arrivals a ≡ 0 (mod spa) with k0 − window < a < k0
        let mut a = (k0 - timing.window_steps).div_euclid(spa) * spa;
        while a < k0 {
            if a > k0 - timing.window_steps {
                let age = (k0 - a) as f64 * config.dt;
                loads.push_back(Load { arrival: a, energy: lc.nominal_rate() * age });
            }
            a += spa;
        }
        let mut fleet = Fleet {
            config: *config,
            timing,
            k: k0,
            loads,
            chi: config.initial_profile.chi(),
            completed: 0,
            delivered: 0.0,
            deadline_failures: Vec::new(),
            init_shape: config.initial_profile.shape(&lc)?,
        };
        while fleet.k < 0 {
            fleet.step_warmup();
        }
        Ok(fleet)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn timing(&self) -> Timing {
        self.timing
    }

    pub fn n_active(&self) -> usize {
        self.loads.len()
    }

    /// Current `(age, energy)` of every active load, oldest first.
    pub fn loads(&self) -> Vec<(f64, f64)> {
        self.loads
            .iter()
            .map(|l| ((self.k - l.arrival) as f64 * self.config.dt, l.energy))
            .collect()
    }

    /// `Σ(e − P₀·age)/(λT)`.
    pub fn stored_energy(&self) -> f64 {
        let p0 = self.config.lc.nominal_rate();
        let dt = self.config.dt;
        let sum: f64 = self
            .loads
            .iter()
            .map(|l| l.energy - p0 * (self.k - l.arrival) as f64 * dt)
            .sum();
        sum / self.timing.population as f64
    }

    /// Retires loads at their deadline and admits this step's arrival.
    fn turnover(&mut self) {
        let e_req = self.config.lc.energy();
        let tol = tolerance::ENVELOPE * e_req.max(1.0);
        while let Some(front) = self.loads.front() {
            if front.arrival + self.timing.window_steps > self.k {
                break;
            }
            let load = self.loads.pop_front().expect("front exists");
            if load.energy < e_req - tol {
                self.deadline_failures.push(DeadlineFailure {
                    t: self.k as f64 * self.config.dt,
                    arrival: load.arrival as f64 * self.config.dt,
                    missing: e_req - load.energy,
                });
            }
            self.completed += 1;
            self.delivered += load.energy;
        }
        if self.k.rem_euclid(self.timing.steps_per_arrival) == 0 {
            self.loads.push_back(Load { arrival: self.k, energy: 0.0 });
        }
    }

    fn views(&mut self) -> Vec<LoadView> {
        let dt = self.config.dt;
        let lc = self.config.lc;
        let mut out = Vec::with_capacity(self.loads.len());
        for l in &self.loads {
            let age_steps = self.k - l.arrival;
            let remaining = (self.timing.window_steps - age_steps) as f64 * dt;
            let (p_min, p_max) = match policy::power_interval(l.energy, remaining, dt, &lc) {
                Ok(bounds) => bounds,
                Err(_) => {
                    self.deadline_failures.push(DeadlineFailure {
                        t: self.k as f64 * dt,
                        arrival: l.arrival as f64 * dt,
                        missing: lc.energy() - l.energy - lc.max_power().as_f64() * remaining,
                    });
                    let p = lc.max_power().as_f64().min((lc.energy() - l.energy) / dt);
                    (p, p)
                }
            };
            out.push(LoadView { age: age_steps as f64 * dt, energy: l.energy, p_min, p_max });
        }
        out
    }

    fn apply(&mut self, powers: &[f64]) {
        let dt = self.config.dt;
        for (l, p) in self.loads.iter_mut().zip(powers) {
            l.energy += p * dt;
        }
        self.k += 1;
    }

    fn step_warmup(&mut self) {
        self.turnover();
        let views = self.views();
        let lc = self.config.lc;
        let dt = self.config.dt;
        let powers: Vec<f64> = views
            .iter()
            .map(|v| {
                let next = (v.age + dt).min(lc.window());
                let goal = match &self.init_shape {
                    Some(shape) => shape.eval(&lc, next),
                    None => lc.nominal_at(next),
                };
                ((goal - v.energy) / dt).clamp(v.p_min, v.p_max)
            })
            .collect();
        self.apply(&powers);
    }

    fn reference(&self, chi: f64) -> Result<Option<EqualizedShape>> {
        let PolicyKind::TargetProfile(kind) = self.config.policy else {
            return Ok(None);
        };
        let half = 0.5 * self.config.lc.derive_capacity().c_max;
        InitialProfile::equalized(kind, chi.clamp(-half, half)).shape(&self.config.lc)
    }

    /// Tracks `traj` from the current (warmed-up) state.
    pub fn track(mut self, traj: &Trajectory) -> Result<SimResult> {
        let cfg = self.config;
        if (traj.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(Error::Config(format!(
                "trajectory step {} differs from the simulation step {}",
                traj.dt(),
                cfg.dt
            )));
        }
        let lc = cfg.lc;
        let dt = cfg.dt;
        let p0 = lc.nominal_rate();
        let scale = self.timing.population as f64;
        let mut records = Vec::with_capacity(traj.len());
        let mut events = Vec::new();
        let mut max_err = 0.0f64;
        let failures_before = self.deadline_failures.len();

        for i in 0..traj.len() {
            let t = self.k as f64 * dt;
            let w = traj.at_step(i);
            self.turnover();
            let views = self.views();
            let n = views.len();
            let target = (n as f64 * p0 + scale * w).max(0.0);
            let reference = self.reference(self.chi + w * dt)?;
            let alloc = allocate_step(&views, target, cfg.policy, &lc, dt, reference.as_ref())?;
            let total: f64 = alloc.powers.iter().sum();
            let achieved = (total - n as f64 * p0) / scale;
            self.apply(&alloc.powers);
            self.chi += achieved * dt;
            let infeasible = alloc.shortfall != 0.0;
            if infeasible {
                events.push(InfeasibleEvent { t, shortfall: alloc.shortfall / scale });
            }
            max_err = max_err.max((w - achieved).abs());
            records.push(StepRecord {
                t,
                w_target: w,
                w_achieved: achieved,
                chi: self.chi,
                x_avg: self.stored_energy(),
                n_active: n,
                infeasible,
            });
            let failed = self.deadline_failures.len() > failures_before
                || (cfg.mode == Mode::Strict && !events.is_empty());
            if cfg.stop_on_failure && failed {
                break;
            }
        }
        let deadline_failures = self.deadline_failures.split_off(failures_before);
        let ok = deadline_failures.is_empty() && (cfg.mode == Mode::Clip || events.is_empty());
        Ok(SimResult {
            config: cfg,
            records,
            events,
            deadline_failures,
            max_tracking_error: max_err,
            completed: self.completed,
            delivered: self.delivered,
            verdict: if ok { Verdict::Tracked } else { Verdict::Failed },
        })
    }
}

/// Warms the fleet up and tracks `traj` (battery-power units, sampled at `dt`).
pub fn run(config: &SimConfig, traj: &Trajectory) -> Result<SimResult> {
    Fleet::warm(config)?.track(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BatterySpec;
    use crate::signals::{self, ProbePattern};

    fn lc() -> LoadClass {
        LoadClass::finite(1.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(lc());
        let timing = cfg.validate().unwrap();
        assert_eq!(timing.population, 100);
        assert_eq!(timing.steps_per_arrival, 10);
        cfg.lambda = 30.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.lambda = 100.0;
        cfg.warmup = 0.5;
        assert!(cfg.validate().is_err());
        let unbounded = SimConfig::new(LoadClass::unbounded(1.0, 1.0).unwrap());
        assert!(unbounded.validate().is_err());
    }

    #[test]
    fn warm_fleet_matches_profile() {
        let mut cfg = SimConfig::new(lc());
        cfg.initial_profile = InitialProfile::ChargeEqualized(0.0);
        let fleet = Fleet::warm(&cfg).unwrap();
        assert_eq!(fleet.n_active(), 100);
        for (age, e) in fleet.loads() {
            let want = EqualizedShape::ChargeLevel(0.5).eval(&cfg.lc, age);
            assert!((e - want).abs() < 1e-9, "age {age}: {e} vs {want}");
        }
    }

    #[test]
    fn zero_signal_is_tracked_exactly() {
        for policy in PolicyKind::ALL {
            let mut cfg = SimConfig::new(lc());
            cfg.policy = policy;
            let traj = signals::constant(0.0, 1.0, cfg.dt).unwrap();
            let r = run(&cfg, &traj).unwrap();
            assert!(r.tracked(), "{policy}");
            let worst = r.records.iter().map(|x| x.x_avg.abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-9, "{policy}: {worst}");
            assert!((r.delivered - r.completed as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn maximal_battery_fails_charge_then_discharge() {
        let lc = lc();
        let spec = BatterySpec::new(0.5, 1.0, 1.0).unwrap();
        for policy in PolicyKind::ALL {
            let mut cfg = SimConfig::new(lc);
            cfg.policy = policy;
            cfg.stop_on_failure = true;
            let probe = signals::extremal_probe(&spec, ProbePattern::ChargeThenDischarge, 0.0, cfg.dt).unwrap();
            let r = run(&cfg, &probe).unwrap();
            assert!(!r.tracked(), "{policy}");
            assert!(!r.events.is_empty());
        }
    }

    #[test]
    fn conservation_per_step() {
        let cfg = SimConfig::new(lc());
        let spec = BatterySpec::new(0.2, 0.3, 0.3).unwrap();
        let raw = signals::random_walk(3, 0.05, 1.0, cfg.dt).unwrap();
        let traj = signals::project_to_battery(&raw, &spec);
        let r = run(&cfg, &traj).unwrap();
        let mut chi = 0.0;
        for rec in &r.records {
            chi += rec.w_achieved * cfg.dt;
            assert_eq!(rec.chi, chi);
            assert!((rec.x_avg - rec.chi).abs() < 0.02);
        }
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = SimConfig::new(lc());
        let traj = signals::square_wave(0.5, 0.4, 0.5, cfg.dt).unwrap();
        let a = run(&cfg, &traj).unwrap().to_csv();
        let b = run(&cfg, &traj).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.contains("t,w_target,w_achieved,chi,x_avg,n_active,infeasible\n"));
    }

    #[test]
    fn initial_profile_parsing() {
        assert_eq!("nominal".parse::<InitialProfile>().unwrap(), InitialProfile::Nominal);
        assert_eq!(
            "charge_equalized(-0.25)".parse::<InitialProfile>().unwrap(),
            InitialProfile::ChargeEqualized(-0.25)
        );
        assert_eq!(
            "discharge_equalized".parse::<InitialProfile>().unwrap(),
            InitialProfile::DischargeEqualized(0.0)
        );
        assert!("charge_equalized(x)".parse::<InitialProfile>().is_err());
        let p = InitialProfile::ChargeEqualized(0.125);
        assert_eq!(p.to_string().parse::<InitialProfile>().unwrap(), p);
    }
}
